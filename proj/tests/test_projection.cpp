#include "doctest.h"
#include "helpers.hpp"

#include <algorithm>
#include <cmath>

#include "figret/error.hpp"
#include "figret/projection.hpp"
#include "figret/random.hpp"

using namespace figret;

namespace {

// Bisection on sigma itself with base-2 entropy, independent of the library's beta search.
double oracle_sigma(const std::vector<double>& sq_dists, double perplexity) {
  auto perp = [&](double sigma) {
    std::vector<double> p;
    double sum = 0;
    for (double d : sq_dists) {
      p.push_back(std::exp(-d / (2 * sigma * sigma)));
      sum += p.back();
    }
    double h = 0;
    for (double v : p) {
      const double q = v / sum;
      if (q > 0) h -= q * std::log2(q);
    }
    return std::pow(2.0, h);
  };
  double lo = 1e-3, hi = 1e3;
  for (int i = 0; i < 200; ++i) {
    const double mid = std::sqrt(lo * hi);
    (perp(mid) < perplexity ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

std::vector<std::vector<double>> random_points(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<std::vector<double>> pts(n, std::vector<double>(d));
  for (auto& p : pts)
    for (auto& x : p) x = rng.normal();
  return pts;
}

}  // namespace

TEST_CASE("bandwidth search matches an independent bisection on a 4-point line") {
  const std::vector<double> line = {0.0, 1.0, 2.0, 4.0};
  for (std::size_t i = 0; i < line.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < line.size(); ++j)
      if (j != i) d.push_back((line[i] - line[j]) * (line[i] - line[j]));
    for (double perp : {2.2, 2.5, 2.8}) {
      const Bandwidth bw = search_bandwidth(d, perp);
      CHECK(std::abs(bw.sigma - oracle_sigma(d, perp)) < 1e-3);
      CHECK(std::abs(bw.perplexity - perp) < 1e-4);
      CHECK(bw.steps <= kMaxBisectionSteps);
    }
  }
}

TEST_CASE("joint affinities are symmetric and normalized") {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 4 + rng.below(40);
    const auto pts = random_points(rng, n, 1 + rng.below(10));
    std::vector<Bandwidth> bws;
    const auto p = pairwise_affinities(pts, std::min(5.0, (n - 1) / 2.0), &bws);
    CHECK(bws.size() == n);
    CHECK(std::abs(p.sum() - 1.0) < 1e-9);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(p(i, i) == 0.0);
      for (std::size_t j = 0; j < n; ++j) CHECK(p(i, j) == doctest::Approx(p(j, i)).epsilon(1e-12));
    }
    std::vector<std::array<double, 2>> y(n);
    for (auto& v : y) v = {rng.normal(), rng.normal()};
    CHECK(std::abs(student_t_affinities(y).sum() - 1.0) < 1e-9);
  }
}

TEST_CASE("equilateral triangle gives equal affinities") {
  const std::vector<std::vector<double>> tri = {{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2}};
  const auto p = pairwise_affinities(tri, 2.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      if (i != j) CHECK(p(i, j) == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("affinity preconditions") {
  Rng rng(1);
  CHECK_THROWS_AS(pairwise_affinities(random_points(rng, 2, 3), 2.0), ParameterError);
  CHECK_THROWS_AS(pairwise_affinities(random_points(rng, 5, 3), 5.0), ParameterError);
  CHECK_THROWS_AS(pairwise_affinities(random_points(rng, 5, 3), 1.0), ParameterError);
}

TEST_CASE("t-SNE gradient matches finite differences on five points") {
  Rng rng(9);
  const auto pts = random_points(rng, 5, 3);
  const auto p = pairwise_affinities(pts, 2.0);
  std::vector<std::array<double, 2>> y(5);
  for (auto& v : y) v = {rng.normal(), rng.normal()};
  const auto g = tsne_gradient(p, y);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 5; ++i) {
    for (int d = 0; d < 2; ++d) {
      auto up = y, down = y;
      up[i][d] += h;
      down[i][d] -= h;
      const double numeric = (kl_divergence(p, student_t_affinities(up)) - kl_divergence(p, student_t_affinities(down))) / (2 * h);
      CHECK(std::abs(numeric - g[i][d]) <= 1e-3 * std::max(std::abs(numeric), 1e-6));
    }
  }
}

TEST_CASE("two separated clusters stay separated") {
  Rng rng(21);
  std::vector<std::string> ids;
  std::vector<std::vector<float>> vecs;
  std::vector<int> truth;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 30; ++i) {
      std::vector<float> v(16);
      for (auto& x : v) x = static_cast<float>(rng.normal());
      v[0] += c == 0 ? -8.0f : 8.0f;
      ids.push_back("c" + std::to_string(c) + "-" + std::to_string(i));
      vecs.push_back(v);
      truth.push_back(c);
    }
  }
  TsneConfig cfg;
  cfg.perplexity = 10;
  const Map2D map = tsne(ids, vecs, cfg);
  CHECK(map.kl_final < map.kl_initial);
  std::array<std::array<double, 2>, 2> centroid{};
  for (std::size_t i = 0; i < map.ids.size(); ++i) {
    const int c = map.ids[i][1] - '0';
    centroid[c][0] += map.coords[i][0] / 30;
    centroid[c][1] += map.coords[i][1] / 30;
  }
  int correct = 0;
  for (std::size_t i = 0; i < map.ids.size(); ++i) {
    const int c = map.ids[i][1] - '0';
    auto dist = [&](int k) { return std::hypot(map.coords[i][0] - centroid[k][0], map.coords[i][1] - centroid[k][1]); };
    correct += (dist(c) < dist(1 - c));
  }
  CHECK(correct >= 57);
}

TEST_CASE("duplicate inputs land together") {
  Rng rng(5);
  std::vector<std::string> ids;
  std::vector<std::vector<float>> vecs;
  for (int i = 0; i < 40; ++i) {
    std::vector<float> v(8);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    ids.push_back("p" + std::to_string(i));
    vecs.push_back(v);
  }
  ids.push_back("dup");
  vecs.push_back(vecs[7]);
  TsneConfig cfg;
  cfg.perplexity = 8;
  const Map2D map = tsne(ids, vecs, cfg);
  auto at = [&](const std::string& id) {
    return map.coords[std::find(map.ids.begin(), map.ids.end(), id) - map.ids.begin()];
  };
  std::vector<double> dists;
  for (std::size_t i = 0; i < map.coords.size(); ++i)
    for (std::size_t j = i + 1; j < map.coords.size(); ++j)
      dists.push_back(std::hypot(map.coords[i][0] - map.coords[j][0], map.coords[i][1] - map.coords[j][1]));
  std::sort(dists.begin(), dists.end());
  const auto a = at("dup"), b = at("p7");
  CHECK(std::hypot(a[0] - b[0], a[1] - b[1]) < dists[dists.size() / 20]);
}

TEST_CASE("t-SNE is deterministic and permutation equivariant") {
  Rng rng(3);
  std::vector<std::string> ids;
  std::vector<std::vector<float>> vecs;
  for (int i = 0; i < 20; ++i) {
    ids.push_back("id" + std::to_string(i));
    std::vector<float> v(5);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    vecs.push_back(v);
  }
  TsneConfig cfg;
  cfg.perplexity = 5;
  cfg.iterations = 300;
  const Map2D a = tsne(ids, vecs, cfg);
  std::reverse(ids.begin(), ids.end());
  std::reverse(vecs.begin(), vecs.end());
  const Map2D b = tsne(ids, vecs, cfg);
  CHECK(a.ids == b.ids);
  CHECK(a.coords == b.coords);
  CHECK(std::is_sorted(a.ids.begin(), a.ids.end()));
  CHECK(a.kl_final < a.kl_initial);
  ids.push_back(ids[0]);
  vecs.push_back(vecs[0]);
  CHECK_THROWS_AS(tsne(ids, vecs, cfg), ParameterError);
}

TEST_CASE("map files round trip") {
  Rng rng(12);
  std::vector<EmbeddingRecord> recs;
  for (int i = 0; i < 12; ++i) {
    EmbeddingRecord r{"r" + std::to_string(i), std::vector<float>(4), i % 3, i % 2, "robotics drawing"};
    for (auto& x : r.vector) x = static_cast<float>(rng.normal());
    if (i == 4) r.class_label.reset();
    recs.push_back(r);
  }
  const EmbeddingIndex index(4, recs);
  TsneConfig cfg;
  cfg.perplexity = 3;
  cfg.iterations = 200;
  const Map2D map = tsne(index, cfg);
  const std::string text = export_map(map, index.records());
  const auto rows = parse_map(text);
  CHECK(rows.size() == 12);
  CHECK(format_map(rows) == text);
  CHECK(rows[0].tags == "robotics drawing");
  const auto r4 = std::find_if(rows.begin(), rows.end(), [](const MapRow& r) { return r.id == "r4"; });
  CHECK(r4->class_label == -1);
  CHECK_THROWS_AS(map_rows(map, {}), ConsistencyError);
  CHECK_THROWS_AS(map_rows(map, {recs[0]}), ConsistencyError);
  CHECK_THROWS_AS(parse_map("bogus\n"), FormatError);
  CHECK_THROWS_AS(parse_map("id\tx\ty\tclass_label\ttype_label\ttags\nr1\t1\n"), FormatError);
}

TEST_CASE("t-SNE config validation") {
  TsneConfig cfg;
  CHECK_THROWS_AS(cfg.validate(20), ParameterError);  // perplexity 30 needs more points
  cfg.perplexity = 5;
  CHECK_NOTHROW(cfg.validate(20));
  cfg.iterations = 0;
  CHECK_THROWS_AS(cfg.validate(20), ParameterError);
}
