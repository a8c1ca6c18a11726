#include "figret/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "figret/random.hpp"

namespace figret {

void TsneConfig::validate(std::size_t n_points) const {
  if (n_points < 3) throw ParameterError("tsne: at least 3 points required");
  if (!(perplexity >= 2.0)) throw ParameterError("tsne: perplexity must be >= 2");
  if (!(perplexity < static_cast<double>(n_points)))
    throw ParameterError("tsne: perplexity " + std::to_string(perplexity) + " must be below the point count " +
                         std::to_string(n_points));
  if (iterations < 1) throw ParameterError("tsne: iterations must be >= 1");
  if (!(learning_rate > 0.0)) throw ParameterError("tsne: learning_rate must be > 0");
  if (!(early_exaggeration >= 1.0)) throw ParameterError("tsne: early_exaggeration must be >= 1");
}

double SquareMatrix::sum() const { return std::accumulate(v.begin(), v.end(), 0.0); }

Bandwidth search_bandwidth(std::span<const double> sq_dists, double perplexity) {
  if (sq_dists.empty()) throw ParameterError("bandwidth: no neighbours");
  const double target = std::log(perplexity);
  const double dmin = *std::min_element(sq_dists.begin(), sq_dists.end());
  std::vector<double> p(sq_dists.size());
  auto entropy = [&](double beta) {
    double sum = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) sum += p[j] = std::exp(-beta * (sq_dists[j] - dmin));
    double weighted = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) weighted += (sq_dists[j] - dmin) * p[j];
    return std::log(sum) + beta * weighted / sum;
  };
  Bandwidth bw;
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double beta = 1.0;
  double h = entropy(beta);
  for (bw.steps = 1; bw.steps <= kMaxBisectionSteps; ++bw.steps) {
    if (std::abs(std::exp(h) - perplexity) < kPerplexityTolerance) break;
    if (h > target) {  // too flat: narrow the kernel
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
    h = entropy(beta);
  }
  bw.steps = std::min(bw.steps, kMaxBisectionSteps);
  bw.beta = beta;
  bw.sigma = std::sqrt(1.0 / (2.0 * beta));
  bw.perplexity = std::exp(h);
  return bw;
}

SquareMatrix squared_distances(const std::vector<std::vector<double>>& pts) {
  SquareMatrix d{pts.size(), std::vector<double>(pts.size() * pts.size(), 0.0)};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < pts[i].size(); ++k) {
        const double t = pts[i][k] - pts[j][k];
        s += t * t;
      }
      d(i, j) = d(j, i) = s;
    }
  }
  return d;
}

SquareMatrix pairwise_affinities(const std::vector<std::vector<double>>& points, double perplexity,
                                 std::vector<Bandwidth>* bandwidths) {
  const std::size_t n = points.size();
  if (n < 3) throw ParameterError("affinities: at least 3 points required");
  if (!(perplexity >= 2.0) || !(perplexity < static_cast<double>(n)))
    throw ParameterError("affinities: perplexity must be in [2, n)");
  for (const auto& p : points)
    if (p.size() != points[0].size()) throw StructuralError("affinities: points differ in dimension");
  const SquareMatrix d = squared_distances(points);
  SquareMatrix cond{n, std::vector<double>(n * n, 0.0)};
  if (bandwidths) bandwidths->clear();
  std::vector<double> row(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0, k = 0; j < n; ++j)
      if (j != i) row[k++] = d(i, j);
    const Bandwidth bw = search_bandwidth(row, perplexity);
    if (bandwidths) bandwidths->push_back(bw);
    const double dmin = *std::min_element(row.begin(), row.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum += cond(i, j) = std::exp(-bw.beta * (d(i, j) - dmin));
    for (std::size_t j = 0; j < n; ++j) cond(i, j) /= sum;
  }
  SquareMatrix p{n, std::vector<double>(n * n, 0.0)};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      p(i, j) = std::max((cond(i, j) + cond(j, i)) / (2.0 * static_cast<double>(n)), kAffinityFloor);
      total += p(i, j);
    }
  }
  for (auto& x : p.v) x /= total;
  return p;
}

SquareMatrix student_t_affinities(const std::vector<std::array<double, 2>>& y) {
  const std::size_t n = y.size();
  SquareMatrix q{n, std::vector<double>(n * n, 0.0)};
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
      const double w = 1.0 / (1.0 + dx * dx + dy * dy);
      q(i, j) = q(j, i) = w;
      total += 2.0 * w;
    }
  }
  for (auto& x : q.v) x /= total;
  return q;
}

double kl_divergence(const SquareMatrix& p, const SquareMatrix& q) {
  if (p.n != q.n) throw StructuralError("kl: size mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.v.size(); ++i)
    if (p.v[i] > 0.0) kl += p.v[i] * std::log(p.v[i] / std::max(q.v[i], kAffinityFloor));
  return std::max(kl, 0.0);
}

std::vector<std::array<double, 2>> tsne_gradient(const SquareMatrix& p, const std::vector<std::array<double, 2>>& y) {
  const std::size_t n = y.size();
  if (p.n != n) throw StructuralError("tsne gradient: size mismatch");
  std::vector<double> num(n * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
      const double w = 1.0 / (1.0 + dx * dx + dy * dy);
      num[i * n + j] = num[j * n + i] = w;
      total += 2.0 * w;
    }
  }
  std::vector<std::array<double, 2>> g(n, {0.0, 0.0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double w = num[i * n + j];
      const double coef = 4.0 * (p(i, j) - w / total) * w;
      g[i][0] += coef * (y[i][0] - y[j][0]);
      g[i][1] += coef * (y[i][1] - y[j][1]);
    }
  }
  return g;
}

Map2D tsne(const std::vector<std::string>& ids, const std::vector<std::vector<float>>& vectors, const TsneConfig& cfg) {
  const std::size_t n = ids.size();
  if (vectors.size() != n) throw StructuralError("tsne: ids and vectors differ in length");
  cfg.validate(n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids[a] < ids[b]; });
  for (std::size_t i = 1; i < n; ++i)
    if (ids[order[i]] == ids[order[i - 1]]) throw ParameterError("tsne: duplicate id " + ids[order[i]]);

  Map2D map;
  map.config = cfg;
  std::vector<std::vector<double>> pts;
  for (auto i : order) {
    map.ids.push_back(ids[i]);
    pts.emplace_back(vectors[i].begin(), vectors[i].end());
  }
  const SquareMatrix p = pairwise_affinities(pts, cfg.perplexity);

  std::vector<std::array<double, 2>> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(cfg.seed, map.ids[i]));
    y[i] = {1e-4 * rng.normal(), 1e-4 * rng.normal()};
  }
  map.kl_initial = kl_divergence(p, student_t_affinities(y));

  SquareMatrix pe = p;
  for (auto& x : pe.v) x *= cfg.early_exaggeration;
  // Short runs scale both phases down so most iterations optimize the true objective.
  const int exaggerate = std::min(cfg.exaggeration_iters, cfg.iterations / 4);
  const int switch_at = std::min(cfg.momentum_switch_iter, cfg.iterations / 4);
  std::vector<std::array<double, 2>> update(n, {0.0, 0.0}), gains(n, {1.0, 1.0});
  for (int it = 0; it < cfg.iterations; ++it) {
    const double momentum = it < switch_at ? cfg.momentum_initial : cfg.momentum_final;
    const auto grad = tsne_gradient(it < exaggerate ? pe : p, y);
    std::array<double, 2> mean = {0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      for (int d = 0; d < 2; ++d) {
        double& gain = gains[i][d];
        gain = (grad[i][d] > 0.0) != (update[i][d] > 0.0) ? gain + 0.2 : gain * 0.8;
        gain = std::max(gain, 0.01);
        update[i][d] = momentum * update[i][d] - cfg.learning_rate * gain * grad[i][d];
        y[i][d] += update[i][d];
        mean[d] += y[i][d];
      }
    }
    for (auto& pt : y) {
      pt[0] -= mean[0] / static_cast<double>(n);
      pt[1] -= mean[1] / static_cast<double>(n);
      if (!std::isfinite(pt[0]) || !std::isfinite(pt[1]))
        throw NumericError("tsne: non-finite coordinates at iteration " + std::to_string(it));
    }
  }
  map.coords = std::move(y);
  map.kl_final = kl_divergence(p, student_t_affinities(map.coords));
  return map;
}

Map2D tsne(const EmbeddingIndex& index, const TsneConfig& cfg) {
  std::vector<std::string> ids;
  std::vector<std::vector<float>> vecs;
  for (const auto& r : index.records()) {
    ids.push_back(r.id);
    vecs.push_back(r.vector);
  }
  return tsne(ids, vecs, cfg);
}

std::vector<MapRow> map_rows(const Map2D& map, const std::vector<EmbeddingRecord>& records) {
  std::unordered_map<std::string, const EmbeddingRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  std::vector<MapRow> rows;
  for (std::size_t i = 0; i < map.ids.size(); ++i) {
    auto it = by_id.find(map.ids[i]);
    if (it == by_id.end()) throw ConsistencyError("map id " + map.ids[i] + " has no matching record");
    const auto& r = *it->second;
    rows.push_back({r.id, map.coords[i][0], map.coords[i][1], r.class_label.value_or(-1), r.type_label.value_or(-1), r.tags});
  }
  if (rows.empty()) throw ConsistencyError("map and records share no ids");
  std::sort(rows.begin(), rows.end(), [](const MapRow& a, const MapRow& b) { return a.id < b.id; });
  return rows;
}

std::string format_map(const std::vector<MapRow>& rows) {
  std::string out = "id\tx\ty\tclass_label\ttype_label\ttags\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "\t%.9g\t%.9g\t%d\t%d\t", r.x, r.y, r.class_label, r.type_label);
    out += r.id + buf + r.tags + "\n";
  }
  return out;
}

std::string export_map(const Map2D& map, const std::vector<EmbeddingRecord>& records) {
  return format_map(map_rows(map, records));
}

std::vector<MapRow> parse_map(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "id\tx\ty\tclass_label\ttype_label\ttags")
    throw FormatError("map: missing header line");
  std::vector<MapRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find('\t', start)) != std::string::npos; start = pos + 1)
      f.push_back(line.substr(start, pos - start));
    f.push_back(line.substr(start));
    if (f.size() != 6) throw FormatError("map: expected 6 columns, got " + std::to_string(f.size()));
    try {
      rows.push_back({f[0], std::stod(f[1]), std::stod(f[2]), std::stoi(f[3]), std::stoi(f[4]), f[5]});
    } catch (const std::exception&) {
      throw FormatError("map: malformed row for " + f[0]);
    }
  }
  return rows;
}

}  // namespace figret
