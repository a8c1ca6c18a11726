#include "doctest.h"

#include <cmath>
#include <numeric>

#include "figret/error.hpp"
#include "figret/metrics.hpp"
#include "figret/random.hpp"

using namespace figret;

namespace {

EvalGroup group_with(const std::string& name, int figures, int evaluators, long long marked) {
  EvalGroup g{name, std::vector<std::vector<bool>>(evaluators, std::vector<bool>(figures, false))};
  for (long long k = 0; k < marked; ++k) g.marks[k % evaluators][k / evaluators] = true;
  return g;
}

}  // namespace

TEST_CASE("accuracy on a hand example") {
  const std::vector<int> pred = {0, 1, 2, 3, 0, 1, 2, 3};
  const std::vector<int> truth = {0, 1, 2, 0, 1, 2, 3, 0};
  CHECK(accuracy(pred, truth) == 0.375);
  CHECK_THROWS_AS(accuracy(pred, std::vector<int>{0}), ParameterError);
  CHECK_THROWS_AS(accuracy(std::vector<int>{}, std::vector<int>{}), ParameterError);
}

TEST_CASE("confusion trace over total equals accuracy") {
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    const int classes = 1 + static_cast<int>(rng.below(9));
    const std::size_t n = 1 + rng.below(200);
    std::vector<int> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng.below(classes));
      truth[i] = rng.uniform() < 0.5 ? pred[i] : static_cast<int>(rng.below(classes));
    }
    const auto m = confusion(pred, truth, classes);
    CHECK(m.total() == static_cast<long long>(n));
    CHECK(static_cast<double>(m.trace()) / static_cast<double>(m.total()) == doctest::Approx(accuracy(pred, truth)));
    const auto norm = m.row_normalized();
    for (int r = 0; r < classes; ++r) {
      double s = 0;
      long long row = 0;
      for (int c = 0; c < classes; ++c) {
        s += norm[static_cast<std::size_t>(r) * classes + c];
        row += m.at(r, c);
      }
      CHECK(s == doctest::Approx(row ? 1.0 : 0.0));
    }
  }
  CHECK_THROWS_AS(confusion(std::vector<int>{4}, std::vector<int>{0}, 4), ParameterError);
  CHECK_THROWS_AS(confusion(std::vector<int>{0}, std::vector<int>{0}, 0), ParameterError);
}

TEST_CASE("evaluation score uses the full N times M denominator") {
  CHECK(eval_score(group_with("a", 10, 10, 100)) == 1.0);
  CHECK(eval_score(group_with("b", 9, 10, 45)) == 0.5);
  CHECK(eval_score(group_with("c", 20, 10, 0)) == 0.0);
  CHECK(eval_score(group_with("d", 20, 10, 37)) == doctest::Approx(37.0 / 200.0));
  const auto g = group_with("e", 9, 10, 90);
  CHECK(g.marked() == 90);
  CHECK(g.figures() == 9);
  CHECK(g.evaluators() == 10);
  EvalGroup ragged{"r", {{true, false}, {true}}};
  CHECK_THROWS_AS(eval_score(ragged), ParameterError);
  CHECK_THROWS_AS(eval_score(EvalGroup{"empty", {}}), ParameterError);
}

TEST_CASE("selection rates per figure") {
  EvalGroup g{"g", {{true, false, true}, {true, false, false}}};
  CHECK(selection_rates(g) == std::vector<double>{1.0, 0.0, 0.5});
}

TEST_CASE("synthetic marks follow the requested probability") {
  const auto g = synthetic_marks("s", 200, 50, 0.3, 17);
  CHECK(g.figures() == 200);
  CHECK(g.evaluators() == 50);
  CHECK(std::abs(eval_score(g) - 0.3) < 0.02);
  CHECK(synthetic_marks("s", 200, 50, 0.3, 17).marks == g.marks);
  CHECK(eval_score(synthetic_marks("one", 5, 5, 1.0, 1)) == 1.0);
  CHECK_THROWS_AS(synthetic_marks("x", 0, 5, 0.5, 1), ParameterError);
  CHECK_THROWS_AS(synthetic_marks("x", 5, 5, 1.5, 1), ParameterError);
}

TEST_CASE("one-way ANOVA against reference values") {
  const auto a = anova_oneway({{6, 8, 4, 5, 3, 4}, {8, 12, 9, 11, 6, 8}, {13, 9, 11, 8, 7, 12}});
  CHECK(a.df_between == 2);
  CHECK(a.df_within == 15);
  CHECK(a.ss_between == doctest::Approx(84.0));
  CHECK(a.ss_within == doctest::Approx(68.0));
  CHECK(std::abs(a.f - 9.264705882352942) < 1e-12);
  CHECK(std::abs(a.p - 0.0023987773293929083) < 1e-12);
  CHECK_FALSE(a.degenerate);

  const auto same = anova_oneway({{1, 2, 3}, {1, 2, 3}});
  CHECK(same.f == 0.0);
  CHECK(same.p == doctest::Approx(1.0));

  const auto apart = anova_oneway({{0.0, 0.01, 0.02, 0.0, 0.01}, {1.0, 0.99, 0.98, 1.0, 0.99}});
  CHECK(apart.p <= 1e-10);

  const auto flat = anova_oneway({{1, 1}, {2, 2}});
  CHECK(flat.degenerate);
  CHECK(std::isinf(flat.f));
  CHECK(flat.p == 0.0);

  CHECK_THROWS_AS(anova_oneway({{1, 2}}), ParameterError);
  CHECK_THROWS_AS(anova_oneway({{1}, {2}}), ParameterError);
  CHECK_THROWS_AS(anova_oneway({{1, 2}, {}}), ParameterError);
  CHECK_THROWS_AS(anova_oneway({{1, NAN}, {1, 2}}), ParameterError);
}

TEST_CASE("F survival function and incomplete beta against reference values") {
  CHECK(std::abs(f_distribution_sf(3.0, 2, 10) - 0.095367431640625) < 1e-12);
  CHECK(std::abs(f_distribution_sf(2.5, 4, 7) - 0.13703336975247687) < 1e-10);
  CHECK(std::abs(f_distribution_sf(0.5, 1, 1) - 0.6081734479693929) < 1e-10);
  CHECK(std::abs(regularized_incomplete_beta(2.5, 4.0, 0.3) - 0.3521975859067672) < 1e-10);
  CHECK(f_distribution_sf(0.0, 3, 9) == 1.0);
  CHECK(regularized_incomplete_beta(2, 3, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2, 3, 1.0) == 1.0);
  CHECK_THROWS_AS(regularized_incomplete_beta(0, 3, 0.5), ParameterError);
  CHECK_THROWS_AS(f_distribution_sf(1.0, 0, 3), ParameterError);
}

TEST_CASE("report layout") {
  TaskMetrics t{"main", 0.5, 4, confusion(std::vector<int>{0, 1, 1, 1}, std::vector<int>{0, 0, 1, 1}, 2)};
  const std::string report = format_report({t}, {group_with("dual", 4, 2, 6), group_with("control", 4, 2, 2)});
  CHECK(report.find("[task main]\naccuracy 0.500000\nexamples 4\n") != std::string::npos);
  CHECK(report.find("0.500 0.500\n0.000 1.000\n") != std::string::npos);
  CHECK(report.find("dual\t4\t2\t6\t0.750000\n") != std::string::npos);
  CHECK(report.find("control\t4\t2\t2\t0.250000\n") != std::string::npos);
  CHECK(report.find("[anova]") != std::string::npos);
  CHECK(format_report({t}, {group_with("only", 4, 2, 2)}).find("[anova]") == std::string::npos);
}

TEST_CASE("score is invariant to evaluator and figure order") {
  Rng rng(41);
  for (int t = 0; t < 50; ++t) {
    auto g = synthetic_marks("g", 1 + static_cast<int>(rng.below(20)), 1 + static_cast<int>(rng.below(10)), rng.uniform(), t);
    auto shuffled = g;
    rng.shuffle(shuffled.marks.begin(), shuffled.marks.end());
    std::vector<std::size_t> perm(g.figures());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm.begin(), perm.end());
    for (auto& row : shuffled.marks) {
      auto copy = row;
      for (std::size_t f = 0; f < perm.size(); ++f) row[f] = copy[perm[f]];
    }
    CHECK(eval_score(shuffled) == eval_score(g));
  }
}

TEST_CASE("F tail probability is in (0, 1] and falls as F grows") {
  for (auto [d1, d2] : {std::pair{1.0, 1.0}, {2.0, 15.0}, {4.0, 40.0}, {9.0, 3.0}}) {
    double prev = 1.0;
    for (double f = 0.0; f <= 60.0; f += 0.25) {
      const double p = f_distribution_sf(f, d1, d2);
      CHECK(p > 0.0);
      CHECK(p <= 1.0);
      CHECK(p <= prev);
      prev = p;
    }
  }
}
