#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace figret {

double accuracy(std::span<const int> predictions, std::span<const int> truths);

// Rows are true labels, columns predictions.
struct ConfusionMatrix {
  int classes = 0;
  std::vector<long long> counts;

  long long at(int truth, int predicted) const { return counts[static_cast<std::size_t>(truth) * classes + predicted]; }
  long long total() const;
  long long trace() const;
  // Each row divided by its sum; rows of absent classes stay all-zero.
  std::vector<double> row_normalized() const;
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths, int classes);

// marks[e][f]: evaluator e selected figure f.
struct EvalGroup {
  std::string name;
  std::vector<std::vector<bool>> marks;

  int evaluators() const { return static_cast<int>(marks.size()); }
  int figures() const { return marks.empty() ? 0 : static_cast<int>(marks.front().size()); }
  long long marked() const;
  void validate() const;
};

// S = K / (N * M).
double eval_score(const EvalGroup& group);

// Fraction of evaluators that selected each figure; the per-figure samples
// compared across groups by the ANOVA.
std::vector<double> selection_rates(const EvalGroup& group);

// Marks where each evaluator selects each figure with probability select_prob.
EvalGroup synthetic_marks(const std::string& name, int figures, int evaluators, double select_prob, std::uint64_t seed);

struct AnovaResult {
  double ss_between = 0.0, ss_within = 0.0, ss_total = 0.0;
  int df_between = 0, df_within = 0;
  double ms_between = 0.0, ms_within = 0.0;
  double f = 0.0;
  double p = 1.0;
  bool degenerate = false;  // zero within-group variance
};

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups);

// I_x(a, b) via the Lentz continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
// Upper tail P(F > f) of the F(d1, d2) distribution.
double f_distribution_sf(double f, double d1, double d2);

struct TaskMetrics {
  std::string task;
  double accuracy = 0.0;
  std::size_t examples = 0;
  ConfusionMatrix confusion;
};

std::string format_report(const std::vector<TaskMetrics>& tasks, const std::vector<EvalGroup>& groups);

}  // namespace figret
