#include "figret/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "figret/error.hpp"
#include "figret/random.hpp"

namespace figret {

double accuracy(std::span<const int> predictions, std::span<const int> truths) {
  if (predictions.size() != truths.size()) throw ParameterError("accuracy: length mismatch");
  if (truths.empty()) throw ParameterError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) hits += predictions[i] == truths[i];
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

long long ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }

long long ConfusionMatrix::trace() const {
  long long t = 0;
  for (int i = 0; i < classes; ++i) t += at(i, i);
  return t;
}

std::vector<double> ConfusionMatrix::row_normalized() const {
  std::vector<double> out(counts.size(), 0.0);
  for (int r = 0; r < classes; ++r) {
    long long s = 0;
    for (int c = 0; c < classes; ++c) s += at(r, c);
    if (s == 0) continue;
    for (int c = 0; c < classes; ++c)
      out[static_cast<std::size_t>(r) * classes + c] = static_cast<double>(at(r, c)) / static_cast<double>(s);
  }
  return out;
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> truths, int classes) {
  if (classes < 1) throw ParameterError("confusion: classes must be >= 1");
  if (predictions.size() != truths.size()) throw ParameterError("confusion: length mismatch");
  ConfusionMatrix m{classes, std::vector<long long>(static_cast<std::size_t>(classes) * classes, 0)};
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const int t = truths[i], p = predictions[i];
    if (t < 0 || t >= classes || p < 0 || p >= classes) throw ParameterError("confusion: label out of range");
    ++m.counts[static_cast<std::size_t>(t) * classes + p];
  }
  return m;
}

long long EvalGroup::marked() const {
  long long k = 0;
  for (const auto& row : marks)
    for (bool b : row) k += b;
  return k;
}

void EvalGroup::validate() const {
  if (marks.empty()) throw ParameterError("group " + name + ": needs at least one evaluator");
  if (marks.front().empty()) throw ParameterError("group " + name + ": needs at least one figure");
  for (const auto& row : marks)
    if (row.size() != marks.front().size())
      throw ParameterError("group " + name + ": every evaluator must mark the same figures");
}

double eval_score(const EvalGroup& group) {
  group.validate();
  return static_cast<double>(group.marked()) / (static_cast<double>(group.figures()) * group.evaluators());
}

std::vector<double> selection_rates(const EvalGroup& group) {
  group.validate();
  std::vector<double> rates(group.figures(), 0.0);
  for (const auto& row : group.marks)
    for (std::size_t f = 0; f < row.size(); ++f) rates[f] += row[f];
  for (auto& r : rates) r /= group.evaluators();
  return rates;
}

EvalGroup synthetic_marks(const std::string& name, int figures, int evaluators, double select_prob, std::uint64_t seed) {
  if (figures < 1 || evaluators < 1) throw ParameterError("synthetic_marks: sizes must be >= 1");
  if (!(select_prob >= 0.0 && select_prob <= 1.0)) throw ParameterError("synthetic_marks: probability outside [0,1]");
  Rng rng(derive_seed(seed, name));
  EvalGroup g{name, std::vector<std::vector<bool>>(evaluators, std::vector<bool>(figures))};
  for (auto& row : g.marks)
    for (std::size_t f = 0; f < row.size(); ++f) row[f] = rng.uniform() < select_prob;
  return g;
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta: continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ParameterError("incomplete beta: a and b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw ParameterError("incomplete beta: x outside [0,1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_distribution_sf(double f, double d1, double d2) {
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw ParameterError("F distribution: degrees of freedom must be > 0");
  if (!(f > 0.0)) return 1.0;
  if (std::isinf(f)) return 0.0;
  return regularized_incomplete_beta(0.5 * d2, 0.5 * d1, d2 / (d2 + d1 * f));
}

AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw ParameterError("anova: at least two groups required");
  std::size_t total_n = 0;
  double grand = 0.0;
  for (const auto& g : groups) {
    if (g.empty()) throw ParameterError("anova: empty group");
    total_n += g.size();
    for (double v : g) {
      if (!std::isfinite(v)) throw ParameterError("anova: non-finite sample");
      grand += v;
    }
  }
  grand /= static_cast<double>(total_n);
  AnovaResult r;
  r.df_between = static_cast<int>(groups.size()) - 1;
  r.df_within = static_cast<int>(total_n - groups.size());
  if (r.df_within < 1) throw ParameterError("anova: no within-group degrees of freedom");
  for (const auto& g : groups) {
    const double mean = std::accumulate(g.begin(), g.end(), 0.0) / static_cast<double>(g.size());
    r.ss_between += static_cast<double>(g.size()) * (mean - grand) * (mean - grand);
    for (double v : g) r.ss_within += (v - mean) * (v - mean);
  }
  r.ss_total = r.ss_between + r.ss_within;
  r.ms_between = r.ss_between / r.df_between;
  r.ms_within = r.ss_within / r.df_within;
  if (r.ms_within == 0.0) {
    r.degenerate = true;
    if (r.ms_between > 0.0) {
      r.f = std::numeric_limits<double>::infinity();
      r.p = 0.0;
    } else {
      r.f = 0.0;
      r.p = 1.0;
    }
    return r;
  }
  r.f = r.ms_between / r.ms_within;
  r.p = f_distribution_sf(r.f, r.df_between, r.df_within);
  return r;
}

std::string format_report(const std::vector<TaskMetrics>& tasks, const std::vector<EvalGroup>& groups) {
  std::string out;
  char buf[160];
  for (const auto& t : tasks) {
    std::snprintf(buf, sizeof buf, "[task %s]\naccuracy %.6f\nexamples %zu\n", t.task.c_str(), t.accuracy, t.examples);
    out += buf;
    out += "confusion_row_normalized\n";
    const auto norm = t.confusion.row_normalized();
    for (int r = 0; r < t.confusion.classes; ++r) {
      for (int c = 0; c < t.confusion.classes; ++c) {
        std::snprintf(buf, sizeof buf, c ? " %.3f" : "%.3f", norm[static_cast<std::size_t>(r) * t.confusion.classes + c]);
        out += buf;
      }
      out += "\n";
    }
    out += "\n";
  }
  if (!groups.empty()) {
    out += "[scores]\ngroup\tN\tM\tK\tS\n";
    std::vector<std::vector<double>> samples;
    for (const auto& g : groups) {
      std::snprintf(buf, sizeof buf, "\t%d\t%d\t%lld\t%.6f\n", g.figures(), g.evaluators(), g.marked(), eval_score(g));
      out += g.name + buf;
      samples.push_back(selection_rates(g));
    }
    if (groups.size() >= 2) {
      const auto a = anova_oneway(samples);
      out += "\n[anova]\nsource\tSS\tdf\tMS\tF\tp\n";
      std::snprintf(buf, sizeof buf, "between\t%.6g\t%d\t%.6g\t%.6g\t%.6g\n", a.ss_between, a.df_between, a.ms_between, a.f, a.p);
      out += buf;
      std::snprintf(buf, sizeof buf, "within\t%.6g\t%d\t%.6g\t\t\n", a.ss_within, a.df_within, a.ms_within);
      out += buf;
      std::snprintf(buf, sizeof buf, "total\t%.6g\t%d\t\t\t\n", a.ss_total, a.df_between + a.df_within);
      out += buf;
      if (a.degenerate) out += "note\tzero within-group variance\n";
    }
  }
  return out;
}

}  // namespace figret
