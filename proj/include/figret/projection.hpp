#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "figret/embedding_index.hpp"

namespace figret {

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double momentum_initial = 0.5;
  double momentum_final = 0.8;
  int momentum_switch_iter = 250;
  double early_exaggeration = 12.0;
  int exaggeration_iters = 250;
  std::uint64_t seed = 0;

  void validate(std::size_t n_points) const;
};

// Dense row-major n x n matrix.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> v;

  double& operator()(std::size_t i, std::size_t j) { return v[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * n + j]; }
  double sum() const;
};

struct Bandwidth {
  double beta = 1.0;  // 1 / (2 sigma^2)
  double sigma = 0.0;
  double perplexity = 0.0;  // achieved
  int steps = 0;
};

inline constexpr int kMaxBisectionSteps = 50;
inline constexpr double kPerplexityTolerance = 1e-4;
inline constexpr double kAffinityFloor = 1e-12;

// Gaussian bandwidth for one point given its squared distances to every other
// point, found by bracketing and bisection on beta.
Bandwidth search_bandwidth(std::span<const double> sq_dists, double perplexity);

SquareMatrix squared_distances(const std::vector<std::vector<double>>& points);

// Symmetrized joint affinities: (p_j|i + p_i|j) / 2n, zero diagonal,
// off-diagonal entries floored at 1e-12, total 1.
SquareMatrix pairwise_affinities(const std::vector<std::vector<double>>& points, double perplexity,
                                 std::vector<Bandwidth>* bandwidths = nullptr);

// Student-t (one degree of freedom) affinities of a 2-D layout.
SquareMatrix student_t_affinities(const std::vector<std::array<double, 2>>& y);
double kl_divergence(const SquareMatrix& p, const SquareMatrix& q);
// dKL/dy for the given layout; p may carry an exaggeration factor.
std::vector<std::array<double, 2>> tsne_gradient(const SquareMatrix& p, const std::vector<std::array<double, 2>>& y);

struct Map2D {
  std::vector<std::string> ids;                 // sorted
  std::vector<std::array<double, 2>> coords;    // aligned with ids
  double kl_initial = 0.0;
  double kl_final = 0.0;
  TsneConfig config;
};

// Exact t-SNE. Points are processed in id order and initialized from a stream
// keyed by id, so permuting the input permutes nothing but the caller's view.
Map2D tsne(const std::vector<std::string>& ids, const std::vector<std::vector<float>>& vectors, const TsneConfig& cfg);
Map2D tsne(const EmbeddingIndex& index, const TsneConfig& cfg);

struct MapRow {
  std::string id;
  double x = 0.0, y = 0.0;
  int class_label = -1;
  int type_label = -1;
  std::string tags;

  friend bool operator==(const MapRow&, const MapRow&) = default;
};

// Joins map coordinates with record metadata. Every map id must have a record.
std::vector<MapRow> map_rows(const Map2D& map, const std::vector<EmbeddingRecord>& records);
// Tab-separated, header line first, rows ordered by id, floats with 9 significant digits.
std::string format_map(const std::vector<MapRow>& rows);
std::string export_map(const Map2D& map, const std::vector<EmbeddingRecord>& records);
std::vector<MapRow> parse_map(const std::string& text);

}  // namespace figret
