#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "figret/image.hpp"
#include "figret/tensor.hpp"

namespace figret {

struct ConvBlock {
  int out_channels = 16;
  int convs = 2;

  friend bool operator==(const ConvBlock&, const ConvBlock&) = default;
};

struct BranchConfig {
  std::vector<ConvBlock> blocks = {{16, 2}, {32, 2}, {64, 2}};
  int feature_dim = 128;

  friend bool operator==(const BranchConfig&, const BranchConfig&) = default;
};

// Which features embed() returns.
enum class EmbedSource { UpperBranch, Concat };
// What the main head reads. UpperOnly is the single-branch control network.
enum class HeadInput { Concat, UpperOnly };

struct DualNetConfig {
  int height = 64;
  int width = 64;
  int channels = 1;
  int types = 4;
  int classes = 8;
  BranchConfig lower;
  BranchConfig upper;
  EmbedSource embed_source = EmbedSource::Concat;
  HeadInput head_input = HeadInput::Concat;

  // Rejects mismatched feature widths and odd extents at any pooling layer.
  void validate() const;
  int feature_dim() const { return lower.feature_dim; }
  int head_width() const { return head_input == HeadInput::Concat ? 2 * feature_dim() : feature_dim(); }
  int embedding_dim() const { return embed_source == EmbedSource::Concat ? 2 * feature_dim() : feature_dim(); }

  // Compact JSON with sorted keys; stable across runs.
  std::string canonical_text() const;
  static DualNetConfig from_canonical_text(const std::string& text);

  friend bool operator==(const DualNetConfig&, const DualNetConfig&) = default;
};

enum class ParamGroup : int { Lower = 0, Upper = 1, AuxHead = 2, MainHead = 3 };
inline constexpr std::array<ParamGroup, 4> kAllGroups = {ParamGroup::Lower, ParamGroup::Upper, ParamGroup::AuxHead,
                                                        ParamGroup::MainHead};
const char* group_name(ParamGroup g);
inline std::size_t group_index(ParamGroup g) { return static_cast<std::size_t>(g); }

// Names and shapes of every tensor in a group, in storage order.
struct TensorSlot {
  std::string name;
  std::vector<std::size_t> shape;
};
std::vector<TensorSlot> group_layout(const DualNetConfig& cfg, ParamGroup g);

template <class T>
struct BasicModelParams {
  std::array<std::vector<Tensor<T>>, 4> groups;
  std::array<bool, 4> frozen{};

  std::vector<Tensor<T>>& group(ParamGroup g) { return groups[group_index(g)]; }
  const std::vector<Tensor<T>>& group(ParamGroup g) const { return groups[group_index(g)]; }
  bool is_frozen(ParamGroup g) const { return frozen[group_index(g)]; }
  std::size_t scalar_count() const;

  template <class U>
  BasicModelParams<U> cast() const {
    BasicModelParams<U> out;
    out.frozen = frozen;
    for (std::size_t g = 0; g < groups.size(); ++g)
      for (const auto& t : groups[g]) out.groups[g].push_back(t.template cast<U>());
    return out;
  }

  friend bool operator==(const BasicModelParams&, const BasicModelParams&) = default;
};

using ModelParams = BasicModelParams<float>;

// He-style fan-in scaled normal weights, zero biases. Each tensor draws from a
// stream keyed by its name, so branches initialize identically across configs.
template <class T>
BasicModelParams<T> init_params(const DualNetConfig& cfg, std::uint64_t seed);

// Throws StructuralError if params do not match cfg.
template <class T>
void check_params(const BasicModelParams<T>& params, const DualNetConfig& cfg);

template <class T>
struct ForwardResult {
  Tensor<T> lower_feat;  // [N, D]
  Tensor<T> upper_feat;  // [N, D]
  Tensor<T> aux_probs;   // [N, T]
  Tensor<T> main_probs;  // [N, K]
};

// batch is [N, H, W, C], row-major.
template <class T>
ForwardResult<T> forward(const BasicModelParams<T>& params, const DualNetConfig& cfg, const Tensor<T>& batch);

enum class Task { Aux, Main };

template <class T>
struct Gradients {
  std::array<std::vector<Tensor<T>>, 4> groups;
  std::array<bool, 4> present{};
  T loss = T(0);

  bool has(ParamGroup g) const { return present[group_index(g)]; }
  const std::vector<Tensor<T>>& group(ParamGroup g) const { return groups[group_index(g)]; }
};

// Mean cross-entropy of the task's head over the batch and its exact gradient
// for every non-frozen group the loss depends on. Frozen groups get no entry.
template <class T>
Gradients<T> backward(const BasicModelParams<T>& params, const DualNetConfig& cfg, const Tensor<T>& batch,
                      std::span<const int> labels, Task task);

// theta <- theta - lr * g for every present, non-frozen group.
template <class T>
void sgd_step(BasicModelParams<T>& params, const Gradients<T>& grads, T lr);

// Row-wise softmax of [N, K] logits, max-shifted.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits);

inline constexpr double kLossEpsilon = 1e-12;

// Mean over rows of -log(max(p_true, 1e-12)); truth is one-hot [N, K].
template <class T>
T cross_entropy(const Tensor<T>& probs, const Tensor<T>& truth_one_hot);
template <class T>
T cross_entropy(const Tensor<T>& probs, std::span<const int> labels);

template <class T>
std::vector<int> argmax_rows(const Tensor<T>& probs);

// Network input for an image: ink intensity 1 - pixel, [H, W, 1].
std::vector<float> image_to_input(const Image& img, const DualNetConfig& cfg);
Tensor<float> make_batch(std::span<const Image* const> images, const DualNetConfig& cfg);

}  // namespace figret
