#include "figret/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "json.hpp"
#include "figret/random.hpp"

namespace figret {

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Lower: return "lower";
    case ParamGroup::Upper: return "upper";
    case ParamGroup::AuxHead: return "aux_head";
    case ParamGroup::MainHead: return "main_head";
  }
  return "?";
}

namespace {

struct ConvGeom {
  int h, w, cin, cout;
};

struct BranchGeom {
  std::vector<std::vector<ConvGeom>> blocks;  // per block, per conv
  int flat = 0;
};

BranchGeom branch_geometry(const DualNetConfig& cfg, const BranchConfig& br) {
  BranchGeom g;
  int h = cfg.height, w = cfg.width, c = cfg.channels;
  for (const auto& b : br.blocks) {
    std::vector<ConvGeom> convs;
    for (int i = 0; i < b.convs; ++i) {
      convs.push_back({h, w, c, b.out_channels});
      c = b.out_channels;
    }
    g.blocks.push_back(std::move(convs));
    h /= 2;
    w /= 2;
  }
  g.flat = h * w * c;
  return g;
}

void validate_branch(const DualNetConfig& cfg, const BranchConfig& br, const char* which) {
  const std::string p = std::string("network config (") + which + "): ";
  if (br.blocks.empty()) throw ParameterError(p + "at least one conv block required");
  if (br.feature_dim < 2) throw ParameterError(p + "feature_dim must be >= 2");
  int h = cfg.height, w = cfg.width;
  for (const auto& b : br.blocks) {
    if (b.out_channels < 1 || b.convs < 1) throw ParameterError(p + "channel and conv counts must be >= 1");
    if (h % 2 != 0 || w % 2 != 0)
      throw ParameterError(p + "odd spatial extent " + std::to_string(h) + "x" + std::to_string(w) + " at a pooling layer");
    h /= 2;
    w /= 2;
  }
}

}  // namespace

void DualNetConfig::validate() const {
  if (height < 1 || width < 1 || channels < 1) throw ParameterError("network config: input extents must be >= 1");
  if (types < 2) throw ParameterError("network config: types must be >= 2");
  if (classes < 2) throw ParameterError("network config: classes must be >= 2");
  if (lower.feature_dim != upper.feature_dim)
    throw ParameterError("network config: lower and upper feature_dim must match");
  validate_branch(*this, lower, "lower");
  validate_branch(*this, upper, "upper");
}

namespace {

nlohmann::json branch_json(const BranchConfig& b) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& blk : b.blocks) blocks.push_back({blk.out_channels, blk.convs});
  return {{"blocks", blocks}, {"feature_dim", b.feature_dim}};
}

BranchConfig branch_from_json(const nlohmann::json& j) {
  BranchConfig b;
  b.blocks.clear();
  for (const auto& blk : j.at("blocks")) b.blocks.push_back({blk.at(0).get<int>(), blk.at(1).get<int>()});
  b.feature_dim = j.at("feature_dim");
  return b;
}

}  // namespace

std::string DualNetConfig::canonical_text() const {
  nlohmann::json j = {{"input", {height, width, channels}},
                      {"types", types},
                      {"classes", classes},
                      {"lower", branch_json(lower)},
                      {"upper", branch_json(upper)},
                      {"embed_source", embed_source == EmbedSource::Concat ? "concat" : "upper_branch"},
                      {"head_input", head_input == HeadInput::Concat ? "concat" : "upper_only"}};
  return j.dump();
}

DualNetConfig DualNetConfig::from_canonical_text(const std::string& text) {
  DualNetConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.height = j.at("input").at(0);
    c.width = j.at("input").at(1);
    c.channels = j.at("input").at(2);
    c.types = j.at("types");
    c.classes = j.at("classes");
    c.lower = branch_from_json(j.at("lower"));
    c.upper = branch_from_json(j.at("upper"));
    const std::string es = j.value("embed_source", "concat");
    if (es == "concat") c.embed_source = EmbedSource::Concat;
    else if (es == "upper_branch") c.embed_source = EmbedSource::UpperBranch;
    else throw ParameterError("network config: unknown embed_source '" + es + "'");
    const std::string hi = j.value("head_input", "concat");
    if (hi == "concat") c.head_input = HeadInput::Concat;
    else if (hi == "upper_only") c.head_input = HeadInput::UpperOnly;
    else throw ParameterError("network config: unknown head_input '" + hi + "'");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("network config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<TensorSlot> group_layout(const DualNetConfig& cfg, ParamGroup g) {
  std::vector<TensorSlot> out;
  auto z = [](int v) { return static_cast<std::size_t>(v); };
  switch (g) {
    case ParamGroup::Lower:
    case ParamGroup::Upper: {
      const BranchConfig& br = g == ParamGroup::Lower ? cfg.lower : cfg.upper;
      const BranchGeom geom = branch_geometry(cfg, br);
      const std::string prefix = group_name(g);
      for (std::size_t b = 0; b < geom.blocks.size(); ++b) {
        for (std::size_t i = 0; i < geom.blocks[b].size(); ++i) {
          const auto& c = geom.blocks[b][i];
          const std::string n = prefix + ".conv" + std::to_string(b + 1) + "_" + std::to_string(i + 1);
          out.push_back({n + ".weight", {3, 3, z(c.cin), z(c.cout)}});
          out.push_back({n + ".bias", {z(c.cout)}});
        }
      }
      out.push_back({prefix + ".fc.weight", {z(geom.flat), z(br.feature_dim)}});
      out.push_back({prefix + ".fc.bias", {z(br.feature_dim)}});
      break;
    }
    case ParamGroup::AuxHead:
      out.push_back({"aux_head.weight", {z(cfg.feature_dim()), z(cfg.types)}});
      out.push_back({"aux_head.bias", {z(cfg.types)}});
      break;
    case ParamGroup::MainHead:
      out.push_back({"main_head.weight", {z(cfg.head_width()), z(cfg.classes)}});
      out.push_back({"main_head.bias", {z(cfg.classes)}});
      break;
  }
  return out;
}

template <class T>
std::size_t BasicModelParams<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& g : groups)
    for (const auto& t : g) n += t.size();
  return n;
}

template <class T>
BasicModelParams<T> init_params(const DualNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  BasicModelParams<T> p;
  for (ParamGroup g : kAllGroups) {
    for (const auto& slot : group_layout(cfg, g)) {
      Tensor<T> t(slot.shape);
      const bool head = slot.name.ends_with("head.weight");
      if (slot.shape.size() > 1 && !head) {
        std::size_t fan_in = 1;
        for (std::size_t i = 0; i + 1 < slot.shape.size(); ++i) fan_in *= slot.shape[i];
        const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
        Rng rng(derive_seed(seed, slot.name));
        for (auto& v : t.storage()) v = static_cast<T>(sd * rng.normal());
      }
      p.group(g).push_back(std::move(t));
    }
  }
  return p;
}

template <class T>
void check_params(const BasicModelParams<T>& params, const DualNetConfig& cfg) {
  for (ParamGroup g : kAllGroups) {
    const auto layout = group_layout(cfg, g);
    const auto& ts = params.group(g);
    if (ts.size() != layout.size())
      throw StructuralError(std::string("params: group ") + group_name(g) + " has " + std::to_string(ts.size()) +
                            " tensors, config expects " + std::to_string(layout.size()));
    for (std::size_t i = 0; i < layout.size(); ++i)
      if (ts[i].shape() != layout[i].shape)
        throw StructuralError("params: " + layout[i].name + " has shape " + shape_string(ts[i].shape()) +
                              ", config expects " + shape_string(layout[i].shape));
  }
}

namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <class T>
using CMap = Eigen::Map<const RowMat<T>>;
template <class T>
using MMap = Eigen::Map<RowMat<T>>;

// (h*w) x cin activations -> (h*w) x (9*cin) patches, column order (ky, kx, ci).
template <class T>
void im2col(const RowMat<T>& a, int h, int w, int cin, RowMat<T>& col) {
  col.setZero(static_cast<Eigen::Index>(h) * w, 9 * cin);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      T* dst = col.row(static_cast<Eigen::Index>(y) * w + x).data();
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          const T* src = a.row(static_cast<Eigen::Index>(sy) * w + sx).data();
          std::copy(src, src + cin, dst + (ky * 3 + kx) * cin);
        }
      }
    }
  }
}

template <class T>
void col2im(const RowMat<T>& dcol, int h, int w, int cin, RowMat<T>& da) {
  da.setZero(static_cast<Eigen::Index>(h) * w, cin);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const T* src = dcol.row(static_cast<Eigen::Index>(y) * w + x).data();
      for (int ky = 0; ky < 3; ++ky) {
        const int sy = y + ky - 1;
        if (sy < 0 || sy >= h) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int sx = x + kx - 1;
          if (sx < 0 || sx >= w) continue;
          T* dst = da.row(static_cast<Eigen::Index>(sy) * w + sx).data();
          const T* s = src + (ky * 3 + kx) * cin;
          for (int c = 0; c < cin; ++c) dst[c] += s[c];
        }
      }
    }
  }
}

// Per-image activations kept for the backward pass.
template <class T>
struct BranchTrace {
  std::vector<RowMat<T>> cols;         // im2col input of each conv
  std::vector<RowMat<T>> acts;         // post-ReLU output of each conv
  std::vector<std::vector<int>> pool;  // per block: flat source index of each pooled cell
  RowVec<T> flat;
  RowVec<T> feat;  // post-ReLU fc output
};

template <class T>
class BranchRunner {
 public:
  BranchRunner(const DualNetConfig& cfg, const BranchConfig& br, const std::vector<Tensor<T>>& params)
      : geom_(branch_geometry(cfg, br)), params_(params), dim_(br.feature_dim) {}

  void run(const T* image, BranchTrace<T>& tr) const {
    const auto& first = geom_.blocks.front().front();
    RowMat<T> a = CMap<T>(image, static_cast<Eigen::Index>(first.h) * first.w, first.cin);
    tr.cols.clear();
    tr.acts.clear();
    tr.pool.clear();
    std::size_t p = 0;
    for (const auto& block : geom_.blocks) {
      for (const auto& c : block) {
        RowMat<T> col;
        im2col(a, c.h, c.w, c.cin, col);
        const auto& wt = params_[p++];
        const auto& bs = params_[p++];
        RowMat<T> z = col * CMap<T>(wt.data(), 9 * c.cin, c.cout);
        z.rowwise() += Eigen::Map<const RowVec<T>>(bs.data(), c.cout);
        a = z.cwiseMax(T(0));
        tr.cols.push_back(std::move(col));
        tr.acts.push_back(a);
      }
      const auto& last = block.back();
      const int ph = last.h / 2, pw = last.w / 2, ch = last.cout;
      RowMat<T> pooled(static_cast<Eigen::Index>(ph) * pw, ch);
      std::vector<int> src(static_cast<std::size_t>(ph) * pw * ch);
      for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
          for (int c = 0; c < ch; ++c) {
            int best = (2 * y * last.w + 2 * x);
            T bv = a(best, c);
            for (int d = 1; d < 4; ++d) {
              const int idx = (2 * y + d / 2) * last.w + 2 * x + d % 2;
              if (a(idx, c) > bv) bv = a(idx, c), best = idx;
            }
            pooled(y * pw + x, c) = bv;
            src[(static_cast<std::size_t>(y) * pw + x) * ch + c] = best;
          }
        }
      }
      tr.pool.push_back(std::move(src));
      a = std::move(pooled);
    }
    tr.flat = Eigen::Map<const RowVec<T>>(a.data(), a.size());
    const auto& fw = params_[p++];
    const auto& fb = params_[p++];
    RowVec<T> z = tr.flat * CMap<T>(fw.data(), geom_.flat, dim_);
    z += Eigen::Map<const RowVec<T>>(fb.data(), dim_);
    tr.feat = z.cwiseMax(T(0));
  }

  // Accumulates into grads (same layout as params) given dL/dfeat.
  void back(const BranchTrace<T>& tr, const RowVec<T>& dfeat, std::vector<Tensor<T>>& grads) const {
    std::size_t p = params_.size();
    RowVec<T> dz = dfeat.cwiseProduct((tr.feat.array() > T(0)).template cast<T>().matrix());
    {
      const auto& fw = params_[p - 2];
      MMap<T>(grads[p - 2].data(), geom_.flat, dim_).noalias() += tr.flat.transpose() * dz;
      Eigen::Map<RowVec<T>>(grads[p - 1].data(), dim_) += dz;
      p -= 2;
      RowVec<T> dflat = dz * CMap<T>(fw.data(), geom_.flat, dim_).transpose();
      dz = std::move(dflat);
    }
    std::size_t layer = tr.acts.size();
    RowVec<T> upstream = std::move(dz);  // gradient wrt the pooled output of the current block, flattened HWC
    for (std::size_t b = geom_.blocks.size(); b-- > 0;) {
      const auto& block = geom_.blocks[b];
      const auto& last = block.back();
      RowMat<T> da = RowMat<T>::Zero(static_cast<Eigen::Index>(last.h) * last.w, last.cout);
      const auto& src = tr.pool[b];
      for (std::size_t i = 0; i < src.size(); ++i) da(src[i], static_cast<Eigen::Index>(i % last.cout)) += upstream[i];
      for (std::size_t i = block.size(); i-- > 0;) {
        const auto& c = block[i];
        --layer;
        RowMat<T> dconv = da.cwiseProduct((tr.acts[layer].array() > T(0)).template cast<T>().matrix());
        p -= 2;
        MMap<T>(grads[p].data(), 9 * c.cin, c.cout).noalias() += tr.cols[layer].transpose() * dconv;
        Eigen::Map<RowVec<T>>(grads[p + 1].data(), c.cout) += dconv.colwise().sum();
        if (layer == 0) break;
        RowMat<T> dcol = dconv * CMap<T>(params_[p].data(), 9 * c.cin, c.cout).transpose();
        col2im(dcol, c.h, c.w, c.cin, da);
      }
      if (b > 0) upstream = Eigen::Map<const RowVec<T>>(da.data(), da.size());
    }
  }

 private:
  BranchGeom geom_;
  const std::vector<Tensor<T>>& params_;
  int dim_;
};

template <class T>
RowVec<T> softmax(const RowVec<T>& logits) {
  const T m = logits.maxCoeff();
  RowVec<T> e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

template <class T>
RowVec<T> head_logits(const std::vector<Tensor<T>>& head, const RowVec<T>& in) {
  const auto& w = head[0];
  const auto& b = head[1];
  const auto rows = static_cast<Eigen::Index>(w.dim(0)), cols = static_cast<Eigen::Index>(w.dim(1));
  RowVec<T> z = in * CMap<T>(w.data(), rows, cols);
  z += Eigen::Map<const RowVec<T>>(b.data(), cols);
  return z;
}

template <class T>
void check_batch(const DualNetConfig& cfg, const Tensor<T>& batch) {
  const std::vector<std::size_t> want = {batch.shape().empty() ? 0 : batch.dim(0), static_cast<std::size_t>(cfg.height),
                                         static_cast<std::size_t>(cfg.width), static_cast<std::size_t>(cfg.channels)};
  if (batch.shape().size() != 4 || batch.shape() != want)
    throw StructuralError("batch shape " + shape_string(batch.shape()) + " does not match [N," +
                          std::to_string(cfg.height) + "," + std::to_string(cfg.width) + "," +
                          std::to_string(cfg.channels) + "]");
  if (batch.dim(0) == 0) throw StructuralError("batch is empty");
}

template <class T>
RowVec<T> concat(const RowVec<T>& a, const RowVec<T>& b) {
  RowVec<T> out(a.size() + b.size());
  out << a, b;
  return out;
}

}  // namespace

template <class T>
ForwardResult<T> forward(const BasicModelParams<T>& params, const DualNetConfig& cfg, const Tensor<T>& batch) {
  cfg.validate();
  check_params(params, cfg);
  check_batch(cfg, batch);
  const std::size_t n = batch.dim(0);
  const std::size_t per = static_cast<std::size_t>(cfg.height) * cfg.width * cfg.channels;
  const auto d = static_cast<std::size_t>(cfg.feature_dim());
  ForwardResult<T> out{Tensor<T>({n, d}), Tensor<T>({n, d}), Tensor<T>({n, static_cast<std::size_t>(cfg.types)}),
                       Tensor<T>({n, static_cast<std::size_t>(cfg.classes)})};
  BranchRunner<T> lower(cfg, cfg.lower, params.group(ParamGroup::Lower));
  BranchRunner<T> upper(cfg, cfg.upper, params.group(ParamGroup::Upper));
  BranchTrace<T> lt, ut;
  for (std::size_t i = 0; i < n; ++i) {
    lower.run(batch.data() + i * per, lt);
    upper.run(batch.data() + i * per, ut);
    std::copy(lt.feat.data(), lt.feat.data() + d, out.lower_feat.data() + i * d);
    std::copy(ut.feat.data(), ut.feat.data() + d, out.upper_feat.data() + i * d);
    const RowVec<T> pa = softmax<T>(head_logits(params.group(ParamGroup::AuxHead), lt.feat));
    const RowVec<T> head_in = cfg.head_input == HeadInput::Concat ? concat(lt.feat, ut.feat) : ut.feat;
    const RowVec<T> pm = softmax<T>(head_logits(params.group(ParamGroup::MainHead), head_in));
    std::copy(pa.data(), pa.data() + pa.size(), out.aux_probs.data() + i * cfg.types);
    std::copy(pm.data(), pm.data() + pm.size(), out.main_probs.data() + i * cfg.classes);
  }
  return out;
}

namespace {

template <class T>
std::vector<Tensor<T>> zeros_like(const std::vector<Tensor<T>>& ts) {
  std::vector<Tensor<T>> out;
  for (const auto& t : ts) out.emplace_back(t.shape());
  return out;
}

}  // namespace

template <class T>
Gradients<T> backward(const BasicModelParams<T>& params, const DualNetConfig& cfg, const Tensor<T>& batch,
                      std::span<const int> labels, Task task) {
  cfg.validate();
  check_params(params, cfg);
  check_batch(cfg, batch);
  const std::size_t n = batch.dim(0);
  if (labels.size() != n) throw StructuralError("backward: label count does not match batch size");
  const int classes = task == Task::Aux ? cfg.types : cfg.classes;
  for (int l : labels)
    if (l < 0 || l >= classes) throw ParameterError("backward: label out of range");

  Gradients<T> g;
  auto want = [&](ParamGroup grp) { return !params.is_frozen(grp); };
  const bool lower_in_main = cfg.head_input == HeadInput::Concat;
  if (task == Task::Aux) {
    g.present[group_index(ParamGroup::Lower)] = want(ParamGroup::Lower);
    g.present[group_index(ParamGroup::AuxHead)] = want(ParamGroup::AuxHead);
  } else {
    g.present[group_index(ParamGroup::Lower)] = want(ParamGroup::Lower) && lower_in_main;
    g.present[group_index(ParamGroup::Upper)] = want(ParamGroup::Upper);
    g.present[group_index(ParamGroup::MainHead)] = want(ParamGroup::MainHead);
  }
  for (ParamGroup grp : kAllGroups)
    if (g.has(grp)) g.groups[group_index(grp)] = zeros_like(params.group(grp));

  const std::size_t per = static_cast<std::size_t>(cfg.height) * cfg.width * cfg.channels;
  const int d = cfg.feature_dim();
  const bool need_lower = task == Task::Aux || lower_in_main;
  const bool need_upper = task == Task::Main;
  BranchRunner<T> lower(cfg, cfg.lower, params.group(ParamGroup::Lower));
  BranchRunner<T> upper(cfg, cfg.upper, params.group(ParamGroup::Upper));
  BranchTrace<T> lt, ut;
  const ParamGroup head_group = task == Task::Aux ? ParamGroup::AuxHead : ParamGroup::MainHead;
  const auto& head = params.group(head_group);
  const T inv_n = T(1) / static_cast<T>(n);
  double loss = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    if (need_lower) lower.run(batch.data() + i * per, lt);
    if (need_upper) upper.run(batch.data() + i * per, ut);
    RowVec<T> head_in;
    if (task == Task::Aux) head_in = lt.feat;
    else head_in = lower_in_main ? concat(lt.feat, ut.feat) : ut.feat;
    const RowVec<T> probs = softmax<T>(head_logits(head, head_in));
    const int y = labels[i];
    loss -= std::log(std::max<double>(static_cast<double>(probs[y]), kLossEpsilon));

    RowVec<T> dlogits = probs;
    dlogits[y] -= T(1);
    dlogits *= inv_n;
    const auto hw = static_cast<Eigen::Index>(head[0].dim(0)), hk = static_cast<Eigen::Index>(head[0].dim(1));
    if (g.has(head_group)) {
      auto& hg = g.groups[group_index(head_group)];
      MMap<T>(hg[0].data(), hw, hk).noalias() += head_in.transpose() * dlogits;
      Eigen::Map<RowVec<T>>(hg[1].data(), hk) += dlogits;
    }
    const RowVec<T> din = dlogits * CMap<T>(head[0].data(), hw, hk).transpose();
    if (task == Task::Aux) {
      if (g.has(ParamGroup::Lower)) lower.back(lt, din, g.groups[group_index(ParamGroup::Lower)]);
    } else if (lower_in_main) {
      if (g.has(ParamGroup::Lower)) lower.back(lt, din.head(d), g.groups[group_index(ParamGroup::Lower)]);
      if (g.has(ParamGroup::Upper)) upper.back(ut, din.tail(d), g.groups[group_index(ParamGroup::Upper)]);
    } else if (g.has(ParamGroup::Upper)) {
      upper.back(ut, din, g.groups[group_index(ParamGroup::Upper)]);
    }
  }
  g.loss = static_cast<T>(loss / static_cast<double>(n));
  return g;
}

template <class T>
void sgd_step(BasicModelParams<T>& params, const Gradients<T>& grads, T lr) {
  for (ParamGroup grp : kAllGroups) {
    if (!grads.has(grp)) continue;
    auto& ps = params.group(grp);
    const auto& gs = grads.group(grp);
    if (ps.size() != gs.size())
      throw StructuralError(std::string("sgd_step: gradient tensor count mismatch in group ") + group_name(grp));
    for (std::size_t i = 0; i < ps.size(); ++i)
      if (!ps[i].same_shape(gs[i]))
        throw StructuralError(std::string("sgd_step: gradient shape mismatch in group ") + group_name(grp));
  }
  for (ParamGroup grp : kAllGroups) {
    if (!grads.has(grp) || params.is_frozen(grp)) continue;
    auto& ps = params.group(grp);
    const auto& gs = grads.group(grp);
    for (std::size_t i = 0; i < ps.size(); ++i) {
      T* p = ps[i].data();
      const T* q = gs[i].data();
      for (std::size_t k = 0; k < ps[i].size(); ++k) p[k] -= lr * q[k];
    }
  }
}

template <class T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.shape().size() != 2) throw StructuralError("softmax_rows: expected [N,K]");
  Tensor<T> out(logits.shape());
  const auto n = static_cast<Eigen::Index>(logits.dim(0)), k = static_cast<Eigen::Index>(logits.dim(1));
  for (Eigen::Index i = 0; i < n; ++i) {
    const RowVec<T> row = Eigen::Map<const RowVec<T>>(logits.data() + i * k, k);
    const RowVec<T> p = softmax<T>(row);
    std::copy(p.data(), p.data() + k, out.data() + i * k);
  }
  return out;
}

template <class T>
T cross_entropy(const Tensor<T>& probs, std::span<const int> labels) {
  if (probs.shape().size() != 2 || probs.dim(0) == 0) throw StructuralError("cross_entropy: expected non-empty [N,K]");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  if (labels.size() != n) throw StructuralError("cross_entropy: label count does not match rows");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) throw ParameterError("cross_entropy: label out of range");
    acc -= std::log(std::clamp<double>(static_cast<double>(probs[i * k + labels[i]]), kLossEpsilon, 1.0));
  }
  return static_cast<T>(acc / static_cast<double>(n));
}

template <class T>
T cross_entropy(const Tensor<T>& probs, const Tensor<T>& truth) {
  if (!probs.same_shape(truth)) throw StructuralError("cross_entropy: probs and truth shapes differ");
  if (probs.shape().size() != 2) throw StructuralError("cross_entropy: expected [N,K]");
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> labels(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    int ones = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T v = truth[i * k + j];
      if (v == T(1)) labels[i] = static_cast<int>(j), ++ones;
      else if (v != T(0)) ones = 2;
    }
    if (ones != 1) throw ParameterError("cross_entropy: truth row " + std::to_string(i) + " is not one-hot");
  }
  return cross_entropy(probs, std::span<const int>(labels));
}

template <class T>
std::vector<int> argmax_rows(const Tensor<T>& probs) {
  const std::size_t n = probs.dim(0), k = probs.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = probs.data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

std::vector<float> image_to_input(const Image& img, const DualNetConfig& cfg) {
  if (img.width != cfg.width || img.height != cfg.height)
    throw StructuralError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                          " does not match network input " + std::to_string(cfg.width) + "x" + std::to_string(cfg.height));
  std::vector<float> out(img.pixels.size() * cfg.channels);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    for (int c = 0; c < cfg.channels; ++c) out[i * cfg.channels + c] = 1.0f - img.pixels[i];
  return out;
}

Tensor<float> make_batch(std::span<const Image* const> images, const DualNetConfig& cfg) {
  const std::size_t per = static_cast<std::size_t>(cfg.height) * cfg.width * cfg.channels;
  Tensor<float> batch({images.size(), static_cast<std::size_t>(cfg.height), static_cast<std::size_t>(cfg.width),
                       static_cast<std::size_t>(cfg.channels)});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto v = image_to_input(*images[i], cfg);
    std::copy(v.begin(), v.end(), batch.data() + i * per);
  }
  return batch;
}

#define FIGRET_INSTANTIATE(T)                                                                                  \
  template struct BasicModelParams<T>;                                                                         \
  template BasicModelParams<T> init_params<T>(const DualNetConfig&, std::uint64_t);                            \
  template void check_params<T>(const BasicModelParams<T>&, const DualNetConfig&);                             \
  template ForwardResult<T> forward<T>(const BasicModelParams<T>&, const DualNetConfig&, const Tensor<T>&);    \
  template Gradients<T> backward<T>(const BasicModelParams<T>&, const DualNetConfig&, const Tensor<T>&,        \
                                    std::span<const int>, Task);                                               \
  template void sgd_step<T>(BasicModelParams<T>&, const Gradients<T>&, T);                                     \
  template Tensor<T> softmax_rows<T>(const Tensor<T>&);                                                        \
  template T cross_entropy<T>(const Tensor<T>&, const Tensor<T>&);                                             \
  template T cross_entropy<T>(const Tensor<T>&, std::span<const int>);                                         \
  template std::vector<int> argmax_rows<T>(const Tensor<T>&);

FIGRET_INSTANTIATE(float)
FIGRET_INSTANTIATE(double)

}  // namespace figret
