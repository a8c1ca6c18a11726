#include "figret/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "figret/random.hpp"

namespace figret {

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ParameterError("train config: lr must be finite and >= 0");
  if (batch_size < 1) throw ParameterError("train config: batch_size must be >= 1");
  if (epochs_aux < 1 || epochs_main < 1) throw ParameterError("train config: epochs must be >= 1");
}

std::vector<std::size_t> epoch_order(std::size_t n, const TrainConfig& tc, Task task, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (tc.shuffle) {
    Rng rng(derive_seed(tc.seed, task == Task::Aux ? "epoch.aux" : "epoch.main", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
  }
  return order;
}

namespace {

int label_of(const LabeledExample& ex, Task task) { return task == Task::Aux ? ex.type_label : ex.class_label; }

Tensor<float> batch_of(const Corpus& set, std::span<const std::size_t> idx, const DualNetConfig& cfg,
                       std::vector<int>& labels, Task task) {
  std::vector<const Image*> imgs;
  labels.clear();
  for (auto i : idx) {
    imgs.push_back(&set[i].image);
    labels.push_back(label_of(set[i], task));
  }
  return make_batch(imgs, cfg);
}

TrainHistory run_stage(ModelParams& params, const DualNetConfig& cfg, const Corpus& train, const Corpus& val,
                       const TrainConfig& tc, Task task, int epochs, const EpochCallback& on_epoch) {
  TrainHistory hist;
  const auto lr = static_cast<float>(tc.lr);
  std::vector<int> labels;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const auto order = epoch_order(train.size(), tc, task, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t len = std::min<std::size_t>(tc.batch_size, order.size() - start);
      const auto batch = batch_of(train, std::span(order).subspan(start, len), cfg, labels, task);
      const auto grads = backward(params, cfg, batch, labels, task);
      if (!std::isfinite(grads.loss)) throw NumericError("training diverged: non-finite loss");
      loss_sum += static_cast<double>(grads.loss) * static_cast<double>(len);
      sgd_step(params, grads, lr);
    }
    EpochRecord rec;
    rec.stage = task == Task::Aux ? "aux" : "main";
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    if (!val.empty()) {
      const auto ev = evaluate(params, cfg, val, task);
      rec.val_loss = ev.loss;
      rec.val_accuracy = ev.accuracy;
    }
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return hist;
}

void check_labels(const Corpus& set, const DualNetConfig& cfg) {
  for (const auto& ex : set)
    if (ex.type_label < 0 || ex.type_label >= cfg.types || ex.class_label < 0 || ex.class_label >= cfg.classes)
      throw ParameterError("example " + ex.id + " has labels outside the network's range");
}

}  // namespace

TrainHistory train_aux(ModelParams& params, const DualNetConfig& cfg, const Corpus& train, const Corpus& val,
                       const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  if (train.empty()) throw ParameterError("train_aux: empty training set");
  check_params(params, cfg);
  check_labels(train, cfg);
  check_labels(val, cfg);
  if (params.is_frozen(ParamGroup::Lower) || params.is_frozen(ParamGroup::AuxHead))
    throw ProtocolError("train_aux: lower branch is already frozen");
  return run_stage(params, cfg, train, val, tc, Task::Aux, tc.epochs_aux, on_epoch);
}

double balance_lower_features(ModelParams& params, const DualNetConfig& cfg, const Corpus& set) {
  if (params.is_frozen(ParamGroup::Lower)) throw ProtocolError("balance_lower_features: lower branch is frozen");
  if (set.empty()) throw ParameterError("balance_lower_features: empty set");
  check_params(params, cfg);
  double lower = 0.0, upper = 0.0;
  constexpr std::size_t kChunk = 64;
  for (std::size_t start = 0; start < set.size(); start += kChunk) {
    std::vector<const Image*> images;
    for (std::size_t i = start; i < std::min(set.size(), start + kChunk); ++i) images.push_back(&set[i].image);
    const auto f = forward(params, cfg, make_batch(images, cfg));
    for (float v : f.lower_feat.values()) lower += static_cast<double>(v) * v;
    for (float v : f.upper_feat.values()) upper += static_cast<double>(v) * v;
  }
  if (lower == 0.0 || upper == 0.0) return 1.0;
  const double scale = std::sqrt(upper / lower);
  auto rescale = [&](ParamGroup g, std::string_view suffix, double factor) {
    const auto layout = group_layout(cfg, g);
    for (std::size_t i = 0; i < layout.size(); ++i)
      if (layout[i].name.ends_with(suffix))
        for (auto& v : params.group(g)[i].values()) v = static_cast<float>(v * factor);
  };
  rescale(ParamGroup::Lower, ".fc.weight", scale);
  rescale(ParamGroup::Lower, ".fc.bias", scale);
  rescale(ParamGroup::AuxHead, "head.weight", 1.0 / scale);
  return scale;
}

void freeze_lower(ModelParams& params) {
  params.frozen[group_index(ParamGroup::Lower)] = true;
  params.frozen[group_index(ParamGroup::AuxHead)] = true;
}

TrainHistory train_main(ModelParams& params, const DualNetConfig& cfg, const Corpus& train, const Corpus& val,
                        const TrainConfig& tc, const EpochCallback& on_epoch) {
  tc.validate();
  if (train.empty()) throw ParameterError("train_main: empty training set");
  check_params(params, cfg);
  check_labels(train, cfg);
  check_labels(val, cfg);
  if (!params.is_frozen(ParamGroup::Lower))
    throw ProtocolError("train_main: lower branch must be frozen first (call freeze_lower)");
  return run_stage(params, cfg, train, val, tc, Task::Main, tc.epochs_main, on_epoch);
}

Evaluation evaluate(const ModelParams& params, const DualNetConfig& cfg, const Corpus& set, Task task, int batch_size) {
  if (set.empty()) throw ParameterError("evaluate: empty set");
  Evaluation ev;
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<int> labels;
  double loss = 0.0;
  for (std::size_t start = 0; start < set.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t len = std::min<std::size_t>(batch_size, set.size() - start);
    const auto batch = batch_of(set, std::span(idx).subspan(start, len), cfg, labels, task);
    const auto out = forward(params, cfg, batch);
    const auto& probs = task == Task::Aux ? out.aux_probs : out.main_probs;
    loss += static_cast<double>(cross_entropy(probs, std::span<const int>(labels))) * static_cast<double>(len);
    const auto pred = argmax_rows(probs);
    ev.predictions.insert(ev.predictions.end(), pred.begin(), pred.end());
    ev.truths.insert(ev.truths.end(), labels.begin(), labels.end());
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ev.truths.size(); ++i) hits += ev.predictions[i] == ev.truths[i];
  ev.loss = loss / static_cast<double>(set.size());
  ev.accuracy = static_cast<double>(hits) / static_cast<double>(set.size());
  return ev;
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::json j = {{"stage", r.stage}, {"epoch", r.epoch}, {"train_loss", r.train_loss},
                      {"val_loss", r.val_loss}, {"val_accuracy", r.val_accuracy}};
  return j.dump();
}

}  // namespace figret
