#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "figret/dataset.hpp"
#include "figret/network.hpp"

namespace figret {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 32;
  int epochs_aux = 15;
  int epochs_main = 10;
  std::uint64_t seed = 0;
  bool shuffle = true;
  bool balance_features = true;  // run balance_lower_features between the stages

  void validate() const;
};

struct EpochRecord {
  std::string stage;  // "aux" or "main"
  int epoch = 0;      // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

// Called after every epoch; the CLI uses it to stream the JSON-lines log.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Example order for one epoch: identity when shuffle is off, otherwise a
// permutation that depends only on (seed, stage, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, const TrainConfig& tc, Task task, int epoch);

// Lower branch + aux head on type labels. The lower branch and aux head must not be frozen.
TrainHistory train_aux(ModelParams& params, const DualNetConfig& cfg, const Corpus& train, const Corpus& val,
                       const TrainConfig& tc, const EpochCallback& on_epoch = {});

// Scales the lower branch's fc layer so its features match the upper branch's
// mean squared norm over `set`, and divides the aux head weights by the same
// factor; aux predictions are unchanged. Returns the factor (1 when either
// branch is silent). Throws ProtocolError once the lower branch is frozen.
double balance_lower_features(ModelParams& params, const DualNetConfig& cfg, const Corpus& set);

// Marks the lower branch and aux head frozen. Idempotent.
void freeze_lower(ModelParams& params);

// Upper branch + main head on class labels. Throws ProtocolError unless the lower branch is frozen.
TrainHistory train_main(ModelParams& params, const DualNetConfig& cfg, const Corpus& train, const Corpus& val,
                        const TrainConfig& tc, const EpochCallback& on_epoch = {});

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
  std::vector<int> truths;
};

// Batched forward pass over a labeled set for one task.
Evaluation evaluate(const ModelParams& params, const DualNetConfig& cfg, const Corpus& set, Task task,
                    int batch_size = 64);

std::string to_json_line(const EpochRecord& r);

}  // namespace figret
