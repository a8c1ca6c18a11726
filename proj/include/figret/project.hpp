#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "figret/dataset.hpp"
#include "figret/embedding_index.hpp"
#include "figret/network.hpp"
#include "figret/projection.hpp"
#include "figret/trainer.hpp"

namespace figret {

struct ProjectPaths {
  std::filesystem::path corpus = "work/corpus";
  std::filesystem::path checkpoints = "work/checkpoints";
  std::filesystem::path index = "work/index.fgx";
  std::filesystem::path maps = "work/maps";
  std::filesystem::path marks = "work/marks.jsonl";
};

struct ProjectConfig {
  ProjectPaths paths;
  CorpusSpec corpus;
  SplitRatios split;
  int target_per_class = 0;  // 0: balance up to the largest class
  AugmentParams augment;
  std::uint64_t split_seed = 11;
  DualNetConfig net;
  TrainConfig train;
  std::uint64_t init_seed = 5;
  TsneConfig tsne;
  int port = 8080;
  int k_seed = 4;

  void validate() const;

  // Relative paths in the file resolve against the file's directory. Missing keys keep defaults.
  static ProjectConfig load(const std::filesystem::path& file);
  static ProjectConfig from_json_text(const std::string& text, const std::filesystem::path& base_dir);
  std::string to_json_text() const;

  std::filesystem::path model_checkpoint() const { return paths.checkpoints / "model.ckpt"; }
  std::filesystem::path aux_checkpoint() const { return paths.checkpoints / "stage_aux.ckpt"; }
  std::filesystem::path history_log() const { return paths.checkpoints / "history.jsonl"; }
  std::filesystem::path train_summary() const { return paths.checkpoints / "summary.json"; }
  std::filesystem::path default_map() const { return paths.maps / "map.tsv"; }
};

using LogSink = std::function<void(const std::string&)>;

// Each stage returns a one-object JSON summary.
std::string run_gen_data(const ProjectConfig& cfg);
std::string run_train(const ProjectConfig& cfg, const LogSink& log = {});
std::string run_build_index(const ProjectConfig& cfg);
std::string run_map(const ProjectConfig& cfg, const std::filesystem::path& out);
// Text report; marks_file may be empty.
std::string run_eval(const ProjectConfig& cfg, const std::filesystem::path& marks_file);

struct KeywordResult {
  bool no_seeds = false;
  std::vector<std::string> seeds;
  std::vector<Neighbor> results;
};

// Seeds are the first k_seed records (id order) whose tags contain the keyword,
// case-insensitively; results rank the rest by max similarity to the seeds.
KeywordResult keyword_query(const EmbeddingIndex& index, const std::string& keyword, std::size_t k_seed,
                            std::size_t k_total);

}  // namespace figret
