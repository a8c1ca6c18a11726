#include "figret/project.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "json.hpp"
#include "figret/checkpoint.hpp"
#include "figret/metrics.hpp"
#include "figret/util.hpp"

namespace figret {

namespace fs = std::filesystem;
using nlohmann::json;

void ProjectConfig::validate() const {
  corpus.validate();
  split.validate();
  if (target_per_class < 0) throw ParameterError("config: target_per_class must be >= 0");
  net.validate();
  train.validate();
  if (tsne.perplexity < 2.0 || tsne.iterations < 1 || tsne.learning_rate <= 0.0)
    throw ParameterError("config: invalid t-SNE settings");
  if (port < 0 || port > 65535) throw ParameterError("config: port outside [0, 65535]");
  if (k_seed < 1) throw ParameterError("config: k_seed must be >= 1");
  if (net.types != corpus.types || net.classes != corpus.classes)
    throw ParameterError("config: network label counts must match the corpus spec");
  if (net.height != corpus.image_size || net.width != corpus.image_size)
    throw ParameterError("config: network input size must match corpus image_size");
  const std::vector<fs::path> ps = {paths.corpus, paths.checkpoints, paths.index, paths.maps, paths.marks};
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = i + 1; j < ps.size(); ++j)
      if (ps[i].lexically_normal() == ps[j].lexically_normal())
        throw ParameterError("config: paths must be distinct (" + ps[i].string() + ")");
}

namespace {

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ProjectConfig ProjectConfig::from_json_text(const std::string& text, const fs::path& base_dir) {
  ProjectConfig c;
  try {
    const json j = json::parse(text);
    const json no_paths = json::object();
    const json& p = j.contains("paths") ? j["paths"] : no_paths;
    auto path = [&](const char* key, fs::path& out) {
      fs::path v = p.contains(key) ? fs::path(p.at(key).get<std::string>()) : out;
      out = v.is_absolute() ? v : base_dir / v;
    };
    path("corpus", c.paths.corpus);
    path("checkpoints", c.paths.checkpoints);
    path("index", c.paths.index);
    path("maps", c.paths.maps);
    path("marks", c.paths.marks);
    if (j.contains("corpus")) {
      const auto& s = j["corpus"];
      maybe(s, "types", c.corpus.types);
      maybe(s, "classes", c.corpus.classes);
      maybe(s, "per_cell", c.corpus.per_cell);
      maybe(s, "image_size", c.corpus.image_size);
      maybe(s, "seed", c.corpus.seed);
      maybe(s, "target_per_class", c.target_per_class);
      maybe(s, "split_seed", c.split_seed);
      if (s.contains("split")) {
        c.split.train = s["split"].at(0);
        c.split.val = s["split"].at(1);
        c.split.test = s["split"].at(2);
      }
      if (s.contains("augment")) {
        maybe(s["augment"], "rotation_max_deg", c.augment.rotation_max_deg);
        maybe(s["augment"], "deform_amp", c.augment.deform_amp);
        maybe(s["augment"], "hflip_prob", c.augment.hflip_prob);
      }
    }
    // Network defaults follow the corpus unless given explicitly.
    c.net.types = c.corpus.types;
    c.net.classes = c.corpus.classes;
    c.net.height = c.net.width = c.corpus.image_size;
    if (j.contains("network")) {
      json n = json::parse(c.net.canonical_text());
      n.merge_patch(j["network"]);
      c.net = DualNetConfig::from_canonical_text(n.dump());
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      maybe(t, "lr", c.train.lr);
      maybe(t, "batch_size", c.train.batch_size);
      maybe(t, "epochs_aux", c.train.epochs_aux);
      maybe(t, "epochs_main", c.train.epochs_main);
      maybe(t, "seed", c.train.seed);
      maybe(t, "shuffle", c.train.shuffle);
      maybe(t, "balance_features", c.train.balance_features);
      maybe(t, "init_seed", c.init_seed);
    }
    if (j.contains("tsne")) {
      const auto& t = j["tsne"];
      maybe(t, "perplexity", c.tsne.perplexity);
      maybe(t, "iterations", c.tsne.iterations);
      maybe(t, "learning_rate", c.tsne.learning_rate);
      maybe(t, "early_exaggeration", c.tsne.early_exaggeration);
      maybe(t, "seed", c.tsne.seed);
    }
    if (j.contains("service")) {
      maybe(j["service"], "port", c.port);
      maybe(j["service"], "k_seed", c.k_seed);
    }
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ProjectConfig ProjectConfig::load(const fs::path& file) {
  return from_json_text(read_file(file), file.has_parent_path() ? file.parent_path() : fs::path("."));
}

std::string ProjectConfig::to_json_text() const {
  json j = {
      {"paths",
       {{"corpus", paths.corpus.string()},
        {"checkpoints", paths.checkpoints.string()},
        {"index", paths.index.string()},
        {"maps", paths.maps.string()},
        {"marks", paths.marks.string()}}},
      {"corpus",
       {{"types", corpus.types},
        {"classes", corpus.classes},
        {"per_cell", corpus.per_cell},
        {"image_size", corpus.image_size},
        {"seed", corpus.seed},
        {"target_per_class", target_per_class},
        {"split_seed", split_seed},
        {"split", {split.train, split.val, split.test}},
        {"augment",
         {{"rotation_max_deg", augment.rotation_max_deg},
          {"deform_amp", augment.deform_amp},
          {"hflip_prob", augment.hflip_prob}}}}},
      {"network", json::parse(net.canonical_text())},
      {"train",
       {{"lr", train.lr},
        {"batch_size", train.batch_size},
        {"epochs_aux", train.epochs_aux},
        {"epochs_main", train.epochs_main},
        {"seed", train.seed},
        {"shuffle", train.shuffle},
        {"balance_features", train.balance_features},
        {"init_seed", init_seed}}},
      {"tsne",
       {{"perplexity", tsne.perplexity},
        {"iterations", tsne.iterations},
        {"learning_rate", tsne.learning_rate},
        {"early_exaggeration", tsne.early_exaggeration},
        {"seed", tsne.seed}}},
      {"service", {{"port", port}, {"k_seed", k_seed}}},
  };
  return j.dump(2);
}

std::string run_gen_data(const ProjectConfig& cfg) {
  cfg.validate();
  const Corpus corpus = generate_synthetic_corpus(cfg.corpus);
  int target = cfg.target_per_class;
  if (target == 0) target = cfg.corpus.types * cfg.corpus.per_cell;
  const Splits splits = balance_and_split(corpus, cfg.split, target, cfg.split_seed, cfg.augment);
  if (splits.train.empty() || splits.val.empty() || splits.test.empty())
    throw ParameterError("gen-data: " + std::to_string(target) + " examples per class leave a split empty");

  // Build next to the destination, then swap it in, so a failure leaves the old corpus intact.
  fs::path staging = cfg.paths.corpus;
  staging += ".staging";
  fs::remove_all(staging);
  write_corpus(staging, splits, cfg.corpus);
  fs::remove_all(cfg.paths.corpus);
  if (cfg.paths.corpus.has_parent_path()) fs::create_directories(cfg.paths.corpus.parent_path());
  fs::rename(staging, cfg.paths.corpus);
  return json({{"corpus", cfg.paths.corpus.string()},
               {"train", splits.train.size()},
               {"val", splits.val.size()},
               {"test", splits.test.size()}})
      .dump();
}

std::string run_train(const ProjectConfig& cfg, const LogSink& log) {
  cfg.validate();
  const Manifest manifest = read_manifest(cfg.paths.corpus);
  const Corpus train = load_split(cfg.paths.corpus, manifest, "train");
  const Corpus val = load_split(cfg.paths.corpus, manifest, "val");
  fs::create_directories(cfg.paths.checkpoints);

  std::string history;
  auto on_epoch = [&](const EpochRecord& r) {
    const std::string line = to_json_line(r);
    history += line + "\n";
    if (log) log(line);
  };
  ModelParams params = init_params<float>(cfg.net, cfg.init_seed);
  const TrainHistory aux = train_aux(params, cfg.net, train, val, cfg.train, on_epoch);
  const double scale = cfg.train.balance_features ? balance_lower_features(params, cfg.net, train) : 1.0;
  save_checkpoint(cfg.aux_checkpoint(), cfg.net, params);
  freeze_lower(params);
  const TrainHistory main = train_main(params, cfg.net, train, val, cfg.train, on_epoch);
  save_checkpoint(cfg.model_checkpoint(), cfg.net, params);
  write_file_atomic(cfg.history_log(), history);

  const json summary = {{"checkpoint", cfg.model_checkpoint().string()},
                        {"aux_epochs", aux.epochs.size()},
                        {"lower_feature_scale", scale},
                        {"main_epochs", main.epochs.size()},
                        {"aux_val_accuracy", aux.epochs.back().val_accuracy},
                        {"main_val_accuracy", main.epochs.back().val_accuracy},
                        {"aux_final_train_loss", aux.epochs.back().train_loss},
                        {"main_final_train_loss", main.epochs.back().train_loss}};
  write_file_atomic(cfg.train_summary(), summary.dump(2) + "\n");
  return summary.dump();
}

std::string run_build_index(const ProjectConfig& cfg) {
  const Checkpoint ck = load_checkpoint(cfg.model_checkpoint());
  const Manifest manifest = read_manifest(cfg.paths.corpus);
  const Corpus all = load_split(cfg.paths.corpus, manifest, "");
  const auto dim = static_cast<std::size_t>(ck.config.embedding_dim());
  EmbeddingIndex index(dim, embed_corpus(ck.params, ck.config, all));
  save_index(index, cfg.paths.index);
  return json({{"index", cfg.paths.index.string()},
               {"records", index.size()},
               {"dim", index.dim()},
               {"snapshot_version", index.snapshot_version()}})
      .dump();
}

std::string run_map(const ProjectConfig& cfg, const fs::path& out) {
  const EmbeddingIndex index = load_index(cfg.paths.index);
  TsneConfig tc = cfg.tsne;
  // Small indexes cannot support the default perplexity.
  tc.perplexity = std::min(tc.perplexity, std::max(2.0, (static_cast<double>(index.size()) - 1.0) / 3.0));
  const Map2D map = tsne(index, tc);
  write_file_atomic(out, export_map(map, index.records()));
  return json({{"map", out.string()}, {"points", map.ids.size()}, {"kl_initial", map.kl_initial}, {"kl_final", map.kl_final}})
      .dump();
}

namespace {

std::vector<EvalGroup> read_marks_file(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FormatError("marks " + path.string() + ": " + e.what());
  }
  std::vector<EvalGroup> groups;
  try {
    for (const auto& g : doc.at("groups")) {
      EvalGroup eg{g.at("name").get<std::string>(), {}};
      for (const auto& row : g.at("marks")) {
        std::vector<bool> r;
        for (const auto& v : row) r.push_back(v.is_boolean() ? v.get<bool>() : v.get<int>() != 0);
        eg.marks.push_back(std::move(r));
      }
      eg.validate();
      groups.push_back(std::move(eg));
    }
  } catch (const json::exception& e) {
    throw FormatError("marks " + path.string() + ": " + e.what());
  }
  return groups;
}

}  // namespace

std::string run_eval(const ProjectConfig& cfg, const fs::path& marks_file) {
  const Checkpoint ck = load_checkpoint(cfg.model_checkpoint());
  const Manifest manifest = read_manifest(cfg.paths.corpus);
  const Corpus test = load_split(cfg.paths.corpus, manifest, "test");
  std::vector<TaskMetrics> tasks;
  for (Task task : {Task::Aux, Task::Main}) {
    const Evaluation ev = evaluate(ck.params, ck.config, test, task);
    const int k = task == Task::Aux ? ck.config.types : ck.config.classes;
    tasks.push_back({task == Task::Aux ? "aux" : "main", accuracy(ev.predictions, ev.truths), ev.truths.size(),
                     confusion(ev.predictions, ev.truths, k)});
  }
  std::vector<EvalGroup> groups;
  if (!marks_file.empty()) groups = read_marks_file(marks_file);
  return format_report(tasks, groups);
}

KeywordResult keyword_query(const EmbeddingIndex& index, const std::string& keyword, std::size_t k_seed,
                            std::size_t k_total) {
  if (keyword.empty()) throw ParameterError("keyword query: empty keyword");
  if (k_seed < 1 || k_total < 1) throw ParameterError("keyword query: k_seed and k must be >= 1");
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
  };
  const std::string needle = lower(keyword);
  KeywordResult out;
  std::vector<std::vector<float>> queries;
  for (const auto& r : index.records()) {
    if (out.seeds.size() >= k_seed) break;
    if (lower(r.tags).find(needle) == std::string::npos) continue;
    out.seeds.push_back(r.id);
    queries.push_back(r.vector);
  }
  if (out.seeds.empty()) {
    out.no_seeds = true;
    return out;
  }
  out.results = index.multi_query(queries, k_total, out.seeds);
  return out;
}

}  // namespace figret
