#include "doctest.h"
#include "helpers.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"

#include "figret/checkpoint.hpp"
#include "figret/error.hpp"
#include "figret/project.hpp"
#include "figret/random.hpp"
#include "figret/util.hpp"

using namespace figret;
using figret::testing::TempDir;

namespace {

const char* kTinyConfig = R"({
  "corpus": {"per_cell": 2, "image_size": 16},
  "network": {"lower": {"blocks": [[4, 1], [4, 1]], "feature_dim": 8},
              "upper": {"blocks": [[4, 1], [4, 1]], "feature_dim": 8}},
  "train": {"lr": 0.01, "batch_size": 8, "epochs_aux": 1, "epochs_main": 1}
})";

EmbeddingRecord record(const std::string& id, std::vector<float> v, const std::string& tags) {
  return {id, std::move(v), std::nullopt, std::nullopt, tags};
}

}  // namespace

TEST_CASE("config defaults and path resolution") {
  const auto cfg = ProjectConfig::from_json_text("{}", "/base");
  CHECK(cfg.paths.corpus == std::filesystem::path("/base/work/corpus"));
  CHECK(cfg.paths.index == std::filesystem::path("/base/work/index.fgx"));
  CHECK(cfg.corpus.types == 4);
  CHECK(cfg.corpus.classes == 8);
  CHECK(cfg.net.height == 64);
  CHECK(cfg.split_seed == 11);
  CHECK(cfg.k_seed == 4);

  const auto custom = ProjectConfig::from_json_text(
      R"({"paths": {"index": "x/i.fgx", "marks": "/abs/m.jsonl"}, "service": {"port": 9001, "k_seed": 2}})", "/base");
  CHECK(custom.paths.index == std::filesystem::path("/base/x/i.fgx"));
  CHECK(custom.paths.marks == std::filesystem::path("/abs/m.jsonl"));
  CHECK(custom.paths.corpus == std::filesystem::path("/base/work/corpus"));
  CHECK(custom.port == 9001);
  CHECK(custom.k_seed == 2);
}

TEST_CASE("config text round trip") {
  const auto cfg = ProjectConfig::from_json_text(kTinyConfig, "/w");
  CHECK(cfg.net.height == 16);
  CHECK(cfg.net.lower.feature_dim == 8);
  const std::string text = cfg.to_json_text();
  CHECK(ProjectConfig::from_json_text(text, "/elsewhere").to_json_text() == text);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(ProjectConfig::from_json_text("{not json", "."), ParameterError);
  CHECK_THROWS_AS(ProjectConfig::from_json_text(R"({"service": {"port": 70000}})", "."), ParameterError);
  CHECK_THROWS_AS(ProjectConfig::from_json_text(R"({"service": {"k_seed": 0}})", "."), ParameterError);
  CHECK_THROWS_AS(ProjectConfig::from_json_text(R"({"network": {"types": 3}})", "."), ParameterError);
  CHECK_THROWS_AS(ProjectConfig::from_json_text(R"({"paths": {"index": "a", "maps": "a"}})", "."), ParameterError);
  CHECK_THROWS_AS(ProjectConfig::from_json_text(R"({"train": {"lr": "fast"}})", "."), ParameterError);
  CHECK_THROWS_AS(ProjectConfig::load("/nonexistent/figret.json"), IoError);
  TempDir dir("cfg");
  auto small = ProjectConfig::from_json_text(R"({"corpus": {"per_cell": 1}})", dir.path());
  CHECK_THROWS_AS(run_gen_data(small), ParameterError);
}

TEST_CASE("keyword query with a single seed reduces to topk") {
  Rng rng(2);
  std::vector<EmbeddingRecord> recs;
  for (int i = 0; i < 50; ++i) {
    std::vector<float> v(6);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    recs.push_back(record("r" + std::to_string(100 + i), v, i == 17 ? "Robotics arm" : "pump"));
  }
  const EmbeddingIndex index(6, recs);
  const auto kq = keyword_query(index, "ROBOTICS", 4, 10);
  CHECK_FALSE(kq.no_seeds);
  CHECK(kq.seeds == std::vector<std::string>{"r117"});
  CHECK(kq.results == index.topk(recs[17].vector, 10, {"r117"}));

  const auto none = keyword_query(index, "aircraft", 4, 10);
  CHECK(none.no_seeds);
  CHECK(none.results.empty());
  CHECK_THROWS_AS(keyword_query(index, "", 4, 10), ParameterError);
  CHECK_THROWS_AS(keyword_query(index, "pump", 0, 10), ParameterError);
}

TEST_CASE("keyword seeds are capped and excluded") {
  Rng rng(3);
  std::vector<EmbeddingRecord> recs;
  for (int i = 0; i < 40; ++i) {
    std::vector<float> v(4);
    for (auto& x : v) x = static_cast<float>(rng.normal());
    recs.push_back(record("id" + std::to_string(10 + i), v, i % 3 == 0 ? "valve" : "gearbox"));
  }
  const EmbeddingIndex index(4, recs);
  const auto kq = keyword_query(index, "valve", 3, 50);
  CHECK(kq.seeds == std::vector<std::string>{"id10", "id13", "id16"});
  CHECK(kq.results.size() == 37);
  for (const auto& n : kq.results) CHECK(std::find(kq.seeds.begin(), kq.seeds.end(), n.id) == kq.seeds.end());
  CHECK(std::is_sorted(kq.results.begin(), kq.results.end(),
                       [](const Neighbor& a, const Neighbor& b) { return a.similarity > b.similarity; }));
}

TEST_CASE("keyword results favour the seeded tag when tags follow the geometry") {
  Rng rng(6);
  std::vector<EmbeddingRecord> recs;
  const std::vector<std::string> tags = {"robotics", "milling", "aircraft", "flywheel"};
  for (int i = 0; i < 200; ++i) {
    const int t = i % 4;
    std::vector<float> v(8);
    for (auto& x : v) x = static_cast<float>(0.5 * rng.normal());
    v[t] += 2.0f;
    recs.push_back(record("f" + std::to_string(1000 + i), v, tags[t]));
  }
  const EmbeddingIndex index(8, recs);
  const auto kq = keyword_query(index, "robotics", 4, 20);
  int same = 0;
  for (const auto& n : kq.results) same += index.find(n.id)->tags == "robotics";
  CHECK(static_cast<double>(same) / 20.0 > 0.25);
}

TEST_CASE("pipeline stages on a tiny project") {
  TempDir dir("project");
  {
    std::ofstream(dir / "figret.json") << kTinyConfig;
  }
  const auto cfg = ProjectConfig::load(dir / "figret.json");
  CHECK_THROWS_AS(run_train(cfg), IoError);

  const auto gen = nlohmann::json::parse(run_gen_data(cfg));
  CHECK(gen["train"] == 48);
  CHECK(gen["val"] == 8);
  CHECK(gen["test"] == 8);
  CHECK(std::filesystem::exists(cfg.paths.corpus / "manifest.json"));
  CHECK_FALSE(std::filesystem::exists(dir / "work/corpus.staging"));

  std::vector<std::string> lines;
  const auto train = nlohmann::json::parse(run_train(cfg, [&](const std::string& l) { lines.push_back(l); }));
  CHECK(lines.size() == 2);
  CHECK(train["aux_epochs"] == 1);
  CHECK(std::filesystem::exists(cfg.model_checkpoint()));
  CHECK(std::filesystem::exists(cfg.aux_checkpoint()));
  CHECK(read_file(cfg.history_log()) == lines[0] + "\n" + lines[1] + "\n");

  const auto built = nlohmann::json::parse(run_build_index(cfg));
  CHECK(built["records"] == 64);
  CHECK(built["dim"] == 16);
  const std::string first = read_file(cfg.paths.index);
  run_build_index(cfg);
  CHECK(read_file(cfg.paths.index) == first);

  const auto map = nlohmann::json::parse(run_map(cfg, cfg.default_map()));
  CHECK(map["points"] == 64);
  CHECK(map["kl_final"].get<double>() < map["kl_initial"].get<double>());
  CHECK(parse_map(read_file(cfg.default_map())).size() == 64);

  const std::string report = run_eval(cfg, {});
  CHECK(report.find("[task aux]") != std::string::npos);
  CHECK(report.find("[task main]") != std::string::npos);
  CHECK(report.find("examples 8") != std::string::npos);

  {
    std::ofstream(dir / "marks.json") << R"({"groups": [{"name": "dual", "marks": [[1, 1], [1, 0]]},
                                                      {"name": "control", "marks": [[0, 0], [false, true]]}]})";
    std::ofstream(dir / "bad.json") << R"({"groups": [{"name": "x", "marks": [[1], [1, 0]]}]})";
  }
  const std::string scored = run_eval(cfg, dir / "marks.json");
  CHECK(scored.find("dual\t2\t2\t3\t0.750000") != std::string::npos);
  CHECK(scored.find("[anova]") != std::string::npos);
  CHECK_THROWS(run_eval(cfg, dir / "bad.json"));
  CHECK_THROWS_AS(run_eval(cfg, dir / "missing.json"), IoError);
}
