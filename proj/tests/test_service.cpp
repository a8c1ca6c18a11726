#include "doctest.h"
#include "helpers.hpp"

#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "figret/error.hpp"
#include "figret/metrics.hpp"
#include "figret/service.hpp"
#include "figret/util.hpp"

using namespace figret;
using figret::testing::TempDir;
using nlohmann::json;

namespace {

const char* kConfig = R"({
  "corpus": {"per_cell": 2, "image_size": 16},
  "network": {"lower": {"blocks": [[4, 1], [4, 1]], "feature_dim": 8},
              "upper": {"blocks": [[4, 1], [4, 1]], "feature_dim": 8}},
  "train": {"lr": 0.01, "batch_size": 8, "epochs_aux": 1, "epochs_main": 1},
  "tsne": {"iterations": 300}
})";

// One trained tiny project shared by every case in this file.
struct Project {
  TempDir dir{"service"};
  ProjectConfig cfg;
  Project() {
    std::ofstream(dir / "figret.json") << kConfig;
    cfg = ProjectConfig::load(dir / "figret.json");
    run_gen_data(cfg);
    run_train(cfg);
    run_build_index(cfg);
  }
};

Project& project() {
  static Project p;
  return p;
}

json post(QueryService& s, const std::string& body, int expect = 200) {
  const auto r = s.handle("POST", "/query", body, "application/json");
  CHECK(r.status == expect);
  CHECK(r.content_type == "application/json");
  return json::parse(r.body);
}

}  // namespace

TEST_CASE("stats describe the index") {
  auto svc = QueryService::from_project(project().cfg);
  const auto r = svc->handle("GET", "/stats", "", "");
  REQUIRE(r.status == 200);
  const json j = json::parse(r.body);
  CHECK(j["records"] == 64);
  CHECK(j["dim"] == 16);
  CHECK(j["metric"] == "cosine");
  CHECK(j["embed_source"] == "concat");
  CHECK(j["class_counts"]["3"] == 8);
  CHECK(j["type_counts"]["0"] == 16);
  CHECK(j["snapshot_version"] == svc->index().snapshot_version());
}

TEST_CASE("query by id follows the index ranking") {
  auto svc = QueryService::from_project(project().cfg);
  const auto& index = svc->index();
  const std::string id = index.records()[5].id;
  const json j = post(*svc, json({{"id", id}, {"k", 7}}).dump());
  CHECK(j["status"] == "ok");
  CHECK(j["query_id"] == id);
  CHECK(j["query"]["kind"] == "id");
  const auto expected = index.topk(index.records()[5].vector, 7, {id});
  REQUIRE(j["results"].size() == 7);
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& row = j["results"][i];
    CHECK(row["rank"] == i + 1);
    CHECK(row["id"] == expected[i].id);
    CHECK(row["similarity"].get<double>() == expected[i].similarity);
    CHECK(row["thumbnail"] == "/image/" + expected[i].id);
    CHECK(row["class_label"] == *index.find(expected[i].id)->class_label);
    CHECK(row["type_label"] == *index.find(expected[i].id)->type_label);
  }
  const json with_self = post(*svc, json({{"id", id}, {"exclude_self", false}}).dump());
  CHECK(with_self["results"].size() == 9);
  CHECK(with_self["results"][0]["id"] == id);
  CHECK(with_self["results"][0]["similarity"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("keyword queries report their seeds") {
  auto svc = QueryService::from_project(project().cfg);
  const json j = post(*svc, R"({"keyword": "Robotics", "k": 5})");
  CHECK(j["status"] == "ok");
  CHECK(j["seeds"].size() == 4);
  CHECK(j["results"].size() == 5);
  CHECK(j["query_id"].is_null());
  for (const auto& s : j["seeds"]) CHECK(svc->index().find(s.get<std::string>())->tags.find("robotics") != std::string::npos);
  CHECK(post(*svc, R"({"keyword": "Robotics", "k_seed": 2})")["seeds"].size() == 2);
  const json none = post(*svc, R"({"keyword": "zeppelin"})");
  CHECK(none["status"] == "no_seeds");
  CHECK(none["results"].empty());
}

TEST_CASE("malformed queries are rejected with a reason") {
  auto svc = QueryService::from_project(project().cfg);
  CHECK(post(*svc, "{oops", 400)["error"]["code"] == "bad_request");
  CHECK(post(*svc, "[]", 400)["error"]["code"] == "bad_request");
  CHECK(post(*svc, "{}", 400)["error"]["reason"].get<std::string>().find("id or a keyword") != std::string::npos);
  CHECK(post(*svc, R"({"id": "t0-c0-0000", "k": 0})", 400)["error"]["code"] == "bad_request");
  CHECK(post(*svc, R"({"id": 3})", 400)["error"]["code"] == "bad_request");
  CHECK(post(*svc, R"({"keyword": ""})", 400)["error"]["code"] == "bad_request");
  CHECK(post(*svc, R"({"id": "nope"})", 404)["error"]["code"] == "not_found");
}

TEST_CASE("an uploaded image of an indexed figure finds itself first") {
  auto svc = QueryService::from_project(project().cfg);
  const std::string id = svc->index().records()[10].id;
  const auto img = svc->image_bytes(id);
  REQUIRE(img);
  const auto r = svc->handle("POST", "/query", *img, "image/x-portable-graymap", {{"k", "3"}});
  REQUIRE(r.status == 200);
  const json j = json::parse(r.body);
  CHECK(j["query"]["kind"] == "image");
  REQUIRE(j["results"].size() == 3);
  CHECK(j["results"][0]["similarity"].get<double>() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(j["results"][0]["id"] == id);
  CHECK(svc->handle("POST", "/query", "P5 nonsense", "image/x-portable-graymap").status == 400);
  CHECK(svc->handle("POST", "/query", *img, "image/x-portable-graymap", {{"k", "x"}}).status == 400);
}

TEST_CASE("image endpoint serves corpus files") {
  auto svc = QueryService::from_project(project().cfg);
  const auto m = read_manifest(project().cfg.paths.corpus);
  const auto& e = m.entries.front();
  const auto r = svc->handle("GET", "/image/" + e.id, "", "");
  CHECK(r.status == 200);
  CHECK(r.content_type == "image/x-portable-graymap");
  CHECK(r.body == read_file(project().cfg.paths.corpus / e.path));
  CHECK(svc->handle("GET", "/image/unknown", "", "").status == 404);
}

TEST_CASE("map endpoint uses a matching exported map or computes one") {
  const auto& cfg = project().cfg;
  std::filesystem::remove(cfg.default_map());
  auto computed = QueryService::from_project(cfg);
  const json j = json::parse(computed->handle("GET", "/map", "", "").body);
  CHECK(j["rows"].size() == 64);
  CHECK(j["rows"][0]["id"] == computed->index().records()[0].id);

  run_map(cfg, cfg.default_map());
  const auto rows = parse_map(read_file(cfg.default_map()));
  auto loaded = QueryService::from_project(cfg);
  CHECK(loaded->map_rows() == rows);
  const json lj = json::parse(loaded->map_json());
  CHECK(lj["rows"][3]["x"].get<double>() == rows[3].x);
  CHECK(lj["rows"][3]["tags"] == rows[3].tags);

  // A stale map (different ids) is ignored.
  auto stale = rows;
  stale[0].id = "gone";
  write_file_atomic(cfg.default_map(), format_map(stale));
  auto recomputed = QueryService::from_project(cfg);
  CHECK(recomputed->map_rows().front().id != "gone");
  std::filesystem::remove(cfg.default_map());
}

TEST_CASE("marks are scored, logged and readable") {
  auto svc = QueryService::from_project(project().cfg);
  std::filesystem::remove(project().cfg.paths.marks);
  CHECK(json::parse(svc->handle("GET", "/marks", "", "").body)["scores"].empty());
  const std::string body = R"({"groups": [{"name": "A", "marks": [[1, 1, 1], [1, 1, 1]]},
                                          {"name": "B", "marks": [[0, 0, 0], [false, false, false]]}]})";
  const auto r = svc->handle("POST", "/marks", body, "application/json");
  REQUIRE(r.status == 200);
  const json j = json::parse(r.body);
  CHECK(j["scores"][0]["S"] == 1.0);
  CHECK(j["scores"][0]["K"] == 6);
  CHECK(j["scores"][1]["S"] == 0.0);
  CHECK(j["anova"]["degenerate"] == true);
  CHECK(j["anova"]["F"] == "inf");
  CHECK(svc->handle("GET", "/marks", "", "").body == r.body);
  const std::string log = read_file(project().cfg.paths.marks);
  CHECK(std::count(log.begin(), log.end(), '\n') == 1);
  CHECK(json::parse(log)["groups"][1]["name"] == "B");

  CHECK(svc->handle("POST", "/marks", R"({"groups": []})", "application/json").status == 400);
  CHECK(svc->handle("POST", "/marks", R"({"groups": [{"name": "x", "marks": [[2]]}]})", "application/json").status == 400);
  CHECK(svc->handle("POST", "/marks", R"({"groups": [{"name": "x", "marks": [[1], [1, 0]]}]})", "application/json").status == 400);
}

TEST_CASE("online mark scores equal the offline metrics") {
  auto svc = QueryService::from_project(project().cfg);
  std::vector<EvalGroup> groups = {synthetic_marks("A", 10, 10, 0.7, 1), synthetic_marks("B", 9, 10, 0.4, 2),
                                   synthetic_marks("C", 20, 10, 0.2, 3)};
  json req = {{"groups", json::array()}};
  std::vector<std::vector<double>> samples;
  for (const auto& g : groups) {
    json rows = json::array();
    for (const auto& r : g.marks) {
      json row = json::array();
      for (bool b : r) row.push_back(b ? 1 : 0);
      rows.push_back(row);
    }
    req["groups"].push_back({{"name", g.name}, {"marks", rows}});
    samples.push_back(selection_rates(g));
  }
  const json j = json::parse(svc->submit_marks(req.dump()));
  for (std::size_t i = 0; i < groups.size(); ++i) {
    CHECK(j["scores"][i]["N"] == groups[i].figures());
    CHECK(j["scores"][i]["M"] == 10);
    CHECK(j["scores"][i]["S"].get<double>() == eval_score(groups[i]));
  }
  const auto offline = anova_oneway(samples);
  CHECK(j["anova"]["F"].get<double>() == offline.f);
  CHECK(j["anova"]["p"].get<double>() == offline.p);
  CHECK(j["anova"]["df_between"] == 2);
  CHECK(j["anova"]["df_within"] == 36);
}

TEST_CASE("routing errors") {
  auto svc = QueryService::from_project(project().cfg);
  CHECK(svc->handle("GET", "/query", "", "").status == 405);
  CHECK(svc->handle("POST", "/stats", "", "").status == 405);
  CHECK(svc->handle("DELETE", "/marks", "", "").status == 405);
  const auto r = svc->handle("GET", "/nowhere", "", "");
  CHECK(r.status == 404);
  CHECK(json::parse(r.body)["error"]["code"] == "not_found");
}

TEST_CASE("construction checks") {
  QueryService::Parts empty;
  empty.model = load_checkpoint(project().cfg.model_checkpoint());
  CHECK_THROWS_AS(QueryService{empty}, ParameterError);
  QueryService::Parts mismatch;
  mismatch.model = empty.model;
  mismatch.index = EmbeddingIndex(3, {{"a", {1, 0, 0}, 0, 0, ""}});
  CHECK_THROWS_AS(QueryService{mismatch}, ConsistencyError);
  auto cfg = project().cfg;
  cfg.paths.index = project().dir / "missing.fgx";
  CHECK_THROWS_AS(QueryService::from_project(cfg), IoError);
}

TEST_CASE("HTTP front end over a loopback port") {
  auto svc = QueryService::from_project(project().cfg);
  HttpFrontend http(*svc);
  const int port = http.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread server([&] { http.listen(); });
  httplib::Client cli("127.0.0.1", port);
  cli.set_connection_timeout(5);

  const std::string id = svc->index().records()[0].id;
  const std::string request = json({{"id", id}, {"k", 4}}).dump();
  auto q = cli.Post("/query", request, "application/json");
  REQUIRE(q);
  CHECK(q->status == 200);
  CHECK(q->body == svc->query_json(request));

  auto stats = cli.Get("/stats");
  REQUIRE(stats);
  CHECK(stats->body == svc->stats_json());

  auto img = cli.Get("/image/" + id);
  REQUIRE(img);
  CHECK(img->status == 200);
  CHECK(img->get_header_value("Content-Type") == "image/x-portable-graymap");
  auto up = cli.Post("/query?k=2", img->body, "image/x-portable-graymap");
  REQUIRE(up);
  CHECK(json::parse(up->body)["results"].size() == 2);

  auto missing = cli.Get("/nowhere");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["error"]["code"] == "not_found");
  auto wrong = cli.Put("/query", "{}", "application/json");
  REQUIRE(wrong);
  CHECK(wrong->status == 405);

  // Concurrent readers see the same answers as a single caller.
  std::vector<std::thread> clients;
  std::atomic<int> agree{0};
  for (int t = 0; t < 4; ++t) {
    clients.emplace_back([&, t] {
      httplib::Client c("127.0.0.1", port);
      for (int i = 0; i < 5; ++i) {
        const std::string body = json({{"id", svc->index().records()[t * 5 + i].id}}).dump();
        auto res = c.Post("/query", body, "application/json");
        if (res && res->body == svc->query_json(body)) ++agree;
      }
    });
  }
  for (auto& c : clients) c.join();
  CHECK(agree == 20);

  http.stop();
  server.join();
}
