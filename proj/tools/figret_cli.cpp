#include <csignal>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "figret/figret.h"

namespace {

struct Failure {
  std::string message;
};

void check(figret_status s) {
  if (s != FIGRET_OK) throw Failure{std::string(figret_status_name(s)) + ": " + figret_last_error()};
}

// Owns a string returned by the library.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { figret_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct Project {
  figret_project* p = nullptr;
  explicit Project(const std::string& config) { check(figret_project_open(config.empty() ? nullptr : config.c_str(), &p)); }
  ~Project() { figret_project_free(p); }
};

void log_line(const char* line, void*) {
  std::fprintf(stderr, "%s\n", line);
}

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Failure{"cannot open: " + path};
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void print_results(const std::string& response) {
  const auto j = nlohmann::json::parse(response);
  if (j.value("status", "ok") == "no_seeds") {
    std::fprintf(stderr, "no records match the keyword\n");
    return;
  }
  if (j.contains("seeds") && !j["seeds"].empty()) {
    std::string seeds;
    for (const auto& s : j["seeds"]) seeds += (seeds.empty() ? "" : ",") + s.get<std::string>();
    std::fprintf(stderr, "seeds: %s\n", seeds.c_str());
  }
  for (const auto& r : j["results"]) {
    auto label = [](const nlohmann::json& v) { return v.is_null() ? std::string("-") : std::to_string(v.get<int>()); };
    std::printf("%d\t%s\t%.6f\t%s\t%s\n", r["rank"].get<int>(), r["id"].get<std::string>().c_str(),
                r["similarity"].get<double>(), label(r["class_label"]).c_str(), label(r["type_label"]).c_str());
  }
}

int serve(figret_project* project, int port) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  figret_server* server = nullptr;
  int bound = 0;
  check(figret_server_start(project, "127.0.0.1", port, &server, &bound));
  std::fprintf(stderr, "serving on http://127.0.0.1:%d\n", bound);
  int sig = 0;
  sigwait(&set, &sig);
  figret_server_free(server);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Figure retrieval pipeline: synthetic data, dual-branch training, embedding index, maps, evaluation"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "Project config (JSON)")->check(CLI::ExistingFile);

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic corpus and splits");
  auto* train = app.add_subcommand("train", "Train the auxiliary stage, freeze the lower branch, train the main stage");
  auto* embed = app.add_subcommand("embed", "Embed every corpus image and write the index");

  auto* query = app.add_subcommand("query", "Rank indexed figures for an id, an image file or a keyword");
  std::string q_id, q_file, q_keyword;
  int k = 9, k_seed = 0;
  bool include_self = false;
  auto* opt_id = query->add_option("--id", q_id, "Indexed id");
  auto* opt_file = query->add_option("--file", q_file, "PGM image")->check(CLI::ExistingFile);
  auto* opt_kw = query->add_option("--keyword", q_keyword, "Tag keyword");
  opt_id->excludes(opt_file)->excludes(opt_kw);
  opt_file->excludes(opt_kw);
  query->add_option("-k", k, "Number of results")->check(CLI::PositiveNumber);
  query->add_option("--k-seed", k_seed, "Seed records for a keyword query")->check(CLI::PositiveNumber);
  auto* excl = query->add_flag("--exclude-self", "Exclude the query id from the results (default)");
  query->add_flag("--include-self", include_self, "Keep the query id in the results")->excludes(excl);

  auto* map = app.add_subcommand("map", "Project the index to 2D and write the map file");
  std::string map_out;
  map->add_option("--out", map_out, "Output path (default: the project's map path)");

  auto* eval = app.add_subcommand("eval", "Print the metrics report for the test split");
  std::string marks;
  eval->add_option("--marks", marks, "Evaluator marks (JSON)")->check(CLI::ExistingFile);

  auto* srv = app.add_subcommand("serve", "Start the local query service");
  int port = -1;
  srv->add_option("--port", port, "Port (default: from config)")->check(CLI::Range(0, 65535));

  for (auto* sub : {gen, train, embed, query, map, eval, srv})
    sub->add_option("--config", config, "Project config (JSON)")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    Project project(config);
    OwnedString out;
    if (*gen) {
      check(figret_gen_data(project.p, &out.p));
      std::printf("%s\n", out.str().c_str());
    } else if (*train) {
      check(figret_train(project.p, log_line, nullptr, &out.p));
      std::printf("%s\n", out.str().c_str());
    } else if (*embed) {
      check(figret_build_index(project.p, &out.p));
      std::printf("%s\n", out.str().c_str());
    } else if (*query) {
      if (q_id.empty() && q_file.empty() && q_keyword.empty()) throw Failure{"query needs --id, --file or --keyword"};
      if (!q_file.empty()) {
        const std::string bytes = read_bytes(q_file);
        check(figret_query_pgm(project.p, bytes.data(), bytes.size(), static_cast<size_t>(k), &out.p));
      } else {
        nlohmann::json req = {{"k", k}};
        if (!q_id.empty()) {
          req["id"] = q_id;
          req["exclude_self"] = !include_self;
        } else {
          req["keyword"] = q_keyword;
          if (k_seed > 0) req["k_seed"] = k_seed;
        }
        const figret_status s = figret_query(project.p, req.dump().c_str(), &out.p);
        if (s != FIGRET_OK) {
          std::string reason = figret_last_error();
          try {
            reason = nlohmann::json::parse(reason).at("error").at("reason");
          } catch (const nlohmann::json::exception&) {
          }
          throw Failure{std::string(figret_status_name(s)) + ": " + reason};
        }
      }
      print_results(out.str());
    } else if (*map) {
      check(figret_make_map(project.p, map_out.empty() ? nullptr : map_out.c_str(), &out.p));
      std::printf("%s\n", out.str().c_str());
    } else if (*eval) {
      check(figret_eval(project.p, marks.empty() ? nullptr : marks.c_str(), &out.p));
      std::fputs(out.str().c_str(), stdout);
    } else if (*srv) {
      if (port < 0) {
        check(figret_project_config_json(project.p, &out.p));
        port = nlohmann::json::parse(out.str()).at("service").at("port").get<int>();
      }
      return serve(project.p, port);
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "figret: error: %s\n", f.message.c_str());
    return 1;
  }
  return 0;
}
