#include "figret/service.hpp"

#include <fstream>

#include "httplib.h"
#include "json.hpp"
#include "figret/metrics.hpp"
#include "figret/util.hpp"

namespace figret {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kDefaultK = 9;

struct HttpError {
  int status;
  std::string code;
  std::string reason;
};

ServiceResponse error_response(int status, const std::string& code, const std::string& reason) {
  return {status, json({{"error", {{"code", code}, {"reason", reason}}}}).dump(), "application/json"};
}

json parse_body(std::string_view body) {
  try {
    json j = json::parse(body);
    if (!j.is_object()) throw HttpError{400, "bad_request", "request body must be a JSON object"};
    return j;
  } catch (const json::exception& e) {
    throw HttpError{400, "bad_request", std::string("malformed JSON: ") + e.what()};
  }
}

std::size_t read_k(const json& req) {
  if (!req.contains("k")) return kDefaultK;
  if (!req["k"].is_number_integer() || req["k"].get<long long>() < 1)
    throw HttpError{400, "bad_request", "k must be an integer >= 1"};
  return req["k"].get<std::size_t>();
}

json result_rows(const EmbeddingIndex& index, const std::vector<Neighbor>& hits) {
  json rows = json::array();
  for (std::size_t i = 0; i < hits.size(); ++i) {
    const auto* rec = index.find(hits[i].id);
    rows.push_back({{"rank", i + 1},
                    {"id", hits[i].id},
                    {"similarity", hits[i].similarity},
                    {"class_label", rec && rec->class_label ? json(*rec->class_label) : json(nullptr)},
                    {"type_label", rec && rec->type_label ? json(*rec->type_label) : json(nullptr)},
                    {"thumbnail", "/image/" + hits[i].id}});
  }
  return rows;
}

json groups_from_request(const json& req, std::vector<EvalGroup>& groups) {
  if (!req.contains("groups") || !req["groups"].is_array() || req["groups"].empty())
    throw HttpError{400, "bad_request", "groups must be a non-empty array"};
  for (const auto& g : req["groups"]) {
    if (!g.is_object() || !g.contains("name") || !g["name"].is_string() || !g.contains("marks") || !g["marks"].is_array())
      throw HttpError{400, "bad_request", "each group needs a string name and a marks matrix"};
    EvalGroup eg{g["name"].get<std::string>(), {}};
    for (const auto& row : g["marks"]) {
      if (!row.is_array()) throw HttpError{400, "bad_request", "marks rows must be arrays"};
      std::vector<bool> r;
      for (const auto& v : row) {
        if (v.is_boolean()) r.push_back(v.get<bool>());
        else if (v.is_number_integer() && (v.get<int>() == 0 || v.get<int>() == 1)) r.push_back(v.get<int>() == 1);
        else throw HttpError{400, "bad_request", "marks entries must be 0/1 or booleans"};
      }
      eg.marks.push_back(std::move(r));
    }
    try {
      eg.validate();
    } catch (const Error& e) {
      throw HttpError{400, "bad_request", e.what()};
    }
    groups.push_back(std::move(eg));
  }
  return req["groups"];
}

}  // namespace

QueryService::QueryService(Parts parts) : parts_(std::move(parts)) {
  if (parts_.index.empty()) throw ParameterError("service: index is empty");
  if (static_cast<std::size_t>(parts_.model.config.embedding_dim()) != parts_.index.dim())
    throw ConsistencyError("service: model embedding width does not match the index dimension");
  for (const auto& e : parts_.manifest.entries) image_paths_[e.id] = e.path;

  latest_marks_ = json({{"snapshot_version", parts_.index.snapshot_version()}, {"scores", json::array()}, {"anova", nullptr}}).dump();
}

const std::vector<MapRow>& QueryService::map_rows() const {
  std::call_once(map_once_, [this] {
    bool map_ok = parts_.map.has_value() && parts_.map->size() == parts_.index.size();
    if (map_ok)
      for (const auto& row : *parts_.map)
        if (!parts_.index.find(row.id)) map_ok = false;
    if (map_ok) return;
    TsneConfig tc = parts_.tsne;
    const double n = static_cast<double>(parts_.index.size());
    tc.perplexity = std::min(tc.perplexity, std::max(2.0, (n - 1.0) / 3.0));
    if (parts_.index.size() >= 3) {
      parts_.map = figret::map_rows(tsne(parts_.index, tc), parts_.index.records());
    } else {
      std::vector<MapRow> rows;
      for (const auto& r : parts_.index.records())
        rows.push_back({r.id, 0.0, 0.0, r.class_label.value_or(-1), r.type_label.value_or(-1), r.tags});
      parts_.map = std::move(rows);
    }
  });
  return *parts_.map;
}

std::unique_ptr<QueryService> QueryService::from_project(const ProjectConfig& cfg) {
  Parts parts;
  parts.index = load_index(cfg.paths.index);
  parts.model = load_checkpoint(cfg.model_checkpoint());
  if (fs::exists(cfg.paths.corpus / "manifest.json")) {
    parts.corpus_root = cfg.paths.corpus;
    parts.manifest = read_manifest(cfg.paths.corpus);
  }
  parts.marks_log = cfg.paths.marks;
  if (fs::exists(cfg.default_map())) {
    try {
      parts.map = parse_map(read_file(cfg.default_map()));
    } catch (const FormatError&) {
      parts.map.reset();
    }
  }
  parts.tsne = cfg.tsne;
  parts.k_seed = cfg.k_seed;
  return std::make_unique<QueryService>(std::move(parts));
}

std::string QueryService::query_json(const std::string& request) const {
  const json req = parse_body(request);
  const std::size_t k = read_k(req);
  json resp = {{"snapshot_version", parts_.index.snapshot_version()}, {"status", "ok"}, {"seeds", json::array()}};
  if (req.contains("id")) {
    if (!req["id"].is_string()) throw HttpError{400, "bad_request", "id must be a string"};
    const std::string id = req["id"];
    const auto* rec = parts_.index.find(id);
    if (!rec) throw HttpError{404, "not_found", "id not in index: " + id};
    const bool exclude_self = req.value("exclude_self", true);
    std::vector<std::string> exclude;
    if (exclude_self) exclude.push_back(id);
    resp["query"] = {{"kind", "id"}, {"id", id}};
    resp["query_id"] = id;
    resp["results"] = result_rows(parts_.index, parts_.index.topk(rec->vector, k, exclude));
  } else if (req.contains("keyword")) {
    if (!req["keyword"].is_string() || req["keyword"].get<std::string>().empty())
      throw HttpError{400, "bad_request", "keyword must be a non-empty string"};
    std::size_t k_seed = static_cast<std::size_t>(parts_.k_seed);
    if (req.contains("k_seed")) {
      if (!req["k_seed"].is_number_integer() || req["k_seed"].get<long long>() < 1)
        throw HttpError{400, "bad_request", "k_seed must be an integer >= 1"};
      k_seed = req["k_seed"];
    }
    const auto kr = keyword_query(parts_.index, req["keyword"], k_seed, k);
    resp["query"] = {{"kind", "keyword"}, {"keyword", req["keyword"]}};
    resp["query_id"] = nullptr;
    resp["status"] = kr.no_seeds ? "no_seeds" : "ok";
    resp["seeds"] = kr.seeds;
    resp["results"] = result_rows(parts_.index, kr.results);
  } else {
    throw HttpError{400, "bad_request", "request needs an id or a keyword (or a PGM body)"};
  }
  return resp.dump();
}

std::string QueryService::query_image(std::string_view pgm, std::size_t k) const {
  if (k < 1) throw HttpError{400, "bad_request", "k must be >= 1"};
  Image img;
  try {
    img = decode_pgm(pgm);
  } catch (const FormatError& e) {
    throw HttpError{400, "bad_request", e.what()};
  }
  const auto& cfg = parts_.model.config;
  img = resize_area(img, cfg.width, cfg.height);
  const auto vec = embed(parts_.model.params, cfg, img);
  json resp = {{"snapshot_version", parts_.index.snapshot_version()},
               {"status", "ok"},
               {"seeds", json::array()},
               {"query", {{"kind", "image"}}},
               {"query_id", nullptr},
               {"results", result_rows(parts_.index, parts_.index.topk(vec, k))}};
  return resp.dump();
}

std::string QueryService::map_json() const {
  json rows = json::array();
  for (const auto& r : map_rows())
    rows.push_back({{"id", r.id}, {"x", r.x}, {"y", r.y}, {"class_label", r.class_label}, {"type_label", r.type_label},
                    {"tags", r.tags}});
  return json({{"snapshot_version", parts_.index.snapshot_version()}, {"rows", rows}}).dump();
}

std::string QueryService::stats_json() const {
  std::map<std::string, int> classes, types;
  for (const auto& r : parts_.index.records()) {
    if (r.class_label) ++classes[std::to_string(*r.class_label)];
    if (r.type_label) ++types[std::to_string(*r.type_label)];
  }
  return json({{"snapshot_version", parts_.index.snapshot_version()},
               {"records", parts_.index.size()},
               {"dim", parts_.index.dim()},
               {"metric", "cosine"},
               {"embed_source", parts_.model.config.embed_source == EmbedSource::Concat ? "concat" : "upper_branch"},
               {"class_counts", classes},
               {"type_counts", types}})
      .dump();
}

std::string QueryService::submit_marks(const std::string& request) {
  const json req = parse_body(request);
  std::vector<EvalGroup> groups;
  const json raw = groups_from_request(req, groups);
  json scores = json::array();
  std::vector<std::vector<double>> samples;
  for (const auto& g : groups) {
    scores.push_back({{"name", g.name}, {"N", g.figures()}, {"M", g.evaluators()}, {"K", g.marked()}, {"S", eval_score(g)}});
    samples.push_back(selection_rates(g));
  }
  json anova = nullptr;
  if (groups.size() >= 2) {
    try {
      const auto a = anova_oneway(samples);
      anova = {{"ss_between", a.ss_between}, {"ss_within", a.ss_within}, {"df_between", a.df_between},
               {"df_within", a.df_within},   {"ms_between", a.ms_between}, {"ms_within", a.ms_within},
               {"F", std::isinf(a.f) ? json("inf") : json(a.f)}, {"p", a.p}, {"degenerate", a.degenerate}};
    } catch (const ParameterError& e) {
      throw HttpError{400, "bad_request", e.what()};
    }
  }
  const json resp = {{"snapshot_version", parts_.index.snapshot_version()}, {"scores", scores}, {"anova", anova}};
  std::lock_guard lock(marks_mu_);
  if (!parts_.marks_log.empty()) {
    if (parts_.marks_log.has_parent_path()) fs::create_directories(parts_.marks_log.parent_path());
    std::ofstream f(parts_.marks_log, std::ios::app);
    if (!f) throw IoError("cannot append to " + parts_.marks_log.string());
    f << json({{"snapshot_version", parts_.index.snapshot_version()}, {"groups", raw}}).dump() << "\n";
  }
  latest_marks_ = resp.dump();
  return latest_marks_;
}

std::string QueryService::latest_marks() const {
  std::lock_guard lock(marks_mu_);
  return latest_marks_;
}

std::optional<std::string> QueryService::image_bytes(const std::string& id) const {
  auto it = image_paths_.find(id);
  if (it == image_paths_.end() || parts_.corpus_root.empty()) return std::nullopt;
  return read_file(parts_.corpus_root / it->second);
}

ServiceResponse QueryService::handle(std::string_view method, std::string_view path, std::string_view body,
                                     std::string_view content_type,
                                     const std::multimap<std::string, std::string>& params) {
  try {
    if (path == "/query" && method == "POST") {
      if (content_type.starts_with("image/")) {
        std::size_t k = kDefaultK;
        if (auto it = params.find("k"); it != params.end()) {
          try {
            const long long v = std::stoll(it->second);
            if (v < 1) throw HttpError{400, "bad_request", "k must be >= 1"};
            k = static_cast<std::size_t>(v);
          } catch (const std::logic_error&) {
            throw HttpError{400, "bad_request", "k must be an integer"};
          }
        }
        return {200, query_image(body, k)};
      }
      return {200, query_json(std::string(body))};
    }
    if (path == "/map" && method == "GET") return {200, map_json()};
    if (path == "/stats" && method == "GET") return {200, stats_json()};
    if (path == "/marks" && method == "POST") return {200, submit_marks(std::string(body))};
    if (path == "/marks" && method == "GET") return {200, latest_marks()};
    if (path.starts_with("/image/") && method == "GET") {
      const std::string id(path.substr(7));
      if (auto bytes = image_bytes(id)) return {200, std::move(*bytes), "image/x-portable-graymap"};
      return error_response(404, "not_found", "no image for id " + id);
    }
    if (path == "/query" || path == "/map" || path == "/stats" || path == "/marks" || path.starts_with("/image/"))
      return error_response(405, "method_not_allowed", std::string(method) + " not supported on " + std::string(path));
    return error_response(404, "not_found", "unknown endpoint " + std::string(path));
  } catch (const HttpError& e) {
    return error_response(e.status, e.code, e.reason);
  } catch (const Error& e) {
    return error_response(e.kind() == ErrorKind::Io ? 500 : 400, to_string(e.kind()), e.what());
  }
}

struct HttpFrontend::Impl {
  QueryService& service;
  httplib::Server server;

  explicit Impl(QueryService& s) : service(s) {
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
      std::multimap<std::string, std::string> params(req.params.begin(), req.params.end());
      const auto out = service.handle(req.method, req.path, req.body, req.get_header_value("Content-Type"), params);
      res.status = out.status;
      res.set_content(out.body, out.content_type);
    };
    server.Get(".*", route);
    server.Post(".*", route);
    server.Put(".*", route);
    server.Delete(".*", route);
    server.Patch(".*", route);
  }
};

HttpFrontend::HttpFrontend(QueryService& service) : impl_(std::make_unique<Impl>(service)) {}
HttpFrontend::~HttpFrontend() { stop(); }

int HttpFrontend::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpFrontend::listen() { impl_->server.listen_after_bind(); }

void HttpFrontend::stop() {
  if (impl_) impl_->server.stop();
}

}  // namespace figret
