#include "figret/figret.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <mutex>
#include <new>
#include <string>
#include <thread>

#include "figret/checkpoint.hpp"
#include "figret/embedding_index.hpp"
#include "figret/error.hpp"
#include "figret/image.hpp"
#include "figret/project.hpp"
#include "figret/service.hpp"
#include "figret/util.hpp"

struct figret_project {
  figret::ProjectConfig config;
  std::mutex service_mu;
  std::unique_ptr<figret::QueryService> service;

  figret::QueryService& ensure_service() {
    std::lock_guard lock(service_mu);
    if (!service) service = figret::QueryService::from_project(config);
    return *service;
  }
};

struct figret_index {
  figret::EmbeddingIndex index;
};

struct figret_model {
  figret::Checkpoint checkpoint;
};

struct figret_server {
  figret::HttpFrontend frontend;
  std::thread thread;
  explicit figret_server(figret::QueryService& s) : frontend(s) {}
};

namespace {

thread_local std::string g_last_error;

figret_status status_for(figret::ErrorKind kind) {
  using figret::ErrorKind;
  switch (kind) {
    case ErrorKind::Parameter: return FIGRET_E_PARAMETER;
    case ErrorKind::Structural: return FIGRET_E_STRUCTURAL;
    case ErrorKind::Protocol: return FIGRET_E_PROTOCOL;
    case ErrorKind::Format: return FIGRET_E_FORMAT;
    case ErrorKind::Io: return FIGRET_E_IO;
    case ErrorKind::Consistency: return FIGRET_E_CONSISTENCY;
    case ErrorKind::Numeric: return FIGRET_E_NUMERIC;
  }
  return FIGRET_E_INTERNAL;
}

figret_status fail(figret_status s, std::string msg) {
  g_last_error = std::move(msg);
  return s;
}

template <typename F>
figret_status guarded(F&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const figret::Error& e) {
    return fail(status_for(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(FIGRET_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FIGRET_E_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.data(), s.size() + 1);
  return p;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

// Service responses carry HTTP-style status codes; map them back to status values.
figret_status from_response(const figret::ServiceResponse& r, char** out) {
  if (r.status == 200) {
    put(out, r.body);
    return FIGRET_OK;
  }
  put(out, r.body);
  return fail(r.status == 404 ? FIGRET_E_NOT_FOUND : r.status >= 500 ? FIGRET_E_IO : FIGRET_E_PARAMETER, r.body);
}

#define FIGRET_REQUIRE(cond, msg) \
  if (!(cond)) return fail(FIGRET_E_PARAMETER, msg)

}  // namespace

extern "C" {

const char* figret_version(void) { return "0.1.0"; }

const char* figret_status_name(figret_status status) {
  switch (status) {
    case FIGRET_OK: return "ok";
    case FIGRET_E_PARAMETER: return "parameter";
    case FIGRET_E_STRUCTURAL: return "structural";
    case FIGRET_E_PROTOCOL: return "protocol";
    case FIGRET_E_FORMAT: return "format";
    case FIGRET_E_IO: return "io";
    case FIGRET_E_CONSISTENCY: return "consistency";
    case FIGRET_E_NUMERIC: return "numeric";
    case FIGRET_E_NOT_FOUND: return "not_found";
    case FIGRET_E_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* figret_last_error(void) { return g_last_error.c_str(); }

void figret_string_free(char* s) { std::free(s); }

figret_status figret_project_open(const char* config_path, figret_project** out) {
  return guarded([&] {
    FIGRET_REQUIRE(out, "out must not be null");
    auto p = std::make_unique<figret_project>();
    if (config_path) p->config = figret::ProjectConfig::load(config_path);
    p->config.validate();
    *out = p.release();
    return FIGRET_OK;
  });
}

figret_status figret_project_from_json(const char* json, const char* base_dir, figret_project** out) {
  return guarded([&] {
    FIGRET_REQUIRE(out && json, "json and out must not be null");
    auto p = std::make_unique<figret_project>();
    p->config = figret::ProjectConfig::from_json_text(json, base_dir ? base_dir : ".");
    *out = p.release();
    return FIGRET_OK;
  });
}

void figret_project_free(figret_project* project) { delete project; }

figret_status figret_project_config_json(const figret_project* project, char** out_json) {
  return guarded([&] {
    FIGRET_REQUIRE(project && out_json, "project and out must not be null");
    put(out_json, project->config.to_json_text());
    return FIGRET_OK;
  });
}

figret_status figret_gen_data(figret_project* project, char** out_json) {
  return guarded([&] {
    FIGRET_REQUIRE(project, "project must not be null");
    put(out_json, figret::run_gen_data(project->config));
    return FIGRET_OK;
  });
}

figret_status figret_train(figret_project* project, figret_log_fn log, void* user, char** out_json) {
  return guarded([&] {
    FIGRET_REQUIRE(project, "project must not be null");
    figret::LogSink sink;
    if (log) sink = [log, user](const std::string& line) { log(line.c_str(), user); };
    put(out_json, figret::run_train(project->config, sink));
    return FIGRET_OK;
  });
}

figret_status figret_build_index(figret_project* project, char** out_json) {
  return guarded([&] {
    FIGRET_REQUIRE(project, "project must not be null");
    put(out_json, figret::run_build_index(project->config));
    std::lock_guard lock(project->service_mu);
    project->service.reset();
    return FIGRET_OK;
  });
}

figret_status figret_make_map(figret_project* project, const char* out_path, char** out_json) {
  return guarded([&] {
    FIGRET_REQUIRE(project, "project must not be null");
    const std::filesystem::path out = out_path ? std::filesystem::path(out_path) : project->config.default_map();
    put(out_json, figret::run_map(project->config, out));
    return FIGRET_OK;
  });
}

figret_status figret_eval(figret_project* project, const char* marks_path, char** out_report) {
  return guarded([&] {
    FIGRET_REQUIRE(project, "project must not be null");
    put(out_report, figret::run_eval(project->config, marks_path ? marks_path : ""));
    return FIGRET_OK;
  });
}

figret_status figret_query(figret_project* project, const char* request_json, char** out_json) {
  return guarded([&] {
    FIGRET_REQUIRE(project && request_json, "project and request must not be null");
    auto& svc = project->ensure_service();
    return from_response(svc.handle("POST", "/query", request_json, "application/json"), out_json);
  });
}

figret_status figret_query_pgm(figret_project* project, const void* pgm, size_t len, size_t k, char** out_json) {
  return guarded([&] {
    FIGRET_REQUIRE(project && pgm, "project and image must not be null");
    auto& svc = project->ensure_service();
    const std::string_view body(static_cast<const char*>(pgm), len);
    return from_response(
        svc.handle("POST", "/query", body, "image/x-portable-graymap", {{"k", std::to_string(k)}}), out_json);
  });
}

figret_status figret_server_start(figret_project* project, const char* host, int port, figret_server** out,
                                  int* bound_port) {
  return guarded([&] {
    FIGRET_REQUIRE(project && out, "project and out must not be null");
    FIGRET_REQUIRE(port >= 0 && port <= 65535, "port must be in [0, 65535]");
    auto& svc = project->ensure_service();
    auto srv = std::make_unique<figret_server>(svc);
    const int bound = srv->frontend.bind(host ? host : "127.0.0.1", port);
    srv->thread = std::thread([s = srv.get()] { s->frontend.listen(); });
    if (bound_port) *bound_port = bound;
    *out = srv.release();
    return FIGRET_OK;
  });
}

void figret_server_wait(figret_server* server) {
  if (server && server->thread.joinable()) server->thread.join();
}

void figret_server_stop(figret_server* server) {
  if (server) server->frontend.stop();
}

void figret_server_free(figret_server* server) {
  if (!server) return;
  server->frontend.stop();
  if (server->thread.joinable()) server->thread.join();
  delete server;
}

figret_status figret_index_open(const char* path, figret_index** out) {
  return guarded([&] {
    FIGRET_REQUIRE(path && out, "path and out must not be null");
    auto ix = std::make_unique<figret_index>();
    ix->index = figret::load_index(path);
    *out = ix.release();
    return FIGRET_OK;
  });
}

void figret_index_free(figret_index* index) { delete index; }
size_t figret_index_size(const figret_index* index) { return index ? index->index.size() : 0; }
size_t figret_index_dim(const figret_index* index) { return index ? index->index.dim() : 0; }
uint64_t figret_index_snapshot(const figret_index* index) { return index ? index->index.snapshot_version() : 0; }

figret_status figret_index_topk(const figret_index* index, const float* query, size_t dim, size_t k,
                                const char** out_ids, double* out_sims, size_t* count) {
  return guarded([&] {
    FIGRET_REQUIRE(index && query && count, "index, query and count must not be null");
    FIGRET_REQUIRE(k == 0 || (out_ids && out_sims), "output arrays must not be null");
    const auto hits = index->index.topk(std::span<const float>(query, dim), k);
    for (std::size_t i = 0; i < hits.size(); ++i) {
      out_ids[i] = index->index.find(hits[i].id)->id.c_str();
      out_sims[i] = hits[i].similarity;
    }
    *count = hits.size();
    return FIGRET_OK;
  });
}

figret_status figret_model_open(const char* path, figret_model** out) {
  return guarded([&] {
    FIGRET_REQUIRE(path && out, "path and out must not be null");
    auto m = std::make_unique<figret_model>();
    m->checkpoint = figret::load_checkpoint(path);
    *out = m.release();
    return FIGRET_OK;
  });
}

void figret_model_free(figret_model* model) { delete model; }

size_t figret_model_embedding_dim(const figret_model* model) {
  return model ? static_cast<size_t>(model->checkpoint.config.embedding_dim()) : 0;
}

figret_status figret_model_embed_pgm(const figret_model* model, const void* pgm, size_t len, float* out,
                                     size_t capacity) {
  return guarded([&] {
    FIGRET_REQUIRE(model && pgm && out, "model, image and out must not be null");
    const auto& cfg = model->checkpoint.config;
    FIGRET_REQUIRE(capacity >= static_cast<size_t>(cfg.embedding_dim()), "output buffer too small");
    figret::Image img = figret::decode_pgm(std::string_view(static_cast<const char*>(pgm), len));
    img = figret::resize_area(img, cfg.width, cfg.height);
    const auto v = figret::embed(model->checkpoint.params, cfg, img);
    std::copy(v.begin(), v.end(), out);
    return FIGRET_OK;
  });
}

}  // extern "C"
