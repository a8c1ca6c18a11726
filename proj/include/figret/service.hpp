#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "figret/checkpoint.hpp"
#include "figret/dataset.hpp"
#include "figret/embedding_index.hpp"
#include "figret/project.hpp"
#include "figret/projection.hpp"

namespace figret {

struct ServiceResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

// Request handling for /query, /map, /image/{id}, /stats and /marks, independent
// of the transport. The index and model are read-only after construction; mark
// submissions go through a single writer.
class QueryService {
 public:
  struct Parts {
    EmbeddingIndex index;
    Checkpoint model;
    std::filesystem::path corpus_root;  // may be empty: /image then answers 404
    Manifest manifest;
    std::filesystem::path marks_log;    // append-only JSON lines; empty disables persistence
    std::optional<std::vector<MapRow>> map;
    TsneConfig tsne;
    int k_seed = 4;
  };

  explicit QueryService(Parts parts);
  // Loads everything named by the project config. Throws if the index or checkpoint is missing.
  static std::unique_ptr<QueryService> from_project(const ProjectConfig& cfg);

  ServiceResponse handle(std::string_view method, std::string_view path, std::string_view body,
                         std::string_view content_type, const std::multimap<std::string, std::string>& params = {});

  // JSON request: {"id"|"keyword": ..., "k": n, "exclude_self": bool, "k_seed": n}.
  std::string query_json(const std::string& request) const;
  // Uploaded PGM bytes, resized to the network input before embedding.
  std::string query_image(std::string_view pgm, std::size_t k) const;
  std::string map_json() const;
  std::string stats_json() const;
  std::string submit_marks(const std::string& request);
  std::string latest_marks() const;
  std::optional<std::string> image_bytes(const std::string& id) const;

  const EmbeddingIndex& index() const { return parts_.index; }
  // Uses the supplied map when it covers exactly the indexed ids; otherwise runs t-SNE once.
  const std::vector<MapRow>& map_rows() const;

 private:
  mutable Parts parts_;
  mutable std::once_flag map_once_;
  std::map<std::string, std::string> image_paths_;
  mutable std::mutex marks_mu_;
  std::string latest_marks_;
};

// Thin cpp-httplib front end over a QueryService.
class HttpFrontend {
 public:
  explicit HttpFrontend(QueryService& service);
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  // Returns the bound port (useful with port 0). Throws IoError on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace figret
