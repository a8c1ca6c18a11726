#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "figret/dataset.hpp"
#include "figret/network.hpp"

namespace figret {

struct EmbeddingRecord {
  std::string id;
  std::vector<float> vector;
  std::optional<int> class_label;
  std::optional<int> type_label;
  std::string tags;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

struct Neighbor {
  std::string id;
  double similarity = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

struct Similarity {
  double value = 0.0;
  bool degenerate = false;  // one of the vectors had zero norm
};

// u.v / sqrt(|u|^2 |v|^2) with double accumulation; zero vectors give 0 and the
// degenerate flag. Result is clamped to [-1, 1].
Similarity cosine(std::span<const float> u, std::span<const float> v);
double cosine_similarity(std::span<const float> u, std::span<const float> v);

// Immutable exact cosine index. Records are kept sorted by id.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  // Throws ParameterError on duplicate ids, StructuralError on a dimension
  // mismatch, NumericError on non-finite entries.
  EmbeddingIndex(std::size_t dim, std::vector<EmbeddingRecord> records);
  EmbeddingIndex(std::size_t dim, std::vector<EmbeddingRecord> records, std::uint64_t snapshot_version);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::uint64_t snapshot_version() const { return snapshot_version_; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }
  const EmbeddingRecord* find(std::string_view id) const;

  // Exhaustive top-k by descending similarity, ties by ascending id.
  std::vector<Neighbor> topk(std::span<const float> query, std::size_t k,
                             const std::vector<std::string>& exclude_ids = {}) const;
  // Candidates scored by their maximum similarity over all queries.
  std::vector<Neighbor> multi_query(const std::vector<std::vector<float>>& queries, std::size_t k_total,
                                    const std::vector<std::string>& exclude_ids = {}) const;

  // Content hash of the records; used as the default snapshot version.
  static std::uint64_t content_version(std::size_t dim, const std::vector<EmbeddingRecord>& sorted_records);

  friend bool operator==(const EmbeddingIndex& a, const EmbeddingIndex& b) {
    return a.dim_ == b.dim_ && a.snapshot_version_ == b.snapshot_version_ && a.records_ == b.records_;
  }

 private:
  std::vector<Neighbor> rank(std::span<const double> scores, std::size_t k, const std::vector<std::string>& exclude) const;
  void check_query(std::span<const float> q) const;

  std::size_t dim_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::vector<double> sq_norms_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::uint64_t snapshot_version_ = 0;
};

inline constexpr std::string_view kIndexMagic = "FIGRETIX";
inline constexpr std::uint32_t kIndexVersion = 1;

// Layout: magic, u32 version, u32 dim, u64 count, u8 metric (0 = cosine),
// u64 snapshot version, then per record in id order: id (u32 length + bytes),
// i32 class label, i32 type label (-1 = absent), tags (u32 length + bytes),
// dim little-endian float32 values.
std::string encode_index(const EmbeddingIndex& index);
EmbeddingIndex decode_index(std::string_view bytes);
void save_index(const EmbeddingIndex& index, const std::filesystem::path& path);
EmbeddingIndex load_index(const std::filesystem::path& path);

// One tab-separated line per record: id, class, type, tags, space-separated floats (%.9g).
std::string export_index_text(const EmbeddingIndex& index);

// Penultimate features for one image, per cfg.embed_source.
std::vector<float> embed(const ModelParams& params, const DualNetConfig& cfg, const Image& image);
// Batched embedding of a labeled corpus into index records.
std::vector<EmbeddingRecord> embed_corpus(const ModelParams& params, const DualNetConfig& cfg, const Corpus& corpus,
                                          int batch_size = 64);

}  // namespace figret
