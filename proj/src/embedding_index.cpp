#include "figret/embedding_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "figret/random.hpp"
#include "figret/util.hpp"

namespace figret {

Similarity cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw StructuralError("cosine: dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    nu += a * a;
    nv += b * b;
  }
  if (nu == 0.0 || nv == 0.0) return {0.0, true};
  return {std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0), false};
}

double cosine_similarity(std::span<const float> u, std::span<const float> v) { return cosine(u, v).value; }

EmbeddingIndex::EmbeddingIndex(std::size_t dim, std::vector<EmbeddingRecord> records)
    : EmbeddingIndex(dim, std::move(records), 0) {
  snapshot_version_ = content_version(dim_, records_);
}

EmbeddingIndex::EmbeddingIndex(std::size_t dim, std::vector<EmbeddingRecord> records, std::uint64_t snapshot_version)
    : dim_(dim), records_(std::move(records)), snapshot_version_(snapshot_version) {
  if (dim_ == 0) throw ParameterError("index: dimension must be >= 1");
  std::sort(records_.begin(), records_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  sq_norms_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (i > 0 && records_[i - 1].id == r.id) throw ParameterError("index: duplicate id " + r.id);
    if (r.vector.size() != dim_)
      throw StructuralError("index: record " + r.id + " has dimension " + std::to_string(r.vector.size()) +
                            ", expected " + std::to_string(dim_));
    double n = 0.0;
    for (float x : r.vector) {
      if (!std::isfinite(x)) throw NumericError("index: record " + r.id + " has a non-finite entry");
      n += static_cast<double>(x) * x;
    }
    sq_norms_.push_back(n);
    by_id_.emplace(r.id, i);
  }
}

std::uint64_t EmbeddingIndex::content_version(std::size_t dim, const std::vector<EmbeddingRecord>& recs) {
  std::uint64_t h = fnv1a(std::to_string(dim));
  for (const auto& r : recs) {
    h = fnv1a(r.id, h);
    h = fnv1a(std::to_string(r.class_label.value_or(-1)) + "/" + std::to_string(r.type_label.value_or(-1)), h);
    h = fnv1a(r.tags, h);
    h = fnv1a(std::string_view(reinterpret_cast<const char*>(r.vector.data()), r.vector.size() * sizeof(float)), h);
  }
  // Keep it representable as a JSON integer in every client.
  return h & ((std::uint64_t{1} << 53) - 1);
}

const EmbeddingRecord* EmbeddingIndex::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

void EmbeddingIndex::check_query(std::span<const float> q) const {
  if (q.size() != dim_)
    throw StructuralError("query dimension " + std::to_string(q.size()) + " does not match index dimension " +
                          std::to_string(dim_));
}

std::vector<Neighbor> EmbeddingIndex::rank(std::span<const double> scores, std::size_t k,
                                           const std::vector<std::string>& exclude) const {
  std::vector<bool> skip(records_.size(), false);
  for (const auto& id : exclude)
    if (auto it = by_id_.find(id); it != by_id_.end()) skip[it->second] = true;
  std::vector<std::size_t> cand;
  cand.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i)
    if (!skip[i]) cand.push_back(i);
  // Records are id-sorted, so comparing positions breaks ties by ascending id.
  auto better = [&](std::size_t a, std::size_t b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
  const std::size_t take = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), better);
  std::vector<Neighbor> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back({records_[cand[i]].id, scores[cand[i]]});
  return out;
}

std::vector<Neighbor> EmbeddingIndex::topk(std::span<const float> query, std::size_t k,
                                           const std::vector<std::string>& exclude_ids) const {
  if (k < 1) throw ParameterError("topk: k must be >= 1");
  if (records_.empty()) return {};
  check_query(query);
  double nq = 0.0;
  for (float x : query) nq += static_cast<double>(x) * x;
  std::vector<double> scores(records_.size(), 0.0);
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (nq == 0.0 || sq_norms_[i] == 0.0) continue;
    const auto& v = records_[i].vector;
    double dot = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) dot += static_cast<double>(query[j]) * v[j];
    scores[i] = std::clamp(dot / std::sqrt(nq * sq_norms_[i]), -1.0, 1.0);
  }
  return rank(scores, k, exclude_ids);
}

std::vector<Neighbor> EmbeddingIndex::multi_query(const std::vector<std::vector<float>>& queries, std::size_t k_total,
                                                  const std::vector<std::string>& exclude_ids) const {
  if (queries.empty()) throw ParameterError("multi_query: at least one query vector required");
  if (k_total < 1) throw ParameterError("multi_query: k must be >= 1");
  if (records_.empty()) return {};
  for (const auto& q : queries) check_query(q);
  std::vector<double> best(records_.size(), -std::numeric_limits<double>::infinity());
  for (const auto& q : queries) {
    double nq = 0.0;
    for (float x : q) nq += static_cast<double>(x) * x;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      double s = 0.0;
      if (nq != 0.0 && sq_norms_[i] != 0.0) {
        const auto& v = records_[i].vector;
        double dot = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) dot += static_cast<double>(q[j]) * v[j];
        s = std::clamp(dot / std::sqrt(nq * sq_norms_[i]), -1.0, 1.0);
      }
      best[i] = std::max(best[i], s);
    }
  }
  return rank(best, k_total, exclude_ids);
}

std::string encode_index(const EmbeddingIndex& index) {
  ByteWriter w;
  w.raw(kIndexMagic);
  w.u32(kIndexVersion);
  w.u32(static_cast<std::uint32_t>(index.dim()));
  w.u64(index.size());
  w.u8(0);
  w.u64(index.snapshot_version());
  for (const auto& r : index.records()) {
    w.str(r.id);
    w.i32(r.class_label.value_or(-1));
    w.i32(r.type_label.value_or(-1));
    w.str(r.tags);
    for (float x : r.vector) w.f32(x);
  }
  return w.bytes();
}

EmbeddingIndex decode_index(std::string_view bytes) {
  ByteReader r(bytes, "index");
  if (r.raw(kIndexMagic.size()) != kIndexMagic) throw FormatError("index: bad magic");
  const auto version = r.u32();
  if (version != kIndexVersion) throw FormatError("index: unsupported version " + std::to_string(version));
  const auto dim = r.u32();
  const auto count = r.u64();
  if (r.u8() != 0) throw FormatError("index: unknown metric tag");
  const auto snapshot = r.u64();
  if (dim == 0) throw FormatError("index: zero dimension");
  std::vector<EmbeddingRecord> recs;
  for (std::uint64_t i = 0; i < count; ++i) {
    EmbeddingRecord rec;
    rec.id = r.str();
    const auto c = r.i32(), t = r.i32();
    if (c >= 0) rec.class_label = c;
    if (t >= 0) rec.type_label = t;
    rec.tags = r.str();
    if (r.remaining() / 4 < dim) throw FormatError("index: truncated file");
    rec.vector.resize(dim);
    for (auto& x : rec.vector) x = r.f32();
    recs.push_back(std::move(rec));
  }
  if (!r.at_end()) throw FormatError("index: trailing data");
  try {
    return EmbeddingIndex(dim, std::move(recs), snapshot);
  } catch (const Error& e) {
    throw FormatError(std::string("index: invalid contents: ") + e.what());
  }
}

void save_index(const EmbeddingIndex& index, const std::filesystem::path& path) {
  write_file_atomic(path, encode_index(index));
}

EmbeddingIndex load_index(const std::filesystem::path& path) {
  try {
    return decode_index(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string export_index_text(const EmbeddingIndex& index) {
  std::string out;
  char buf[32];
  for (const auto& r : index.records()) {
    out += r.id + "\t" + std::to_string(r.class_label.value_or(-1)) + "\t" + std::to_string(r.type_label.value_or(-1)) +
           "\t" + r.tags + "\t";
    for (std::size_t i = 0; i < r.vector.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(r.vector[i]));
      if (i) out += ' ';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<float> pick_embedding(const ForwardResult<float>& out, std::size_t row, const DualNetConfig& cfg) {
  const auto d = static_cast<std::size_t>(cfg.feature_dim());
  const float* up = out.upper_feat.data() + row * d;
  if (cfg.embed_source == EmbedSource::UpperBranch) return {up, up + d};
  const float* lo = out.lower_feat.data() + row * d;
  std::vector<float> v(lo, lo + d);
  v.insert(v.end(), up, up + d);
  return v;
}

}  // namespace

std::vector<float> embed(const ModelParams& params, const DualNetConfig& cfg, const Image& image) {
  const Image* one[] = {&image};
  const auto out = forward(params, cfg, make_batch(one, cfg));
  return pick_embedding(out, 0, cfg);
}

std::vector<EmbeddingRecord> embed_corpus(const ModelParams& params, const DualNetConfig& cfg, const Corpus& corpus,
                                          int batch_size) {
  std::vector<EmbeddingRecord> recs;
  recs.reserve(corpus.size());
  for (std::size_t start = 0; start < corpus.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t len = std::min<std::size_t>(batch_size, corpus.size() - start);
    std::vector<const Image*> imgs;
    for (std::size_t i = 0; i < len; ++i) imgs.push_back(&corpus[start + i].image);
    const auto out = forward(params, cfg, make_batch(imgs, cfg));
    for (std::size_t i = 0; i < len; ++i) {
      const auto& ex = corpus[start + i];
      recs.push_back({ex.id, pick_embedding(out, i, cfg), ex.class_label, ex.type_label, ex.tags});
    }
  }
  return recs;
}

}  // namespace figret
