#include "figret/checkpoint.hpp"

#include "figret/util.hpp"

namespace figret {

std::string encode_checkpoint(const DualNetConfig& cfg, const ModelParams& params) {
  cfg.validate();
  check_params(params, cfg);
  ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.str(cfg.canonical_text());
  for (bool f : params.frozen) w.u8(f ? 1 : 0);
  std::uint32_t count = 0;
  for (const auto& g : params.groups) count += static_cast<std::uint32_t>(g.size());
  w.u32(count);
  for (ParamGroup g : kAllGroups) {
    const auto layout = group_layout(cfg, g);
    const auto& ts = params.group(g);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      w.str(layout[i].name);
      w.u32(static_cast<std::uint32_t>(ts[i].shape().size()));
      for (auto e : ts[i].shape()) w.u64(e);
      for (float v : ts[i].values()) w.f32(v);
    }
  }
  return w.bytes();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  ByteReader r(bytes, "checkpoint");
  if (r.raw(kCheckpointMagic.size()) != kCheckpointMagic) throw FormatError("checkpoint: bad magic");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ck;
  ck.config = DualNetConfig::from_canonical_text(r.str());
  for (auto& f : ck.params.frozen) {
    const auto v = r.u8();
    if (v > 1) throw FormatError("checkpoint: bad frozen flag");
    f = v == 1;
  }
  const auto count = r.u32();
  std::uint32_t seen = 0;
  for (ParamGroup g : kAllGroups) {
    for (const auto& slot : group_layout(ck.config, g)) {
      if (seen++ >= count) throw FormatError("checkpoint: fewer tensors than the config requires");
      const std::string name = r.str();
      if (name != slot.name) throw FormatError("checkpoint: expected tensor " + slot.name + ", found " + name);
      const auto rank = r.u32();
      std::vector<std::size_t> shape(rank);
      for (auto& e : shape) e = static_cast<std::size_t>(r.u64());
      if (shape != slot.shape) throw FormatError("checkpoint: shape mismatch for " + name);
      Tensor<float> t(shape);
      if (r.remaining() / 4 < t.size()) throw FormatError("checkpoint: truncated file");
      for (auto& v : t.storage()) v = r.f32();
      ck.params.group(g).push_back(std::move(t));
    }
  }
  if (seen != count || !r.at_end()) throw FormatError("checkpoint: trailing data");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const DualNetConfig& cfg, const ModelParams& params) {
  write_file_atomic(path, encode_checkpoint(cfg, params));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace figret
