#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "figret/network.hpp"

namespace figret {

inline constexpr std::string_view kCheckpointMagic = "FIGRETCK";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  DualNetConfig config;
  ModelParams params;
};

// Layout: magic, u32 version, config canonical text (u32 length + bytes),
// 4 frozen flags, u32 tensor count, then per tensor: name, rank, u64 extents,
// little-endian float32 data.
std::string encode_checkpoint(const DualNetConfig& cfg, const ModelParams& params);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const DualNetConfig& cfg, const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace figret
