#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "figret/network.hpp"

namespace figret::testing {

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("figret-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Two conv blocks per branch, one conv each, D features.
inline DualNetConfig tiny_net(int size = 8, int d = 8, int types = 3, int classes = 4) {
  DualNetConfig cfg;
  cfg.height = cfg.width = size;
  cfg.types = types;
  cfg.classes = classes;
  cfg.lower.blocks = {{2, 1}, {3, 1}};
  cfg.upper.blocks = {{2, 1}, {3, 1}};
  cfg.lower.feature_dim = cfg.upper.feature_dim = d;
  return cfg;
}

}  // namespace figret::testing
