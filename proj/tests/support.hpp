#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nexting/features.hpp"

namespace testsupport {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("nexting_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline nexting::FeatureVector make_fv(std::vector<std::uint32_t> active, std::size_t n) {
  return nexting::FeatureVector{std::move(active), n};
}

inline std::vector<double> random_channels(std::mt19937_64& rng, std::size_t count) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> ch(count);
  for (auto& v : ch) v = u(rng);
  return ch;
}

inline std::filesystem::path source_root() { return NEXTING_SOURCE_DIR; }

}  // namespace testsupport
