#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "nbr/image.hpp"
#include "nbr/rng.hpp"

namespace nbr::testing {

// Per-test scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("nbr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
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
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Image random_image(int h, int w, std::uint64_t seed, int channels = 1) {
  Image img(h, w, channels);
  SplitMix64 rng(seed);
  for (auto& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

// Smooth blobs plus edges: a stand-in for a natural photograph.
inline Image synthetic_scene(int h, int w, std::uint64_t seed = 1) {
  Image img(h, w);
  SplitMix64 rng(seed);
  const double fx = 2.0 + 4.0 * rng.uniform();
  const double fy = 2.0 + 4.0 * rng.uniform();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.5 + 0.25 * std::sin(fx * x / w * 3.14159) * std::cos(fy * y / h * 3.14159);
      if (x > w / 3 && x < 2 * w / 3 && y > h / 4 && y < 3 * h / 4) v += 0.2;
      if ((x / 7 + y / 11) % 5 == 0) v -= 0.15;
      img.at(0, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  return img;
}

inline Image checkerboard(int h, int w, int cell = 1) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(0, y, x) = ((y / cell + x / cell) % 2) ? 1.0f : 0.0f;
  return img;
}

inline std::filesystem::path corpus_dir(const std::string& split) {
  return std::filesystem::path(NBR_SOURCE_DIR) / "data" / "corpus" / split;
}

}  // namespace nbr::testing
