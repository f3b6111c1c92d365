#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "featedit/featedit.hpp"

namespace fixtures {

using featedit::Box;
using featedit::Dataset;
using featedit::FeatureMap;
using featedit::LabeledSample;
using featedit::Rng;

inline Box random_box(Rng& rng, double extent = 100.0) {
  std::uniform_real_distribution<double> pos(0.0, extent), size(1.0, extent / 2);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

/// Samples with heavy-tailed, per-channel random activations and labels
/// cycling through the classes, so every class is present when n >= T.
inline Dataset random_dataset(std::uint64_t seed, std::uint32_t T, std::size_t C, std::size_t S,
                              std::size_t n) {
  Rng rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::uniform_real_distribution<float> u(0.2f, 3.0f);
  Dataset d(T, C, S);
  for (std::size_t j = 0; j < n; ++j) {
    FeatureMap f(C, S);
    for (std::size_t c = 0; c < C; ++c) {
      const float shape = u(rng);
      for (auto& v : f.channel(c)) {
        const float g = nd(rng);
        v = std::max(0.0f, g * shape + 0.3f * static_cast<float>(c % 3));
      }
    }
    d.push_back({std::move(f), static_cast<std::uint32_t>(j % T), random_box(rng),
                 static_cast<std::uint32_t>(j), (j % 11) == 10});
  }
  return d;
}

inline std::vector<std::vector<double>> rows_of(const featedit::Matrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

/// Two overlapping Gaussian blobs in 2-D, labels alternating -1/+1.
inline featedit::SvmProblem blobs_2d(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0, 1);
  featedit::SvmProblem p{featedit::Matrix(n, 2), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const int y = i % 2 ? 1 : -1;
    p.x(i, 0) = y * 1.0 + nd(rng);
    p.x(i, 1) = y * 0.5 + nd(rng);
    p.y.push_back(y);
  }
  return p;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("featedit_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace fixtures
