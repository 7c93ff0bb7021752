#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace truncnet {

/// Desk-scale stand-in for a chest X-ray corpus. Each task owns a
/// texture-coded patch at a fixed location; a positive example carries the
/// patch, a negative one only background noise.
struct SyntheticConfig {
  std::size_t count = 500;
  std::int64_t image_size = 64;
  /// Number of planted tasks (1..6), mapped onto the evaluation tasks in order.
  int tasks = 6;
  std::uint64_t seed = 0;
  double positive_rate = 0.5;
  /// Fraction of labels written as uncertain (-1.0); the pixels still follow
  /// the underlying truth.
  double uncertain_rate = 0.0;
  double background = 0.2;
  double noise = 0.05;
  /// A planted patch adds a brightness drawn uniformly from this range to its
  /// textured pixels, so faint positives make the tasks imperfectly separable.
  double contrast_min = 0.0;
  double contrast_max = 0.5;
  double train_fraction = 0.7;
  double valid_fraction = 0.15;
};

struct SyntheticDataset {
  std::filesystem::path root;
  std::filesystem::path manifest;  // every example
  std::filesystem::path train;
  std::filesystem::path valid;
  std::filesystem::path test;
};

/// Patch bounding box (row, col, side) of task `t` for a given image size.
struct PatchBox {
  std::int64_t row, col, side;
  bool contains(std::int64_t y, std::int64_t x) const { return y >= row && y < row + side && x >= col && x < col + side; }
};
PatchBox synthetic_patch(int task, std::int64_t image_size);

/// Writes images/NNNNNN.png plus manifest.csv, train.csv, valid.csv and
/// test.csv under `out_dir`. Identical config => byte-identical output.
SyntheticDataset make_synthetic_dataset(const SyntheticConfig& config, const std::filesystem::path& out_dir);

}  // namespace truncnet
