#include "truncnet/data/synthetic.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "truncnet/core/errors.hpp"
#include "truncnet/core/rng.hpp"
#include "truncnet/data/dataset.hpp"

namespace truncnet {
namespace {

constexpr int kMaxTasks = 6;

// Textures distinguish tasks even though a pooled head sees no location:
// solid, fine horizontal stripes, fine vertical stripes, checkerboard,
// coarse horizontal stripes, coarse vertical stripes.
bool texture_on(int task, std::int64_t y, std::int64_t x) {
  switch (task) {
    case 0:
      return true;
    case 1:
      return (y / 2) % 2 == 0;
    case 2:
      return (x / 2) % 2 == 0;
    case 3:
      return ((y / 2) + (x / 2)) % 2 == 0;
    case 4:
      return (y / 4) % 2 == 0;
    default:
      return (x / 4) % 2 == 0;
  }
}

}  // namespace

PatchBox synthetic_patch(int task, std::int64_t image_size) {
  if (task < 0 || task >= kMaxTasks) throw InputError("synthetic task index out of range");
  // Two rows of three patches, laid out on a 64-pixel reference grid.
  static constexpr std::int64_t rows[2] = {4, 36};
  static constexpr std::int64_t cols[3] = {4, 24, 44};
  auto scale = [&](std::int64_t v) { return v * image_size / 64; };
  return {scale(rows[task / 3]), scale(cols[task % 3]), std::max<std::int64_t>(2, scale(14))};
}

SyntheticDataset make_synthetic_dataset(const SyntheticConfig& config, const std::filesystem::path& out_dir) {
  if (config.tasks < 1 || config.tasks > kMaxTasks) throw InputError("synthetic tasks must be in 1..6");
  if (config.image_size < 16) throw InputError("synthetic image_size must be at least 16");
  if (config.train_fraction < 0 || config.valid_fraction < 0 || config.train_fraction + config.valid_fraction > 1) {
    throw InputError("split fractions must be non-negative and sum to at most 1");
  }
  if (config.contrast_min < 0 || config.contrast_max < config.contrast_min) {
    throw InputError("patch contrast range must satisfy 0 <= min <= max");
  }
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  std::vector<std::size_t> task_column;
  for (int t = 0; t < config.tasks; ++t) task_column.push_back(observation_index(evaluation_tasks()[t]));

  const auto s = config.image_size;
  std::vector<StudyRecord> records;
  records.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    StudyRecord r;
    r.image_path = fmt::format("images/{:06d}.png", i);
    r.labels.fill(Label::kMissing);
    cv::Mat img(static_cast<int>(s), static_cast<int>(s), CV_8UC1);
    std::vector<double> pixels(static_cast<std::size_t>(s * s));
    for (auto& v : pixels) v = config.background + config.noise * rng.normal();
    for (int t = 0; t < config.tasks; ++t) {
      const bool positive = rng.bernoulli(config.positive_rate);
      const bool uncertain = config.uncertain_rate > 0 && rng.bernoulli(config.uncertain_rate);
      r.labels[task_column[static_cast<std::size_t>(t)]] =
          uncertain ? Label::kUncertain : (positive ? Label::kPositive : Label::kNegative);
      if (!positive) continue;
      const double strength = rng.uniform(config.contrast_min, config.contrast_max);
      const auto box = synthetic_patch(t, s);
      for (std::int64_t y = box.row; y < std::min(s, box.row + box.side); ++y) {
        for (std::int64_t x = box.col; x < std::min(s, box.col + box.side); ++x) {
          auto& v = pixels[static_cast<std::size_t>(y * s + x)];
          if (texture_on(t, y - box.row, x - box.col)) v += strength;
        }
      }
    }
    for (std::int64_t y = 0; y < s; ++y) {
      for (std::int64_t x = 0; x < s; ++x) {
        const double v = std::clamp(pixels[static_cast<std::size_t>(y * s + x)], 0.0, 1.0);
        img.at<std::uint8_t>(static_cast<int>(y), static_cast<int>(x)) = static_cast<std::uint8_t>(std::lround(v * 255));
      }
    }
    const auto file = out_dir / r.image_path;
    if (!cv::imwrite(file.string(), img)) throw IoError("cannot write " + file.string());
    records.push_back(std::move(r));
  }

  // Split by a seeded permutation; each split keeps manifest order.
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(config.seed, std::string_view("split")));
  split_rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(order.size())));
  const auto n_valid = std::min(order.size() - n_train,
                                static_cast<std::size_t>(std::llround(config.valid_fraction * static_cast<double>(order.size()))));
  std::vector<int> split(records.size(), 2);
  for (std::size_t i = 0; i < order.size(); ++i) split[order[i]] = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);
  std::vector<StudyRecord> parts[3];
  for (std::size_t i = 0; i < records.size(); ++i) parts[split[i]].push_back(records[i]);

  SyntheticDataset out{out_dir, out_dir / "manifest.csv", out_dir / "train.csv", out_dir / "valid.csv",
                       out_dir / "test.csv"};
  write_manifest(out.manifest, records);
  write_manifest(out.train, parts[0]);
  write_manifest(out.valid, parts[1]);
  write_manifest(out.test, parts[2]);
  return out;
}

}  // namespace truncnet
