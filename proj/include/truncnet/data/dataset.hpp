#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "truncnet/core/tensor.hpp"

namespace truncnet {

inline constexpr std::size_t kObservations = 14;

/// CheXpert observation columns, in manifest order.
const std::array<std::string, kObservations>& observation_names();

/// The six scored tasks: No Finding plus the five competition tasks.
const std::vector<std::string>& evaluation_tasks();

/// Column index of an observation; throws NotFoundError listing valid names.
std::size_t observation_index(const std::string& name);

enum class Label { kPositive, kNegative, kUncertain, kMissing };
enum class View { kFrontal, kLateral };

struct StudyRecord {
  /// Absolute, or relative to the manifest's directory.
  std::string image_path;
  View view = View::kFrontal;
  std::array<Label, kObservations> labels{};
};

/// Reads a manifest with columns Path, Frontal/Lateral and the 14
/// observations. Values 1.0 / 0.0 / -1.0 / empty map to positive / negative /
/// uncertain / missing. Relative paths are resolved against the manifest's
/// directory. Extra columns are ignored.
std::vector<StudyRecord> load_manifest(const std::filesystem::path& csv_path);

void write_manifest(const std::filesystem::path& csv_path, const std::vector<StudyRecord>& records);

enum class UncertaintyPolicy { kUncertainAsNegative, kUncertainAsPositive, kDropUncertain };

UncertaintyPolicy parse_uncertainty_policy(const std::string& text);
std::string to_string(UncertaintyPolicy policy);

/// Row-major (n x 14) training targets in {0, 1} and a loss mask in {0, 1}.
/// Missing labels count as negative; uncertain ones follow the policy.
struct Targets {
  std::size_t rows = 0;
  std::vector<float> target;
  std::vector<float> mask;
};

Targets resolve_labels(const std::vector<StudyRecord>& records, UncertaintyPolicy policy);

struct NormalizationPolicy {
  enum class Mode { kImagenetStats, kDatasetStats };
  Mode mode = Mode::kImagenetStats;
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};

  static NormalizationPolicy imagenet();
  /// Pretrained runs use ImageNet statistics, scratch runs dataset ones.
  static Mode default_mode(bool pretrained) { return pretrained ? Mode::kImagenetStats : Mode::kDatasetStats; }

  void validate() const;
  /// In place on an (N, 3, H, W) batch.
  void normalize(TensorF& batch) const;
  void denormalize(TensorF& batch) const;

  bool operator==(const NormalizationPolicy&) const = default;
};

std::string to_string(NormalizationPolicy::Mode mode);
NormalizationPolicy::Mode parse_normalization_mode(const std::string& text);

void to_json(nlohmann::json& j, const NormalizationPolicy& p);
void from_json(const nlohmann::json& j, NormalizationPolicy& p);

inline constexpr double kStdFloor = 1e-6;

/// Mean and population std over the pixels of up to `sample_cap` images
/// chosen with `seed` (all images when the cap is 0 or exceeds the count).
/// Unreadable images are skipped with a warning.
NormalizationPolicy compute_dataset_stats(const std::vector<StudyRecord>& records, std::size_t sample_cap,
                                          std::uint64_t seed);

/// Single-channel image as (H, W) floats in [0, 1]; 8- and 16-bit inputs.
/// Resized with area interpolation when `size` is given and differs.
TensorF load_grayscale(const std::filesystem::path& path, std::int64_t size = 0);

/// Examples held in memory: images (N, 3, S, S) in [0, 1] with the grayscale
/// channel replicated, plus resolved targets.
struct ImageDataset {
  std::vector<StudyRecord> records;
  TensorF images;
  Targets targets;

  std::size_t size() const noexcept { return records.size(); }
  std::int64_t image_size() const { return images.rank() == 4 ? images.dim(2) : 0; }

  /// Normalized copy of the rows in `indices`.
  TensorF batch(const std::vector<std::size_t>& indices, const NormalizationPolicy& norm) const;
  /// Targets and mask rows for `indices` as (B, 14) tensors.
  void batch_targets(const std::vector<std::size_t>& indices, TensorF& target, TensorF& mask) const;
};

/// Loads every record's image at `image_size` (required; there is no
/// implicit resolution).
ImageDataset load_dataset(const std::filesystem::path& manifest, std::int64_t image_size, UncertaintyPolicy policy);

/// Example order of one epoch: a Fisher–Yates shuffle seeded by
/// derive_seed(seed, epoch), identical across runs.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Consecutive slices of `order`; the last batch may be short.
std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size);

}  // namespace truncnet
