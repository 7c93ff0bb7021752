#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace truncnet {

enum class Family { kDenseNet, kResNet, kEfficientNet, kMobileNet, kMNASNet, kInception, kToy };

enum class UnitKind { kStem, kDenseBlock, kTransition, kResidualStage, kMbconvGroup, kInceptionGroup, kHead };

std::string to_string(Family family);
std::string to_string(UnitKind kind);
/// Case-insensitive; accepts "densenet", "DenseNet", "toy", ...
Family parse_family(const std::string& text);
UnitKind parse_unit_kind(const std::string& text);

/// Number of outputs of the classification block: one per observation.
inline constexpr std::int64_t kNumObservations = 14;

struct BlockUnit {
  std::string unit_id;
  UnitKind kind = UnitKind::kStem;
  /// Trailing-removal group; 1 is removed first.
  std::optional<int> removable_group;
  std::int64_t output_channels = 0;
  /// log2 of the cumulative spatial downsampling after this unit.
  int spatial_downsample = 0;

  bool operator==(const BlockUnit&) const = default;
};

struct ArchitectureSpec {
  Family family = Family::kToy;
  std::string variant;
  std::vector<BlockUnit> units;
  std::optional<std::string> pretrained_source;
  /// Reference metadata only; never read by computation paths.
  std::optional<double> published_param_count_m;
  std::optional<double> published_imagenet_top1;

  bool operator==(const ArchitectureSpec&) const = default;

  /// Largest legal truncation depth G (0 when the family has no groups).
  int max_depth() const;
  /// "DenseNet121", "ResNet18", "MNASNet", "Toy3x32", ...
  std::string display_name() const;
  const BlockUnit& head() const;
  /// Throws SchemaError when a structural invariant is violated.
  void validate() const;
};

void to_json(nlohmann::json& j, const BlockUnit& unit);
void from_json(const nlohmann::json& j, BlockUnit& unit);
void to_json(nlohmann::json& j, const ArchitectureSpec& spec);
void from_json(const nlohmann::json& j, ArchitectureSpec& spec);

/// One human-readable JSON file per family holding all of its variants.
void save_family_file(const std::filesystem::path& path, const std::vector<ArchitectureSpec>& specs);
std::vector<ArchitectureSpec> load_family_file(const std::filesystem::path& path);

}  // namespace truncnet
