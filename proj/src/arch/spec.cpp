#include "truncnet/arch/spec.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "truncnet/core/errors.hpp"

namespace truncnet {
namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

constexpr std::pair<Family, const char*> kFamilyNames[] = {
    {Family::kDenseNet, "DenseNet"},   {Family::kResNet, "ResNet"},       {Family::kEfficientNet, "EfficientNet"},
    {Family::kMobileNet, "MobileNet"}, {Family::kMNASNet, "MNASNet"},     {Family::kInception, "Inception"},
    {Family::kToy, "Toy"},
};

constexpr std::pair<UnitKind, const char*> kKindNames[] = {
    {UnitKind::kStem, "stem"},
    {UnitKind::kDenseBlock, "dense_block"},
    {UnitKind::kTransition, "transition"},
    {UnitKind::kResidualStage, "residual_stage"},
    {UnitKind::kMbconvGroup, "mbconv_group"},
    {UnitKind::kInceptionGroup, "inception_group"},
    {UnitKind::kHead, "head"},
};

}  // namespace

std::string to_string(Family family) {
  for (auto [f, name] : kFamilyNames) {
    if (f == family) return name;
  }
  return "?";
}

std::string to_string(UnitKind kind) {
  for (auto [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

Family parse_family(const std::string& text) {
  const auto want = lower(text);
  for (auto [f, name] : kFamilyNames) {
    if (lower(name) == want) return f;
  }
  throw NotFoundError("unknown family '" + text + "'");
}

UnitKind parse_unit_kind(const std::string& text) {
  for (auto [k, name] : kKindNames) {
    if (name == text) return k;
  }
  throw SchemaError("unknown unit kind '" + text + "'");
}

int ArchitectureSpec::max_depth() const {
  int g = 0;
  for (const auto& u : units) {
    if (u.removable_group) g = std::max(g, *u.removable_group);
  }
  return g;
}

std::string ArchitectureSpec::display_name() const {
  // The single MNASNet configuration studied is width 1.0; its name carries no suffix.
  if (family == Family::kMNASNet && variant == "1.0") return "MNASNet";
  return to_string(family) + variant;
}

const BlockUnit& ArchitectureSpec::head() const {
  if (units.empty() || units.back().kind != UnitKind::kHead) {
    throw SchemaError(display_name() + ": spec does not end with a head unit");
  }
  return units.back();
}

void ArchitectureSpec::validate() const {
  const auto name = display_name();
  if (units.empty()) throw SchemaError(name + ": unit list is empty");
  if (units.back().kind != UnitKind::kHead) throw SchemaError(name + ": last unit must be the head");
  const auto heads = std::count_if(units.begin(), units.end(), [](const auto& u) { return u.kind == UnitKind::kHead; });
  if (heads != 1) throw SchemaError(name + ": exactly one head unit is required");
  if (units.back().removable_group) throw SchemaError(name + ": the head cannot carry a removable group");
  if (units.size() < 2) throw SchemaError(name + ": at least one unit must precede the head");

  std::set<std::string> ids;
  for (const auto& u : units) {
    if (u.unit_id.empty()) throw SchemaError(name + ": empty unit_id");
    if (u.unit_id.find('.') != std::string::npos) throw SchemaError(name + ": unit_id may not contain '.'");
    if (!ids.insert(u.unit_id).second) throw SchemaError(name + ": duplicate unit_id '" + u.unit_id + "'");
    if (u.output_channels <= 0) throw SchemaError(name + ": unit '" + u.unit_id + "' has no output channels");
    if (u.spatial_downsample < 0) throw SchemaError(name + ": negative downsampling on '" + u.unit_id + "'");
  }

  // Groups must be non-increasing towards the tail, cover 1..G, and only
  // appear on a trailing run of units.
  const int g = max_depth();
  std::vector<bool> seen(static_cast<std::size_t>(g) + 1, false);
  bool in_tail = false;
  int previous = g + 1;
  for (std::size_t i = 0; i + 1 < units.size(); ++i) {
    const auto& grp = units[i].removable_group;
    if (!grp) {
      if (in_tail) throw SchemaError(name + ": removable groups must form a trailing run");
      continue;
    }
    if (*grp < 1) throw SchemaError(name + ": removable_group must be >= 1");
    if (*grp > previous) throw SchemaError(name + ": removable groups must decrease towards the head");
    in_tail = true;
    previous = *grp;
    seen[static_cast<std::size_t>(*grp)] = true;
  }
  for (int k = 1; k <= g; ++k) {
    if (!seen[static_cast<std::size_t>(k)]) throw SchemaError(name + ": removable groups are not contiguous");
  }
  if (units.front().removable_group) throw SchemaError(name + ": the first unit cannot be removable");
}

void to_json(nlohmann::json& j, const BlockUnit& unit) {
  j = nlohmann::json{{"unit_id", unit.unit_id},
                     {"kind", to_string(unit.kind)},
                     {"output_channels", unit.output_channels},
                     {"spatial_downsample", unit.spatial_downsample}};
  j["removable_group"] = unit.removable_group ? nlohmann::json(*unit.removable_group) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, BlockUnit& unit) {
  unit.unit_id = j.at("unit_id").get<std::string>();
  unit.kind = parse_unit_kind(j.at("kind").get<std::string>());
  unit.output_channels = j.at("output_channels").get<std::int64_t>();
  unit.spatial_downsample = j.at("spatial_downsample").get<int>();
  if (j.contains("removable_group") && !j.at("removable_group").is_null()) {
    unit.removable_group = j.at("removable_group").get<int>();
  } else {
    unit.removable_group.reset();
  }
}

void to_json(nlohmann::json& j, const ArchitectureSpec& spec) {
  j = nlohmann::json{{"family", to_string(spec.family)}, {"variant", spec.variant}, {"units", spec.units}};
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j["pretrained_source"] = opt(spec.pretrained_source);
  j["published_param_count_m"] = opt(spec.published_param_count_m);
  j["published_imagenet_top1"] = opt(spec.published_imagenet_top1);
}

void from_json(const nlohmann::json& j, ArchitectureSpec& spec) {
  spec.family = parse_family(j.at("family").get<std::string>());
  spec.variant = j.at("variant").get<std::string>();
  spec.units = j.at("units").get<std::vector<BlockUnit>>();
  auto read = [&](const char* key, auto& field) {
    using V = typename std::decay_t<decltype(field)>::value_type;
    if (j.contains(key) && !j.at(key).is_null()) {
      field = j.at(key).get<V>();
    } else {
      field.reset();
    }
  };
  read("pretrained_source", spec.pretrained_source);
  read("published_param_count_m", spec.published_param_count_m);
  read("published_imagenet_top1", spec.published_imagenet_top1);
}

void save_family_file(const std::filesystem::path& path, const std::vector<ArchitectureSpec>& specs) {
  if (specs.empty()) throw InputError("no specs to save");
  for (const auto& s : specs) {
    if (s.family != specs.front().family) throw InputError("a family file holds a single family");
  }
  nlohmann::json j{{"family", to_string(specs.front().family)}, {"variants", specs}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<ArchitectureSpec> load_family_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    auto specs = j.at("variants").get<std::vector<ArchitectureSpec>>();
    for (const auto& s : specs) s.validate();
    return specs;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

}  // namespace truncnet
