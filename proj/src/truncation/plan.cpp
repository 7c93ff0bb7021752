#include "truncnet/truncation/plan.hpp"

#include <nlohmann/json.hpp>

#include "truncnet/core/io.hpp"

namespace truncnet {

std::string plan_name(const ArchitectureSpec& base, int depth) {
  const auto name = base.display_name();
  return depth == 0 ? name : name + "Minus" + std::to_string(depth);
}

TruncationPlan truncate(const ArchitectureSpec& base, int depth) {
  base.validate();
  const int g = base.max_depth();
  if (depth < 0 || depth > g) {
    throw InvalidDepthError(base.display_name() + " supports truncation depths 0.." + std::to_string(g) +
                                " (maximum " + std::to_string(g) + "), got " + std::to_string(depth),
                            g);
  }
  return TruncationPlan{base, depth, plan_name(base, depth)};
}

std::vector<BlockUnit> TruncationPlan::retained_units() const {
  std::vector<BlockUnit> out;
  for (const auto& u : base.units) {
    if (u.kind == UnitKind::kHead) continue;
    if (u.removable_group && *u.removable_group <= depth) continue;
    out.push_back(u);
  }
  return out;
}

std::int64_t TruncationPlan::head_in_features() const { return retained_units().back().output_channels; }

ArchitectureSpec TruncationPlan::truncated_spec() const {
  ArchitectureSpec spec = base;
  spec.units = retained_units();
  // Remaining groups are renumbered so the truncated spec is itself valid.
  for (auto& u : spec.units) {
    if (u.removable_group) *u.removable_group -= depth;
  }
  auto head = base.head();
  head.spatial_downsample = spec.units.back().spatial_downsample;
  spec.units.push_back(head);
  // Published figures describe the base network only.
  if (depth > 0) {
    spec.published_param_count_m.reset();
    spec.published_imagenet_top1.reset();
  }
  return spec;
}

void to_json(nlohmann::json& j, const TruncationPlan& plan) {
  j = nlohmann::json{{"name", plan.name},
                     {"depth", plan.depth},
                     {"base", plan.base},
                     {"head", {{"pooling", "global_average"}, {"in_features", plan.head_in_features()},
                               {"out_features", plan.base.head().output_channels}}}};
}

void from_json(const nlohmann::json& j, TruncationPlan& plan) {
  plan = truncate(j.at("base").get<ArchitectureSpec>(), j.at("depth").get<int>());
  if (j.contains("name") && j.at("name").get<std::string>() != plan.name) {
    throw SchemaError("plan name '" + j.at("name").get<std::string>() + "' does not match its content (" +
                      plan.name + ")");
  }
}

std::string plan_to_text(const TruncationPlan& plan) { return nlohmann::json(plan).dump(2) + "\n"; }

std::string plan_content_hash(const TruncationPlan& plan) { return git_blob_sha1(plan_to_text(plan)); }

}  // namespace truncnet
