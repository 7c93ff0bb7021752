#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "truncnet/arch/network.hpp"

namespace truncnet {

/// Named tensors ("<unit_id>.<layer path>" -> values), batch-norm running
/// statistics included. Stored in single precision.
using WeightMap = std::map<std::string, TensorF>;

/// Binary archive: "TNWM", u32 version, u64 count, then per entry the name,
/// rank, dims and float32 payload (little-endian). Written atomically.
void save_weights(const std::filesystem::path& path, const WeightMap& weights);
WeightMap load_weights(const std::filesystem::path& path);

template <typename T>
WeightMap export_weights(Network<T>& net) {
  WeightMap out;
  for (auto& np : net.named_parameters()) out.emplace(np.name, np.param->value.template cast<float>());
  return out;
}

/// Copies every parameter of `net` found in `weights`; returns the names of
/// parameters that had no entry. Shape disagreements throw ShapeError.
template <typename T>
std::vector<std::string> import_weights(Network<T>& net, const WeightMap& weights, bool include_head = true) {
  std::vector<std::string> missing;
  for (auto& np : net.named_parameters()) {
    if (!include_head && np.name.rfind("head.", 0) == 0) continue;
    const auto it = weights.find(np.name);
    if (it == weights.end()) {
      missing.push_back(np.name);
      continue;
    }
    if (it->second.shape() != np.param->value.shape()) {
      throw ShapeError("weight '" + np.name + "' has shape " + to_string(it->second.shape()) + ", expected " +
                       to_string(np.param->value.shape()));
    }
    np.param->value = it->second.template cast<T>();
  }
  return missing;
}

}  // namespace truncnet
