#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "truncnet/core/rng.hpp"
#include "truncnet/core/tensor.hpp"
#include "truncnet/nn/module.hpp"

namespace testsupport {

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path fixture(const std::string& name);

truncnet::TensorD random_tensor(const truncnet::Shape& shape, truncnet::Rng& rng, double scale = 1.0);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares analytic gradients of L = sum(w * module(x)) (w fixed random)
/// against central differences, for the input and every trainable
/// parameter. At most `per_tensor` entries are probed per tensor.
GradCheck check_module_gradients(truncnet::nn::Module<double>& module, const truncnet::TensorD& x,
                                 std::uint64_t seed = 1, double h = 1e-6, std::size_t per_tensor = 24);

/// |a - b| / max(|a|, |b|, floor).
double rel_error(double a, double b, double floor = 1e-6);

/// O(n^2) pairwise AUROC oracle with exact rational counts.
struct PairCount {
  std::int64_t twice_numerator = 0;  // 2 * concordant + ties
  std::int64_t pairs = 0;            // positives * negatives
};
PairCount brute_force_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth);

}  // namespace testsupport
