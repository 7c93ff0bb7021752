#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unistd.h>

namespace testsupport {
namespace fs = std::filesystem;
using truncnet::Rng;
using truncnet::TensorD;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("truncnet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path fixture(const std::string& name) { return fs::path(TRUNCNET_FIXTURE_DIR) / name; }

TensorD random_tensor(const truncnet::Shape& shape, Rng& rng, double scale) {
  TensorD t(shape);
  for (auto& v : t.span()) v = scale * rng.normal();
  return t;
}

double rel_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

GradCheck check_module_gradients(truncnet::nn::Module<double>& module, const TensorD& x, std::uint64_t seed, double h,
                                 std::size_t per_tensor) {
  Rng rng(seed);
  const TensorD y0 = module.forward(x);
  const TensorD w = random_tensor(y0.shape(), rng);
  auto loss = [&](const TensorD& input) {
    const TensorD y = module.forward(input);
    double s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
    return s;
  };

  module.zero_grad();
  module.forward(x);
  const TensorD dx = module.backward(w);
  std::vector<TensorD> analytic;
  auto params = module.named_parameters();
  for (auto& np : params) analytic.push_back(np.param->trainable ? np.param->grad : TensorD());

  GradCheck out;

  // Input gradient.
  {
    TensorD xp = x;
    const std::size_t stride = std::max<std::size_t>(1, xp.numel() / per_tensor);
    for (std::size_t i = 0; i < xp.numel(); i += stride) {
      const double orig = xp[i];
      xp[i] = orig + h;
      const double lp = loss(xp);
      xp[i] = orig - h;
      const double lm = loss(xp);
      xp[i] = orig;
      out.max_rel_error = std::max(out.max_rel_error, rel_error((lp - lm) / (2 * h), dx[i], 1e-4));
      ++out.checked;
    }
  }
  // Parameter gradients.
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& param = *params[p].param;
    if (!param.trainable) continue;
    const std::size_t stride = std::max<std::size_t>(1, param.value.numel() / per_tensor);
    for (std::size_t i = 0; i < param.value.numel(); i += stride) {
      const double orig = param.value[i];
      param.value[i] = orig + h;
      const double lp = loss(x);
      param.value[i] = orig - h;
      const double lm = loss(x);
      param.value[i] = orig;
      out.max_rel_error = std::max(out.max_rel_error, rel_error((lp - lm) / (2 * h), analytic[p][i], 1e-4));
      ++out.checked;
    }
  }
  return out;
}

PairCount brute_force_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& truth) {
  PairCount c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!truth[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truth[j]) continue;
      ++c.pairs;
      if (scores[i] > scores[j]) c.twice_numerator += 2;
      else if (scores[i] == scores[j]) c.twice_numerator += 1;
    }
  }
  return c;
}

}  // namespace testsupport
