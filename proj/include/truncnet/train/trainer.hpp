#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "truncnet/data/dataset.hpp"
#include "truncnet/eval/metrics.hpp"
#include "truncnet/truncation/plan.hpp"

namespace truncnet {

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Global batch size.
  std::size_t batch_size = 16;
  int epochs = 3;
  std::int64_t eval_every = 8192;
  std::uint64_t seed = 0;
  std::size_t ensemble_size = 10;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Masked mean over (example, task) of binary cross-entropy on logits,
/// evaluated in the numerically stable form max(z,0) - z*y + log1p(exp(-|z|)).
/// Writes dL/dlogits when `grad` is non-null. Returns NaN for an all-masked
/// batch (no cells contribute).
template <typename T>
double bce_with_logits(const Tensor<T>& logits, const TensorF& target, const TensorF& mask, Tensor<T>* grad) {
  if (logits.shape() != target.shape() || logits.shape() != mask.shape()) {
    throw ShapeError("loss inputs disagree: logits " + to_string(logits.shape()) + ", targets " +
                     to_string(target.shape()) + ", mask " + to_string(mask.shape()));
  }
  double total = 0.0, weight = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) weight += mask[i];
  if (grad) *grad = Tensor<T>(logits.shape());
  if (weight == 0.0) return std::nan("");
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    if (mask[i] == 0.0f) continue;
    const double z = static_cast<double>(logits[i]);
    const double y = target[i];
    total += mask[i] * (std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))));
    if (grad) {
      const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
      (*grad)[i] = static_cast<T>(mask[i] * (s - y) / weight);
    }
  }
  return total / weight;
}

/// Adam without weight decay, schedule or clipping.
template <typename T>
class Adam {
 public:
  Adam(std::vector<nn::NamedParameter<T>> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto& np : params_) {
      m_.emplace_back(np.param->value.shape());
      v_.emplace_back(np.param->value.shape());
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      auto& param = *params_[p].param;
      if (!param.trainable) continue;
      auto& m = m_[p];
      auto& v = v_[p];
      for (std::size_t i = 0; i < param.value.numel(); ++i) {
        const double g = param.grad[i];
        m[i] = static_cast<T>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g);
        v[i] = static_cast<T>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g);
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param.value[i] = static_cast<T>(param.value[i] - cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_eps));
      }
    }
  }

  std::int64_t steps() const noexcept { return t_; }

 private:
  std::vector<nn::NamedParameter<T>> params_;
  TrainConfig cfg_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  std::int64_t t_ = 0;
};

/// One optimization step on a batch: forward, masked BCE, backward, Adam.
/// Returns the loss; an all-masked batch is skipped (NaN returned, no update).
double train_step(Network<float>& model, Adam<float>& optimizer, const TensorF& batch, const TensorF& target,
                  const TensorF& mask);

struct CheckpointMeta {
  std::int64_t step = 0;
  std::vector<std::string> tasks;
  /// NaN where the validation split lacks one class for the task.
  std::vector<double> per_task_auc;
  double avg_auc = 0.0;
  std::string artifact_path;  // relative to the run directory
  std::string plan_hash;
};

void to_json(nlohmann::json& j, const CheckpointMeta& m);
void from_json(const nlohmann::json& j, CheckpointMeta& m);

struct RunSpec {
  TruncationPlan plan;
  bool pretrained = false;
  /// Required when pretrained.
  BackboneProvider* provider = nullptr;
  std::string provider_description;
  std::filesystem::path train_manifest;
  std::filesystem::path valid_manifest;
  std::int64_t image_size = 0;
  UncertaintyPolicy uncertainty = UncertaintyPolicy::kUncertainAsNegative;
  /// Unset: ImageNet statistics when pretrained, dataset statistics otherwise.
  std::optional<NormalizationPolicy::Mode> normalization;
  std::size_t stats_sample_cap = 2000;
  std::vector<std::string> tasks = evaluation_tasks();
  TrainConfig train;
};

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<CheckpointMeta> checkpoints;
  std::int64_t total_steps = 0;
};

/// Number of checkpoints written for a run of `total_steps`: one per
/// multiple of eval_every, plus one at the end unless the last step is such
/// a multiple.
std::int64_t expected_checkpoints(std::int64_t total_steps, std::int64_t eval_every);

/// Trains per the run spec into `run_dir` (created; must not already hold a
/// run). Layout: config.json, plan.json, checkpoints/step_<N>.{tnw,json},
/// metrics.csv, ensemble.json.
RunResult finetune(const RunSpec& spec, const std::filesystem::path& run_dir);

/// Probabilities (N, 14) of `model` on every example, in eval mode.
TensorF predict_probabilities(Network<float>& model, const ImageDataset& data, const NormalizationPolicy& norm,
                              std::size_t batch_size = 64);

/// Rows of `probs` restricted to `tasks`, paired with the dataset's targets.
LabelMatrix to_label_matrix(const TensorF& probs, const ImageDataset& data, const std::vector<std::string>& tasks);

/// Mean of member probabilities.
TensorF combine_predictions(const std::vector<TensorF>& member_probs);

struct EnsembleModel {
  std::filesystem::path run_dir;
  TruncationPlan plan;
  NormalizationPolicy normalization;
  std::int64_t image_size = 0;
  std::vector<CheckpointMeta> members;  // descending avg_auc

  TensorF predict(const ImageDataset& data) const;
};

void to_json(nlohmann::json& j, const EnsembleModel& e);

/// Reads all checkpoint metadata of a run (ascending step).
std::vector<CheckpointMeta> list_checkpoints(const std::filesystem::path& run_dir);

/// Top-k checkpoints by validation avg_auc, ties to the later step. Throws
/// NotFoundError when the run holds no checkpoint.
EnsembleModel select_ensemble(const std::filesystem::path& run_dir, std::size_t k);

/// select_ensemble, then records the choice in ensemble.json.
EnsembleModel build_ensemble(const std::filesystem::path& run_dir, std::size_t k);

/// The run's plan, persisted configuration and normalization policy.
TruncationPlan load_run_plan(const std::filesystem::path& run_dir);
nlohmann::json load_run_config(const std::filesystem::path& run_dir);

/// Network of a checkpoint with every weight (head included) restored.
std::unique_ptr<Network<float>> load_checkpoint(const std::filesystem::path& run_dir, const CheckpointMeta& meta);

/// Best checkpoint archive of a run (for warm starting).
std::filesystem::path best_checkpoint_path(const std::filesystem::path& run_dir);

}  // namespace truncnet
