#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace truncnet {

/// Scores and binary truth for n examples x k tasks, row-major.
struct LabelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> scores;
  std::vector<std::uint8_t> truth;
  std::vector<std::string> task_names;
  /// Optional; when both sides of a comparison carry ids they must agree.
  std::vector<std::string> example_ids;

  double score(std::size_t i, std::size_t k) const { return scores[i * cols + k]; }
  std::uint8_t label(std::size_t i, std::size_t k) const { return truth[i * cols + k]; }
  std::size_t task_index(const std::string& name) const;
  /// Throws ShapeError / InputError on inconsistent content.
  void validate() const;
  /// Same truth restricted to the named tasks, in the given order.
  LabelMatrix select_tasks(const std::vector<std::string>& names) const;
};

/// Mann–Whitney AUROC: (#concordant + 0.5 #tied) / (#pos #neg), computed
/// from tie groups of the sorted scores with exact integer counts.
/// Throws UndefinedAucError when truth is single-class.
double auroc(std::span<const double> scores, std::span<const std::uint8_t> truth);

/// AUROC of task column k over the given rows (all rows when empty).
double task_auroc(const LabelMatrix& m, std::size_t k, std::span<const std::size_t> rows = {});

struct AverageAuc {
  double value = 0.0;
  /// Tasks left out because their AUC was undefined.
  std::vector<std::string> excluded;
  bool has_exclusions() const noexcept { return !excluded.empty(); }
};

/// Unweighted mean of the defined per-task AUCs. Throws UndefinedAucError
/// when no task is defined.
AverageAuc avg_auc(const std::vector<std::string>& tasks, const std::vector<std::optional<double>>& per_task);

/// Per-task AUCs (nullopt where undefined) and their average, over `rows`.
AverageAuc matrix_avg_auc(const LabelMatrix& m, std::span<const std::size_t> rows = {},
                          std::vector<std::optional<double>>* per_task = nullptr);

/// Percentile with linear interpolation between order statistics at
/// p * (n - 1) (the common "linear" definition). `sorted` must be ascending.
double percentile(std::span<const double> sorted, double p);

struct BootstrapResult {
  std::vector<double> replicate_values;
  double lower = 0.0;  // 2.5th percentile
  double upper = 0.0;  // 97.5th percentile
  std::uint64_t seed = 0;
  std::size_t redraws = 0;
};

/// A statistic evaluated on a resample given by row indices into `m`. It may
/// throw UndefinedAucError to request a redraw.
using Statistic = std::function<double(const LabelMatrix& m, std::span<const std::size_t> rows)>;
using VectorStatistic = std::function<std::vector<double>(const LabelMatrix& m, std::span<const std::size_t> rows)>;

inline constexpr std::size_t kDefaultReplicates = 1000;

/// Nonparametric bootstrap over example rows (tasks resampled jointly).
/// Replicate r draws from its own stream derive_seed(seed, r), so results do
/// not depend on evaluation order. Undefined replicates are redrawn; more
/// than 100 * n redraws in total is a hard error.
BootstrapResult bootstrap_ci(const Statistic& statistic, const LabelMatrix& m, std::size_t n = kDefaultReplicates,
                             std::uint64_t seed = 0);

/// Several statistics sharing the same replicates.
std::vector<BootstrapResult> bootstrap_ci(const VectorStatistic& statistic, const LabelMatrix& m, std::size_t n,
                                          std::uint64_t seed);

/// Resampled rows of replicate r (first draw; redraws continue the stream).
std::vector<std::size_t> replicate_rows(std::size_t n_rows, std::uint64_t seed, std::size_t replicate);

struct PairedDifference {
  double diff = 0.0;  // avg_auc(A) - avg_auc(B)
  double lower = 0.0;
  double upper = 0.0;
  bool significant = false;  // CI excludes 0
  BootstrapResult bootstrap;
};

/// Both models are scored on the same resampled rows in every replicate.
/// Throws InputError when the example sets differ.
PairedDifference paired_difference(const LabelMatrix& a, const LabelMatrix& b, std::size_t n = kDefaultReplicates,
                                   std::uint64_t seed = 0);

/// "-0.002 (-0.008, 0.004)"
std::string format_difference(const PairedDifference& d, int decimals = 3);

struct EvalReport {
  std::string model;
  std::vector<std::string> tasks;
  std::map<std::string, double> per_task_auc;
  std::vector<std::string> excluded_tasks;
  double avg_auc = 0.0;
  /// statistic ("avg_auc" or a task name) -> (2.5th, 97.5th) percentiles
  std::map<std::string, std::pair<double, double>> ci;
  std::size_t n_examples = 0;
  std::size_t n_replicates = 0;
  std::uint64_t seed = 0;
};

/// Point estimates on all rows plus percentile CIs from shared replicates.
EvalReport evaluate(const LabelMatrix& m, const std::string& model, std::size_t n_replicates = kDefaultReplicates,
                    std::uint64_t seed = 0);

void to_json(nlohmann::json& j, const EvalReport& r);
void from_json(const nlohmann::json& j, EvalReport& r);

/// Flat CSV header/row: model, n_examples, avg_auc, avg_auc_ci_lo,
/// avg_auc_ci_hi, then one AUC column per task.
std::string eval_csv_header(const std::vector<std::string>& tasks);
std::string eval_csv_row(const EvalReport& r);

}  // namespace truncnet
