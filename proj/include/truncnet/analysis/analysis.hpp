#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace truncnet {

struct CorrelationResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::string x_name;
  std::string y_name;
  bool exact = false;  // p from the full permutation distribution
};

enum class PValueMethod { kTApproximation, kExactPermutation };

/// Ranks starting at 1; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman's rho as the Pearson correlation of average ranks. The two-sided
/// p-value comes from t = rho sqrt((n-2)/(1-rho^2)) with n-2 degrees of
/// freedom, or, for n <= 9, optionally from enumerating all n! permutations.
/// Throws InputError for n < 3 or mismatched lengths and
/// UndefinedCorrelationError when either side is constant.
CorrelationResult spearman(std::span<const double> x, std::span<const double> y,
                           PValueMethod method = PValueMethod::kTApproximation, std::string x_name = "x",
                           std::string y_name = "y");

/// One row of a study table.
struct ModelRecord {
  std::string name;  // e.g. DenseNet121, ResNet18Minus1
  std::string family;
  std::string variant;
  bool pretrained = false;
  int k = 0;
  std::uint64_t param_count = 0;
  std::optional<double> imagenet_top1;
  double avg_auc = 0.0;
  std::optional<double> auc_ci_lo;
  std::optional<double> auc_ci_hi;
};

/// Columns: name, family, variant, pretrained, k, param_count, imagenet_top1,
/// avg_auc, auc_ci_lo, auc_ci_hi. Optional cells may be empty.
std::vector<ModelRecord> load_study_table(const std::filesystem::path& csv_path);
void write_study_table(const std::filesystem::path& csv_path, const std::vector<ModelRecord>& records);
std::string study_table_header();
std::string study_table_row(const ModelRecord& r);

/// Throws SchemaError on a repeated (name, pretrained) pair.
void validate_study_table(const std::vector<ModelRecord>& records);

struct BoostEntry {
  std::string name;
  std::uint64_t param_count = 0;
  double auc_pretrained = 0.0;
  double auc_scratch = 0.0;
  double boost = 0.0;
  /// Paired-bootstrap interval when one was supplied.
  std::optional<std::pair<double, double>> ci;
};

struct BoostSummary {
  std::vector<BoostEntry> entries;  // study-table order of the pretrained rows
  double mean_boost = 0.0;
  /// spearman(param_count, boost); absent with fewer than 3 pairs or
  /// constant inputs.
  std::optional<CorrelationResult> correlation;
  std::vector<std::string> unpaired;
};

/// Pairs each model's pretrained and scratch rows; unpaired models are left
/// out with a warning. `intervals` maps a model name to a CI on its boost.
BoostSummary pretraining_boost(const std::vector<ModelRecord>& records,
                               const std::map<std::string, std::pair<double, double>>& intervals = {});

/// base / truncated. Throws InputError unless both counts are positive.
double times_smaller(double base_params, double truncated_params);

/// 100 (truncated - base) / base. Throws InputError unless base > 0.
double auc_change_pct(double truncated_auc, double base_auc);

struct ReportFiles {
  std::filesystem::path study_csv;
  std::filesystem::path boost_csv;
  std::vector<std::filesystem::path> plots;     // PNG
  std::vector<std::filesystem::path> sidecars;  // plotted coordinates
};

/// Writes study_table.csv, pretraining_boost.csv and three scatter plots
/// (auc_vs_imagenet_top1, auc_vs_params, boost_vs_params), each PNG with a
/// same-stem .csv of the plotted coordinates. Parameter axes are log10.
ReportFiles emit_report(const std::vector<ModelRecord>& records, const std::filesystem::path& out_dir,
                        const std::map<std::string, std::pair<double, double>>& boost_intervals = {});

}  // namespace truncnet
