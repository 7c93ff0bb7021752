#include <algorithm>
#include <fstream>
#include <map>
#include <optional>

#include "truncnet/core/csv.hpp"
#include "truncnet/core/errors.hpp"
#include "truncnet/core/io.hpp"
#include "truncnet/data/dataset.hpp"

namespace truncnet {
namespace {

constexpr const char* kPathColumn = "Path";
constexpr const char* kViewColumn = "Frontal/Lateral";

Label parse_label(const std::string& raw, std::size_t line, const std::string& column) {
  std::string v = raw;
  v.erase(std::remove_if(v.begin(), v.end(), [](unsigned char c) { return std::isspace(c); }), v.end());
  if (v.empty()) return Label::kMissing;
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size()) {
      if (x == 1.0) return Label::kPositive;
      if (x == 0.0) return Label::kNegative;
      if (x == -1.0) return Label::kUncertain;
    }
  } catch (const std::exception&) {
  }
  throw RowError("line " + std::to_string(line) + ": column '" + column + "' has unparsable value '" + raw + "'",
                 line);
}

std::string label_text(Label l) {
  switch (l) {
    case Label::kPositive:
      return "1.0";
    case Label::kNegative:
      return "0.0";
    case Label::kUncertain:
      return "-1.0";
    case Label::kMissing:
      break;
  }
  return "";
}

}  // namespace

const std::array<std::string, kObservations>& observation_names() {
  static const std::array<std::string, kObservations> names = {
      "No Finding",       "Enlarged Cardiomediastinum", "Cardiomegaly", "Lung Opacity",
      "Lung Lesion",      "Edema",                      "Consolidation", "Pneumonia",
      "Atelectasis",      "Pneumothorax",               "Pleural Effusion", "Pleural Other",
      "Fracture",         "Support Devices"};
  return names;
}

const std::vector<std::string>& evaluation_tasks() {
  static const std::vector<std::string> tasks = {"No Finding", "Atelectasis", "Cardiomegaly",
                                                 "Consolidation", "Edema", "Pleural Effusion"};
  return tasks;
}

std::size_t observation_index(const std::string& name) {
  const auto& names = observation_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return i;
  }
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw NotFoundError("unknown observation '" + name + "'; valid names: " + valid);
}

std::vector<StudyRecord> load_manifest(const std::filesystem::path& csv_path) {
  const auto lines = csv::read_lines(csv_path.string());
  if (lines.empty()) throw SchemaError(csv_path.string() + ": empty manifest (no header)");
  const auto header = csv::split(lines.front());
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column.emplace(header[i], i);

  auto require = [&](const std::string& name) {
    const auto it = column.find(name);
    if (it == column.end()) throw SchemaError(csv_path.string() + ": missing required column '" + name + "'");
    return it->second;
  };
  const auto path_col = require(kPathColumn);
  const auto view_col = column.count(kViewColumn) ? std::optional<std::size_t>(column.at(kViewColumn)) : std::nullopt;
  std::array<std::size_t, kObservations> obs_col{};
  for (std::size_t k = 0; k < kObservations; ++k) obs_col[k] = require(observation_names()[k]);

  const auto base = csv_path.parent_path();
  std::vector<StudyRecord> out;
  out.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) continue;
    const auto fields = csv::split(lines[i]);
    if (fields.size() != header.size()) {
      throw RowError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                         " fields, found " + std::to_string(fields.size()),
                     line_no);
    }
    StudyRecord r;
    std::filesystem::path p(fields[path_col]);
    if (p.empty()) throw RowError("line " + std::to_string(line_no) + ": empty Path", line_no);
    r.image_path = (p.is_relative() ? base / p : p).lexically_normal().string();
    if (view_col) {
      const auto& v = fields[*view_col];
      if (v == "Lateral") {
        r.view = View::kLateral;
      } else if (v == "Frontal" || v.empty()) {
        r.view = View::kFrontal;
      } else {
        throw RowError("line " + std::to_string(line_no) + ": unknown view '" + v + "'", line_no);
      }
    }
    for (std::size_t k = 0; k < kObservations; ++k) {
      r.labels[k] = parse_label(fields[obs_col[k]], line_no, observation_names()[k]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::filesystem::path& csv_path, const std::vector<StudyRecord>& records) {
  std::vector<std::string> header = {kPathColumn, kViewColumn};
  header.insert(header.end(), observation_names().begin(), observation_names().end());
  std::string out = csv::join(header) + "\n";
  for (const auto& r : records) {
    std::vector<std::string> row = {r.image_path, r.view == View::kLateral ? "Lateral" : "Frontal"};
    for (auto l : r.labels) row.push_back(label_text(l));
    out += csv::join(row) + "\n";
  }
  write_file_atomic(csv_path, out);
}

UncertaintyPolicy parse_uncertainty_policy(const std::string& text) {
  if (text == "uncertain_as_negative") return UncertaintyPolicy::kUncertainAsNegative;
  if (text == "uncertain_as_positive") return UncertaintyPolicy::kUncertainAsPositive;
  if (text == "drop_uncertain") return UncertaintyPolicy::kDropUncertain;
  throw InputError("unknown uncertainty policy '" + text +
                   "' (uncertain_as_negative, uncertain_as_positive, drop_uncertain)");
}

std::string to_string(UncertaintyPolicy policy) {
  switch (policy) {
    case UncertaintyPolicy::kUncertainAsNegative:
      return "uncertain_as_negative";
    case UncertaintyPolicy::kUncertainAsPositive:
      return "uncertain_as_positive";
    case UncertaintyPolicy::kDropUncertain:
      return "drop_uncertain";
  }
  return "?";
}

Targets resolve_labels(const std::vector<StudyRecord>& records, UncertaintyPolicy policy) {
  Targets t;
  t.rows = records.size();
  t.target.assign(t.rows * kObservations, 0.0f);
  t.mask.assign(t.rows * kObservations, 1.0f);
  for (std::size_t i = 0; i < t.rows; ++i) {
    for (std::size_t k = 0; k < kObservations; ++k) {
      const auto cell = i * kObservations + k;
      switch (records[i].labels[k]) {
        case Label::kPositive:
          t.target[cell] = 1.0f;
          break;
        case Label::kNegative:
        case Label::kMissing:
          break;
        case Label::kUncertain:
          if (policy == UncertaintyPolicy::kUncertainAsPositive) t.target[cell] = 1.0f;
          if (policy == UncertaintyPolicy::kDropUncertain) t.mask[cell] = 0.0f;
          break;
      }
    }
  }
  return t;
}

}  // namespace truncnet
