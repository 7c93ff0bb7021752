#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "truncnet/analysis/analysis.hpp"
#include "truncnet/core/csv.hpp"
#include "truncnet/core/errors.hpp"
#include "truncnet/core/io.hpp"

namespace truncnet {
namespace fs = std::filesystem;
namespace {

struct Point {
  std::string name;
  double x_value;  // before any axis transform
  double x;
  double y;
  std::optional<std::pair<double, double>> err;  // absolute y interval
};

struct Panel {
  std::string title;
  std::vector<Point> points;
};

constexpr int kPanelW = 520, kPanelH = 400;
constexpr int kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

std::pair<double, double> padded_range(std::vector<double> v) {
  if (v.empty()) return {0.0, 1.0};
  auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  double a = *lo, b = *hi;
  const double span = b - a;
  const double pad = span > 0 ? 0.08 * span : std::max(0.05 * std::abs(a), 0.5);
  return {a - pad, b + pad};
}

struct Axes {
  double x0, x1, y0, y1;
  int ox;  // panel origin in the canvas
  int px(double x) const { return ox + kLeft + static_cast<int>(std::lround((x - x0) / (x1 - x0) * (kPanelW - kLeft - kRight))); }
  int py(double y) const { return kTop + static_cast<int>(std::lround((y1 - y) / (y1 - y0) * (kPanelH - kTop - kBottom))); }
};

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.4) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, cv::Scalar(30, 30, 30), 1, cv::LINE_AA);
}

// Draws the panels side by side and writes <stem>.png and <stem>.csv.
void render(const std::vector<Panel>& panels, const std::string& x_label, const std::string& y_label,
            const fs::path& png, const fs::path& sidecar) {
  std::vector<double> ys;
  for (const auto& p : panels) {
    for (const auto& pt : p.points) {
      ys.push_back(pt.y);
      if (pt.err) {
        ys.push_back(pt.err->first);
        ys.push_back(pt.err->second);
      }
    }
  }
  const auto [y0, y1] = padded_range(ys);
  cv::Mat img(kPanelH, kPanelW * static_cast<int>(panels.size()), CV_8UC3, cv::Scalar(255, 255, 255));
  std::string rows = "panel,name,x_value,x_plot,y_plot,err_lo,err_hi,px,py\n";

  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const auto& panel = panels[pi];
    std::vector<double> xs;
    for (const auto& pt : panel.points) xs.push_back(pt.x);
    const auto [x0, x1] = padded_range(xs);
    const Axes ax{x0, x1, y0, y1, static_cast<int>(pi) * kPanelW};
    const cv::Scalar axis_color(60, 60, 60), grid(225, 225, 225);

    for (int t = 0; t <= 4; ++t) {
      const double xv = x0 + (x1 - x0) * t / 4.0, yv = y0 + (y1 - y0) * t / 4.0;
      cv::line(img, {ax.px(xv), kTop}, {ax.px(xv), kPanelH - kBottom}, grid);
      cv::line(img, {ax.ox + kLeft, ax.py(yv)}, {ax.ox + kPanelW - kRight, ax.py(yv)}, grid);
      text(img, fmt::format("{:.3g}", xv), {ax.px(xv) - 14, kPanelH - kBottom + 16}, 0.35);
      text(img, fmt::format("{:.3f}", yv), {ax.ox + 8, ax.py(yv) + 4}, 0.35);
    }
    cv::rectangle(img, {ax.ox + kLeft, kTop}, {ax.ox + kPanelW - kRight, kPanelH - kBottom}, axis_color);
    text(img, panel.title, {ax.ox + kLeft, kTop - 14}, 0.5);
    text(img, x_label, {ax.ox + kLeft + 120, kPanelH - 14}, 0.45);
    text(img, y_label, {ax.ox + 4, kTop - 28 + 12}, 0.4);

    for (const auto& pt : panel.points) {
      const cv::Point c(ax.px(pt.x), ax.py(pt.y));
      if (pt.err) {
        cv::line(img, {c.x, ax.py(pt.err->first)}, {c.x, ax.py(pt.err->second)}, cv::Scalar(120, 120, 120));
        cv::line(img, {c.x - 4, ax.py(pt.err->first)}, {c.x + 4, ax.py(pt.err->first)}, cv::Scalar(120, 120, 120));
        cv::line(img, {c.x - 4, ax.py(pt.err->second)}, {c.x + 4, ax.py(pt.err->second)}, cv::Scalar(120, 120, 120));
      }
      cv::circle(img, c, 4, cv::Scalar(180, 90, 20), cv::FILLED, cv::LINE_AA);
      text(img, pt.name, {c.x + 6, c.y - 6}, 0.33);
      rows += csv::join({panel.title, pt.name, csv::format_double(pt.x_value), csv::format_double(pt.x),
                         csv::format_double(pt.y), pt.err ? csv::format_double(pt.err->first) : "",
                         pt.err ? csv::format_double(pt.err->second) : "", std::to_string(c.x), std::to_string(c.y)}) +
              "\n";
    }
  }
  std::vector<uchar> buf;
  if (!cv::imencode(".png", img, buf)) throw IoError("could not encode " + png.string());
  write_file_atomic(png, std::string_view(reinterpret_cast<const char*>(buf.data()), buf.size()));
  write_file_atomic(sidecar, rows);
}

std::optional<std::pair<double, double>> record_ci(const ModelRecord& r) {
  if (r.auc_ci_lo && r.auc_ci_hi) return std::make_pair(*r.auc_ci_lo, *r.auc_ci_hi);
  return std::nullopt;
}

}  // namespace

ReportFiles emit_report(const std::vector<ModelRecord>& records, const fs::path& out_dir,
                        const std::map<std::string, std::pair<double, double>>& boost_intervals) {
  if (records.empty()) throw InputError("emit_report needs a non-empty study table");
  validate_study_table(records);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create report directory " + out_dir.string());

  ReportFiles files;
  files.study_csv = out_dir / "study_table.csv";
  write_study_table(files.study_csv, records);

  const auto boost = pretraining_boost(records, boost_intervals);
  files.boost_csv = out_dir / "pretraining_boost.csv";
  std::string boost_text = "name,param_count,auc_pretrained,auc_scratch,boost,boost_ci_lo,boost_ci_hi\n";
  for (const auto& e : boost.entries) {
    boost_text += csv::join({e.name, std::to_string(e.param_count), csv::format_double(e.auc_pretrained),
                             csv::format_double(e.auc_scratch), csv::format_double(e.boost),
                             e.ci ? csv::format_double(e.ci->first) : "", e.ci ? csv::format_double(e.ci->second) : ""}) +
                  "\n";
  }
  write_file_atomic(files.boost_csv, boost_text);

  Panel top1_scratch{"without pretraining", {}}, top1_pre{"with pretraining", {}};
  Panel size_scratch{"without pretraining", {}}, size_pre{"with pretraining", {}};
  for (const auto& r : records) {
    const double lp = std::log10(static_cast<double>(r.param_count));
    (r.pretrained ? size_pre : size_scratch).points.push_back({r.name, static_cast<double>(r.param_count), lp, r.avg_auc, record_ci(r)});
    if (r.imagenet_top1) {
      (r.pretrained ? top1_pre : top1_scratch).points.push_back({r.name, *r.imagenet_top1, *r.imagenet_top1, r.avg_auc, record_ci(r)});
    }
  }
  if (top1_pre.points.size() + top1_scratch.points.size() < records.size()) {
    spdlog::warn("{} record(s) lack imagenet_top1 and are omitted from the top-1 plot",
                 records.size() - top1_pre.points.size() - top1_scratch.points.size());
  }
  Panel boost_panel{"pretraining boost", {}};
  for (const auto& e : boost.entries) {
    const double lp = std::log10(static_cast<double>(e.param_count));
    boost_panel.points.push_back({e.name, static_cast<double>(e.param_count), lp, e.boost, e.ci});
  }

  auto emit = [&](const std::string& stem, const std::vector<Panel>& panels, const std::string& xl, const std::string& yl) {
    files.plots.push_back(out_dir / (stem + ".png"));
    files.sidecars.push_back(out_dir / (stem + ".csv"));
    render(panels, xl, yl, files.plots.back(), files.sidecars.back());
  };
  emit("auc_vs_imagenet_top1", {top1_scratch, top1_pre}, "ImageNet top-1 accuracy", "avg AUC");
  emit("auc_vs_params", {size_scratch, size_pre}, "log10(#params)", "avg AUC");
  emit("boost_vs_params", {boost_panel}, "log10(#params)", "AUC boost");
  return files;
}

}  // namespace truncnet
