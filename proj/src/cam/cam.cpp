#include "truncnet/cam/cam.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "truncnet/core/csv.hpp"
#include "truncnet/core/io.hpp"
#include "truncnet/data/dataset.hpp"

namespace truncnet {
namespace fs = std::filesystem;

template <typename T>
CAMResult gradcam(Network<T>& model, const Tensor<T>& image, std::size_t task_index) {
  if (task_index >= static_cast<std::size_t>(model.num_outputs())) {
    throw InputError(fmt::format("task index {} is out of range (model has {} outputs)", task_index, model.num_outputs()));
  }
  if (image.rank() != 4 || image.dim(0) != 1) throw InputError("gradcam takes a single (1, 3, H, W) image");
  model.set_training(false);
  const Tensor<T> feats = model.features(image);
  if (feats.rank() != 4) throw UnsupportedError(model.spec().display_name() + " exposes no spatial feature maps");
  const Tensor<T> logits = model.head_forward(feats);
  Tensor<T> dlogits(logits.shape());
  dlogits[task_index] = T{1};
  const Tensor<T> grad = model.head_backward(dlogits);

  const auto c = feats.dim(1), h = feats.dim(2), w = feats.dim(3);
  std::vector<double> weights(static_cast<std::size_t>(c), 0.0);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) s += std::max(0.0, static_cast<double>(grad.at(0, ch, y, x)));
    weights[static_cast<std::size_t>(ch)] = s / static_cast<double>(h * w);
  }

  CAMResult r;
  r.task = task_index < kObservations ? observation_names()[task_index] : std::to_string(task_index);
  r.probability = static_cast<double>(nn::sigmoid(static_cast<double>(logits[task_index])));
  r.heatmap = TensorD({h, w});
  double peak = 0.0;
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      double v = 0.0;
      for (std::int64_t ch = 0; ch < c; ++ch) v += weights[static_cast<std::size_t>(ch)] * static_cast<double>(feats.at(0, ch, y, x));
      v = std::max(0.0, v);
      r.heatmap.at(y, x) = v;
      peak = std::max(peak, v);
    }
  }
  if (peak > 0.0) {
    for (auto& v : r.heatmap.span()) v = v / peak * r.probability;
  }

  const auto H = image.dim(2), W = image.dim(3);
  cv::Mat native(static_cast<int>(h), static_cast<int>(w), CV_64F, r.heatmap.data());
  cv::Mat up;
  cv::resize(native, up, cv::Size(static_cast<int>(W), static_cast<int>(H)), 0, 0, cv::INTER_LINEAR);
  r.upsampled = TensorD({H, W});
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x) r.upsampled.at(y, x) = std::clamp(up.at<double>(static_cast<int>(y), static_cast<int>(x)), 0.0, r.probability);
  return r;
}

template <typename T>
CAMResult gradcam(Network<T>& model, const Tensor<T>& image, const std::string& task) {
  std::size_t index = 0;
  try {
    index = observation_index(task);
  } catch (const NotFoundError& e) {
    throw InputError(e.what());
  }
  return gradcam(model, image, index);
}

template CAMResult gradcam<float>(Network<float>&, const TensorF&, std::size_t);
template CAMResult gradcam<double>(Network<double>&, const TensorD&, std::size_t);
template CAMResult gradcam<float>(Network<float>&, const TensorF&, const std::string&);
template CAMResult gradcam<double>(Network<double>&, const TensorD&, const std::string&);

std::vector<unsigned char> overlay_pixels(const CAMResult& cam, const TensorF& image, double alpha) {
  if (image.rank() != 2) throw InputError("overlay expects a grayscale (H, W) image");
  if (cam.upsampled.rank() != 2 || cam.upsampled.dim(0) != image.dim(0) || cam.upsampled.dim(1) != image.dim(1)) {
    throw InputError("heatmap " + to_string(cam.upsampled.shape()) + " does not match image " + to_string(image.shape()));
  }
  const int H = static_cast<int>(image.dim(0)), W = static_cast<int>(image.dim(1));
  cv::Mat level(H, W, CV_8UC1), jet;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      level.at<unsigned char>(y, x) = static_cast<unsigned char>(std::lround(255.0 * std::clamp(cam.upsampled.at(y, x), 0.0, 1.0)));
  cv::applyColorMap(level, jet, cv::COLORMAP_JET);
  std::vector<unsigned char> out(static_cast<std::size_t>(H) * W * 3);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double gray = 255.0 * std::clamp(static_cast<double>(image.at(y, x)), 0.0, 1.0);
      const double v = std::clamp(cam.upsampled.at(y, x), 0.0, 1.0);
      const auto& color = jet.at<cv::Vec3b>(y, x);
      for (int k = 0; k < 3; ++k) {
        const double px = gray + alpha * v * (color[k] - gray);
        out[(static_cast<std::size_t>(y) * W + x) * 3 + k] = static_cast<unsigned char>(std::lround(std::clamp(px, 0.0, 255.0)));
      }
    }
  }
  return out;
}

namespace {

void write_png(const cv::Mat& img, const fs::path& path) {
  std::vector<uchar> buf;
  if (!cv::imencode(".png", img, buf)) throw IoError("could not encode " + path.string());
  write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(buf.data()), buf.size()));
}

}  // namespace

void render_overlay(const CAMResult& cam, const TensorF& image, const fs::path& path, double alpha) {
  auto px = overlay_pixels(cam, image, alpha);
  cv::Mat img(static_cast<int>(image.dim(0)), static_cast<int>(image.dim(1)), CV_8UC3, px.data());
  write_png(img, path);
}

void render_grid(const std::vector<std::vector<fs::path>>& rows, const fs::path& path) {
  if (rows.empty() || rows.front().empty()) throw InputError("render_grid needs at least one overlay");
  std::vector<cv::Mat> lines;
  for (const auto& row : rows) {
    if (row.size() != rows.front().size()) throw InputError("every grid row needs the same number of overlays");
    std::vector<cv::Mat> cells;
    for (const auto& p : row) {
      cv::Mat m = cv::imread(p.string(), cv::IMREAD_COLOR);
      if (m.empty()) throw IoError("cannot read overlay " + p.string());
      if (!cells.empty() && m.size() != cells.front().size()) throw InputError("overlays differ in resolution: " + p.string());
      cells.push_back(m);
    }
    cv::Mat line;
    cv::hconcat(cells, line);
    if (!lines.empty() && line.cols != lines.front().cols) throw InputError("grid rows differ in width");
    lines.push_back(line);
  }
  cv::Mat grid;
  cv::vconcat(lines, grid);
  write_png(grid, path);
}

void write_heatmap_csv(const TensorD& grid, const fs::path& path) {
  if (grid.rank() != 2) throw InputError("heatmap grids are two-dimensional");
  std::string text;
  for (std::int64_t y = 0; y < grid.dim(0); ++y) {
    std::vector<std::string> cells;
    for (std::int64_t x = 0; x < grid.dim(1); ++x) cells.push_back(csv::format_double(grid.at(y, x)));
    text += csv::join(cells) + "\n";
  }
  write_file_atomic(path, text);
}

std::pair<std::int64_t, std::int64_t> argmax2d(const TensorD& grid) {
  if (grid.rank() != 2 || grid.numel() == 0) throw InputError("argmax2d needs a non-empty 2-D grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.numel(); ++i) {
    if (grid[i] > grid[best]) best = i;
  }
  return {static_cast<std::int64_t>(best) / grid.dim(1), static_cast<std::int64_t>(best) % grid.dim(1)};
}

}  // namespace truncnet
