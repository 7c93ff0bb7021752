#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <nlohmann/json.hpp>

#include "truncnet/core/errors.hpp"
#include "truncnet/core/rng.hpp"
#include "truncnet/data/dataset.hpp"

namespace truncnet {

NormalizationPolicy NormalizationPolicy::imagenet() { return NormalizationPolicy{}; }

void NormalizationPolicy::validate() const {
  for (double s : std) {
    if (!(s > 0.0)) throw InputError("normalization std must be positive");
  }
}

void NormalizationPolicy::normalize(TensorF& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != 3) throw ShapeError("normalize expects (N, 3, H, W)");
  const auto p = batch.dim(2) * batch.dim(3);
  for (std::int64_t n = 0; n < batch.dim(0); ++n) {
    for (std::int64_t c = 0; c < 3; ++c) {
      float* d = batch.data() + (n * 3 + c) * p;
      const double m = mean[static_cast<std::size_t>(c)], s = std[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < p; ++i) d[i] = static_cast<float>((d[i] - m) / s);
    }
  }
}

void NormalizationPolicy::denormalize(TensorF& batch) const {
  if (batch.rank() != 4 || batch.dim(1) != 3) throw ShapeError("denormalize expects (N, 3, H, W)");
  const auto p = batch.dim(2) * batch.dim(3);
  for (std::int64_t n = 0; n < batch.dim(0); ++n) {
    for (std::int64_t c = 0; c < 3; ++c) {
      float* d = batch.data() + (n * 3 + c) * p;
      const double m = mean[static_cast<std::size_t>(c)], s = std[static_cast<std::size_t>(c)];
      for (std::int64_t i = 0; i < p; ++i) d[i] = static_cast<float>(d[i] * s + m);
    }
  }
}

std::string to_string(NormalizationPolicy::Mode mode) {
  return mode == NormalizationPolicy::Mode::kImagenetStats ? "imagenet_stats" : "dataset_stats";
}

NormalizationPolicy::Mode parse_normalization_mode(const std::string& text) {
  if (text == "imagenet_stats") return NormalizationPolicy::Mode::kImagenetStats;
  if (text == "dataset_stats") return NormalizationPolicy::Mode::kDatasetStats;
  throw InputError("unknown normalization mode '" + text + "' (imagenet_stats, dataset_stats)");
}

void to_json(nlohmann::json& j, const NormalizationPolicy& p) {
  j = nlohmann::json{{"mode", to_string(p.mode)}, {"mean", p.mean}, {"std", p.std}};
}

void from_json(const nlohmann::json& j, NormalizationPolicy& p) {
  p.mode = parse_normalization_mode(j.at("mode").get<std::string>());
  p.mean = j.at("mean").get<std::array<double, 3>>();
  p.std = j.at("std").get<std::array<double, 3>>();
  p.validate();
}

TensorF load_grayscale(const std::filesystem::path& path, std::int64_t size) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE | cv::IMREAD_ANYDEPTH);
  if (img.empty()) throw IoError("cannot read image " + path.string());
  cv::Mat f;
  const double scale = img.depth() == CV_16U ? 1.0 / 65535.0 : img.depth() == CV_8U ? 1.0 / 255.0 : 1.0;
  img.convertTo(f, CV_32F, scale);
  if (size > 0 && (f.rows != size || f.cols != size)) {
    cv::Mat r;
    cv::resize(f, r, cv::Size(static_cast<int>(size), static_cast<int>(size)), 0, 0, cv::INTER_AREA);
    f = r;
  }
  TensorF out({f.rows, f.cols});
  for (int y = 0; y < f.rows; ++y) std::copy_n(f.ptr<float>(y), f.cols, out.data() + static_cast<std::int64_t>(y) * f.cols);
  return out;
}

NormalizationPolicy compute_dataset_stats(const std::vector<StudyRecord>& records, std::size_t sample_cap,
                                          std::uint64_t seed) {
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (sample_cap > 0 && sample_cap < order.size()) {
    Rng rng(derive_seed(seed, std::string_view("dataset-stats")));
    rng.shuffle(order);
    order.resize(sample_cap);
    std::sort(order.begin(), order.end());
  }
  // Two-pass accumulation in double keeps the variance exact enough for the
  // degenerate (constant image) case.
  std::vector<TensorF> images;
  for (auto i : order) {
    try {
      images.push_back(load_grayscale(records[i].image_path));
    } catch (const IoError& e) {
      spdlog::warn("skipping unreadable image: {}", e.what());
    }
  }
  if (images.empty()) throw EmptyDatasetError("no readable images to compute dataset statistics from");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& im : images) {
    for (float v : im.span()) sum += v;
    count += im.numel();
  }
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (const auto& im : images) {
    for (float v : im.span()) ss += (v - mean) * (v - mean);
  }
  double stddev = std::sqrt(ss / static_cast<double>(count));
  if (stddev < kStdFloor) {
    spdlog::warn("dataset std {} is below the floor; clamping to {}", stddev, kStdFloor);
    stddev = kStdFloor;
  }
  NormalizationPolicy p;
  p.mode = NormalizationPolicy::Mode::kDatasetStats;
  p.mean = {mean, mean, mean};
  p.std = {stddev, stddev, stddev};
  return p;
}

TensorF ImageDataset::batch(const std::vector<std::size_t>& indices, const NormalizationPolicy& norm) const {
  const auto c = images.dim(1), h = images.dim(2), w = images.dim(3);
  const auto per = c * h * w;
  TensorF out({static_cast<std::int64_t>(indices.size()), c, h, w});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::copy_n(images.data() + static_cast<std::int64_t>(indices[b]) * per, per,
                out.data() + static_cast<std::int64_t>(b) * per);
  }
  norm.normalize(out);
  return out;
}

void ImageDataset::batch_targets(const std::vector<std::size_t>& indices, TensorF& target, TensorF& mask) const {
  const auto k = static_cast<std::int64_t>(kObservations);
  target = TensorF({static_cast<std::int64_t>(indices.size()), k});
  mask = TensorF({static_cast<std::int64_t>(indices.size()), k});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    std::copy_n(targets.target.data() + indices[b] * kObservations, kObservations, target.data() + b * kObservations);
    std::copy_n(targets.mask.data() + indices[b] * kObservations, kObservations, mask.data() + b * kObservations);
  }
}

ImageDataset load_dataset(const std::filesystem::path& manifest, std::int64_t image_size, UncertaintyPolicy policy) {
  if (image_size <= 0) throw InputError("image_size must be set to a positive resolution");
  ImageDataset ds;
  ds.records = load_manifest(manifest);
  ds.targets = resolve_labels(ds.records, policy);
  const auto n = static_cast<std::int64_t>(ds.records.size());
  const auto p = image_size * image_size;
  ds.images = TensorF({n, 3, image_size, image_size});
  for (std::int64_t i = 0; i < n; ++i) {
    const auto img = load_grayscale(ds.records[static_cast<std::size_t>(i)].image_path, image_size);
    for (std::int64_t c = 0; c < 3; ++c) std::copy_n(img.data(), p, ds.images.data() + (i * 3 + c) * p);
  }
  return ds;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(order);
  return order;
}

std::vector<std::vector<std::size_t>> make_batches(const std::vector<std::size_t>& order, std::size_t batch_size) {
  if (batch_size == 0) throw InputError("batch size must be positive");
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  return out;
}

}  // namespace truncnet
