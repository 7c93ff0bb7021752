#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "truncnet/arch/network.hpp"

namespace truncnet {

struct CAMResult {
  /// (h, w) at the final feature map's resolution, non-negative.
  TensorD heatmap;
  /// (H, W) at the input resolution, in [0, probability].
  TensorD upsampled;
  std::string task;
  double probability = 0.0;
  std::optional<std::filesystem::path> overlay_path;
};

/// Grad-CAM on the last unit's feature maps for one (1, 3, H, W) input that
/// is already normalized. Channel weights are spatial means of the positive
/// part of d logit / d feature; the ReLU of the weighted channel sum is
/// divided by its maximum (an all-zero map stays zero), multiplied by the
/// task's probability and resized bilinearly to H x W.
/// Throws InputError for an unknown task or a batch of more than one image,
/// UnsupportedError when the final features have no spatial layout.
template <typename T>
CAMResult gradcam(Network<T>& model, const Tensor<T>& image, const std::string& task);

template <typename T>
CAMResult gradcam(Network<T>& model, const Tensor<T>& image, std::size_t task_index);

inline constexpr double kOverlayAlpha = 0.5;

/// Color-mapped (jet) heatmap blended over the grayscale `image` (H, W) in
/// [0, 1]: pixel = gray + alpha * v * (jet(v) - gray), with v the upsampled
/// map, written as PNG (identical bytes for identical inputs). Throws
/// InputError when the map and image resolutions differ.
void render_overlay(const CAMResult& cam, const TensorF& image, const std::filesystem::path& path,
                    double alpha = kOverlayAlpha);

/// Blended BGR pixels (H, W, 3) without writing a file.
std::vector<unsigned char> overlay_pixels(const CAMResult& cam, const TensorF& image, double alpha = kOverlayAlpha);

/// Side-by-side grid: one column per model, one row per image. Every
/// overlay must share a resolution.
void render_grid(const std::vector<std::vector<std::filesystem::path>>& rows, const std::filesystem::path& path);

/// Raw grid as CSV, one line per row.
void write_heatmap_csv(const TensorD& grid, const std::filesystem::path& path);

/// Row and column of the largest entry (first in row-major order on ties).
std::pair<std::int64_t, std::int64_t> argmax2d(const TensorD& grid);

}  // namespace truncnet
