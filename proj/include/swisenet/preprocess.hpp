#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "swisenet/tensor.hpp"

namespace swisenet {

/// 8-bit image, row-major with interleaved channels.
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  RawImage() = default;
  RawImage(int h, int w, int c);
  RawImage(int h, int w, int c, std::vector<std::uint8_t> px);

  std::uint8_t& at(int y, int x, int c) { return pixels[index(y, x, c)]; }
  std::uint8_t at(int y, int x, int c) const { return pixels[index(y, x, c)]; }

  bool operator==(const RawImage&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
};

/// Real-valued image grid (intermediate stages of the pipeline).
struct RealImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;

  RealImage() = default;
  RealImage(int h, int w, int c);

  double& at(int y, int x, int c) { return values[index(y, x, c)]; }
  double at(int y, int x, int c) const { return values[index(y, x, c)]; }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
};

/// Model-ready image: every value in [0, 1].
struct ProcImage {
  RealImage image;

  int height() const { return image.height; }
  int width() const { return image.width; }
  int channels() const { return image.channels; }
  const std::vector<double>& values() const { return image.values; }

  // (1, H, W, C) single-precision tensor.
  Tensor<float> to_tensor() const;
};

/// Intensity counts of one channel; counts.size() is the number of levels L.
struct IntensityHistogram {
  std::vector<std::int64_t> counts;

  std::int64_t total() const;
};

/// Cumulative distribution over intensity levels.
struct Cdf {
  std::vector<double> values;
};

struct GaussianKernel {
  int radius = 0;
  double sigma = 0.0;
  // (2r+1)^2 weights, row-major, summing to 1.
  std::vector<double> weights;

  int side() const { return 2 * radius + 1; }
  double at(int dy, int dx) const {
    return weights[static_cast<std::size_t>((dy + radius) * side() + (dx + radius))];
  }
};

enum class BorderMode { Replicate, Zero };

BorderMode border_mode_from_string(std::string_view name);
std::string_view to_string(BorderMode mode);

/// Bilinear resize with half-pixel centers: destination pixel (y, x) samples
/// the source at ((y + 0.5) * in/out - 0.5, ...), clamped to the image.
/// Results are rounded half away from zero.
RawImage resize(const RawImage& image, int target_h, int target_w);

IntensityHistogram histogram(const RawImage& image, int channel, int levels = 256);

// values[i] = sum_{j<=i} counts[j] / total.
Cdf compute_cdf(const IntensityHistogram& hist);

/// Per-channel histogram equalization. Intensity v maps to
///   round((cdf(v) - cdf_min) / (1 - cdf_min) * (L - 1))
/// with cdf_min the CDF at the smallest occurring level; rounding is half
/// away from zero and evaluated in exact integer arithmetic. A constant
/// channel has a zero denominator and is passed through unchanged.
RawImage equalize(const RawImage& image, int levels = 256);

/// exp(-(x^2 + y^2) / 2 sigma^2) on [-radius, radius]^2, divided by its sum.
GaussianKernel gaussian_kernel(double sigma, int radius);

// Per-channel correlation with the kernel; output size equals input size.
RealImage smooth(const RealImage& image, const GaussianKernel& kernel, BorderMode border = BorderMode::Replicate);

// (v - min) / (max - min) over all channels jointly; a constant image maps to zeros.
ProcImage normalize(const RealImage& image);

RealImage to_real(const RawImage& image);

// Rounds and clamps to [0, 255] after multiplying by `scale`.
RawImage to_raw(const RealImage& image, double scale = 1.0);

// Standard deviation of all intensities (scaled to [0,1]) times `scale`,
// floored at 0.1.
double adaptive_sigma(const RawImage& image, double scale);

struct PreprocessConfig {
  bool resize = true;
  int target_height = 300;
  int target_width = 300;
  int levels = 256;
  double sigma = 1.0;
  int radius = 2;
  bool adaptive_sigma = false;
  double adaptive_sigma_scale = 4.0;
  BorderMode border = BorderMode::Replicate;
};

struct PipelineStages {
  RawImage resized;
  RawImage equalized;
  RealImage smoothed;
  ProcImage normalized;
  double sigma = 0.0;
};

// resize -> equalize -> smooth -> normalize, keeping every intermediate.
PipelineStages preprocess_stages(const RawImage& image, const PreprocessConfig& cfg);

ProcImage preprocess_pipeline(const RawImage& image, const PreprocessConfig& cfg);

}  // namespace swisenet
