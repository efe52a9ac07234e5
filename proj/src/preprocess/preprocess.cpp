#include "swisenet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "swisenet/error.hpp"

namespace swisenet {

namespace {

void check_dims(int h, int w, int c) {
  if (h <= 0 || w <= 0 || c <= 0) {
    throw ArgumentError("image dimensions must be positive, got " + std::to_string(h) + "x" + std::to_string(w) +
                        "x" + std::to_string(c));
  }
}

std::uint8_t round_to_u8(double v) {
  const double r = std::round(v);  // half away from zero
  return static_cast<std::uint8_t>(std::clamp(r, 0.0, 255.0));
}

}  // namespace

RawImage::RawImage(int h, int w, int c) : height(h), width(w), channels(c) {
  check_dims(h, w, c);
  pixels.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), 0);
}

RawImage::RawImage(int h, int w, int c, std::vector<std::uint8_t> px)
    : height(h), width(w), channels(c), pixels(std::move(px)) {
  check_dims(h, w, c);
  if (pixels.size() != static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c)) {
    throw ArgumentError("pixel count does not match " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                        std::to_string(c));
  }
}

RealImage::RealImage(int h, int w, int c) : height(h), width(w), channels(c) {
  check_dims(h, w, c);
  values.assign(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), 0.0);
}

Tensor<float> ProcImage::to_tensor() const {
  std::vector<float> data(image.values.begin(), image.values.end());
  return Tensor<float>(Shape{1, image.height, image.width, image.channels}, std::move(data));
}

std::int64_t IntensityHistogram::total() const {
  std::int64_t t = 0;
  for (auto c : counts) t += c;
  return t;
}

BorderMode border_mode_from_string(std::string_view name) {
  if (name == "replicate") return BorderMode::Replicate;
  if (name == "zero") return BorderMode::Zero;
  throw ArgumentError("unknown border mode '" + std::string(name) + "' (expected replicate|zero)");
}

std::string_view to_string(BorderMode mode) { return mode == BorderMode::Replicate ? "replicate" : "zero"; }

RawImage resize(const RawImage& image, int target_h, int target_w) {
  if (target_h <= 0 || target_w <= 0) {
    throw ArgumentError("resize target must be at least 1x1, got " + std::to_string(target_h) + "x" +
                        std::to_string(target_w));
  }
  if (target_h == image.height && target_w == image.width) return image;
  RawImage out(target_h, target_w, image.channels);
  const double sy = static_cast<double>(image.height) / target_h;
  const double sx = static_cast<double>(image.width) / target_w;
  for (int y = 0; y < target_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.height - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.width - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < image.channels; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
        const double bottom = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
        out.at(y, x, c) = round_to_u8(top * (1.0 - wy) + bottom * wy);
      }
    }
  }
  return out;
}

IntensityHistogram histogram(const RawImage& image, int channel, int levels) {
  if (levels < 2 || levels > 256) throw ArgumentError("levels must lie in [2, 256]");
  if (channel < 0 || channel >= image.channels) throw ArgumentError("channel index out of range");
  IntensityHistogram h;
  h.counts.assign(static_cast<std::size_t>(levels), 0);
  for (std::size_t i = static_cast<std::size_t>(channel); i < image.pixels.size();
       i += static_cast<std::size_t>(image.channels)) {
    const int v = image.pixels[i];
    if (v >= levels) {
      throw ArgumentError("intensity " + std::to_string(v) + " outside " + std::to_string(levels) + " levels");
    }
    ++h.counts[static_cast<std::size_t>(v)];
  }
  return h;
}

Cdf compute_cdf(const IntensityHistogram& hist) {
  const std::int64_t total = hist.total();
  if (total <= 0) throw ArgumentError("cannot build a CDF from an empty histogram");
  Cdf cdf;
  cdf.values.resize(hist.counts.size());
  std::int64_t running = 0;
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    running += hist.counts[i];
    cdf.values[i] = static_cast<double>(running) / static_cast<double>(total);
  }
  return cdf;
}

RawImage equalize(const RawImage& image, int levels) {
  RawImage out = image;
  for (int c = 0; c < image.channels; ++c) {
    const IntensityHistogram h = histogram(image, c, levels);
    const std::int64_t total = h.total();
    std::vector<std::int64_t> cum(h.counts.size());
    std::int64_t running = 0;
    std::int64_t cum_min = -1;
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      running += h.counts[i];
      cum[i] = running;
      if (cum_min < 0 && h.counts[i] > 0) cum_min = running;
    }
    const std::int64_t den = total - cum_min;
    if (den == 0) continue;  // constant channel
    std::vector<std::uint8_t> map(h.counts.size());
    for (std::size_t v = 0; v < map.size(); ++v) {
      const std::int64_t num = std::max<std::int64_t>(cum[v] - cum_min, 0) * (levels - 1);
      map[v] = static_cast<std::uint8_t>((2 * num + den) / (2 * den));
    }
    for (std::size_t i = static_cast<std::size_t>(c); i < out.pixels.size();
         i += static_cast<std::size_t>(image.channels)) {
      out.pixels[i] = map[image.pixels[i]];
    }
  }
  return out;
}

GaussianKernel gaussian_kernel(double sigma, int radius) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw ArgumentError("gaussian sigma must be positive, got " + std::to_string(sigma));
  }
  if (radius < 1) throw ArgumentError("gaussian radius must be at least 1, got " + std::to_string(radius));
  GaussianKernel k;
  k.radius = radius;
  k.sigma = sigma;
  const int side = k.side();
  k.weights.resize(static_cast<std::size_t>(side * side));
  double total = 0.0;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      const double w = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      k.weights[static_cast<std::size_t>((dy + radius) * side + dx + radius)] = w;
      total += w;
    }
  }
  for (auto& w : k.weights) w /= total;
  return k;
}

RealImage smooth(const RealImage& image, const GaussianKernel& kernel, BorderMode border) {
  RealImage out(image.height, image.width, image.channels);
  const int r = kernel.radius;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        double acc = 0.0;
        for (int m = -r; m <= r; ++m) {
          int yy = y + m;
          if (yy < 0 || yy >= image.height) {
            if (border == BorderMode::Zero) continue;
            yy = std::clamp(yy, 0, image.height - 1);
          }
          for (int n = -r; n <= r; ++n) {
            int xx = x + n;
            if (xx < 0 || xx >= image.width) {
              if (border == BorderMode::Zero) continue;
              xx = std::clamp(xx, 0, image.width - 1);
            }
            acc += image.at(yy, xx, c) * kernel.at(m, n);
          }
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

ProcImage normalize(const RealImage& image) {
  ProcImage out{RealImage(image.height, image.width, image.channels)};
  const auto [lo_it, hi_it] = std::minmax_element(image.values.begin(), image.values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (hi == lo) return out;
  const double range = hi - lo;
  for (std::size_t i = 0; i < image.values.size(); ++i) out.image.values[i] = (image.values[i] - lo) / range;
  return out;
}

RealImage to_real(const RawImage& image) {
  RealImage out(image.height, image.width, image.channels);
  std::copy(image.pixels.begin(), image.pixels.end(), out.values.begin());
  return out;
}

RawImage to_raw(const RealImage& image, double scale) {
  RawImage out(image.height, image.width, image.channels);
  for (std::size_t i = 0; i < image.values.size(); ++i) out.pixels[i] = round_to_u8(image.values[i] * scale);
  return out;
}

double adaptive_sigma(const RawImage& image, double scale) {
  double mean = 0.0;
  for (auto p : image.pixels) mean += p / 255.0;
  mean /= static_cast<double>(image.pixels.size());
  double var = 0.0;
  for (auto p : image.pixels) {
    const double d = p / 255.0 - mean;
    var += d * d;
  }
  var /= static_cast<double>(image.pixels.size());
  return std::max(0.1, std::sqrt(var) * scale);
}

PipelineStages preprocess_stages(const RawImage& image, const PreprocessConfig& cfg) {
  PipelineStages s;
  s.resized = cfg.resize ? resize(image, cfg.target_height, cfg.target_width) : image;
  s.equalized = equalize(s.resized, cfg.levels);
  s.sigma = cfg.adaptive_sigma ? adaptive_sigma(s.equalized, cfg.adaptive_sigma_scale) : cfg.sigma;
  s.smoothed = smooth(to_real(s.equalized), gaussian_kernel(s.sigma, cfg.radius), cfg.border);
  s.normalized = normalize(s.smoothed);
  return s;
}

ProcImage preprocess_pipeline(const RawImage& image, const PreprocessConfig& cfg) {
  return preprocess_stages(image, cfg).normalized;
}

}  // namespace swisenet
