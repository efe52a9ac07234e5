#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "swisenet/image_io.hpp"
#include "swisenet/rng.hpp"
#include "swisenet/tensor.hpp"

namespace fixture {

inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names{"bacterialblight", "blast", "brownspot", "tungro"};
  return names;
}

// Class c gets a distinct solid color; every pixel gets uniform noise of
// +/- `noise`, clamped to [0, 1].
inline void solid_color_set(int size, int per_class, std::uint64_t seed, std::vector<swisenet::Tensor<float>>& images,
                            std::vector<int>& labels, float noise = 0.1f) {
  static const float colors[4][3] = {{0.9f, 0.2f, 0.2f}, {0.2f, 0.9f, 0.2f}, {0.2f, 0.2f, 0.9f}, {0.9f, 0.9f, 0.2f}};
  swisenet::Rng rng(seed);
  for (int c = 0; c < 4; ++c) {
    for (int k = 0; k < per_class; ++k) {
      swisenet::Tensor<float> t(swisenet::Shape{size, size, 3});
      for (std::size_t i = 0; i < t.size(); ++i) {
        const float v = colors[c][i % 3] + noise * static_cast<float>(rng.uniform(-1.0, 1.0));
        t.vec()[i] = std::clamp(v, 0.0f, 1.0f);
      }
      images.push_back(std::move(t));
      labels.push_back(c);
    }
  }
}

inline swisenet::RawImage noisy_image(int h, int w, std::uint8_t base, swisenet::Rng& rng) {
  swisenet::RawImage img(h, w, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(std::clamp<int>(base + static_cast<int>(rng.below(60)) - 30, 0, 255));
  return img;
}

// Folder-per-class tree of small PNG/JPEG files. `folders` gives the on-disk
// folder name for each class.
inline void write_image_tree(const std::filesystem::path& root, const std::vector<std::string>& folders, int per_class,
                             std::uint64_t seed, int size = 24) {
  swisenet::Rng rng(seed);
  for (std::size_t c = 0; c < folders.size(); ++c) {
    const auto dir = root / folders[c];
    std::filesystem::create_directories(dir);
    for (int k = 0; k < per_class; ++k) {
      const auto img = noisy_image(size, size + 4 * k, static_cast<std::uint8_t>(40 + 50 * c), rng);
      const std::string stem = "img_" + std::to_string(k);
      if (k % 2) {
        swisenet::write_jpeg(dir / (stem + ".jpg"), img);
      } else {
        swisenet::write_png(dir / (stem + ".png"), img);
      }
    }
  }
}

// Class c gets its own stripe orientation (horizontal, vertical, diagonal,
// checkerboard), which survives per-channel equalization. Lossless PNG only.
inline void write_pattern_tree(const std::filesystem::path& root, int per_class, std::uint64_t seed, int size = 40) {
  swisenet::Rng rng(seed);
  const auto& names = class_names();
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto dir = root / names[c];
    std::filesystem::create_directories(dir);
    for (int k = 0; k < per_class; ++k) {
      swisenet::RawImage img(size, size, 3);
      const int period = 4 + static_cast<int>(rng.below(3));
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const int u = c == 0 ? y : c == 1 ? x : c == 2 ? x + y : (x / period + y / period) * period;
          const bool on = (u / period) % 2 == 0;
          for (int ch = 0; ch < 3; ++ch) {
            const int v = (on ? 200 : 50) + static_cast<int>(rng.below(30)) - 15;
            img.pixels[(static_cast<std::size_t>(y) * size + x) * 3 + ch] = static_cast<std::uint8_t>(v);
          }
        }
      }
      swisenet::write_png(dir / ("img_" + std::to_string(k) + ".png"), img);
    }
  }
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("swisenet_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixture
