#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "swisenet/preprocess.hpp"

namespace swisenet {

struct ImageInfo {
  int height = 0;
  int width = 0;
  int channels = 0;  // channels stored in the file
};

// True for the .jpg/.jpeg/.png extensions (case-insensitive).
bool has_image_extension(const std::filesystem::path& path);

/// Decodes an 8-bit JPEG or PNG (format sniffed from the signature) into a
/// 3-channel image. Grayscale is replicated across channels; alpha is
/// dropped; 16-bit PNG samples are reduced to their high byte.
/// Throws DataError on unreadable or malformed input.
RawImage decode_image(const std::filesystem::path& path);
RawImage decode_image(std::span<const std::uint8_t> bytes);

// Header-only validation; throws DataError if the header does not parse.
ImageInfo probe_image(const std::filesystem::path& path);

// 8-bit PNG with 1 or 3 channels.
void write_png(const std::filesystem::path& path, const RawImage& image);

// Baseline JPEG, 3 channels.
void write_jpeg(const std::filesystem::path& path, const RawImage& image, int quality = 95);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace swisenet
