#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "nbr/image.hpp"

namespace nbr {

using Bytes = std::vector<unsigned char>;

// 8-bit PNG, stored as round(clip(v,0,1)*255).
Bytes encode_png(const Image& img);
// 16-bit PNG, stored as round(clip(v,0,1)*65535).
Bytes encode_png16(const Image& img);
// Baseline JPEG of the 8-bit quantized image; grayscale stays single-component.
Bytes encode_jpeg(const Image& img, int quality);

// Decoders return v/255 (or v/65535 for 16-bit PNG). Alpha is discarded and
// gray+alpha / palette inputs are expanded to 1 or 3 channels.
Image decode_png(std::span<const unsigned char> data);
Image decode_jpeg(std::span<const unsigned char> data);
// Sniffs the signature and dispatches to the PNG or JPEG decoder.
Image decode_image(std::span<const unsigned char> data);

Bytes read_file(const std::filesystem::path& path);
// Writes via a temporary sibling and rename so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const unsigned char> data);

Image read_image(const std::filesystem::path& path);
// Format chosen by extension: .png (8-bit) or .jpg/.jpeg (quality 95).
void write_image(const std::filesystem::path& path, const Image& img);

}  // namespace nbr
