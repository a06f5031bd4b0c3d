#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "zsad/common.hpp"

namespace zsad {

// Interleaved 8-bit raster as stored on disk.
struct RawImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;  // 1 or 3
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return pixels[(y * width + x) * channels + c];
    }
};

// Decodes by extension: .ppm/.pgm (binary NetPBM) and .png (8-bit gray,
// gray+alpha, RGB or RGBA, non-interlaced; alpha is dropped). Throws
// DataError with the path on anything undecodable.
RawImage read_image(const std::filesystem::path& path);

// P6 for 3-channel, P5 for 1-channel.
void write_ppm(const std::filesystem::path& path, const RawImage& image);

// 8-bit grayscale or RGB PNG (zlib-compressed, deterministic output).
void write_png(const std::filesystem::path& path, const RawImage& image);

} // namespace zsad
