#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ppt/tensor.hpp"

namespace ppt {

// 8-bit raster, row-major with interleaved channels (1 = gray, 3 = RGB).
struct RawImage {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<uint8_t> samples;

    static RawImage create(int height, int width, int channels, uint8_t fill = 0);

    uint8_t& at(int y, int x, int c = 0) {
        return samples[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t at(int y, int x, int c = 0) const {
        return samples[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

// Binary PGM (P5), maxval 255 only. Comments are tolerated when loading and
// never emitted when saving.
RawImage load_pgm(const std::filesystem::path& path);
void save_pgm(const RawImage& image, const std::filesystem::path& path);

// PNG restricted to 8-bit grayscale and 8-bit RGB; everything else is
// rejected rather than converted.
RawImage load_png(const std::filesystem::path& path);
void save_png(const RawImage& image, const std::filesystem::path& path);

// Dispatch by file extension (.pgm or .png, case-insensitive).
RawImage load_image(const std::filesystem::path& path);
void save_image(const RawImage& image, const std::filesystem::path& path);

// Pixel space ↔ model space: v ↦ v/127.5 − 1 maps [0,255] onto [−1,1]; the
// inverse rounds half away from zero and clamps. The round trip is exact for
// every 8-bit value.
Tensor normalize(const RawImage& gray);
RawImage denormalize(const Tensor& values);

// BT.601 luma (0.299 R + 0.587 G + 0.114 B), rounded; grayscale passes through.
RawImage to_gray(const RawImage& image);

RawImage extract_channel(const RawImage& image, int channel);
RawImage merge_channels(const RawImage& r, const RawImage& g, const RawImage& b);

// Adapts a grayscale image to side×side: center-crops oversized axes, then
// pads on the right/bottom with 128.
RawImage fit_to_square(const RawImage& gray, int side);

}  // namespace ppt
