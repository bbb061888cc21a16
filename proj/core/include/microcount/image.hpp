#pragma once

#include <cstdint>
#include <vector>

namespace microcount {

// Interleaved 8-bit RGB image, row-major.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // height * width * 3

    ImageU8() = default;
    ImageU8(int w, int h, uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h * 3, fill) {}

    uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
};

// Interleaved float RGB accumulation buffer, row-major. Values are in the
// normalized [0, 1] intensity domain until quantization.
struct Canvas {
    int width = 0;
    int height = 0;
    std::vector<float> values;  // height * width * 3

    Canvas() = default;
    Canvas(int w, int h, float fill = 0.f)
        : width(w), height(h), values(static_cast<size_t>(w) * h * 3, fill) {}

    float& at(int x, int y, int c) {
        return values[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    float at(int x, int y, int c) const {
        return values[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
};

// Single-channel 8-bit image (masks, dot annotations).
struct GrayU8 {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // height * width

    GrayU8() = default;
    GrayU8(int w, int h, uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<size_t>(w) * h, fill) {}

    uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
};

// Bilinear resample with half-pixel center alignment. Exact copy when the
// target size equals the source size.
ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h);

// Same resampling, but producing planar float CHW output scaled to [0, 1].
std::vector<float> resize_bilinear_chw(const ImageU8& src, int out_w, int out_h);

ImageU8 flip_horizontal(const ImageU8& img);
ImageU8 flip_vertical(const ImageU8& img);
// Counterclockwise quarter turn: pixel (x, y) moves to (y, W-1-x).
ImageU8 rotate90(const ImageU8& img);
ImageU8 rotate180(const ImageU8& img);
ImageU8 rotate270(const ImageU8& img);

ImageU8 crop(const ImageU8& img, int x0, int y0, int w, int h);

}  // namespace microcount
