#include "microcount/image.hpp"

#include <algorithm>
#include <cmath>

#include "microcount/errors.hpp"

namespace microcount {

namespace {

struct Lerp {
    int lo, hi;
    float frac;
};

// Half-pixel center mapping from output coordinate to source coordinate.
Lerp lerp_coord(int out_i, int out_n, int src_n) {
    double s = (out_i + 0.5) * static_cast<double>(src_n) / out_n - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
    int lo = static_cast<int>(std::floor(s));
    int hi = std::min(lo + 1, src_n - 1);
    return {lo, hi, static_cast<float>(s - lo)};
}

}  // namespace

ImageU8 resize_bilinear(const ImageU8& src, int out_w, int out_h) {
    if (src.width <= 0 || src.height <= 0) throw InputError("resize: empty source image");
    if (src.width == out_w && src.height == out_h) return src;
    ImageU8 out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        Lerp ly = lerp_coord(y, out_h, src.height);
        for (int x = 0; x < out_w; ++x) {
            Lerp lx = lerp_coord(x, out_w, src.width);
            for (int c = 0; c < 3; ++c) {
                float top = (1.f - lx.frac) * src.at(lx.lo, ly.lo, c) + lx.frac * src.at(lx.hi, ly.lo, c);
                float bot = (1.f - lx.frac) * src.at(lx.lo, ly.hi, c) + lx.frac * src.at(lx.hi, ly.hi, c);
                float v = (1.f - ly.frac) * top + ly.frac * bot;
                out.at(x, y, c) = static_cast<uint8_t>(std::lround(std::clamp(v, 0.f, 255.f)));
            }
        }
    }
    return out;
}

std::vector<float> resize_bilinear_chw(const ImageU8& src, int out_w, int out_h) {
    if (src.width <= 0 || src.height <= 0) throw InputError("resize: empty source image");
    std::vector<float> out(3 * static_cast<size_t>(out_w) * out_h);
    const size_t plane = static_cast<size_t>(out_w) * out_h;
    if (src.width == out_w && src.height == out_h) {
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x)
                for (int c = 0; c < 3; ++c)
                    out[c * plane + static_cast<size_t>(y) * out_w + x] = src.at(x, y, c) / 255.f;
        return out;
    }
    for (int y = 0; y < out_h; ++y) {
        Lerp ly = lerp_coord(y, out_h, src.height);
        for (int x = 0; x < out_w; ++x) {
            Lerp lx = lerp_coord(x, out_w, src.width);
            for (int c = 0; c < 3; ++c) {
                float top = (1.f - lx.frac) * src.at(lx.lo, ly.lo, c) + lx.frac * src.at(lx.hi, ly.lo, c);
                float bot = (1.f - lx.frac) * src.at(lx.lo, ly.hi, c) + lx.frac * src.at(lx.hi, ly.hi, c);
                float v = (1.f - ly.frac) * top + ly.frac * bot;
                out[c * plane + static_cast<size_t>(y) * out_w + x] = v / 255.f;
            }
        }
    }
    return out;
}

ImageU8 flip_horizontal(const ImageU8& img) {
    ImageU8 out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
    return out;
}

ImageU8 flip_vertical(const ImageU8& img) {
    ImageU8 out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, img.height - 1 - y, c) = img.at(x, y, c);
    return out;
}

ImageU8 rotate90(const ImageU8& img) {
    ImageU8 out(img.height, img.width);  // dimensions swap
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, img.width - 1 - x, c) = img.at(x, y, c);
    return out;
}

ImageU8 rotate180(const ImageU8& img) {
    ImageU8 out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c)
                out.at(img.width - 1 - x, img.height - 1 - y, c) = img.at(x, y, c);
    return out;
}

ImageU8 rotate270(const ImageU8& img) { return rotate90(rotate180(img)); }

ImageU8 crop(const ImageU8& img, int x0, int y0, int w, int h) {
    if (x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height || w <= 0 || h <= 0)
        throw InputError("crop: region outside image bounds");
    ImageU8 out(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x0 + x, y0 + y, c);
    return out;
}

}  // namespace microcount
