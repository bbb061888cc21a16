#pragma once

#include <filesystem>

#include "microcount/image.hpp"

namespace microcount {

// Reads any PNG (palette, gray, alpha, 16-bit) as 8-bit RGB.
ImageU8 read_png(const std::filesystem::path& path);

// Reads a PNG collapsed to one channel (max over RGB); used for masks and
// point-annotation images where any nonzero channel counts.
GrayU8 read_png_gray(const std::filesystem::path& path);

// Writes 8-bit RGB. Output bytes depend only on the pixel content.
void write_png(const std::filesystem::path& path, const ImageU8& img);

}  // namespace microcount
