#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace capsolve {

/// 8-bit grayscale raster. Row-major, origin top-left, x grows right and
/// y grows down. Immutable by convention once a pipeline stage produced it.
struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // size == width * height

    GrayImage() = default;
    GrayImage(int w, int h, std::uint8_t fill = 0);

    std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

    bool empty() const { return width <= 0 || height <= 0; }
    std::size_t pixel_count() const { return pixels.size(); }

    bool operator==(const GrayImage&) const = default;
};

/// Foreground mask with the same addressing rules as GrayImage.
struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> mask;  // 0 = background, 1 = foreground

    BinaryImage() = default;
    BinaryImage(int w, int h, std::uint8_t fill = 0);

    std::uint8_t& at(int x, int y) { return mask[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return mask[static_cast<std::size_t>(y) * width + x]; }

    bool empty() const { return width <= 0 || height <= 0; }
    std::size_t foreground_count() const;

    bool operator==(const BinaryImage&) const = default;
};

/// Gray-level tallies: counts[v] = number of pixels with luminance v.
struct Histogram256 {
    std::array<std::uint64_t, 256> counts{};

    std::uint64_t total() const;
};

Histogram256 histogram(const GrayImage& img);

/// Copies the half-open rectangle [x0,x1) x [y0,y1).
GrayImage crop(const GrayImage& img, int x0, int x1, int y0, int y1);

/// Binary PGM ("P5"), maxval 255, raw payload. The writer emits exactly
/// "P5\n<w> <h>\n255\n" followed by width*height bytes; the reader accepts
/// any whitespace between header tokens.
GrayImage read_pgm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> write_pgm(const GrayImage& img);

GrayImage load_pgm(const std::string& path);
void save_pgm(const GrayImage& img, const std::string& path);

}  // namespace capsolve
