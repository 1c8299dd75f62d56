#include "capsolve/image.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace capsolve {

GrayImage::GrayImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("image dimensions must be positive");
}

BinaryImage::BinaryImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), mask(static_cast<std::size_t>(w) * h, fill) {
    if (w <= 0 || h <= 0) throw std::invalid_argument("image dimensions must be positive");
}

std::size_t BinaryImage::foreground_count() const {
    std::size_t n = 0;
    for (std::uint8_t m : mask) n += (m != 0);
    return n;
}

std::uint64_t Histogram256::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

Histogram256 histogram(const GrayImage& img) {
    if (img.empty()) throw std::invalid_argument("empty input");
    Histogram256 h;
    for (std::uint8_t v : img.pixels) ++h.counts[v];
    return h;
}

GrayImage crop(const GrayImage& img, int x0, int x1, int y0, int y1) {
    if (x0 < 0 || y0 < 0 || x0 >= x1 || y0 >= y1 || x1 > img.width || y1 > img.height)
        throw std::invalid_argument("invalid crop rectangle");
    GrayImage out(x1 - x0, y1 - y0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) out.at(x - x0, y - y0) = img.at(x, y);
    return out;
}

namespace {

[[noreturn]] void pgm_fail(std::size_t offset, const std::string& what) {
    throw std::runtime_error("pgm parse error at offset " + std::to_string(offset) + ": " + what);
}

bool is_pgm_space(std::uint8_t c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f';
}

// Reads one unsigned decimal header token starting at `pos` (whitespace skipped).
long read_header_int(const std::vector<std::uint8_t>& b, std::size_t& pos, const char* field) {
    while (pos < b.size() && is_pgm_space(b[pos])) ++pos;
    if (pos >= b.size()) pgm_fail(pos, std::string("missing ") + field);
    if (b[pos] < '0' || b[pos] > '9') pgm_fail(pos, std::string("bad ") + field + " token");
    long value = 0;
    while (pos < b.size() && b[pos] >= '0' && b[pos] <= '9') {
        value = value * 10 + (b[pos] - '0');
        if (value > 1'000'000'000) pgm_fail(pos, std::string(field) + " out of range");
        ++pos;
    }
    return value;
}

}  // namespace

GrayImage read_pgm(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    if (bytes.size() < 2) pgm_fail(0, "truncated magic");
    if (bytes[0] != 'P' || bytes[1] != '5') {
        std::string magic{static_cast<char>(bytes[0]), static_cast<char>(bytes[1])};
        pgm_fail(0, "unsupported magic '" + magic + "'");
    }
    pos = 2;
    const long w = read_header_int(bytes, pos, "width");
    const long h = read_header_int(bytes, pos, "height");
    const long maxval = read_header_int(bytes, pos, "maxval");
    if (w <= 0 || h <= 0) pgm_fail(pos, "non-positive dimensions");
    if (maxval != 255) pgm_fail(pos, "maxval must be 255, got " + std::to_string(maxval));
    if (pos >= bytes.size() || !is_pgm_space(bytes[pos])) pgm_fail(pos, "missing separator after maxval");
    ++pos;  // exactly one whitespace byte before the payload

    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    if (bytes.size() - pos < img.pixel_count())
        pgm_fail(bytes.size(), "truncated payload, expected " + std::to_string(img.pixel_count()) +
                                   " bytes, got " + std::to_string(bytes.size() - pos));
    std::copy(bytes.begin() + pos, bytes.begin() + pos + img.pixel_count(), img.pixels.begin());
    return img;
}

std::vector<std::uint8_t> write_pgm(const GrayImage& img) {
    if (img.empty()) throw std::invalid_argument("empty input");
    char header[64];
    const int n = std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", img.width, img.height);
    std::vector<std::uint8_t> out(header, header + n);
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

GrayImage load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return read_pgm(bytes);
}

void save_pgm(const GrayImage& img, const std::string& path) {
    const auto bytes = write_pgm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace capsolve
