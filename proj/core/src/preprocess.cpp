#include "capsolve/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace capsolve {

AffineMap AffineMap::inverse() const {
    const double dt = det();
    if (std::abs(dt) < 1e-12) throw std::invalid_argument("non-invertible affine map");
    AffineMap inv;
    inv.a = e / dt;
    inv.b = -b / dt;
    inv.d = -d / dt;
    inv.e = a / dt;
    // inv linear part applied to -t
    inv.tx = -(inv.a * tx + inv.b * ty);
    inv.ty = -(inv.d * tx + inv.e * ty);
    return inv;
}

AffineMap AffineMap::after(const AffineMap& f) const {
    AffineMap c;
    c.a = a * f.a + b * f.d;
    c.b = a * f.b + b * f.e;
    c.d = d * f.a + e * f.d;
    c.e = d * f.b + e * f.e;
    c.tx = a * f.tx + b * f.ty + tx;
    c.ty = d * f.tx + e * f.ty + ty;
    return c;
}

AffineMap AffineMap::rotation(double degrees, double cx, double cy) {
    const double rad = degrees * M_PI / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    AffineMap m;
    m.a = c;
    m.b = -s;
    m.d = s;
    m.e = c;
    // keep the pivot fixed: t = p - A*p
    m.tx = cx - (c * cx - s * cy);
    m.ty = cy - (s * cx + c * cy);
    return m;
}

ThresholdResult otsu_threshold(const GrayImage& img, Polarity polarity) {
    if (img.empty()) throw std::invalid_argument("empty input");
    const Histogram256 h = histogram(img);

    int modes = 0;
    int only_level = 0;
    for (int v = 0; v < 256; ++v)
        if (h.counts[v] > 0) {
            ++modes;
            only_level = v;
        }

    ThresholdResult res;
    res.mask = BinaryImage(img.width, img.height, 0);
    if (modes <= 1) {
        res.level = static_cast<std::uint8_t>(only_level);
        res.degenerate = true;
        return res;
    }

    // Between-class variance of the split {v < t} / {v >= t}, exact integer
    // moments, strict > so ties resolve to the lower level.
    std::uint64_t total_n = h.total();
    std::uint64_t total_s = 0;
    for (int v = 0; v < 256; ++v) total_s += h.counts[v] * static_cast<std::uint64_t>(v);

    int best_t = 0;
    double best_var = -1.0;
    std::uint64_t low_n = 0, low_s = 0;
    for (int t = 1; t < 256; ++t) {
        low_n += h.counts[t - 1];
        low_s += h.counts[t - 1] * static_cast<std::uint64_t>(t - 1);
        const std::uint64_t hi_n = total_n - low_n;
        if (low_n == 0 || hi_n == 0) continue;
        const double mu_lo = static_cast<double>(low_s) / static_cast<double>(low_n);
        const double mu_hi = static_cast<double>(total_s - low_s) / static_cast<double>(hi_n);
        const double var = static_cast<double>(low_n) * static_cast<double>(hi_n) * (mu_lo - mu_hi) * (mu_lo - mu_hi);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }

    res.level = static_cast<std::uint8_t>(best_t);
    const bool dark = polarity == Polarity::DarkForeground;
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        const bool below = img.pixels[i] < best_t;
        res.mask.mask[i] = (below == dark) ? 1 : 0;
    }
    return res;
}

GrayImage median_filter(const GrayImage& img, KernelRadius r) {
    if (img.empty()) throw std::invalid_argument("empty input");
    if (r.tau < 1) throw std::invalid_argument("radius must be >= 1");
    const int tau = r.tau;
    const int w = img.width, h = img.height;
    const int win = 2 * tau + 1;
    const int half = (win * win) / 2;  // window count is odd

    GrayImage out(w, h);
    const auto clampx = [w](int x) { return std::clamp(x, 0, w - 1); };
    const auto clampy = [h](int y) { return std::clamp(y, 0, h - 1); };

    int hist[256];
    for (int y = 0; y < h; ++y) {
        // Kernel histogram over rows y-tau..y+tau, pre-loaded with columns
        // [-tau-1, tau-1] so the first slide lands on the window at x = 0.
        std::fill(std::begin(hist), std::end(hist), 0);
        for (int k = -tau; k <= tau; ++k) {
            const int sy = clampy(y + k);
            for (int c = -tau - 1; c <= tau - 1; ++c) ++hist[img.at(clampx(c), sy)];
        }
        for (int x = 0; x < w; ++x) {
            for (int k = -tau; k <= tau; ++k) {
                const int sy = clampy(y + k);
                --hist[img.at(clampx(x - tau - 1), sy)];
                ++hist[img.at(clampx(x + tau), sy)];
            }
            // median = smallest level with cumulative count > half window
            int cum = 0;
            for (int v = 0; v < 256; ++v) {
                cum += hist[v];
                if (cum > half) {
                    out.at(x, y) = static_cast<std::uint8_t>(v);
                    break;
                }
            }
        }
    }
    return out;
}

namespace {

std::uint8_t sample_bilinear(const GrayImage& img, double sx, double sy, std::uint8_t fill) {
    // Snap sub-epsilon excursions so axis-aligned maps stay exact at borders.
    constexpr double kSnap = 1e-9;
    if (sx < -kSnap || sy < -kSnap || sx > img.width - 1.0 + kSnap || sy > img.height - 1.0 + kSnap) return fill;
    sx = std::clamp(sx, 0.0, img.width - 1.0);
    sy = std::clamp(sy, 0.0, img.height - 1.0);
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = sx - x0, fy = sy - y0;
    const double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
    const double bot = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
    const double v = (1.0 - fy) * top + fy * bot;
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

GrayImage affine_transform(const GrayImage& img, const AffineMap& m, std::uint8_t fill) {
    if (img.empty()) throw std::invalid_argument("empty input");
    const AffineMap inv = m.inverse();
    GrayImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const Vec2 s = inv.apply({static_cast<double>(x), static_cast<double>(y)});
            out.at(x, y) = sample_bilinear(img, s.x, s.y, fill);
        }
    return out;
}

GrayImage rotate(const GrayImage& img, double degrees, std::uint8_t fill) {
    const double cx = (img.width - 1) / 2.0;
    const double cy = (img.height - 1) / 2.0;
    return affine_transform(img, AffineMap::rotation(degrees, cx, cy), fill);
}

GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h) {
    if (img.empty()) throw std::invalid_argument("empty input");
    if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("target size must be positive");
    GrayImage out(out_w, out_h);
    const double sx = static_cast<double>(img.width) / out_w;
    const double sy = static_cast<double>(img.height) / out_h;
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const double u = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            const double v = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
            out.at(x, y) = sample_bilinear(img, u, v, 0);
        }
    return out;
}

}  // namespace capsolve
