#pragma once

#include <cstdint>

#include "capsolve/image.hpp"

namespace capsolve {

struct Vec2 {
    double x = 0;
    double y = 0;
};

/// Affine map (x,y) -> (a*x + b*y + tx, d*x + e*y + ty).
struct AffineMap {
    double a = 1, b = 0;
    double d = 0, e = 1;
    double tx = 0, ty = 0;

    double det() const { return a * e - b * d; }
    Vec2 apply(Vec2 p) const { return {a * p.x + b * p.y + tx, d * p.x + e * p.y + ty}; }

    /// Throws on a singular linear part.
    AffineMap inverse() const;

    /// this-after-first: (*this)(first(p)).
    AffineMap after(const AffineMap& first) const;

    /// Rotation by `degrees` counterclockwise (in the y-down raster frame)
    /// about the pivot (cx, cy).
    static AffineMap rotation(double degrees, double cx, double cy);
};

/// Half-width of the (2*tau+1)^2 median window.
struct KernelRadius {
    int tau = 1;
};

enum class Polarity { DarkForeground, LightForeground };

struct ThresholdResult {
    BinaryImage mask;
    std::uint8_t level = 0;
    bool degenerate = false;  // single-mode histogram, mask left all-background
};

/// Global threshold at the gray level maximizing between-class variance.
/// Ties break toward the lower level. With DarkForeground the mask marks
/// pixels strictly below the level.
ThresholdResult otsu_threshold(const GrayImage& img, Polarity polarity = Polarity::DarkForeground);

/// Square-window median with replicate-edge padding, maintained through a
/// sliding 256-bin kernel histogram (column out / column in per step).
GrayImage median_filter(const GrayImage& img, KernelRadius r);

/// Inverse-mapped bilinear resampling. Output has the input's dimensions;
/// samples falling outside the source take `fill`.
GrayImage affine_transform(const GrayImage& img, const AffineMap& m, std::uint8_t fill);

/// Rotation by `degrees` counterclockwise about the image center.
GrayImage rotate(const GrayImage& img, double degrees, std::uint8_t fill);

/// Bilinear resample to an explicit target size.
GrayImage resize_bilinear(const GrayImage& img, int out_w, int out_h);

}  // namespace capsolve
