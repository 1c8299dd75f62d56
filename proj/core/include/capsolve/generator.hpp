#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "capsolve/glyphs.hpp"
#include "capsolve/image.hpp"
#include "capsolve/notation.hpp"

namespace capsolve {

/// Rendering knobs for the synthetic CAPTCHA generator. Everything is
/// seed-deterministic: equal (spec, style, atlas) give byte-identical output.
struct RenderStyle {
    enum class AngleMode { PerChar, Uniform };

    /// Declared per-character rotation angle set, degrees CCW, each within
    /// [-50, +50]. Solvers read this set back from the dataset style config.
    std::vector<double> angles{0.0};
    AngleMode angle_mode = AngleMode::PerChar;

    double noise_density = 0.0;  // salt-pepper fraction of pixels, 0..1
    int noise_lines = 0;         // random 1-px segments drawn after rendering
    int padding = 4;             // background band around and between cells
    std::uint64_t seed = 0;

    double max_abs_angle() const;

    /// Per-cell canvas inflation absorbing rotation spill, so inter-cell
    /// projection gaps survive the declared angle range.
    int margin_x() const;
    int margin_y() const;

    /// Rotation grid -50..+50 step 5, per-character draws.
    static RenderStyle rotated_default(std::uint64_t seed);
};

/// Ground truth for one rendered cell: glyph class, nominal column bounds
/// (pre-rotation geometry, so width matches the atlas width), applied angle.
struct CellTruth {
    int class_id = -1;
    int x0 = 0;
    int x1 = 0;
    double angle = 0.0;

    bool operator==(const CellTruth&) const = default;
};

struct RenderResult {
    GrayImage image;
    std::vector<CellTruth> cells;
};

/// Lays the spec's cells out left to right at atlas widths plus padding,
/// rotates each glyph about its cell center, then applies noise. O/N forms
/// yield 3 cells, NN yields 4.
RenderResult render(const NotationSpec& spec, const RenderStyle& style, const GlyphAtlas& atlas);

/// Flips floor(density * N) distinct pixels to the opposite extreme, then
/// draws `lines` random 1-px dark segments.
GrayImage add_noise(const GrayImage& img, double density, int lines, std::uint64_t seed);

/// One dataset row: rendered file plus full ground truth.
struct ManifestRow {
    std::string file;
    NotationSpec spec;
    int answer = 0;
    std::vector<CellTruth> cells;

    bool operator==(const ManifestRow&) const = default;
};

/// CSV with header `file,script,form,first,op,second,answer,cells`; `cells`
/// packs `classId:x0:x1:angle` records separated by ';'.
void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::string& path);

}  // namespace capsolve
