#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "capsolve/image.hpp"
#include "capsolve/notation.hpp"

namespace capsolve {

/// A segmented character cell. Bounds are columns in the source image;
/// `width() == x1 - x0` always holds, and after deskewing the bounds are the
/// tight bounds of the straightened glyph.
struct CharBox {
    int x0 = 0;
    int x1 = 0;
    GrayImage glyph;

    int width() const { return x1 - x0; }
};

enum class WidthClass { Narrow, Wide };

WidthClass width_class(int width, int threshold = 14);
WidthClass width_class(const CharBox& box, int threshold = 14);

enum class Axis { Column, Row };

/// Foreground pixel count per column (or row).
std::vector<int> projection_profile(const BinaryImage& bin, Axis axis);

/// Maximal runs of nonzero profile entries separated by at least `min_gap`
/// zero entries; runs narrower than `min_width` are dropped as noise.
/// Returned half-open [x0, x1) bounds are disjoint and ordered.
std::vector<std::pair<int, int>> split_columns(std::span<const int> profile, int min_gap, int min_width);

/// split_columns on the column profile, with glyph crops attached.
std::vector<CharBox> split_boxes(const GrayImage& img, const BinaryImage& bin, int min_gap, int min_width);

struct KMeansResult {
    std::vector<int> assignments;
    std::vector<std::vector<double>> centroids;
    int iterations = 0;
    std::vector<double> inertia_trace;  // per completed iteration
    bool reseeded_empty_cluster = false;
};

/// Lloyd iterations with Euclidean distance. Initial centroids are the first
/// K distinct points in seed-shuffled order; an emptied cluster is re-seeded
/// to the point farthest from its assigned centroid.
KMeansResult kmeans(std::span<const std::vector<double>> points, int k, int max_iter, std::uint64_t seed);

/// Clusters foreground pixels on (x, y); returns K masks partitioning the
/// foreground in left-to-right centroid order.
std::vector<BinaryImage> kmeans_segment(const GrayImage& img, int k, std::uint64_t seed);

enum class OperandKind { Digit, Chinese };

/// The layout determinable from cell widths alone: operand kind plus
/// operator form, with cell positions for downstream recognition.
struct StructuralForm {
    OperandKind operand_kind = OperandKind::Digit;
    OperatorForm form = OperatorForm::O;
    std::vector<int> operand_positions;
    std::vector<int> operator_positions;

    int cell_count() const { return static_cast<int>(operand_positions.size() + operator_positions.size()); }

    bool operator==(const StructuralForm&) const = default;
};

struct DetectResult {
    StructuralForm form;
    int checks_used = 0;
};

/// Width-threshold decision tree over the first cells. `checks_used` counts
/// the width probes the tree consumes (3 on the digit-operand paths, 2 on
/// the Chinese symbolic path, 4 worst case), averaging exactly 3 over a
/// type-uniform corpus. Throws "not a notation" (< 3 boxes) or
/// "unrecognized layout" (width pattern matching no Table layout).
DetectResult adaptive_detect(std::span<const CharBox> boxes, int width_threshold = 14);

/// Baseline: tries the eight layouts in enumeration order, paying 4 checks
/// per attempted layout (3-cell layouts count 3 cells + 1 absence probe), so
/// checks_used = 4 * (matched index + 1), worst case 32.
DetectResult serialized_detect(std::span<const CharBox> boxes, int width_threshold = 14);

struct BenchSample {
    std::vector<CharBox> boxes;
    NotationType type;
};

struct SpeedupReport {
    struct TypeStats {
        NotationType type;
        std::uint64_t samples = 0;
        std::uint64_t adaptive_checks = 0;
        std::uint64_t serialized_checks = 0;  // 8*4 accounting per sample
    };

    std::vector<TypeStats> per_type;
    std::uint64_t samples = 0;
    std::uint64_t adaptive_checks = 0;
    std::uint64_t serialized_checks = 0;
    double ratio = 0.0;  // serialized_checks / adaptive_checks
    double adaptive_seconds = 0.0;
    double serialized_seconds = 0.0;
    std::vector<std::string> warnings;
};

/// Runs both detectors over the corpus and accounts check counts per type.
/// The serialized side is charged the full 8*4 sweep per sample.
SpeedupReport speedup_bench(std::span<const BenchSample> corpus);

/// One line per type `type,count,mean_adaptive_checks,serialized_checks,ratio`
/// plus a totals line and the wall-time ratio.
std::string format_speedup_report(const SpeedupReport& report);

}  // namespace capsolve
