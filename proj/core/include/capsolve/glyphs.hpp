#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capsolve/image.hpp"
#include "capsolve/notation.hpp"

namespace capsolve {

/// Canonical glyph class inventory. Indices are stable across the project
/// and are what dataset manifests store.
///   0..9    Arabic digits "0".."9"
///   10..35  lowercase letters "a".."z"
///   36..61  uppercase letters "A".."Z"
///   62..71  simplified Chinese digits "s0".."s9"
///   72..81  traditional Chinese digits "t0".."t9"
///   82..85  operator symbols "+", "-", "*", "/"
///   86..93  operator characters "n0".."n7" (n0..n3 single operators and the
///           leading half of doubles, n4..n7 the trailing half)
namespace classes {
inline constexpr int kDigitBase = 0;
inline constexpr int kLowerBase = 10;
inline constexpr int kUpperBase = 36;
inline constexpr int kSimplifiedBase = 62;
inline constexpr int kTraditionalBase = 72;
inline constexpr int kSymbolBase = 82;
inline constexpr int kOperatorCharBase = 86;
inline constexpr int kPaperCount = 82;
inline constexpr int kExtendedCount = 94;
}  // namespace classes

enum class GlyphFamily { Digit, Letter, Chinese, OperatorSymbol, OperatorChar };

GlyphFamily glyph_family(int class_id);

/// Nominal cell width in pixels: Chinese-style glyphs 20, digits/letters 11,
/// operator symbols 9.
int nominal_width(GlyphFamily family);
int nominal_width(int class_id);

inline constexpr int kGlyphHeight = 20;
inline constexpr int kWidthThreshold = 14;  // wide/narrow cut between 11 and 20

std::string class_label(int class_id);
int class_from_label(const std::string& label);  // -1 when unknown

int digit_class(Script script, int digit);
int symbol_class(Op op);
int single_operator_class(Op op);
std::pair<int, int> double_operator_classes(Op op);

/// Cell classes of a rendered notation, left to right (3 cells, or 4 for NN).
std::vector<int> spec_cell_classes(const NotationSpec& spec);

/// Ordered label list backing a classifier head.
struct GlyphClassSet {
    std::vector<std::string> labels;

    int size() const { return static_cast<int>(labels.size()); }
    int index_of(const std::string& label) const;

    /// 82 classes: digits, a-z, A-Z, simplified and traditional Chinese digits.
    static GlyphClassSet paper82();
    /// 94 classes: the 82 plus 4 operator symbols and 8 operator characters.
    static GlyphClassSet extended94();
};

/// Fixed bitmaps per glyph class. Bitmaps are ink-on-white (0 on 255),
/// kGlyphHeight tall, nominal_width wide.
struct GlyphAtlas {
    struct Entry {
        int class_id = -1;
        GrayImage bitmap;
    };

    std::vector<Entry> entries;  // ordered by class_id

    const Entry* find(int class_id) const;
    const Entry& require(int class_id) const;  // throws naming the class
    bool covers(const NotationSpec& spec) const;
};

/// Deterministic built-in atlas covering all 94 canonical classes.
GlyphAtlas build_default_atlas();

/// Sprite-sheet persistence: one PGM holding a grid of 20x20 cells plus a
/// text index with lines `class,row,col,width`.
void save_atlas(const GlyphAtlas& atlas, const std::string& pgm_path, const std::string& index_path);
GlyphAtlas load_atlas(const std::string& pgm_path, const std::string& index_path);

}  // namespace capsolve
