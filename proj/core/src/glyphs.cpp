#include "capsolve/glyphs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "capsolve/rng.hpp"

namespace capsolve {

using namespace classes;

GlyphFamily glyph_family(int class_id) {
    if (class_id >= kDigitBase && class_id < kLowerBase) return GlyphFamily::Digit;
    if (class_id >= kLowerBase && class_id < kSimplifiedBase) return GlyphFamily::Letter;
    if (class_id >= kSimplifiedBase && class_id < kSymbolBase) return GlyphFamily::Chinese;
    if (class_id >= kSymbolBase && class_id < kOperatorCharBase) return GlyphFamily::OperatorSymbol;
    if (class_id >= kOperatorCharBase && class_id < kExtendedCount) return GlyphFamily::OperatorChar;
    throw std::invalid_argument("unknown glyph class id " + std::to_string(class_id));
}

int nominal_width(GlyphFamily family) {
    switch (family) {
        case GlyphFamily::Digit:
        case GlyphFamily::Letter: return 11;
        case GlyphFamily::Chinese:
        case GlyphFamily::OperatorChar: return 20;
        case GlyphFamily::OperatorSymbol: return 9;
    }
    throw std::logic_error("unreachable glyph family");
}

int nominal_width(int class_id) { return nominal_width(glyph_family(class_id)); }

std::string class_label(int class_id) {
    if (class_id >= kDigitBase && class_id < kLowerBase) return std::string(1, static_cast<char>('0' + class_id));
    if (class_id >= kLowerBase && class_id < kUpperBase)
        return std::string(1, static_cast<char>('a' + class_id - kLowerBase));
    if (class_id >= kUpperBase && class_id < kSimplifiedBase)
        return std::string(1, static_cast<char>('A' + class_id - kUpperBase));
    if (class_id >= kSimplifiedBase && class_id < kTraditionalBase)
        return "s" + std::to_string(class_id - kSimplifiedBase);
    if (class_id >= kTraditionalBase && class_id < kSymbolBase)
        return "t" + std::to_string(class_id - kTraditionalBase);
    if (class_id >= kSymbolBase && class_id < kOperatorCharBase) {
        static const char* symbols[4] = {"+", "-", "*", "/"};
        return symbols[class_id - kSymbolBase];
    }
    if (class_id >= kOperatorCharBase && class_id < kExtendedCount)
        return "n" + std::to_string(class_id - kOperatorCharBase);
    throw std::invalid_argument("unknown glyph class id " + std::to_string(class_id));
}

int class_from_label(const std::string& label) {
    for (int id = 0; id < kExtendedCount; ++id)
        if (class_label(id) == label) return id;
    return -1;
}

int digit_class(Script script, int digit) {
    if (digit < 0 || digit > 9) throw std::invalid_argument("digit out of range");
    switch (script) {
        case Script::D: return kDigitBase + digit;
        case Script::S: return kSimplifiedBase + digit;
        case Script::T: return kTraditionalBase + digit;
    }
    throw std::logic_error("unreachable script");
}

int symbol_class(Op op) { return kSymbolBase + static_cast<int>(op); }
int single_operator_class(Op op) { return kOperatorCharBase + static_cast<int>(op); }
std::pair<int, int> double_operator_classes(Op op) {
    const int i = static_cast<int>(op);
    return {kOperatorCharBase + i, kOperatorCharBase + 4 + i};
}

std::vector<int> spec_cell_classes(const NotationSpec& spec) {
    std::vector<int> out;
    out.push_back(digit_class(spec.script, spec.first));
    switch (spec.form) {
        case OperatorForm::O: out.push_back(symbol_class(spec.op)); break;
        case OperatorForm::N: out.push_back(single_operator_class(spec.op)); break;
        case OperatorForm::NN: {
            const auto [first, second] = double_operator_classes(spec.op);
            out.push_back(first);
            out.push_back(second);
            break;
        }
    }
    out.push_back(digit_class(spec.script, spec.second));
    return out;
}

int GlyphClassSet::index_of(const std::string& label) const {
    const auto it = std::find(labels.begin(), labels.end(), label);
    return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

GlyphClassSet GlyphClassSet::paper82() {
    GlyphClassSet set;
    for (int id = 0; id < kPaperCount; ++id) set.labels.push_back(class_label(id));
    return set;
}

GlyphClassSet GlyphClassSet::extended94() {
    GlyphClassSet set;
    for (int id = 0; id < kExtendedCount; ++id) set.labels.push_back(class_label(id));
    return set;
}

const GlyphAtlas::Entry* GlyphAtlas::find(int class_id) const {
    for (const auto& e : entries)
        if (e.class_id == class_id) return &e;
    return nullptr;
}

const GlyphAtlas::Entry& GlyphAtlas::require(int class_id) const {
    const Entry* e = find(class_id);
    if (!e) throw std::runtime_error("atlas missing glyph class '" + class_label(class_id) + "'");
    return *e;
}

bool GlyphAtlas::covers(const NotationSpec& spec) const {
    for (int id : spec_cell_classes(spec))
        if (!find(id)) return false;
    return true;
}

namespace {

constexpr std::uint8_t kInk = 0;
constexpr std::uint8_t kPaper = 255;

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

void fill_rect(GrayImage& img, int x0, int x1, int y0, int y1, std::uint8_t v) {
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) img.at(x, y) = v;
}

// 2px-thick line segment, used for the hand-drawn operator symbols.
void draw_stroke(GrayImage& img, double x0, double y0, double x1, double y1) {
    const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) * 2 + 1;
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
        const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                const int px = x + dx, py = y + dy;
                if (px >= 0 && px < img.width && py >= 0 && py < img.height) img.at(px, py) = kInk;
            }
    }
}

GrayImage draw_symbol(int index) {
    // Strokes span the full 9px width so the tight column extent matches the
    // nominal cell width.
    GrayImage g(9, kGlyphHeight, kPaper);
    switch (index) {
        case 0:  // +
            fill_rect(g, 0, 9, 9, 12, kInk);
            fill_rect(g, 3, 6, 3, 18, kInk);
            break;
        case 1:  // -
            fill_rect(g, 0, 9, 9, 12, kInk);
            break;
        case 2:  // * (cross)
            draw_stroke(g, 0, 4, 7, 15);
            draw_stroke(g, 7, 4, 0, 15);
            break;
        case 3:  // /
            draw_stroke(g, 0, 15, 7, 4);
            break;
        default: throw std::logic_error("unknown symbol index");
    }
    return g;
}

struct GridPattern {
    int gx = 0, gy = 0;
    std::vector<std::uint8_t> on;  // gx * gy cells

    int hamming(const GridPattern& other) const {
        int d = 0;
        for (std::size_t i = 0; i < on.size(); ++i) d += (on[i] != other.on[i]);
        return d;
    }
};

GridPattern make_pattern(std::uint64_t seed, int gx, int gy) {
    Rng rng(seed);
    GridPattern p{gx, gy, std::vector<std::uint8_t>(static_cast<std::size_t>(gx) * gy, 0)};
    const auto cell = [&](int i, int j) -> std::uint8_t& { return p.on[static_cast<std::size_t>(j) * gx + i]; };
    for (auto& c : p.on) c = rng.uniform01() < 0.5 ? 1 : 0;

    // Every grid column carries ink: the tight column extent then equals the
    // nominal width, and no intra-glyph zero band can fool the projection
    // split. Border rows keep the vertical extent stable too.
    const auto ensure_col = [&](int i) {
        for (int j = 0; j < gy; ++j)
            if (cell(i, j)) return;
        cell(i, rng.uniform_int(0, gy - 1)) = 1;
    };
    const auto ensure_row = [&](int j) {
        for (int i = 0; i < gx; ++i)
            if (cell(i, j)) return;
        cell(rng.uniform_int(0, gx - 1), j) = 1;
    };
    for (int i = 0; i < gx; ++i) ensure_col(i);
    ensure_row(0);
    ensure_row(gy - 1);

    int lit = 0;
    for (auto c : p.on) lit += c;
    while (lit * 3 < gx * gy) {
        const int i = rng.uniform_int(0, gx - 1), j = rng.uniform_int(0, gy - 1);
        if (!cell(i, j)) {
            cell(i, j) = 1;
            ++lit;
        }
    }
    return p;
}

GrayImage render_pattern(const GridPattern& p, int width) {
    GrayImage g(width, kGlyphHeight, kPaper);
    const int ch = kGlyphHeight - 2;  // 1px vertical quiet border, full width
    for (int j = 0; j < p.gy; ++j)
        for (int i = 0; i < p.gx; ++i) {
            if (!p.on[static_cast<std::size_t>(j) * p.gx + i]) continue;
            const int x0 = i * width / p.gx, x1 = (i + 1) * width / p.gx;
            const int y0 = 1 + j * ch / p.gy, y1 = 1 + (j + 1) * ch / p.gy;
            fill_rect(g, x0, x1, y0, y1, kInk);
        }
    return g;
}

}  // namespace

GlyphAtlas build_default_atlas() {
    GlyphAtlas atlas;
    // Patterns already accepted, bucketed by grid width for distinctness checks.
    std::vector<std::pair<int, GridPattern>> accepted;

    for (int id = 0; id < kExtendedCount; ++id) {
        const GlyphFamily family = glyph_family(id);
        if (family == GlyphFamily::OperatorSymbol) {
            atlas.entries.push_back({id, draw_symbol(id - kSymbolBase)});
            continue;
        }
        const int width = nominal_width(family);
        const bool wide = width >= kWidthThreshold;
        const int gx = wide ? 6 : 3, gy = 6;
        const int min_dist = wide ? 6 : 4;
        const std::uint64_t base_seed = fnv1a64(class_label(id)) ^ 0x9e3779b97f4a7c15ull;

        GridPattern pattern;
        bool ok = false;
        for (std::uint64_t salt = 0; salt < 1000 && !ok; ++salt) {
            pattern = make_pattern(base_seed + salt * 0x2545f4914f6cdd1dull, gx, gy);
            ok = true;
            for (const auto& [w, prev] : accepted)
                if (w == gx && prev.hamming(pattern) < min_dist) {
                    ok = false;
                    break;
                }
        }
        if (!ok) throw std::logic_error("could not synthesize a distinct glyph for " + class_label(id));
        accepted.emplace_back(gx, pattern);
        atlas.entries.push_back({id, render_pattern(pattern, width)});
    }
    return atlas;
}

void save_atlas(const GlyphAtlas& atlas, const std::string& pgm_path, const std::string& index_path) {
    constexpr int kCell = 20;
    constexpr int kCols = 10;
    const int n = static_cast<int>(atlas.entries.size());
    if (n == 0) throw std::invalid_argument("empty atlas");
    const int rows = (n + kCols - 1) / kCols;

    GrayImage sheet(kCols * kCell, rows * kCell, kPaper);
    std::ostringstream index;
    index << "class,row,col,width\n";
    for (int i = 0; i < n; ++i) {
        const auto& e = atlas.entries[i];
        const int row = i / kCols, col = i % kCols;
        for (int y = 0; y < e.bitmap.height; ++y)
            for (int x = 0; x < e.bitmap.width; ++x) sheet.at(col * kCell + x, row * kCell + y) = e.bitmap.at(x, y);
        index << class_label(e.class_id) << ',' << row << ',' << col << ',' << e.bitmap.width << '\n';
    }
    save_pgm(sheet, pgm_path);
    std::ofstream out(index_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + index_path);
    out << index.str();
}

GlyphAtlas load_atlas(const std::string& pgm_path, const std::string& index_path) {
    constexpr int kCell = 20;
    const GrayImage sheet = load_pgm(pgm_path);
    std::ifstream in(index_path);
    if (!in) throw std::runtime_error("cannot open " + index_path);

    GlyphAtlas atlas;
    std::string line;
    if (!std::getline(in, line) || line != "class,row,col,width")
        throw std::runtime_error("bad atlas index header in " + index_path);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string label, row_s, col_s, width_s;
        if (!std::getline(ls, label, ',') || !std::getline(ls, row_s, ',') || !std::getline(ls, col_s, ',') ||
            !std::getline(ls, width_s, ','))
            throw std::runtime_error("bad atlas index line: " + line);
        const int id = class_from_label(label);
        if (id < 0) throw std::runtime_error("unknown atlas class '" + label + "'");
        const int row = std::stoi(row_s), col = std::stoi(col_s), width = std::stoi(width_s);
        if (width <= 0 || width > kCell) throw std::runtime_error("bad atlas width for class '" + label + "'");
        const int x0 = col * kCell, y0 = row * kCell;
        if (x0 + width > sheet.width || y0 + kGlyphHeight > sheet.height)
            throw std::runtime_error("atlas cell out of sheet bounds for class '" + label + "'");
        atlas.entries.push_back({id, crop(sheet, x0, x0 + width, y0, y0 + kGlyphHeight)});
    }
    std::sort(atlas.entries.begin(), atlas.entries.end(),
              [](const auto& a, const auto& b) { return a.class_id < b.class_id; });
    return atlas;
}

}  // namespace capsolve
