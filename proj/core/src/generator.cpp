#include "capsolve/generator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "capsolve/preprocess.hpp"
#include "capsolve/rng.hpp"

namespace capsolve {

namespace {

constexpr std::uint8_t kPaper = 255;

void paste(GrayImage& dst, const GrayImage& src, int x0, int y0) {
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) dst.at(x0 + x, y0 + y) = src.at(x, y);
}

// Widest rotated bounding-box growth over the atlas cell shapes.
int rotation_margin(const std::vector<double>& angles, bool horizontal) {
    static constexpr int dims[3][2] = {{9, 20}, {11, 20}, {20, 20}};
    double worst = 0.0;
    for (double a : angles) {
        const double rad = std::abs(a) * M_PI / 180.0;
        const double c = std::cos(rad), s = std::sin(rad);
        for (const auto& d : dims) {
            const double w = d[0], h = d[1];
            const double grown = horizontal ? (w * c + h * s - w) : (w * s + h * c - h);
            worst = std::max(worst, grown / 2.0);
        }
    }
    return static_cast<int>(std::ceil(worst));
}

}  // namespace

double RenderStyle::max_abs_angle() const {
    double m = 0.0;
    for (double a : angles) m = std::max(m, std::abs(a));
    return m;
}

int RenderStyle::margin_x() const { return rotation_margin(angles, true); }
int RenderStyle::margin_y() const { return rotation_margin(angles, false); }

RenderStyle RenderStyle::rotated_default(std::uint64_t seed) {
    RenderStyle style;
    style.angles.clear();
    for (int a = -50; a <= 50; a += 5) style.angles.push_back(a);
    style.angle_mode = AngleMode::PerChar;
    style.seed = seed;
    return style;
}

RenderResult render(const NotationSpec& spec, const RenderStyle& style, const GlyphAtlas& atlas) {
    if (!spec_valid(spec)) throw std::invalid_argument("invalid notation spec");
    if (style.padding < 1) throw std::invalid_argument("padding must be >= 1");
    for (double a : style.angles)
        if (std::abs(a) > 50.0) throw std::invalid_argument("angle outside [-50, 50]");

    const std::vector<int> cell_classes = spec_cell_classes(spec);
    std::vector<const GlyphAtlas::Entry*> glyphs;
    for (int id : cell_classes) glyphs.push_back(&atlas.require(id));

    const int hm = style.margin_x();
    const int vm = style.margin_y();
    const int pad = style.padding;
    const int canvas_h = kGlyphHeight + 2 * vm;

    int width = pad;
    for (const auto* g : glyphs) width += g->bitmap.width + 2 * hm + pad;
    const int height = canvas_h + 2 * pad;

    RenderResult out;
    out.image = GrayImage(width, height, kPaper);

    Rng rng(style.seed);
    const auto draw_angle = [&]() {
        return style.angles.empty() ? 0.0 : style.angles[rng.index(style.angles.size())];
    };
    std::vector<double> cell_angles(glyphs.size(), 0.0);
    if (style.angle_mode == RenderStyle::AngleMode::Uniform) {
        const double a = draw_angle();
        std::fill(cell_angles.begin(), cell_angles.end(), a);
    } else {
        for (auto& a : cell_angles) a = draw_angle();
    }

    int x = pad;
    for (std::size_t k = 0; k < glyphs.size(); ++k) {
        const GrayImage& bitmap = glyphs[k]->bitmap;
        GrayImage canvas(bitmap.width + 2 * hm, canvas_h, kPaper);
        paste(canvas, bitmap, hm, vm);
        if (cell_angles[k] != 0.0) canvas = rotate(canvas, cell_angles[k], kPaper);
        paste(out.image, canvas, x, pad);
        out.cells.push_back({cell_classes[k], x + hm, x + hm + bitmap.width, cell_angles[k]});
        x += canvas.width + pad;
    }

    const std::uint64_t noise_seed = rng.next_u64();
    if (style.noise_density > 0.0 || style.noise_lines > 0)
        out.image = add_noise(out.image, style.noise_density, style.noise_lines, noise_seed);
    return out;
}

GrayImage add_noise(const GrayImage& img, double density, int lines, std::uint64_t seed) {
    if (density < 0.0 || density > 1.0) throw std::invalid_argument("noise density outside [0, 1]");
    if (lines < 0) throw std::invalid_argument("noise line count must be >= 0");
    if (img.empty()) throw std::invalid_argument("empty input");

    GrayImage out = img;
    Rng rng(seed);

    const std::size_t n = img.pixel_count();
    const std::size_t flips = static_cast<std::size_t>(density * static_cast<double>(n));
    if (flips > 0) {
        // Partial Fisher-Yates: the first `flips` slots end up holding a
        // uniform sample of distinct pixel indices.
        std::vector<std::uint32_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0u);
        for (std::size_t i = 0; i < flips; ++i) {
            const std::size_t j = i + rng.index(n - i);
            std::swap(idx[i], idx[j]);
            auto& px = out.pixels[idx[i]];
            px = px < 128 ? 255 : 0;
        }
    }

    for (int l = 0; l < lines; ++l) {
        const int x0 = rng.uniform_int(0, img.width - 1), y0 = rng.uniform_int(0, img.height - 1);
        const int x1 = rng.uniform_int(0, img.width - 1), y1 = rng.uniform_int(0, img.height - 1);
        const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
        for (int i = 0; i <= steps; ++i) {
            const double t = steps == 0 ? 0.0 : static_cast<double>(i) / steps;
            const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
            const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
            out.at(x, y) = 0;
        }
    }
    return out;
}

namespace {

std::string format_angle(double a) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", a);
    return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string piece;
    std::istringstream in(s);
    while (std::getline(in, piece, sep)) out.push_back(piece);
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

}  // namespace

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "file,script,form,first,op,second,answer,cells\n";
    for (const auto& row : rows) {
        out << row.file << ',' << to_string(row.spec.script) << ',' << to_string(row.spec.form) << ','
            << row.spec.first << ',' << to_string(row.spec.op) << ',' << row.spec.second << ',' << row.answer << ',';
        for (std::size_t i = 0; i < row.cells.size(); ++i) {
            const auto& c = row.cells[i];
            if (i) out << ';';
            out << c.class_id << ':' << c.x0 << ':' << c.x1 << ':' << format_angle(c.angle);
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "file,script,form,first,op,second,answer,cells")
        throw std::runtime_error("bad manifest header in " + path);

    std::vector<ManifestRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 8) throw std::runtime_error("bad manifest line: " + line);
        ManifestRow row;
        row.file = fields[0];
        row.spec.script = parse_script(fields[1]);
        row.spec.form = parse_form(fields[2]);
        row.spec.first = std::stoi(fields[3]);
        row.spec.op = parse_op(fields[4]);
        row.spec.second = std::stoi(fields[5]);
        row.answer = std::stoi(fields[6]);
        for (const auto& rec : split(fields[7], ';')) {
            if (rec.empty()) continue;
            const auto parts = split(rec, ':');
            if (parts.size() != 4) throw std::runtime_error("bad cell record: " + rec);
            CellTruth c;
            c.class_id = std::stoi(parts[0]);
            c.x0 = std::stoi(parts[1]);
            c.x1 = std::stoi(parts[2]);
            c.angle = std::stod(parts[3]);
            row.cells.push_back(c);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace capsolve
