#include "capsolve/recognize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "capsolve/preprocess.hpp"

namespace capsolve {

namespace {

constexpr std::uint8_t kPaper = 255;
constexpr int kNormBox = 28;

struct Bbox {
    int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    bool any = false;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
};

Bbox foreground_bbox(const GrayImage& img) {
    Bbox b;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            if (img.at(x, y) >= 128) continue;
            if (!b.any) {
                b = {x, x + 1, y, y + 1, true};
            } else {
                b.x0 = std::min(b.x0, x);
                b.x1 = std::max(b.x1, x + 1);
                b.y0 = std::min(b.y0, y);
                b.y1 = std::max(b.y1, y + 1);
            }
        }
    return b;
}

GrayImage mask_to_gray(const BinaryImage& mask) {
    GrayImage g(mask.width, mask.height, kPaper);
    for (std::size_t i = 0; i < mask.mask.size(); ++i)
        if (mask.mask[i]) g.pixels[i] = 0;
    return g;
}

}  // namespace

GrayImage normalize_glyph(const GrayImage& glyph) {
    if (glyph.empty()) throw std::invalid_argument("empty input");
    const Bbox b = foreground_bbox(glyph);
    if (!b.any) throw std::runtime_error("blank glyph");

    const GrayImage content = crop(glyph, b.x0, b.x1, b.y0, b.y1);
    const int longest = std::max(b.width(), b.height());
    const int ow = std::max(1, static_cast<int>(std::lround(static_cast<double>(b.width()) * kNormBox / longest)));
    const int oh = std::max(1, static_cast<int>(std::lround(static_cast<double>(b.height()) * kNormBox / longest)));
    const GrayImage scaled = ow == content.width && oh == content.height
                                 ? content
                                 : resize_bilinear(content, ow, oh);

    GrayImage out(kCnnInputSize, kCnnInputSize, kPaper);
    const int x0 = (kCnnInputSize - ow) / 2, y0 = (kCnnInputSize - oh) / 2;
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) out.at(x0 + x, y0 + y) = scaled.at(x, y);
    return out;
}

MatchResult template_match(const GrayImage& glyph, std::span<const Template> templates, int max_shift) {
    if (templates.empty()) throw std::invalid_argument("no templates");
    if (max_shift < 0) throw std::invalid_argument("max_shift must be >= 0");
    const int W = glyph.width, H = glyph.height;

    MatchResult best{-1, -2.0};
    for (const Template& t : templates) {
        if (t.bitmap.width != W || t.bitmap.height != H)
            throw std::invalid_argument("template dimensions do not match the glyph");
        double t_best = -2.0;
        for (int dy = -max_shift; dy <= max_shift; ++dy)
            for (int dx = -max_shift; dx <= max_shift; ++dx) {
                // Overlap of glyph(x,y) with template(x-dx, y-dy).
                const int gx0 = std::max(0, dx), gx1 = std::min(W, W + dx);
                const int gy0 = std::max(0, dy), gy1 = std::min(H, H + dy);
                const long n = static_cast<long>(gx1 - gx0) * (gy1 - gy0);
                if (n <= 0) continue;
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int y = gy0; y < gy1; ++y)
                    for (int x = gx0; x < gx1; ++x) {
                        const double a = glyph.at(x, y);
                        const double b = t.bitmap.at(x - dx, y - dy);
                        sa += a;
                        sb += b;
                        saa += a * a;
                        sbb += b * b;
                        sab += a * b;
                    }
                const double va = saa - sa * sa / n;
                const double vb = sbb - sb * sb / n;
                if (va <= 0.0 || vb <= 0.0) continue;  // flat patch, correlation undefined
                const double score = (sab - sa * sb / n) / std::sqrt(va * vb);
                t_best = std::max(t_best, std::clamp(score, -1.0, 1.0));
            }
        if (t_best > best.score || (t_best == best.score && t.class_id < best.class_id)) {
            best.score = t_best;
            best.class_id = t.class_id;
        }
    }
    if (best.score < -1.0) best.score = 0.0;  // all comparisons degenerate
    return best;
}

std::vector<Template> build_templates(const GlyphAtlas& atlas, std::span<const double> angles) {
    std::vector<double> angle_set(angles.begin(), angles.end());
    if (angle_set.empty()) angle_set.push_back(0.0);

    std::vector<Template> out;
    for (const auto& entry : atlas.entries) {
        const GrayImage& bm = entry.bitmap;
        const int d = static_cast<int>(std::ceil(std::hypot(bm.width, bm.height))) + 4;
        for (double a : angle_set) {
            GrayImage canvas(d, d, kPaper);
            const int px = (d - bm.width) / 2, py = (d - bm.height) / 2;
            for (int y = 0; y < bm.height; ++y)
                for (int x = 0; x < bm.width; ++x) canvas.at(px + x, py + y) = bm.at(x, y);
            if (a != 0.0) canvas = rotate(canvas, a, kPaper);
            // Same denoise path segmented cells go through.
            const ThresholdResult thr = otsu_threshold(canvas);
            const GrayImage filtered = median_filter(mask_to_gray(thr.mask), KernelRadius{1});
            out.push_back({entry.class_id, normalize_glyph(filtered), a});
        }
    }
    return out;
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::TM: return "tm";
        case Strategy::CNN: return "cnn";
        case Strategy::OCR: return "ocr";
    }
    return "?";
}

Strategy parse_strategy(const std::string& s) {
    if (s == "tm") return Strategy::TM;
    if (s == "cnn") return Strategy::CNN;
    if (s == "ocr") return Strategy::OCR;
    throw std::invalid_argument("unknown strategy '" + s + "', expected tm|cnn|ocr");
}

MatchResult TemplateClassifier::classify(const GrayImage& glyph) const {
    return template_match(glyph, templates_, max_shift_);
}

CnnClassifier::CnnClassifier(CnnModel model, const GlyphClassSet& classes) : model_(std::move(model)) {
    validate_architecture(model_);
    if (model_.class_count != classes.size())
        throw std::invalid_argument("class preset width does not match the model");
    for (const auto& label : classes.labels) canonical_of_index_.push_back(class_from_label(label));
}

MatchResult CnnClassifier::classify(const GrayImage& glyph) const {
    const auto probs = forward(model_, glyph);
    const int idx = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    return {canonical_of_index_[idx], probs[idx]};
}

std::unique_ptr<Classifier> make_classifier(Strategy strategy, const SolveAssets& assets) {
    switch (strategy) {
        case Strategy::TM:
            if (assets.templates.empty()) throw std::invalid_argument("tm strategy needs templates");
            return std::make_unique<TemplateClassifier>(assets.templates, assets.tm_shift);
        case Strategy::CNN:
            if (!assets.model) throw std::invalid_argument("cnn strategy needs a model");
            return std::make_unique<CnnClassifier>(*assets.model, assets.classes);
        case Strategy::OCR:
            throw std::runtime_error("ocr strategy is a placeholder and is not implemented; use tm or cnn");
    }
    throw std::logic_error("unreachable strategy");
}

namespace {

struct DeskewedCell {
    CharBox box;
    double angle = 0.0;
};

// Straightens one segmented cell by trying the declared angles and keeping
// the one that minimizes the upright foreground width (ties prefer the
// smaller |angle|, then the earlier candidate).
DeskewedCell deskew_cell(const GrayImage& run_crop, int run_x0, std::span<const double> angles) {
    std::vector<double> candidates(angles.begin(), angles.end());
    if (std::find(candidates.begin(), candidates.end(), 0.0) == candidates.end()) candidates.push_back(0.0);

    GrayImage best_img;
    Bbox best_box;
    double best_angle = 0.0;
    int best_width = -1;
    for (double a : candidates) {
        GrayImage candidate = a == 0.0 ? run_crop : rotate(run_crop, -a, kPaper);
        const Bbox b = foreground_bbox(candidate);
        if (!b.any) continue;
        const bool better = best_width < 0 || b.width() < best_width ||
                            (b.width() == best_width && std::abs(a) < std::abs(best_angle));
        if (better) {
            best_img = std::move(candidate);
            best_box = b;
            best_angle = a;
            best_width = b.width();
        }
    }
    if (best_width < 0) {
        // no foreground under any candidate; keep the raw crop
        return {{run_x0, run_x0 + run_crop.width, run_crop}, 0.0};
    }
    DeskewedCell cell;
    cell.angle = best_angle;
    cell.box.x0 = run_x0 + best_box.x0;
    cell.box.x1 = cell.box.x0 + best_box.width();
    cell.box.glyph = crop(best_img, best_box.x0, best_box.x1, best_box.y0, best_box.y1);
    return cell;
}

}  // namespace

std::vector<CharBox> extract_cells(const GrayImage& img, const SolveAssets& assets,
                                   std::vector<double>* deskew_angles_out) {
    if (img.empty()) return {};
    const ThresholdResult thr = otsu_threshold(img);
    if (thr.degenerate) return {};
    const GrayImage filtered = median_filter(mask_to_gray(thr.mask), KernelRadius{1});

    BinaryImage bin(filtered.width, filtered.height, 0);
    for (std::size_t i = 0; i < filtered.pixel_count(); ++i) bin.mask[i] = filtered.pixels[i] < 128;

    std::vector<CharBox> cells;
    if (deskew_angles_out) deskew_angles_out->clear();
    for (const CharBox& run : split_boxes(filtered, bin, assets.min_gap, assets.min_width)) {
        DeskewedCell cell = deskew_cell(run.glyph, run.x0, assets.deskew_angles);
        cells.push_back(std::move(cell.box));
        if (deskew_angles_out) deskew_angles_out->push_back(cell.angle);
    }
    return cells;
}

namespace {

std::optional<Script> operand_script(int class_id) {
    using namespace classes;
    if (class_id >= kDigitBase && class_id < kDigitBase + 10) return Script::D;
    if (class_id >= kSimplifiedBase && class_id < kSimplifiedBase + 10) return Script::S;
    if (class_id >= kTraditionalBase && class_id < kTraditionalBase + 10) return Script::T;
    return std::nullopt;
}

int operand_digit(int class_id) {
    using namespace classes;
    if (class_id < 10) return class_id;
    return class_id >= kTraditionalBase ? class_id - kTraditionalBase : class_id - kSimplifiedBase;
}

}  // namespace

SolveResult solve_with(const GrayImage& img, const Classifier& classifier, const SolveAssets& assets) {
    SolveResult res;
    res.strategy = classifier.name();

    std::vector<double> cell_angles;
    std::vector<CharBox> cells;
    if (!img.empty()) cells = extract_cells(img, assets, &cell_angles);
    if (cells.size() < 3) {
        res.status = SolveStatus::SegmentationFailed;
        res.message = "segmentation failed: found " + std::to_string(cells.size()) + " cells";
        return res;
    }

    try {
        const DetectResult det = adaptive_detect(cells, assets.width_threshold);
        res.form = det.form;
        res.checks_used = det.checks_used;
        res.has_form = true;
    } catch (const std::exception& e) {
        res.status = SolveStatus::SegmentationFailed;
        res.message = e.what();
        return res;
    }

    for (std::size_t i = 0; i < cells.size(); ++i) {
        CellRead read;
        read.x0 = cells[i].x0;
        read.x1 = cells[i].x1;
        read.deskew_angle = cell_angles[i];
        try {
            const MatchResult m = classifier.classify(normalize_glyph(cells[i].glyph));
            read.class_id = m.class_id;
            read.score = m.score;
        } catch (const std::exception&) {
            read.class_id = -1;
        }
        res.cells.push_back(read);
    }

    const auto inconsistent = [&](const std::string& why) {
        res.status = SolveStatus::InconsistentRecognition;
        res.message = why;
        return res;
    };

    // Operands: digit classes of one consistent script matching the detected
    // operand kind.
    const int c_first = res.cells[res.form.operand_positions[0]].class_id;
    const int c_second = res.cells[res.form.operand_positions[1]].class_id;
    const auto s_first = operand_script(c_first);
    const auto s_second = operand_script(c_second);
    if (!s_first || !s_second) return inconsistent("operand cell not recognized as a digit class");
    if (*s_first != *s_second) return inconsistent("operand scripts disagree");
    const bool digit_kind = res.form.operand_kind == OperandKind::Digit;
    if (digit_kind != (*s_first == Script::D)) return inconsistent("operand script contradicts cell widths");

    // Operator cells must match the detected form.
    Op op;
    using namespace classes;
    if (res.form.form == OperatorForm::O) {
        const int c = res.cells[res.form.operator_positions[0]].class_id;
        if (c < kSymbolBase || c >= kSymbolBase + 4) return inconsistent("operator cell is not a symbol");
        op = static_cast<Op>(c - kSymbolBase);
    } else if (res.form.form == OperatorForm::N) {
        const int c = res.cells[res.form.operator_positions[0]].class_id;
        if (c < kOperatorCharBase || c >= kOperatorCharBase + 4)
            return inconsistent("operator cell is not a single operator character");
        op = static_cast<Op>(c - kOperatorCharBase);
    } else {
        const int c0 = res.cells[res.form.operator_positions[0]].class_id;
        const int c1 = res.cells[res.form.operator_positions[1]].class_id;
        if (c0 < kOperatorCharBase || c0 >= kOperatorCharBase + 4)
            return inconsistent("leading operator character unrecognized");
        if (c1 != c0 + 4) return inconsistent("operator character pair mismatch");
        op = static_cast<Op>(c0 - kOperatorCharBase);
    }

    NotationSpec spec;
    spec.first = operand_digit(c_first);
    spec.second = operand_digit(c_second);
    spec.op = op;
    spec.script = *s_first;
    spec.form = res.form.form;
    res.type = spec.type();
    if (!spec_valid(spec)) return inconsistent("recognized spec is invalid (division constraint)");

    res.spec = spec;
    res.answer = compute_answer(spec);
    res.status = SolveStatus::Solved;
    return res;
}

SolveResult solve(const GrayImage& img, Strategy strategy, const SolveAssets& assets) {
    const auto classifier = make_classifier(strategy, assets);
    return solve_with(img, *classifier, assets);
}

EvalReport evaluate(const std::string& dataset_dir, std::span<const ManifestRow> rows,
                    const Classifier& classifier, const SolveAssets& assets) {
    EvalReport report;
    report.strategy = classifier.name();

    std::map<std::pair<int, int>, EvalReport::TypeStats> stats;
    for (const auto& row : rows) {
        const std::string path = dataset_dir + "/" + row.file;
        if (!std::filesystem::exists(path)) {
            report.missing_files.push_back(row.file);
            continue;
        }
        const GrayImage img = load_pgm(path);
        const SolveResult res = solve_with(img, classifier, assets);

        const NotationType type = row.spec.type();
        auto& s = stats[{static_cast<int>(type.script), static_cast<int>(type.form)}];
        s.type = type;
        ++s.samples;

        const std::size_t n_gt = row.cells.size();
        long matched = 0;
        for (std::size_t i = 0; i < n_gt; ++i) {
            const int pred = i < res.cells.size() ? res.cells[i].class_id : -1;
            ++report.confusion[{row.cells[i].class_id, pred}];
            if (pred == row.cells[i].class_id) ++matched;
        }
        s.cells += static_cast<long>(n_gt);
        s.cells_correct += matched;
        // success if and only if every cell was recognized correctly
        if (matched == static_cast<long>(n_gt) && res.cells.size() == n_gt) ++s.captcha_correct;
    }

    for (const NotationType& type : enumerate_types()) {
        const auto it = stats.find({static_cast<int>(type.script), static_cast<int>(type.form)});
        if (it == stats.end()) continue;
        report.per_type.push_back(it->second);
        report.samples += it->second.samples;
        report.cells += it->second.cells;
        report.cells_correct += it->second.cells_correct;
        report.captcha_correct += it->second.captcha_correct;
    }
    return report;
}

std::string format_eval_report(const EvalReport& report) {
    std::ostringstream out;
    char line[160];
    out << "type,samples,char_accuracy,captcha_accuracy\n";
    for (const auto& s : report.per_type) {
        std::snprintf(line, sizeof(line), "%s,%ld,%.6g,%.6g\n", to_string(s.type).c_str(), s.samples,
                      s.char_accuracy(), s.captcha_accuracy());
        out << line;
    }
    std::snprintf(line, sizeof(line), "ALL,%ld,%.6g,%.6g\n", report.samples, report.char_accuracy(),
                  report.captcha_accuracy());
    out << line;
    return out.str();
}

std::string format_confusion(const EvalReport& report) {
    std::ostringstream out;
    out << "true_class,pred_class,count\n";
    for (const auto& [pair, count] : report.confusion) {
        const std::string pred = pair.second < 0 ? "?" : class_label(pair.second);
        out << class_label(pair.first) << ',' << pred << ',' << count << '\n';
    }
    return out.str();
}

}  // namespace capsolve
