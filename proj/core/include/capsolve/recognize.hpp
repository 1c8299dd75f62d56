#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "capsolve/generator.hpp"
#include "capsolve/glyphs.hpp"
#include "capsolve/image.hpp"
#include "capsolve/nn.hpp"
#include "capsolve/notation.hpp"
#include "capsolve/segment.hpp"

namespace capsolve {

/// Tight-crops the dark foreground, scales it aspect-preserving so the long
/// side is 28, and centers it on a white 32x32 canvas. Throws "blank glyph"
/// when there is no foreground.
GrayImage normalize_glyph(const GrayImage& glyph);

struct Template {
    int class_id = -1;
    GrayImage bitmap;  // normalized 32x32
    double angle = 0.0;
};

struct MatchResult {
    int class_id = -1;
    double score = 0.0;  // zero-mean NCC in [-1, 1]
};

/// Best zero-mean normalized cross-correlation over templates, sliding the
/// template within +-max_shift pixels. Ties break toward the lower class id.
MatchResult template_match(const GrayImage& glyph, std::span<const Template> templates, int max_shift = 2);

/// One template per atlas class per angle (angles empty means 0 degrees
/// only). Templates pass through the same threshold + median + normalize
/// path the solver applies to segmented cells.
std::vector<Template> build_templates(const GlyphAtlas& atlas, std::span<const double> angles = {});

enum class Strategy { TM, CNN, OCR };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& s);

class Classifier {
public:
    virtual ~Classifier() = default;
    /// Input is a normalized 32x32 glyph; returns a canonical class id.
    virtual MatchResult classify(const GrayImage& glyph) const = 0;
    virtual std::string name() const = 0;
};

class TemplateClassifier : public Classifier {
public:
    TemplateClassifier(std::vector<Template> templates, int max_shift = 2)
        : templates_(std::move(templates)), max_shift_(max_shift) {}

    MatchResult classify(const GrayImage& glyph) const override;
    std::string name() const override { return "tm"; }

private:
    std::vector<Template> templates_;
    int max_shift_;
};

class CnnClassifier : public Classifier {
public:
    CnnClassifier(CnnModel model, const GlyphClassSet& classes);

    MatchResult classify(const GrayImage& glyph) const override;
    std::string name() const override { return "cnn"; }

private:
    CnnModel model_;
    std::vector<int> canonical_of_index_;
};

struct SolveAssets {
    std::vector<Template> templates;     // TM strategy
    const CnnModel* model = nullptr;     // CNN strategy, borrowed
    GlyphClassSet classes = GlyphClassSet::extended94();
    std::vector<double> deskew_angles{0.0};  // the dataset's declared angle set
    int width_threshold = kWidthThreshold;
    int min_gap = 2;
    int min_width = 4;
    int tm_shift = 2;
};

/// Throws for OCR (pluggable but unimplemented) and for missing assets.
std::unique_ptr<Classifier> make_classifier(Strategy strategy, const SolveAssets& assets);

enum class SolveStatus { Solved, InconsistentRecognition, SegmentationFailed };

struct CellRead {
    int x0 = 0, x1 = 0;
    int class_id = -1;
    double score = 0.0;
    double deskew_angle = 0.0;
};

struct SolveResult {
    SolveStatus status = SolveStatus::SegmentationFailed;
    std::string message;
    std::string strategy;
    bool has_form = false;
    StructuralForm form;
    int checks_used = 0;
    std::vector<CellRead> cells;  // partial results survive inconsistency
    std::optional<NotationType> type;
    std::optional<NotationSpec> spec;
    std::optional<int> answer;
};

/// Threshold -> median(tau=1) -> projection split -> per-cell deskew over the
/// declared angle set (minimal straightened width wins) -> tight boxes.
std::vector<CharBox> extract_cells(const GrayImage& img, const SolveAssets& assets,
                                   std::vector<double>* deskew_angles_out = nullptr);

SolveResult solve_with(const GrayImage& img, const Classifier& classifier, const SolveAssets& assets);
SolveResult solve(const GrayImage& img, Strategy strategy, const SolveAssets& assets);

struct EvalReport {
    struct TypeStats {
        NotationType type;
        long samples = 0;
        long cells = 0;
        long cells_correct = 0;
        long captcha_correct = 0;

        double char_accuracy() const { return cells ? static_cast<double>(cells_correct) / cells : 0.0; }
        double captcha_accuracy() const {
            return samples ? static_cast<double>(captcha_correct) / samples : 0.0;
        }
    };

    std::string strategy;
    std::vector<TypeStats> per_type;  // enumeration order, present types only
    long samples = 0;
    long cells = 0;
    long cells_correct = 0;
    long captcha_correct = 0;
    std::vector<std::string> missing_files;            // listed and excluded
    std::map<std::pair<int, int>, long> confusion;     // (true, predicted or -1)

    double char_accuracy() const { return cells ? static_cast<double>(cells_correct) / cells : 0.0; }
    double captcha_accuracy() const { return samples ? static_cast<double>(captcha_correct) / samples : 0.0; }
};

/// Whole-CAPTCHA success requires every ground-truth cell recognized
/// correctly; character accuracy counts per-cell matches over all cells.
EvalReport evaluate(const std::string& dataset_dir, std::span<const ManifestRow> rows,
                    const Classifier& classifier, const SolveAssets& assets);

/// CSV `type,samples,char_accuracy,captcha_accuracy` rows plus an ALL row.
std::string format_eval_report(const EvalReport& report);

/// CSV `true_class,pred_class,count`, unrecognized predictions printed as "?".
std::string format_confusion(const EvalReport& report);

}  // namespace capsolve
