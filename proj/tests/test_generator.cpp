#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "capsolve/generator.hpp"
#include "capsolve/glyphs.hpp"
#include "capsolve/notation.hpp"
#include "capsolve/segment.hpp"
#include "test_util.hpp"

using namespace capsolve;

TEST_SUITE("notation") {

TEST_CASE("exactly eight types in fixed order") {
    const auto types = enumerate_types();
    REQUIRE(types.size() == 8);
    CHECK(types[0] == NotationType{Script::S, OperatorForm::O});
    CHECK(types[1] == NotationType{Script::S, OperatorForm::NN});
    CHECK(types[2] == NotationType{Script::T, OperatorForm::O});
    CHECK(types[7] == NotationType{Script::D, OperatorForm::NN});
    bool has_dod = false;
    for (const auto& t : types) {
        CHECK(!(t.script == Script::S && t.form == OperatorForm::N));
        if (t == NotationType{Script::D, OperatorForm::O}) has_dod = true;
    }
    CHECK(has_dod);
}

TEST_CASE("combination counts come out of the enumerated sets") {
    CHECK(operand_choice_count() == 30);
    CHECK(operator_candidate_count() == 12);
    CHECK(combination_count() == 10800);
}

TEST_CASE("sample_spec honors a singleton filter and is seed-deterministic") {
    const NotationType only{Script::D, OperatorForm::O};
    const std::vector<NotationType> allowed{only};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const NotationSpec spec = sample_spec(seed, allowed);
        CHECK(spec.script == Script::D);
        CHECK(spec.form == OperatorForm::O);
        CHECK(spec == sample_spec(seed, allowed));
        CHECK(spec_valid(spec));
    }
}

TEST_CASE("sample_spec type frequencies stay within 5 sigma of uniform") {
    const auto types = enumerate_types();
    std::map<std::pair<int, int>, int> freq;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const NotationSpec spec = sample_spec(777000 + i, types);
        ++freq[{static_cast<int>(spec.script), static_cast<int>(spec.form)}];
    }
    const double p = 1.0 / 8, mean = n * p, sigma = std::sqrt(n * p * (1 - p));
    REQUIRE(freq.size() == 8);
    for (const auto& [key, count] : freq) CHECK(std::abs(count - mean) <= 5 * sigma);
}

TEST_CASE("division samples always divide exactly") {
    const auto types = enumerate_types();
    for (int i = 0; i < 2000; ++i) {
        const NotationSpec spec = sample_spec(31337 + i, types);
        if (spec.op == Op::Div) {
            REQUIRE(spec.second != 0);
            CHECK(spec.first % spec.second == 0);
        }
    }
}

TEST_CASE("sample_spec rejects an empty filter") {
    CHECK_THROWS_AS(sample_spec(1, std::span<const NotationType>{}), std::invalid_argument);
}

TEST_CASE("compute_answer on the worked examples") {
    CHECK(compute_answer({9, Op::Add, 5, Script::T, OperatorForm::NN}) == 14);
    CHECK(compute_answer({9, Op::Sub, 5, Script::D, OperatorForm::O}) == 4);
    CHECK(compute_answer({8, Op::Div, 4, Script::D, OperatorForm::N}) == 2);
    CHECK(compute_answer({3, Op::Sub, 7, Script::T, OperatorForm::O}) == -4);
    CHECK_THROWS_AS(compute_answer({7, Op::Div, 2, Script::D, OperatorForm::O}), std::invalid_argument);
}

TEST_CASE("type names parse back") {
    for (const auto& t : enumerate_types()) CHECK(parse_type(to_string(t)) == t);
    CHECK_THROWS_AS(parse_type("S-N"), std::invalid_argument);
    CHECK_THROWS_AS(parse_type("bogus"), std::invalid_argument);
}

}  // TEST_SUITE

TEST_SUITE("glyphs") {

TEST_CASE("class labels round-trip and widths follow the family") {
    for (int id = 0; id < classes::kExtendedCount; ++id) {
        CHECK(class_from_label(class_label(id)) == id);
        const int w = nominal_width(id);
        CHECK((w == 20 || w == 11 || w == 9));
    }
    CHECK(nominal_width(digit_class(Script::D, 3)) == 11);
    CHECK(nominal_width(digit_class(Script::S, 3)) == 20);
    CHECK(nominal_width(digit_class(Script::T, 9)) == 20);
    CHECK(nominal_width(symbol_class(Op::Add)) == 9);
    CHECK(nominal_width(single_operator_class(Op::Div)) == 20);
}

TEST_CASE("class presets") {
    const auto paper = GlyphClassSet::paper82();
    const auto extended = GlyphClassSet::extended94();
    CHECK(paper.size() == 82);
    CHECK(extended.size() == 94);
    std::set<std::string> unique(extended.labels.begin(), extended.labels.end());
    CHECK(unique.size() == 94);
    CHECK(extended.index_of("s7") == 69);
    CHECK(paper.index_of("+") == -1);
}

TEST_CASE("spec cell classes per form") {
    const NotationSpec o{9, Op::Sub, 5, Script::D, OperatorForm::O};
    CHECK(spec_cell_classes(o) == std::vector<int>{9, classes::kSymbolBase + 1, 5});
    const NotationSpec nn{9, Op::Add, 5, Script::T, OperatorForm::NN};
    CHECK(spec_cell_classes(nn) == std::vector<int>{classes::kTraditionalBase + 9, classes::kOperatorCharBase,
                                                    classes::kOperatorCharBase + 4, classes::kTraditionalBase + 5});
}

TEST_CASE("default atlas covers every class at nominal dimensions") {
    const GlyphAtlas atlas = build_default_atlas();
    REQUIRE(atlas.entries.size() == 94);
    for (const auto& e : atlas.entries) {
        CHECK(e.bitmap.width == nominal_width(e.class_id));
        CHECK(e.bitmap.height == kGlyphHeight);
        bool has_ink = false;
        for (auto p : e.bitmap.pixels) has_ink |= (p == 0);
        CHECK(has_ink);
    }
    // pairwise distinct within a width family
    for (std::size_t i = 0; i < atlas.entries.size(); ++i)
        for (std::size_t j = i + 1; j < atlas.entries.size(); ++j)
            if (atlas.entries[i].bitmap.width == atlas.entries[j].bitmap.width)
                CHECK(atlas.entries[i].bitmap != atlas.entries[j].bitmap);
}

TEST_CASE("atlas glyph content spans the full nominal width with no empty column") {
    // Width classing and the projection split both depend on the tight
    // column extent of the glyph content.
    const GlyphAtlas atlas = build_default_atlas();
    for (const auto& e : atlas.entries) {
        for (int x = 0; x < e.bitmap.width; ++x) {
            bool has_ink = false;
            for (int y = 0; y < e.bitmap.height; ++y) has_ink |= (e.bitmap.at(x, y) == 0);
            CHECK(has_ink);
        }
    }
}

TEST_CASE("atlas sprite sheet round-trips") {
    testutil::TempDir tmp;
    const GlyphAtlas atlas = build_default_atlas();
    save_atlas(atlas, tmp.file("atlas.pgm"), tmp.file("atlas.idx"));
    const GlyphAtlas loaded = load_atlas(tmp.file("atlas.pgm"), tmp.file("atlas.idx"));
    REQUIRE(loaded.entries.size() == atlas.entries.size());
    for (std::size_t i = 0; i < atlas.entries.size(); ++i) {
        CHECK(loaded.entries[i].class_id == atlas.entries[i].class_id);
        CHECK(loaded.entries[i].bitmap == atlas.entries[i].bitmap);
    }
}

TEST_CASE("missing atlas entries are reported by class") {
    GlyphAtlas atlas = build_default_atlas();
    atlas.entries.erase(atlas.entries.begin() + classes::kSimplifiedBase);  // drop "s0"
    try {
        atlas.require(classes::kSimplifiedBase);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("s0") != std::string::npos);
    }
}

}  // TEST_SUITE

TEST_SUITE("generator") {

TEST_CASE("layout arithmetic for a clean D-O-D render") {
    const GlyphAtlas atlas = build_default_atlas();
    RenderStyle style;  // zero angles, zero noise, padding 4
    style.seed = 5;
    const NotationSpec spec{9, Op::Sub, 5, Script::D, OperatorForm::O};
    const RenderResult r = render(spec, style, atlas);
    CHECK(r.image.width == 11 + 9 + 11 + 4 * style.padding);
    CHECK(r.image.height == kGlyphHeight + 2 * style.padding);
    REQUIRE(r.cells.size() == 3);
    CHECK(r.cells[0].x0 == 4);
    CHECK(r.cells[0].x1 == 15);
    CHECK(r.cells[1].x1 - r.cells[1].x0 == 9);
    CHECK(r.cells[2].x1 - r.cells[2].x0 == 11);
    CHECK(r.cells[0].class_id == 9);
    CHECK(r.cells[1].class_id == classes::kSymbolBase + 1);
}

TEST_CASE("double-character operators occupy two wide cells") {
    const GlyphAtlas atlas = build_default_atlas();
    RenderStyle style;
    const NotationSpec spec{7, Op::Mul, 3, Script::D, OperatorForm::NN};
    const RenderResult r = render(spec, style, atlas);
    REQUIRE(r.cells.size() == 4);
    CHECK(r.cells[1].x1 - r.cells[1].x0 == 20);
    CHECK(r.cells[2].x1 - r.cells[2].x0 == 20);
    CHECK(r.cells[3].x1 - r.cells[3].x0 == 11);
}

TEST_CASE("render is a pure function of spec, style and atlas") {
    const GlyphAtlas atlas = build_default_atlas();
    RenderStyle style = RenderStyle::rotated_default(99);
    style.noise_density = 0.03;
    style.noise_lines = 2;
    const NotationSpec spec{6, Op::Add, 2, Script::T, OperatorForm::NN};
    const RenderResult a = render(spec, style, atlas);
    const RenderResult b = render(spec, style, atlas);
    CHECK(a.image == b.image);
    CHECK(a.cells == b.cells);
}

TEST_CASE("render refuses a gutted atlas naming the class") {
    GlyphAtlas atlas = build_default_atlas();
    std::erase_if(atlas.entries, [](const auto& e) { return e.class_id == 5; });
    RenderStyle style;
    try {
        render({5, Op::Add, 1, Script::D, OperatorForm::O}, style, atlas);
        FAIL("expected an error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("'5'") != std::string::npos);
    }
}

TEST_CASE("ground-truth cells width-classify to the structural form") {
    const GlyphAtlas atlas = build_default_atlas();
    for (const auto& type : enumerate_types()) {
        const std::vector<NotationType> one{type};
        for (int i = 0; i < 5; ++i) {
            const NotationSpec spec = sample_spec(42 + i, one);
            for (auto& style :
                 {RenderStyle{}, RenderStyle::rotated_default(17 + i)}) {
                const RenderResult r = render(spec, style, atlas);
                REQUIRE(r.cells.size() == (type.form == OperatorForm::NN ? 4u : 3u));
                for (std::size_t k = 0; k < r.cells.size(); ++k) {
                    const int width = r.cells[k].x1 - r.cells[k].x0;
                    const int cls = r.cells[k].class_id;
                    const bool wide = nominal_width(cls) >= kWidthThreshold;
                    CHECK((width_class(width) == WidthClass::Wide) == wide);
                }
            }
        }
    }
}

TEST_CASE("rotated styles record the applied angles from the declared set") {
    const GlyphAtlas atlas = build_default_atlas();
    const RenderStyle style = RenderStyle::rotated_default(3);
    const RenderResult r = render({4, Op::Add, 4, Script::S, OperatorForm::NN}, style, atlas);
    for (const auto& c : r.cells) {
        const bool in_set =
            std::find(style.angles.begin(), style.angles.end(), c.angle) != style.angles.end();
        CHECK(in_set);
    }
}

TEST_CASE("noise identity at zero settings") {
    const GlyphAtlas atlas = build_default_atlas();
    const RenderResult r = render({1, Op::Add, 1, Script::D, OperatorForm::O}, RenderStyle{}, atlas);
    CHECK(add_noise(r.image, 0.0, 0, 123) == r.image);
}

TEST_CASE("full-density noise saturates every pixel") {
    GrayImage img(20, 10, 128);
    const GrayImage noisy = add_noise(img, 1.0, 0, 9);
    for (std::size_t i = 0; i < noisy.pixel_count(); ++i) {
        CHECK((noisy.pixels[i] == 0 || noisy.pixels[i] == 255));
        CHECK(noisy.pixels[i] != img.pixels[i]);
    }
}

TEST_CASE("noise flips exactly the floor of density times pixel count") {
    GrayImage img(100, 40, 200);
    const GrayImage noisy = add_noise(img, 0.05, 0, 4242);
    long flipped = 0;
    for (std::size_t i = 0; i < img.pixel_count(); ++i) flipped += (noisy.pixels[i] != img.pixels[i]);
    CHECK(flipped == 200);
}

TEST_CASE("noise density outside the unit interval is rejected") {
    GrayImage img(4, 4, 0);
    CHECK_THROWS_AS(add_noise(img, -0.1, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(add_noise(img, 1.1, 0, 1), std::invalid_argument);
}

TEST_CASE("manifest round-trips losslessly over all types") {
    const GlyphAtlas atlas = build_default_atlas();
    const RenderStyle style = RenderStyle::rotated_default(8);
    std::vector<ManifestRow> rows;
    int i = 0;
    for (const auto& type : enumerate_types()) {
        const std::vector<NotationType> one{type};
        ManifestRow row;
        row.spec = sample_spec(900 + i, one);
        row.file = "img/" + std::to_string(i) + ".pgm";
        row.answer = compute_answer(row.spec);
        row.cells = render(row.spec, style, atlas).cells;
        rows.push_back(std::move(row));
        ++i;
    }
    testutil::TempDir tmp;
    write_manifest(tmp.file("manifest.csv"), rows);
    CHECK(read_manifest(tmp.file("manifest.csv")) == rows);
}

}  // TEST_SUITE
