#include <doctest.h>

#include <cmath>
#include <variant>

#include "capsolve/nn.hpp"
#include "capsolve/rng.hpp"
#include "oracles.hpp"

using namespace capsolve;

namespace {

GlyphClassSet tiny_classes(int n) {
    GlyphClassSet set;
    for (int i = 0; i < n; ++i) set.labels.push_back("c" + std::to_string(i));
    return set;
}

void zero_weights(CnnModel& model) {
    for (auto& layer : model.layers) {
        if (auto* c = std::get_if<ConvLayer>(&layer)) {
            std::fill(c->weights.begin(), c->weights.end(), 0.0f);
            std::fill(c->bias.begin(), c->bias.end(), 0.0f);
        } else if (auto* f = std::get_if<FullLayer>(&layer)) {
            std::fill(f->weights.begin(), f->weights.end(), 0.0f);
            std::fill(f->bias.begin(), f->bias.end(), 0.0f);
        }
    }
}

void apply_sgd(CnnModel& model, const Gradients& g, float lr) {
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const auto step = [&](std::vector<float>& w, const std::vector<float>& gw) {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * gw[i];
        };
        if (auto* c = std::get_if<ConvLayer>(&model.layers[li])) {
            step(c->weights, g.weights[li]);
            step(c->bias, g.bias[li]);
        } else if (auto* f = std::get_if<FullLayer>(&model.layers[li])) {
            step(f->weights, g.weights[li]);
            step(f->bias, g.bias[li]);
        }
    }
}

GrayImage random_input(Rng& rng) { return oracles::random_image(rng, 32, 32); }

// Two linearly separable glyph classes: left-heavy vs right-heavy ink.
std::vector<LabeledSample> toy_dataset(int per_class, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LabeledSample> out;
    for (int i = 0; i < per_class; ++i)
        for (int label = 0; label < 2; ++label) {
            GrayImage img(32, 32, 255);
            const int x0 = label == 0 ? 2 : 18;
            for (int y = 4; y < 28; ++y)
                for (int x = x0; x < x0 + 12; ++x)
                    if (rng.uniform01() < 0.9) img.at(x, y) = 0;
            out.push_back({img, label, 0.0});
        }
    return out;
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("paper net widths follow the class count") {
    const CnnModel m82 = build_paper_net(GlyphClassSet::paper82(), 1);
    CHECK(m82.class_count == 82);
    const auto& last = std::get<FullLayer>(m82.layers.back());
    CHECK(last.out_dim == 82);
    CHECK(last.in_dim == 120);
    const auto& first = std::get<ConvLayer>(m82.layers.front());
    CHECK(first.out_channels == 8);
    CHECK(first.kernel == 5);

    const CnnModel m94 = build_paper_net(GlyphClassSet::extended94(), 1);
    CHECK(std::get<FullLayer>(m94.layers.back()).out_dim == 94);
}

TEST_CASE("forward produces finite logits of class width") {
    Rng rng(51);
    const CnnModel model = build_paper_net(GlyphClassSet::extended94(), 9);
    const auto logits = forward_logits(model, random_input(rng));
    REQUIRE(logits.size() == 94);
    for (double v : logits) CHECK(std::isfinite(v));
}

TEST_CASE("same seed builds bit-identical weights") {
    const auto classes = GlyphClassSet::paper82();
    CHECK(build_paper_net(classes, 1234) == build_paper_net(classes, 1234));
    CHECK(build_paper_net(classes, 1234) != build_paper_net(classes, 1235));
}

TEST_CASE("zero-weight model yields the uniform distribution") {
    Rng rng(52);
    CnnModel model = build_paper_net(tiny_classes(10), 3);
    zero_weights(model);
    const auto probs = forward(model, random_input(rng));
    for (double p : probs) CHECK(p == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("probabilities sum to one within 1e-9") {
    Rng rng(53);
    const CnnModel model = build_paper_net(tiny_classes(17), 4);
    for (int i = 0; i < 100; ++i) {
        const auto probs = forward(model, random_input(rng));
        double sum = 0;
        for (double p : probs) {
            CHECK(p >= 0.0);
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-9);
    }
}

TEST_CASE("softmax is shift-invariant") {
    const std::vector<double> z{1.5, -2.0, 0.25, 7.0, 3.0};
    const auto p = softmax(z);
    std::vector<double> shifted = z;
    for (auto& v : shifted) v += 123.5;
    const auto q = softmax(shifted);
    CHECK((std::max_element(p.begin(), p.end()) - p.begin()) ==
          (std::max_element(q.begin(), q.end()) - q.begin()));
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
}

TEST_CASE("constant maps flow through conv bias, pooling and the full stack") {
    CnnModel model = build_paper_net(tiny_classes(4), 5);
    zero_weights(model);
    std::get<ConvLayer>(model.layers[0]).bias.assign(8, 1.0f);
    std::get<ConvLayer>(model.layers[2]).bias.assign(16, 1.0f);
    auto& f1 = std::get<FullLayer>(model.layers[4]);
    for (int i = 0; i < f1.in_dim; ++i) f1.weights[i] = 1.0f;  // row 0 sums pool2
    auto& f2 = std::get<FullLayer>(model.layers[5]);
    f2.weights[0] = 1.0f;  // logit 0 = fc1 output 0

    GrayImage img(32, 32, 200);
    const auto logits = forward_logits(model, img);
    CHECK(logits[0] == doctest::Approx(400.0));  // 16 channels x 5x5 of ones
    CHECK(logits[1] == doctest::Approx(0.0));
}

TEST_CASE("a saturated correct logit drives the loss to zero") {
    CnnModel model = build_paper_net(tiny_classes(6), 6);
    zero_weights(model);
    std::get<FullLayer>(model.layers[5]).bias[3] = 50.0f;
    Rng rng(54);
    const LabeledSample s{random_input(rng), 3, 0.0};
    const LossGrad lg = loss_and_grad(model, std::span(&s, 1));
    CHECK(lg.loss >= 0.0);
    CHECK(lg.loss <= 1e-6);
}

TEST_CASE("duplicating a sample leaves the mean gradient unchanged") {
    Rng rng(55);
    const CnnModel model = build_paper_net(tiny_classes(5), 7);
    const LabeledSample s{random_input(rng), 2, 0.0};
    const std::vector<LabeledSample> once{s};
    const std::vector<LabeledSample> twice{s, s};
    const LossGrad a = loss_and_grad(model, once);
    const LossGrad b = loss_and_grad(model, twice);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    for (std::size_t li = 0; li < a.grads.weights.size(); ++li) {
        REQUIRE(a.grads.weights[li].size() == b.grads.weights[li].size());
        for (std::size_t i = 0; i < a.grads.weights[li].size(); ++i)
            CHECK(a.grads.weights[li][i] == b.grads.weights[li][i]);
    }
}

TEST_CASE("analytic gradients match central finite differences") {
    // Generic fixture: jittered gray levels and non-zero biases keep the
    // sampled weights away from measure-zero relu/pool kink coincidences.
    CnnModel model = build_paper_net(tiny_classes(7), 8);
    Rng rng(56);
    for (auto& layer : model.layers) {
        if (auto* c = std::get_if<ConvLayer>(&layer))
            for (auto& b : c->bias) b = static_cast<float>(rng.uniform(-0.1, 0.1));
    }
    std::vector<LabeledSample> batch;
    for (int i = 0; i < 3; ++i) {
        GrayImage img(32, 32, 255);
        for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(195, 255));
        for (int by = 0; by < 10; ++by)
            for (int bx = 0; bx < 10; ++bx)
                if (rng.uniform01() < 0.35)
                    for (int y = by * 3 + 1; y < by * 3 + 4; ++y)
                        for (int x = bx * 3 + 1; x < bx * 3 + 4; ++x)
                            img.at(x, y) = static_cast<std::uint8_t>(rng.uniform_int(0, 60));
        batch.push_back({img, i % 7, 0.0});
    }
    const auto stats = gradient_check(model, batch, 6, 1e-3, 99);
    REQUIRE(stats.size() == 9);  // 4 weighted layers x {weights, bias} + input
    for (const auto& st : stats) {
        INFO(st.group);
        // Bias perturbations shift whole feature maps, so fewer draws clear
        // the kink filter; weight and input groups must fill their quota.
        if (st.group.find("bias") != std::string::npos)
            CHECK(st.samples >= 1);
        else
            CHECK(st.samples == 6);
        CHECK(st.max_rel_error <= 1e-4);
    }
}

TEST_CASE("loss on a fixed batch strictly decreases over the first ten steps") {
    CnnModel model = build_paper_net(tiny_classes(3), 9);
    std::vector<LabeledSample> batch;
    Rng rng(57);
    for (int i = 0; i < 4; ++i) batch.push_back({random_input(rng), i % 3, 0.0});
    double prev = loss_and_grad(model, batch).loss;
    for (int step = 0; step < 10; ++step) {
        apply_sgd(model, loss_and_grad(model, batch).grads, 0.01f);
        const double now = loss_and_grad(model, batch).loss;
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("training separates a toy two-class problem") {
    CnnModel model = build_paper_net(tiny_classes(2), 10);
    const auto data = toy_dataset(20, 58);
    Hyperparams hp;
    hp.learning_rate = 0.05;
    hp.batch_size = 8;
    hp.epochs = 5;
    hp.seed = 1;
    const TrainResult result = train(model, data, hp);
    REQUIRE(result.trace.size() == 5);
    CHECK(result.trace.back().accuracy >= 0.99);
    long correct = 0;
    for (const auto& s : data) correct += predict(model, s.image) == s.label;
    CHECK(static_cast<double>(correct) / data.size() >= 0.99);
}

TEST_CASE("zero learning rate leaves weights untouched and the trace flat") {
    CnnModel model = build_paper_net(tiny_classes(4), 11);
    const CnnModel before = model;
    const auto data = toy_dataset(6, 59);
    Hyperparams hp;
    hp.learning_rate = 0.0;
    hp.batch_size = 4;
    hp.epochs = 3;
    const TrainResult result = train(model, data, hp);
    CHECK(model == before);
    for (const auto& e : result.trace) CHECK(e.loss == doctest::Approx(result.trace[0].loss).epsilon(1e-12));
}

TEST_CASE("training is deterministic per seed") {
    const auto data = toy_dataset(10, 60);
    Hyperparams hp;
    hp.learning_rate = 0.02;
    hp.batch_size = 8;
    hp.epochs = 2;
    hp.seed = 77;
    CnnModel a = build_paper_net(tiny_classes(2), 12);
    CnnModel b = build_paper_net(tiny_classes(2), 12);
    const TrainResult ta = train(a, data, hp);
    const TrainResult tb = train(b, data, hp);
    CHECK(a == b);
    REQUIRE(ta.trace.size() == tb.trace.size());
    for (std::size_t i = 0; i < ta.trace.size(); ++i) CHECK(ta.trace[i].loss == tb.trace[i].loss);
}

TEST_CASE("training rejects labels outside the class set") {
    CnnModel model = build_paper_net(tiny_classes(3), 13);
    std::vector<LabeledSample> data{{GrayImage(32, 32, 255), 3, 0.0}};
    CHECK_THROWS_WITH_AS(train(model, data, Hyperparams{}), "label out of range", std::invalid_argument);
}

TEST_CASE("default augmentation yields 21 variants with the identity at zero") {
    Rng rng(61);
    const LabeledSample s{random_input(rng), 5, 0.0};
    const auto variants = augment_rotations(s);
    REQUIRE(variants.size() == 21);
    CHECK(variants.front().source_angle == doctest::Approx(-50.0));
    CHECK(variants.back().source_angle == doctest::Approx(50.0));
    bool found_zero = false;
    for (const auto& v : variants) {
        CHECK(v.label == 5);
        if (v.source_angle == 0.0) {
            found_zero = true;
            CHECK(v.image == s.image);
        }
    }
    CHECK(found_zero);
}

TEST_CASE("augmentation step wider than the range keeps only the identity") {
    Rng rng(62);
    const LabeledSample s{random_input(rng), 1, 0.0};
    const auto variants = augment_rotations(s, 4.0, 5.0);
    REQUIRE(variants.size() == 1);
    CHECK(variants[0].image == s.image);
}

TEST_CASE("augmentation rejects non-positive steps") {
    const LabeledSample s{GrayImage(32, 32, 255), 0, 0.0};
    CHECK_THROWS_WITH_AS(augment_rotations(s, 50.0, 0.0), "step must be > 0", std::invalid_argument);
}

TEST_CASE("model serialization round-trips bit-exactly") {
    const CnnModel model = build_paper_net(GlyphClassSet::extended94(), 14);
    const auto bytes = save_model(model);
    CHECK(load_model(bytes) == model);
    CHECK(bytes[0] == 'C');
    CHECK(bytes[4] == 0x01);
}

TEST_CASE("truncated model streams name the failing layer") {
    const CnnModel model = build_paper_net(tiny_classes(5), 15);
    auto bytes = save_model(model);
    bytes.resize(bytes.size() / 2);
    try {
        load_model(bytes);
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("unexpected end at layer") != std::string::npos);
    }
}

TEST_CASE("bad magic and version are rejected") {
    const CnnModel model = build_paper_net(tiny_classes(5), 16);
    auto bytes = save_model(model);
    auto corrupted = bytes;
    corrupted[0] = 'X';
    CHECK_THROWS_WITH_AS(load_model(corrupted), "model parse error: bad magic", std::runtime_error);
    corrupted = bytes;
    corrupted[4] = 0x02;
    CHECK_THROWS_AS(load_model(corrupted), std::runtime_error);
}

TEST_CASE("forward rejects wrong input dimensions") {
    const CnnModel model = build_paper_net(tiny_classes(4), 17);
    CHECK_THROWS_WITH_AS(forward(model, GrayImage(16, 16, 0)), "input must be 32x32", std::invalid_argument);
}

}  // TEST_SUITE
