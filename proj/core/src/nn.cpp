#include "capsolve/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "capsolve/preprocess.hpp"
#include "capsolve/rng.hpp"

namespace capsolve {

namespace {

static_assert(std::endian::native == std::endian::little, "model serialization assumes a little-endian host");

template <typename T>
struct Tensor {
    int c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, T(0)) {}
    std::size_t size() const { return v.size(); }
};

enum class Kind { Conv, Pool, Full };

// Model parameters mirrored at scalar type T (float for training, double for
// the gradient-check mode).
template <typename T>
struct Params {
    Kind kind = Kind::Conv;
    int out_c = 0, in_c = 0, k = 0;
    int pool = 0;
    int out_d = 0, in_d = 0;
    std::vector<T> w, b;
};

template <typename T>
std::vector<Params<T>> to_params(const CnnModel& model) {
    std::vector<Params<T>> out;
    for (const Layer& layer : model.layers) {
        Params<T> p;
        if (const auto* c = std::get_if<ConvLayer>(&layer)) {
            p.kind = Kind::Conv;
            p.out_c = c->out_channels;
            p.in_c = c->in_channels;
            p.k = c->kernel;
            p.w.assign(c->weights.begin(), c->weights.end());
            p.b.assign(c->bias.begin(), c->bias.end());
        } else if (const auto* pl = std::get_if<PoolLayer>(&layer)) {
            p.kind = Kind::Pool;
            p.pool = pl->size;
        } else {
            const auto& f = std::get<FullLayer>(layer);
            p.kind = Kind::Full;
            p.out_d = f.out_dim;
            p.in_d = f.in_dim;
            p.w.assign(f.weights.begin(), f.weights.end());
            p.b.assign(f.bias.begin(), f.bias.end());
        }
        out.push_back(std::move(p));
    }
    return out;
}

void params_back(const std::vector<Params<float>>& ps, CnnModel& model) {
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (auto* c = std::get_if<ConvLayer>(&model.layers[i])) {
            c->weights = ps[i].w;
            c->bias = ps[i].b;
        } else if (auto* f = std::get_if<FullLayer>(&model.layers[i])) {
            f->weights = ps[i].w;
            f->bias = ps[i].b;
        }
    }
}

template <typename T>
Tensor<T> image_tensor(const GrayImage& img) {
    Tensor<T> t(1, img.height, img.width);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) t.v[i] = static_cast<T>(img.pixels[i]) / T(255);
    return t;
}

bool relu_after(std::size_t layer_index, std::size_t layer_count, Kind kind) {
    if (kind == Kind::Conv) return true;
    if (kind == Kind::Full) return layer_index + 1 < layer_count;
    return false;
}

template <typename T>
struct Workspace {
    std::vector<Tensor<T>> acts;           // acts[0] = input, acts[i+1] = output of layer i
    std::vector<std::vector<int>> argmax;  // pooling winners per layer
};

template <typename T>
void forward_pass(const std::vector<Params<T>>& ps, const Tensor<T>& input, Workspace<T>& ws) {
    const std::size_t L = ps.size();
    ws.acts.assign(L + 1, {});
    ws.argmax.assign(L, {});
    ws.acts[0] = input;

    for (std::size_t li = 0; li < L; ++li) {
        const Params<T>& p = ps[li];
        const Tensor<T>& in = ws.acts[li];
        Tensor<T>& out = ws.acts[li + 1];
        if (p.kind == Kind::Conv) {
            const int oh = in.h - p.k + 1, ow = in.w - p.k + 1;
            out = Tensor<T>(p.out_c, oh, ow);
            for (int oc = 0; oc < p.out_c; ++oc)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        T acc = p.b[oc];
                        for (int ic = 0; ic < p.in_c; ++ic) {
                            const T* wr = &p.w[(static_cast<std::size_t>(oc) * p.in_c + ic) * p.k * p.k];
                            const T* ir = &in.v[(static_cast<std::size_t>(ic) * in.h + oy) * in.w + ox];
                            for (int ky = 0; ky < p.k; ++ky) {
                                const T* irow = ir + static_cast<std::size_t>(ky) * in.w;
                                const T* wrow = wr + static_cast<std::size_t>(ky) * p.k;
                                for (int kx = 0; kx < p.k; ++kx) acc += irow[kx] * wrow[kx];
                            }
                        }
                        // rectifier fused into the stage output
                        out.v[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox] = acc > T(0) ? acc : T(0);
                    }
        } else if (p.kind == Kind::Pool) {
            const int s = p.pool;
            const int oh = in.h / s, ow = in.w / s;
            out = Tensor<T>(in.c, oh, ow);
            ws.argmax[li].assign(out.size(), 0);
            for (int c = 0; c < in.c; ++c)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        int best_idx = (static_cast<int>((static_cast<std::size_t>(c) * in.h + oy * s)) * in.w) + ox * s;
                        T best = in.v[best_idx];
                        for (int dy = 0; dy < s; ++dy)
                            for (int dx = 0; dx < s; ++dx) {
                                const int idx =
                                    static_cast<int>((static_cast<std::size_t>(c) * in.h + oy * s + dy) * in.w) +
                                    ox * s + dx;
                                if (in.v[idx] > best) {  // first occurrence wins ties
                                    best = in.v[idx];
                                    best_idx = idx;
                                }
                            }
                        const std::size_t o = (static_cast<std::size_t>(c) * oh + oy) * ow + ox;
                        out.v[o] = best;
                        ws.argmax[li][o] = best_idx;
                    }
        } else {
            out = Tensor<T>(p.out_d, 1, 1);
            const bool relu = relu_after(li, L, Kind::Full);
            for (int o = 0; o < p.out_d; ++o) {
                T acc = p.b[o];
                const T* wr = &p.w[static_cast<std::size_t>(o) * p.in_d];
                for (int i = 0; i < p.in_d; ++i) acc += wr[i] * in.v[i];
                out.v[o] = (relu && acc < T(0)) ? T(0) : acc;
            }
        }
    }
}

double loss_from_logits(std::span<const double> logits, int label) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits) m = std::max(m, v);
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - m);
    return std::log(sum) - (logits[label] - m);
}

template <typename T>
struct GradBuf {
    std::vector<std::vector<T>> w, b;

    explicit GradBuf(const std::vector<Params<T>>& ps) {
        for (const auto& p : ps) {
            w.emplace_back(p.w.size(), T(0));
            b.emplace_back(p.b.size(), T(0));
        }
    }

    void add(const GradBuf& other) {
        for (std::size_t li = 0; li < w.size(); ++li) {
            for (std::size_t i = 0; i < w[li].size(); ++i) w[li][i] += other.w[li][i];
            for (std::size_t i = 0; i < b[li].size(); ++i) b[li][i] += other.b[li][i];
        }
    }

    void scale(T f) {
        for (auto& lw : w)
            for (auto& x : lw) x *= f;
        for (auto& lb : b)
            for (auto& x : lb) x *= f;
    }
};

// Reverse accumulation for one sample. Returns the sample's cross-entropy
// loss; parameter gradients are added into `g`, and the gradient with
// respect to the input lands in *input_grad when requested.
template <typename T>
double backward_pass(const std::vector<Params<T>>& ps, const Workspace<T>& ws, int label, GradBuf<T>& g,
                     Tensor<T>* input_grad) {
    const std::size_t L = ps.size();
    const Tensor<T>& logits_t = ws.acts[L];
    const int C = static_cast<int>(logits_t.size());

    std::vector<double> logits(C);
    for (int j = 0; j < C; ++j) logits[j] = static_cast<double>(logits_t.v[j]);
    const double loss = loss_from_logits(logits, label);

    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits) m = std::max(m, v);
    double sum = 0.0;
    std::vector<double> e(C);
    for (int j = 0; j < C; ++j) {
        e[j] = std::exp(logits[j] - m);
        sum += e[j];
    }
    Tensor<T> delta(C, 1, 1);
    for (int j = 0; j < C; ++j) delta.v[j] = static_cast<T>(e[j] / sum - (j == label ? 1.0 : 0.0));

    for (std::size_t li = L; li-- > 0;) {
        const Params<T>& p = ps[li];
        const Tensor<T>& in = ws.acts[li];
        const Tensor<T>& out = ws.acts[li + 1];
        const bool need_din = li > 0 || input_grad != nullptr;

        if (relu_after(li, L, p.kind))
            for (std::size_t i = 0; i < delta.size(); ++i)
                if (!(out.v[i] > T(0))) delta.v[i] = T(0);

        Tensor<T> din;
        if (p.kind == Kind::Full) {
            if (need_din) din = Tensor<T>(in.c, in.h, in.w);
            for (int o = 0; o < p.out_d; ++o) {
                const T d = delta.v[o];
                g.b[li][o] += d;
                if (d == T(0)) continue;
                T* gw = &g.w[li][static_cast<std::size_t>(o) * p.in_d];
                const T* wr = &p.w[static_cast<std::size_t>(o) * p.in_d];
                for (int i = 0; i < p.in_d; ++i) gw[i] += d * in.v[i];
                if (need_din)
                    for (int i = 0; i < p.in_d; ++i) din.v[i] += wr[i] * d;
            }
        } else if (p.kind == Kind::Pool) {
            if (need_din) {
                din = Tensor<T>(in.c, in.h, in.w);
                // exactly one unit of gradient per pooled cell, to the winner
                for (std::size_t o = 0; o < delta.size(); ++o) din.v[ws.argmax[li][o]] += delta.v[o];
            }
        } else {
            const int oh = out.h, ow = out.w;
            if (need_din) din = Tensor<T>(in.c, in.h, in.w);
            for (int oc = 0; oc < p.out_c; ++oc) {
                T bsum = T(0);
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        const T d = delta.v[(static_cast<std::size_t>(oc) * oh + oy) * ow + ox];
                        bsum += d;
                        if (d == T(0)) continue;
                        for (int ic = 0; ic < p.in_c; ++ic) {
                            T* gw = &g.w[li][(static_cast<std::size_t>(oc) * p.in_c + ic) * p.k * p.k];
                            const T* ir = &in.v[(static_cast<std::size_t>(ic) * in.h + oy) * in.w + ox];
                            for (int ky = 0; ky < p.k; ++ky)
                                for (int kx = 0; kx < p.k; ++kx)
                                    gw[static_cast<std::size_t>(ky) * p.k + kx] +=
                                        d * ir[static_cast<std::size_t>(ky) * in.w + kx];
                            if (need_din) {
                                T* dr = &din.v[(static_cast<std::size_t>(ic) * in.h + oy) * in.w + ox];
                                const T* wr = &p.w[(static_cast<std::size_t>(oc) * p.in_c + ic) * p.k * p.k];
                                for (int ky = 0; ky < p.k; ++ky)
                                    for (int kx = 0; kx < p.k; ++kx)
                                        dr[static_cast<std::size_t>(ky) * in.w + kx] +=
                                            d * wr[static_cast<std::size_t>(ky) * p.k + kx];
                            }
                        }
                    }
                g.b[li][oc] += bsum;
            }
        }

        if (li == 0) {
            if (input_grad) *input_grad = std::move(din);
        } else {
            delta = std::move(din);
        }
    }
    return loss;
}

void check_input_dims(const GrayImage& img) {
    if (img.width != kCnnInputSize || img.height != kCnnInputSize)
        throw std::invalid_argument("input must be 32x32");
}

void check_labels(const CnnModel& model, std::span<const LabeledSample> samples) {
    for (const auto& s : samples) {
        check_input_dims(s.image);
        if (s.label < 0 || s.label >= model.class_count) throw std::invalid_argument("label out of range");
    }
}

}  // namespace

void validate_architecture(const CnnModel& model) {
    if (model.class_count < 2) throw std::invalid_argument("class_count must be >= 2");
    if (model.layers.size() != 6)
        throw std::invalid_argument("expected 6 layers (Conv,Pool,Conv,Pool,Full,Full), got " +
                                    std::to_string(model.layers.size()));
    const Kind expected[6] = {Kind::Conv, Kind::Pool, Kind::Conv, Kind::Pool, Kind::Full, Kind::Full};
    int c = 1, h = kCnnInputSize, w = kCnnInputSize;
    for (std::size_t li = 0; li < 6; ++li) {
        const std::string where = "layer " + std::to_string(li);
        const Layer& layer = model.layers[li];
        const Kind kind = std::holds_alternative<ConvLayer>(layer)   ? Kind::Conv
                          : std::holds_alternative<PoolLayer>(layer) ? Kind::Pool
                                                                     : Kind::Full;
        if (kind != expected[li]) throw std::invalid_argument(where + " has the wrong kind");
        if (kind == Kind::Conv) {
            const auto& cv = std::get<ConvLayer>(layer);
            if (cv.in_channels != c) throw std::invalid_argument(where + " in_channels mismatch");
            if (cv.kernel < 1 || h - cv.kernel + 1 <= 0 || w - cv.kernel + 1 <= 0)
                throw std::invalid_argument(where + " kernel too large");
            if (cv.weights.size() != static_cast<std::size_t>(cv.out_channels) * cv.in_channels * cv.kernel * cv.kernel)
                throw std::invalid_argument(where + " weight count mismatch");
            if (cv.bias.size() != static_cast<std::size_t>(cv.out_channels))
                throw std::invalid_argument(where + " bias count mismatch");
            c = cv.out_channels;
            h = h - cv.kernel + 1;
            w = w - cv.kernel + 1;
        } else if (kind == Kind::Pool) {
            const auto& pl = std::get<PoolLayer>(layer);
            if (pl.size < 1 || h % pl.size != 0 || w % pl.size != 0)
                throw std::invalid_argument(where + " pool size incompatible");
            h /= pl.size;
            w /= pl.size;
        } else {
            const auto& f = std::get<FullLayer>(layer);
            if (f.in_dim != c * h * w) throw std::invalid_argument(where + " in_dim mismatch");
            if (f.weights.size() != static_cast<std::size_t>(f.out_dim) * f.in_dim)
                throw std::invalid_argument(where + " weight count mismatch");
            if (f.bias.size() != static_cast<std::size_t>(f.out_dim))
                throw std::invalid_argument(where + " bias count mismatch");
            c = f.out_dim;
            h = 1;
            w = 1;
        }
    }
    if (c != model.class_count) throw std::invalid_argument("final layer width does not match class_count");
}

CnnModel build_paper_net(const GlyphClassSet& classes, std::uint64_t seed) {
    if (classes.size() < 2) throw std::invalid_argument("need at least 2 classes");
    Rng rng(seed);
    const auto init = [&](std::vector<float>& w, std::size_t n, int fan_in) {
        const double s = std::sqrt(6.0 / fan_in);
        w.resize(n);
        for (auto& x : w) x = static_cast<float>(rng.uniform(-s, s));
    };

    CnnModel model;
    model.class_count = classes.size();

    ConvLayer c1{8, 1, 5, {}, {}};
    init(c1.weights, 8ull * 1 * 5 * 5, 1 * 5 * 5);
    c1.bias.assign(8, 0.0f);
    ConvLayer c2{16, 8, 5, {}, {}};
    init(c2.weights, 16ull * 8 * 5 * 5, 8 * 5 * 5);
    c2.bias.assign(16, 0.0f);
    FullLayer f1{120, 400, {}, {}};
    init(f1.weights, 120ull * 400, 400);
    f1.bias.assign(120, 0.0f);
    FullLayer f2{classes.size(), 120, {}, {}};
    init(f2.weights, static_cast<std::size_t>(classes.size()) * 120, 120);
    f2.bias.assign(classes.size(), 0.0f);

    model.layers = {c1, PoolLayer{2}, c2, PoolLayer{2}, f1, f2};
    validate_architecture(model);
    return model;
}

std::vector<double> forward_logits(const CnnModel& model, const GrayImage& img) {
    validate_architecture(model);
    check_input_dims(img);
    const auto params = to_params<float>(model);
    Workspace<float> ws;
    forward_pass(params, image_tensor<float>(img), ws);
    const auto& logits = ws.acts.back();
    return std::vector<double>(logits.v.begin(), logits.v.end());
}

std::vector<double> softmax(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("empty logits");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits) m = std::max(m, v);
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        sum += out[i];
    }
    for (auto& v : out) v /= sum;
    return out;
}

std::vector<double> forward(const CnnModel& model, const GrayImage& img) {
    return softmax(forward_logits(model, img));
}

int predict(const CnnModel& model, const GrayImage& img) {
    const auto logits = forward_logits(model, img);
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

LossGrad loss_and_grad(const CnnModel& model, std::span<const LabeledSample> batch) {
    validate_architecture(model);
    if (batch.empty()) throw std::invalid_argument("empty batch");
    check_labels(model, batch);

    const auto params = to_params<float>(model);
    GradBuf<float> g(params);
    double loss_sum = 0.0;
    for (const auto& s : batch) {
        // per-sample buffer, reduced in sample order: the mean is then exact
        // under sample duplication
        GradBuf<float> sg(params);
        Workspace<float> ws;
        forward_pass(params, image_tensor<float>(s.image), ws);
        loss_sum += backward_pass(params, ws, s.label, sg, static_cast<Tensor<float>*>(nullptr));
        g.add(sg);
    }
    const float inv = 1.0f / static_cast<float>(batch.size());
    g.scale(inv);

    LossGrad out;
    out.loss = loss_sum / static_cast<double>(batch.size());
    out.grads.weights = std::move(g.w);
    out.grads.bias = std::move(g.b);
    return out;
}

TrainResult train(CnnModel& model, std::span<const LabeledSample> dataset, const Hyperparams& hp) {
    validate_architecture(model);
    if (dataset.empty()) throw std::invalid_argument("empty dataset");
    if (hp.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (hp.epochs < 0 || hp.learning_rate < 0.0) throw std::invalid_argument("bad hyperparameters");
    check_labels(model, dataset);

    auto params = to_params<float>(model);
    const int n = static_cast<int>(dataset.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(hp.seed);

    TrainResult result;
    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.index(static_cast<std::size_t>(i) + 1)]);

        double loss_sum = 0.0;
        long correct = 0;
        for (int start = 0; start < n; start += hp.batch_size) {
            const int bn = std::min(hp.batch_size, n - start);
            std::vector<double> losses(bn, 0.0);
            std::vector<char> hit(bn, 0);
            std::vector<GradBuf<float>> grads(bn, GradBuf<float>(params));
#pragma omp parallel for schedule(dynamic)
            for (int i = 0; i < bn; ++i) {
                const LabeledSample& s = dataset[order[start + i]];
                Workspace<float> ws;
                forward_pass(params, image_tensor<float>(s.image), ws);
                const auto& logits = ws.acts.back().v;
                const int pred =
                    static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
                hit[i] = pred == s.label;
                losses[i] = backward_pass(params, ws, s.label, grads[i], static_cast<Tensor<float>*>(nullptr));
            }
            // fixed-order reduction keeps the update bit-reproducible
            GradBuf<float>& total = grads[0];
            for (int i = 1; i < bn; ++i) total.add(grads[i]);
            const float step = static_cast<float>(hp.learning_rate) / static_cast<float>(bn);
            for (std::size_t li = 0; li < params.size(); ++li) {
                for (std::size_t j = 0; j < params[li].w.size(); ++j) params[li].w[j] -= step * total.w[li][j];
                for (std::size_t j = 0; j < params[li].b.size(); ++j) params[li].b[j] -= step * total.b[li][j];
            }
            for (int i = 0; i < bn; ++i) {
                loss_sum += losses[i];
                correct += hit[i];
            }
        }
        result.trace.push_back({epoch, loss_sum / n, static_cast<double>(correct) / n});
    }
    params_back(params, model);
    return result;
}

std::vector<double> rotation_grid(double range_deg, double step_deg) {
    if (step_deg <= 0.0) throw std::invalid_argument("step must be > 0");
    if (range_deg < 0.0) throw std::invalid_argument("range must be >= 0");
    const int k = static_cast<int>(std::floor(range_deg / step_deg + 1e-9));
    std::vector<double> angles;
    for (int i = -k; i <= k; ++i) angles.push_back(i * step_deg);
    return angles;
}

std::vector<LabeledSample> augment_rotations(const LabeledSample& sample, double range_deg, double step_deg) {
    check_input_dims(sample.image);
    std::vector<LabeledSample> out;
    for (double a : rotation_grid(range_deg, step_deg)) {
        LabeledSample v;
        v.image = a == 0.0 ? sample.image : rotate(sample.image, a, 255);
        v.label = sample.label;
        v.source_angle = sample.source_angle + a;
        out.push_back(std::move(v));
    }
    return out;
}

namespace {

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    const std::size_t at = b.size();
    b.resize(at + 4);
    std::memcpy(b.data() + at, &v, 4);
}

void put_f32(std::vector<std::uint8_t>& b, std::span<const float> vs) {
    const std::size_t at = b.size();
    b.resize(at + 4 * vs.size());
    std::memcpy(b.data() + at, vs.data(), 4 * vs.size());
}

struct Reader {
    const std::vector<std::uint8_t>& b;
    std::size_t pos = 0;
    int layer = -1;  // -1 while in the header

    [[noreturn]] void fail_end() const {
        if (layer < 0) throw std::runtime_error("model parse error: unexpected end in header");
        throw std::runtime_error("model parse error: unexpected end at layer " + std::to_string(layer));
    }

    std::uint8_t u8() {
        if (pos + 1 > b.size()) fail_end();
        return b[pos++];
    }

    std::uint32_t u32() {
        if (pos + 4 > b.size()) fail_end();
        std::uint32_t v;
        std::memcpy(&v, b.data() + pos, 4);
        pos += 4;
        return v;
    }

    void f32(std::vector<float>& out, std::size_t n) {
        if (pos + 4 * n > b.size()) fail_end();
        out.resize(n);
        std::memcpy(out.data(), b.data() + pos, 4 * n);
        pos += 4 * n;
    }
};

constexpr char kMagic[4] = {'C', 'F', 'N', 'N'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint32_t kMaxDim = 1u << 20;

}  // namespace

std::vector<std::uint8_t> save_model(const CnnModel& model) {
    std::vector<std::uint8_t> b;
    b.insert(b.end(), kMagic, kMagic + 4);
    b.push_back(kVersion);
    put_u32(b, static_cast<std::uint32_t>(model.class_count));
    put_u32(b, static_cast<std::uint32_t>(model.layers.size()));
    for (const Layer& layer : model.layers) {
        if (const auto* c = std::get_if<ConvLayer>(&layer)) {
            b.push_back(1);
            put_u32(b, static_cast<std::uint32_t>(c->out_channels));
            put_u32(b, static_cast<std::uint32_t>(c->in_channels));
            put_u32(b, static_cast<std::uint32_t>(c->kernel));
            put_f32(b, c->weights);
            put_f32(b, c->bias);
        } else if (const auto* p = std::get_if<PoolLayer>(&layer)) {
            b.push_back(2);
            put_u32(b, static_cast<std::uint32_t>(p->size));
        } else {
            const auto& f = std::get<FullLayer>(layer);
            b.push_back(3);
            put_u32(b, static_cast<std::uint32_t>(f.out_dim));
            put_u32(b, static_cast<std::uint32_t>(f.in_dim));
            put_f32(b, f.weights);
            put_f32(b, f.bias);
        }
    }
    return b;
}

CnnModel load_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw std::runtime_error("model parse error: bad magic");
    if (bytes[4] != kVersion)
        throw std::runtime_error("model parse error: unsupported version " + std::to_string(bytes[4]));

    Reader r{bytes, 5, -1};
    CnnModel model;
    model.class_count = static_cast<int>(r.u32());
    const std::uint32_t layer_count = r.u32();
    if (layer_count > 64) throw std::runtime_error("model parse error: implausible layer_count");

    for (std::uint32_t li = 0; li < layer_count; ++li) {
        r.layer = static_cast<int>(li);
        const std::uint8_t kind = r.u8();
        if (kind == 1) {
            ConvLayer c;
            c.out_channels = static_cast<int>(r.u32());
            c.in_channels = static_cast<int>(r.u32());
            c.kernel = static_cast<int>(r.u32());
            if (c.out_channels <= 0 || c.in_channels <= 0 || c.kernel <= 0 ||
                static_cast<std::uint32_t>(c.out_channels) > kMaxDim ||
                static_cast<std::uint32_t>(c.in_channels) > kMaxDim ||
                static_cast<std::uint32_t>(c.kernel) > 64)
                throw std::runtime_error("model parse error: bad conv shape at layer " + std::to_string(li));
            r.f32(c.weights, static_cast<std::size_t>(c.out_channels) * c.in_channels * c.kernel * c.kernel);
            r.f32(c.bias, static_cast<std::size_t>(c.out_channels));
            model.layers.emplace_back(std::move(c));
        } else if (kind == 2) {
            PoolLayer p;
            p.size = static_cast<int>(r.u32());
            if (p.size <= 0 || p.size > 64)
                throw std::runtime_error("model parse error: bad pool size at layer " + std::to_string(li));
            model.layers.emplace_back(p);
        } else if (kind == 3) {
            FullLayer f;
            f.out_dim = static_cast<int>(r.u32());
            f.in_dim = static_cast<int>(r.u32());
            if (f.out_dim <= 0 || f.in_dim <= 0 || static_cast<std::uint32_t>(f.out_dim) > kMaxDim ||
                static_cast<std::uint32_t>(f.in_dim) > kMaxDim)
                throw std::runtime_error("model parse error: bad full shape at layer " + std::to_string(li));
            r.f32(f.weights, static_cast<std::size_t>(f.out_dim) * f.in_dim);
            r.f32(f.bias, static_cast<std::size_t>(f.out_dim));
            model.layers.emplace_back(std::move(f));
        } else {
            throw std::runtime_error("model parse error: unknown layer kind " + std::to_string(kind) +
                                     " at layer " + std::to_string(li));
        }
    }
    if (r.pos != bytes.size()) throw std::runtime_error("model parse error: trailing bytes");
    validate_architecture(model);
    return model;
}

void save_model_file(const CnnModel& model, const std::string& path) {
    const auto bytes = save_model(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path);
}

CnnModel load_model_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_model(bytes);
}

std::vector<GradientCheckStat> gradient_check(const CnnModel& model, std::span<const LabeledSample> batch,
                                              int samples_per_group, double eps, std::uint64_t seed) {
    validate_architecture(model);
    if (batch.empty()) throw std::invalid_argument("empty batch");
    if (samples_per_group < 1 || eps <= 0.0) throw std::invalid_argument("bad gradient check settings");
    check_labels(model, batch);

    auto params = to_params<double>(model);
    std::vector<Tensor<double>> inputs;
    for (const auto& s : batch) inputs.push_back(image_tensor<double>(s.image));
    const int bn = static_cast<int>(batch.size());

    // Analytic gradients of the mean loss, plus per-sample input gradients.
    GradBuf<double> g(params);
    std::vector<Tensor<double>> input_grads(bn);
    for (int i = 0; i < bn; ++i) {
        Workspace<double> ws;
        forward_pass(params, inputs[i], ws);
        backward_pass(params, ws, batch[i].label, g, &input_grads[i]);
    }
    g.scale(1.0 / bn);

    // Mean loss plus a branch signature (pool winners and rectifier signs).
    // The loss is only differentiable where no branch flips within
    // [theta - eps, theta + eps]; a flipped draw retries with eps shrunk 4x
    // (the flip-free branch is smooth, so the refined central difference is
    // exact to truncation error) and is resampled if it never stabilizes.
    const auto loss_and_branches = [&](std::uint64_t& sig) {
        double sum = 0.0;
        sig = 1469598103934665603ull;
        const auto mix = [&sig](std::uint64_t v) {
            sig ^= v;
            sig *= 1099511628211ull;
        };
        for (int i = 0; i < bn; ++i) {
            Workspace<double> ws;
            forward_pass(params, inputs[i], ws);
            for (std::size_t li = 0; li < params.size(); ++li) {
                for (int a : ws.argmax[li]) mix(static_cast<std::uint64_t>(a) + 1);
                if (relu_after(li, params.size(), params[li].kind))
                    for (std::size_t j = 0; j < ws.acts[li + 1].size(); ++j)
                        mix(ws.acts[li + 1].v[j] > 0.0 ? 2 : 3);
            }
            const auto& lv = ws.acts.back().v;
            sum += loss_from_logits(std::vector<double>(lv.begin(), lv.end()), batch[i].label);
        }
        return sum / bn;
    };

    Rng rng(seed);
    std::vector<GradientCheckStat> stats;
    const auto check_group = [&](const std::string& name, std::vector<double>& theta,
                                 const std::vector<double>& analytic, double scale) {
        GradientCheckStat st{name, 0.0, 0};
        if (theta.empty()) return;
        const int max_draws = samples_per_group * 20;
        for (int draw = 0; draw < max_draws && st.samples < samples_per_group; ++draw) {
            const std::size_t idx = rng.index(theta.size());
            const double saved = theta[idx];
            for (double e = eps; e >= eps / 128.0; e /= 4.0) {
                std::uint64_t sig_p = 0, sig_m = 0;
                theta[idx] = saved + e;
                const double lp = loss_and_branches(sig_p);
                theta[idx] = saved - e;
                const double lm = loss_and_branches(sig_m);
                theta[idx] = saved;
                if (sig_p != sig_m) continue;
                const double numeric = (lp - lm) / (2.0 * e);
                const double a = analytic[idx] * scale;
                const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
                st.max_rel_error = std::max(st.max_rel_error, rel);
                ++st.samples;
                break;
            }
        }
        stats.push_back(st);
    };

    for (std::size_t li = 0; li < params.size(); ++li) {
        if (params[li].kind == Kind::Pool) continue;
        const std::string base = "layer" + std::to_string(li);
        check_group(base + ".weights", params[li].w, g.w[li], 1.0);
        check_group(base + ".bias", params[li].b, g.b[li], 1.0);
    }

    // Input pixels: exercises pooling argmax routing through the whole chain.
    {
        GradientCheckStat st{"input", 0.0, 0};
        const int max_draws = samples_per_group * 20;
        for (int draw = 0; draw < max_draws && st.samples < samples_per_group; ++draw) {
            const int bi = static_cast<int>(rng.index(static_cast<std::size_t>(bn)));
            auto& input = inputs[bi];
            const std::size_t idx = rng.index(input.size());
            const double saved = input.v[idx];
            for (double e = eps; e >= eps / 128.0; e /= 4.0) {
                std::uint64_t sig_p = 0, sig_m = 0;
                input.v[idx] = saved + e;
                const double lp = loss_and_branches(sig_p);
                input.v[idx] = saved - e;
                const double lm = loss_and_branches(sig_m);
                input.v[idx] = saved;
                if (sig_p != sig_m) continue;
                const double numeric = (lp - lm) / (2.0 * e);
                const double a = input_grads[bi].v[idx] / bn;
                const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-4});
                st.max_rel_error = std::max(st.max_rel_error, rel);
                ++st.samples;
                break;
            }
        }
        stats.push_back(st);
    }
    return stats;
}

}  // namespace capsolve
