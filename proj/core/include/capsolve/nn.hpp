#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "capsolve/glyphs.hpp"
#include "capsolve/image.hpp"

namespace capsolve {

inline constexpr int kCnnInputSize = 32;

struct ConvLayer {
    int out_channels = 0;
    int in_channels = 0;
    int kernel = 5;
    std::vector<float> weights;  // [out][in][kernel][kernel]
    std::vector<float> bias;     // [out]

    bool operator==(const ConvLayer&) const = default;
};

struct PoolLayer {
    int size = 2;  // non-overlapping max pooling, stride == size

    bool operator==(const PoolLayer&) const = default;
};

struct FullLayer {
    int out_dim = 0;
    int in_dim = 0;
    std::vector<float> weights;  // [out][in]
    std::vector<float> bias;     // [out]

    bool operator==(const FullLayer&) const = default;
};

using Layer = std::variant<ConvLayer, PoolLayer, FullLayer>;

/// Six-layer net over 32x32 inputs normalized to [0,1]: two convolution +
/// pooling stages, then two fully connected layers into a class_count-way
/// softmax. Rectifiers follow each convolution and the first full layer.
struct CnnModel {
    int class_count = 0;
    std::vector<Layer> layers;

    bool operator==(const CnnModel&) const = default;
};

/// Enforces the Conv,Pool,Conv,Pool,Full,Full sequence and the
/// 32->28->14->10->5->400->hidden->class_count shape chain.
void validate_architecture(const CnnModel& model);

struct Hyperparams {
    double learning_rate = 0.01;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 0;
};

struct LabeledSample {
    GrayImage image;  // exactly 32x32
    int label = 0;
    double source_angle = 0.0;
};

/// Conv(8,5x5)->Pool->Conv(16,5x5)->Pool->Full(120)->Full(classes), weights
/// uniform in +-sqrt(6/fan_in), biases zero, deterministic per seed.
CnnModel build_paper_net(const GlyphClassSet& classes, std::uint64_t seed);

std::vector<double> forward_logits(const CnnModel& model, const GrayImage& img);

/// Softmax probabilities; non-negative and summing to 1 within 1e-9
/// (normalization accumulates in 64-bit).
std::vector<double> forward(const CnnModel& model, const GrayImage& img);

int predict(const CnnModel& model, const GrayImage& img);

std::vector<double> softmax(std::span<const double> logits);

/// Per-layer gradient buffers parallel to model.layers (empty for Pool).
struct Gradients {
    std::vector<std::vector<float>> weights;
    std::vector<std::vector<float>> bias;
};

struct LossGrad {
    double loss = 0.0;  // mean cross-entropy over the batch
    Gradients grads;    // gradient of the mean loss
};

LossGrad loss_and_grad(const CnnModel& model, std::span<const LabeledSample> batch);

struct EpochStats {
    int epoch = 0;
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> trace;
};

/// Plain SGD over seed-shuffled batches. Per-sample gradients are reduced in
/// sample order, so results are bit-reproducible for any worker count.
TrainResult train(CnnModel& model, std::span<const LabeledSample> dataset, const Hyperparams& hp);

std::vector<double> rotation_grid(double range_deg = 50.0, double step_deg = 5.0);

/// One sample per grid angle (defaults: -50..+50 step 5, 21 variants
/// including 0), each rotated about the image center, label preserved.
std::vector<LabeledSample> augment_rotations(const LabeledSample& sample, double range_deg = 50.0,
                                             double step_deg = 5.0);

/// Model file: magic "CFNN", version 0x01, then little-endian u32
/// class_count, u32 layer_count, per layer a u8 kind (1=Conv, 2=Pool,
/// 3=Full), its u32 shape fields and the raw f32 weight/bias payload.
std::vector<std::uint8_t> save_model(const CnnModel& model);
CnnModel load_model(const std::vector<std::uint8_t>& bytes);
void save_model_file(const CnnModel& model, const std::string& path);
CnnModel load_model_file(const std::string& path);

struct GradientCheckStat {
    std::string group;  // e.g. "layer0.weights", "input"
    double max_rel_error = 0.0;
    int samples = 0;
};

/// Central finite-difference comparison of analytic gradients, evaluated
/// entirely in 64-bit. Samples weights per parameter group plus input
/// pixels (which exercise pooling argmax routing end to end).
std::vector<GradientCheckStat> gradient_check(const CnnModel& model, std::span<const LabeledSample> batch,
                                              int samples_per_group, double eps, std::uint64_t seed);

}  // namespace capsolve
