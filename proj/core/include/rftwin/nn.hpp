#pragma once

#include <filesystem>
#include <vector>

#include "rftwin/rng.hpp"
#include "rftwin/tensor.hpp"

namespace rftwin::nn {

struct ConvStage {
    Tensor kernels;  // [Cout, Cin, k, k]
    Tensor bias;     // [Cout]
};

/// Conv/ReLU/pool stack plus a dense classification head. Every conv
/// preserves H x W (zero padding, stride 1) and is followed by a 2x2 max
/// pool, so each stage halves the spatial size.
struct CnnModel {
    int in_ch = 2;
    int in_h = 32;
    int in_w = 32;
    int n_classes = 0;
    std::vector<ConvStage> stages;
    Tensor dense_w;  // [n_classes, features]
    Tensor dense_b;  // [n_classes]

    int feature_count() const;
    void validate() const;

    /// He-uniform initialization, seeded. conv_channels gives the output
    /// channel count per stage (e.g. {8, 16, 32}); kernels are kernel_size^2.
    static CnnModel init(int in_ch, int in_h, int in_w, const std::vector<int>& conv_channels,
                         int n_classes, int kernel_size, Rng& rng);
};

/// Parameter tensors in declaration order (stage kernels/bias pairs, then
/// the dense head); shared by SGD updates, gradient checks and the binary
/// model format.
std::vector<Tensor*> parameters(CnnModel& model);
std::vector<const Tensor*> parameters(const CnnModel& model);

/// Gradients mirror parameters() order.
struct Gradients {
    std::vector<Tensor> tensors;

    static Gradients zeros_like(const CnnModel& model);
    void accumulate(const Gradients& other, double scale);
    void scale(double s);
};

std::vector<double> forward(const CnnModel& model, const Tensor& input);
int predict_class(const CnnModel& model, const Tensor& input);

struct BackwardResult {
    double loss = 0.0;
    std::vector<double> logits;
    Gradients grads;
};

BackwardResult backward(const CnnModel& model, const Tensor& input, int label);

/// Single binary file: magic, layer geometry, per-tensor shape table, then
/// raw little-endian doubles in declaration order.
void save_model(const CnnModel& model, const std::filesystem::path& path);
CnnModel load_model(const std::filesystem::path& path);

}  // namespace rftwin::nn
