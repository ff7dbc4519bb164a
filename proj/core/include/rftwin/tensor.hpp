#pragma once

#include <cstddef>
#include <vector>

namespace rftwin::nn {

/// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape_);

    std::size_t size() const { return data.size(); }

    // 3D (c, h, w) accessors; hot loops index data directly.
    double& at(int c, int h, int w);
    double at(int c, int h, int w) const;
    // 2D (r, c)
    double& at(int r, int c);
    double at(int r, int c) const;

    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
};

/// Cross-correlation with zero padding k/2 and stride 1:
/// input [Cin,H,W] * kernels [Cout,Cin,k,k] + bias [Cout] -> [Cout,H,W].
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias);

struct ConvGrads {
    Tensor d_kernels;
    Tensor d_bias;
    Tensor d_input;
};

ConvGrads conv2d_grad(const Tensor& input, const Tensor& kernels, const Tensor& grad_out);

struct PoolResult {
    Tensor output;                 // [C, H/2, W/2]
    std::vector<int> argmax_flat;  // flat input index per output element
};

/// 2x2 stride-2 max pooling; even H and W required; ties go to the lowest
/// flat input index.
PoolResult maxpool2(const Tensor& input);
Tensor maxpool2_grad(const Tensor& grad_out, const std::vector<int>& argmax_flat,
                     const std::vector<int>& input_shape);

Tensor relu(const Tensor& input);
/// Mask of the pre-activation input applied to the output gradient.
Tensor relu_grad(const Tensor& pre_activation, const Tensor& grad_out);

struct XentResult {
    double loss = 0.0;
    std::vector<double> grad;  // d loss / d logits = softmax(p) - onehot
};

/// Max-shifted softmax cross-entropy against an integer label.
XentResult softmax_xent(const std::vector<double>& logits, int label);
std::vector<double> softmax(const std::vector<double>& logits);

}  // namespace rftwin::nn
