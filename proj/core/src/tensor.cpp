#include "rftwin/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rftwin::nn {

namespace {

std::size_t element_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor dimensions must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_) : shape(std::move(shape_)) {
    data.assign(element_count(shape), 0.0);
}

double& Tensor::at(int c, int h, int w) {
    return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
}
double Tensor::at(int c, int h, int w) const {
    return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
}
double& Tensor::at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
double Tensor::at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * shape[1] + c];
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
    require(input.shape.size() == 3, "conv2d: input must be [Cin,H,W]");
    require(kernels.shape.size() == 4, "conv2d: kernels must be [Cout,Cin,k,k]");
    require(bias.shape.size() == 1, "conv2d: bias must be [Cout]");
    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = kernels.dim(0), k = kernels.dim(2);
    require(kernels.dim(1) == cin, "conv2d: kernel Cin mismatch");
    require(kernels.dim(2) == kernels.dim(3), "conv2d: kernels must be square");
    require(k % 2 == 1, "conv2d: kernel size must be odd");
    require(bias.dim(0) == cout, "conv2d: bias size mismatch");

    const int pad = k / 2;
    Tensor out({cout, h, w});
    for (int co = 0; co < cout; ++co) {
        double* out_ch = &out.data[static_cast<std::size_t>(co) * h * w];
        const double b = bias.data[static_cast<std::size_t>(co)];
        for (int i = 0; i < h * w; ++i) out_ch[i] = b;
        for (int ci = 0; ci < cin; ++ci) {
            const double* in_ch = &input.data[static_cast<std::size_t>(ci) * h * w];
            for (int kh = 0; kh < k; ++kh) {
                const int oh_lo = std::max(0, pad - kh);
                const int oh_hi = std::min(h, h + pad - kh);
                for (int kw = 0; kw < k; ++kw) {
                    const double weight =
                        kernels.data[((static_cast<std::size_t>(co) * cin + ci) * k + kh) * k + kw];
                    if (weight == 0.0) continue;
                    const int ow_lo = std::max(0, pad - kw);
                    const int ow_hi = std::min(w, w + pad - kw);
                    for (int oh = oh_lo; oh < oh_hi; ++oh) {
                        const double* in_row = in_ch + (oh + kh - pad) * w + (kw - pad);
                        double* out_row = out_ch + oh * w;
                        for (int ow = ow_lo; ow < ow_hi; ++ow)
                            out_row[ow] += weight * in_row[ow];
                    }
                }
            }
        }
    }
    return out;
}

ConvGrads conv2d_grad(const Tensor& input, const Tensor& kernels, const Tensor& grad_out) {
    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = kernels.dim(0), k = kernels.dim(2);
    require(grad_out.shape.size() == 3 && grad_out.dim(0) == cout && grad_out.dim(1) == h &&
                grad_out.dim(2) == w,
            "conv2d_grad: grad_out shape mismatch");

    const int pad = k / 2;
    ConvGrads g{Tensor(kernels.shape), Tensor({cout}), Tensor(input.shape)};

    for (int co = 0; co < cout; ++co) {
        const double* go_ch = &grad_out.data[static_cast<std::size_t>(co) * h * w];
        double acc = 0.0;
        for (int i = 0; i < h * w; ++i) acc += go_ch[i];
        g.d_bias.data[static_cast<std::size_t>(co)] = acc;

        for (int ci = 0; ci < cin; ++ci) {
            const double* in_ch = &input.data[static_cast<std::size_t>(ci) * h * w];
            double* din_ch = &g.d_input.data[static_cast<std::size_t>(ci) * h * w];
            for (int kh = 0; kh < k; ++kh) {
                const int oh_lo = std::max(0, pad - kh);
                const int oh_hi = std::min(h, h + pad - kh);
                for (int kw = 0; kw < k; ++kw) {
                    const int ow_lo = std::max(0, pad - kw);
                    const int ow_hi = std::min(w, w + pad - kw);
                    const std::size_t kidx =
                        ((static_cast<std::size_t>(co) * cin + ci) * k + kh) * k + kw;
                    const double weight = kernels.data[kidx];
                    double dk = 0.0;
                    for (int oh = oh_lo; oh < oh_hi; ++oh) {
                        const double* go_row = go_ch + oh * w;
                        const double* in_row = in_ch + (oh + kh - pad) * w + (kw - pad);
                        double* din_row = din_ch + (oh + kh - pad) * w + (kw - pad);
                        for (int ow = ow_lo; ow < ow_hi; ++ow) {
                            dk += go_row[ow] * in_row[ow];
                            din_row[ow] += weight * go_row[ow];
                        }
                    }
                    g.d_kernels.data[kidx] += dk;
                }
            }
        }
    }
    return g;
}

PoolResult maxpool2(const Tensor& input) {
    require(input.shape.size() == 3, "maxpool2: input must be [C,H,W]");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require(h % 2 == 0 && w % 2 == 0, "maxpool2: H and W must be even");

    PoolResult r{Tensor({c, h / 2, w / 2}), {}};
    r.argmax_flat.resize(r.output.size());
    std::size_t oi = 0;
    for (int ci = 0; ci < c; ++ci) {
        const double* in_ch = &input.data[static_cast<std::size_t>(ci) * h * w];
        for (int oh = 0; oh < h / 2; ++oh) {
            for (int ow = 0; ow < w / 2; ++ow) {
                const int base = (2 * oh) * w + 2 * ow;
                // Scan in flat order; strict > keeps the lowest index on ties.
                int best = base;
                double best_v = in_ch[base];
                const int candidates[3] = {base + 1, base + w, base + w + 1};
                for (int idx : candidates) {
                    if (in_ch[idx] > best_v) {
                        best_v = in_ch[idx];
                        best = idx;
                    }
                }
                r.output.data[oi] = best_v;
                r.argmax_flat[oi] = static_cast<int>(static_cast<std::size_t>(ci) * h * w) + best;
                ++oi;
            }
        }
    }
    return r;
}

Tensor maxpool2_grad(const Tensor& grad_out, const std::vector<int>& argmax_flat,
                     const std::vector<int>& input_shape) {
    require(grad_out.size() == argmax_flat.size(), "maxpool2_grad: argmax size mismatch");
    Tensor din(input_shape);
    for (std::size_t i = 0; i < argmax_flat.size(); ++i)
        din.data[static_cast<std::size_t>(argmax_flat[i])] += grad_out.data[i];
    return din;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data) v = std::max(v, 0.0);
    return out;
}

Tensor relu_grad(const Tensor& pre_activation, const Tensor& grad_out) {
    require(pre_activation.size() == grad_out.size(), "relu_grad: shape mismatch");
    Tensor din = grad_out;
    for (std::size_t i = 0; i < din.size(); ++i)
        if (pre_activation.data[i] <= 0.0) din.data[i] = 0.0;
    return din;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

XentResult softmax_xent(const std::vector<double>& logits, int label) {
    require(label >= 0 && static_cast<std::size_t>(label) < logits.size(),
            "softmax_xent: label out of range");
    for (double v : logits) require(std::isfinite(v), "softmax_xent: non-finite logit");

    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - m);

    XentResult r;
    r.grad.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) r.grad[i] = std::exp(logits[i] - m) / sum;
    r.loss = -(logits[static_cast<std::size_t>(label)] - m) + std::log(sum);
    r.grad[static_cast<std::size_t>(label)] -= 1.0;
    return r;
}

}  // namespace rftwin::nn
