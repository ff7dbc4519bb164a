#include "rftwin/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace rftwin::nn {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts are unsupported");

namespace {

constexpr char kMagic[8] = {'R', 'F', 'T', 'W', 'N', 'N', '0', '1'};

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

int CnnModel::feature_count() const {
    int h = in_h, w = in_w;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        h /= 2;
        w /= 2;
    }
    const int ch = stages.empty() ? in_ch : stages.back().kernels.dim(0);
    return ch * h * w;
}

void CnnModel::validate() const {
    require(!stages.empty(), "model needs at least one conv stage");
    require(n_classes >= 2, "model needs at least two classes");
    int h = in_h, w = in_w, ch = in_ch;
    for (const auto& st : stages) {
        require(st.kernels.shape.size() == 4, "conv kernels must be 4-D");
        require(st.kernels.dim(1) == ch, "conv stage input channels must chain");
        require(st.kernels.dim(2) == st.kernels.dim(3) && st.kernels.dim(2) % 2 == 1,
                "conv kernels must be square with odd size");
        require(h % 2 == 0 && w % 2 == 0, "spatial size must stay divisible by 2 per stage");
        ch = st.kernels.dim(0);
        h /= 2;
        w /= 2;
    }
    require(dense_w.shape.size() == 2 && dense_w.dim(0) == n_classes &&
                dense_w.dim(1) == ch * h * w,
            "dense layer shape must match flattened features");
    require(dense_b.shape.size() == 1 && dense_b.dim(0) == n_classes,
            "dense bias shape mismatch");
}

CnnModel CnnModel::init(int in_ch, int in_h, int in_w, const std::vector<int>& conv_channels,
                        int n_classes, int kernel_size, Rng& rng) {
    CnnModel m;
    m.in_ch = in_ch;
    m.in_h = in_h;
    m.in_w = in_w;
    m.n_classes = n_classes;
    int ch = in_ch;
    for (int cout : conv_channels) {
        ConvStage st{Tensor({cout, ch, kernel_size, kernel_size}), Tensor({cout})};
        const double limit = std::sqrt(6.0 / (ch * kernel_size * kernel_size));
        for (double& v : st.kernels.data) v = rng.uniform(-limit, limit);
        m.stages.push_back(std::move(st));
        ch = cout;
    }
    const int feats = [&] {
        int h = in_h, w = in_w;
        for (std::size_t i = 0; i < conv_channels.size(); ++i) {
            h /= 2;
            w /= 2;
        }
        return ch * h * w;
    }();
    m.dense_w = Tensor({n_classes, feats});
    m.dense_b = Tensor({n_classes});
    // Small head init keeps initial logits near zero (loss ~ ln C).
    const double limit = 0.1 * std::sqrt(6.0 / feats);
    for (double& v : m.dense_w.data) v = rng.uniform(-limit, limit);
    m.validate();
    return m;
}

std::vector<Tensor*> parameters(CnnModel& model) {
    std::vector<Tensor*> out;
    for (auto& st : model.stages) {
        out.push_back(&st.kernels);
        out.push_back(&st.bias);
    }
    out.push_back(&model.dense_w);
    out.push_back(&model.dense_b);
    return out;
}

std::vector<const Tensor*> parameters(const CnnModel& model) {
    std::vector<const Tensor*> out;
    for (const auto& st : model.stages) {
        out.push_back(&st.kernels);
        out.push_back(&st.bias);
    }
    out.push_back(&model.dense_w);
    out.push_back(&model.dense_b);
    return out;
}

Gradients Gradients::zeros_like(const CnnModel& model) {
    Gradients g;
    for (const Tensor* p : parameters(model)) g.tensors.emplace_back(p->shape);
    return g;
}

void Gradients::accumulate(const Gradients& other, double scale) {
    for (std::size_t i = 0; i < tensors.size(); ++i)
        for (std::size_t j = 0; j < tensors[i].data.size(); ++j)
            tensors[i].data[j] += scale * other.tensors[i].data[j];
}

void Gradients::scale(double s) {
    for (auto& t : tensors)
        for (double& v : t.data) v *= s;
}

namespace {

struct Activations {
    std::vector<Tensor> conv_out;   // pre-ReLU, per stage
    std::vector<Tensor> pool_in;    // post-ReLU, per stage
    std::vector<PoolResult> pools;  // per stage
    std::vector<double> logits;
};

Activations run_forward(const CnnModel& model, const Tensor& input) {
    require(input.shape.size() == 3 && input.dim(0) == model.in_ch &&
                input.dim(1) == model.in_h && input.dim(2) == model.in_w,
            "forward: input shape mismatch");
    Activations act;
    const Tensor* cur = &input;
    for (const auto& st : model.stages) {
        act.conv_out.push_back(conv2d(*cur, st.kernels, st.bias));
        act.pool_in.push_back(relu(act.conv_out.back()));
        act.pools.push_back(maxpool2(act.pool_in.back()));
        cur = &act.pools.back().output;
    }
    // Dense head over the flattened final feature map.
    const Tensor& feat = act.pools.back().output;
    const int n_feat = static_cast<int>(feat.size());
    act.logits.resize(static_cast<std::size_t>(model.n_classes));
    for (int c = 0; c < model.n_classes; ++c) {
        const double* row = &model.dense_w.data[static_cast<std::size_t>(c) * n_feat];
        double acc = model.dense_b.data[static_cast<std::size_t>(c)];
        for (int i = 0; i < n_feat; ++i) acc += row[i] * feat.data[static_cast<std::size_t>(i)];
        act.logits[static_cast<std::size_t>(c)] = acc;
    }
    return act;
}

}  // namespace

std::vector<double> forward(const CnnModel& model, const Tensor& input) {
    return run_forward(model, input).logits;
}

int predict_class(const CnnModel& model, const Tensor& input) {
    const auto logits = forward(model, input);
    int best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    return best;
}

BackwardResult backward(const CnnModel& model, const Tensor& input, int label) {
    Activations act = run_forward(model, input);
    const XentResult xent = softmax_xent(act.logits, label);

    BackwardResult res;
    res.loss = xent.loss;
    res.logits = act.logits;
    res.grads = Gradients::zeros_like(model);
    const std::size_t n_params = res.grads.tensors.size();

    // Dense head gradients.
    const Tensor& feat = act.pools.back().output;
    const int n_feat = static_cast<int>(feat.size());
    Tensor& d_dense_w = res.grads.tensors[n_params - 2];
    Tensor& d_dense_b = res.grads.tensors[n_params - 1];
    Tensor d_feat(feat.shape);
    for (int c = 0; c < model.n_classes; ++c) {
        const double g = xent.grad[static_cast<std::size_t>(c)];
        d_dense_b.data[static_cast<std::size_t>(c)] = g;
        const double* w_row = &model.dense_w.data[static_cast<std::size_t>(c) * n_feat];
        double* dw_row = &d_dense_w.data[static_cast<std::size_t>(c) * n_feat];
        for (int i = 0; i < n_feat; ++i) {
            dw_row[i] += g * feat.data[static_cast<std::size_t>(i)];
            d_feat.data[static_cast<std::size_t>(i)] += g * w_row[i];
        }
    }

    // Back through pool/ReLU/conv stages.
    Tensor grad = std::move(d_feat);
    for (int s = static_cast<int>(model.stages.size()) - 1; s >= 0; --s) {
        const Tensor& pool_input = act.pool_in[static_cast<std::size_t>(s)];
        grad = maxpool2_grad(grad, act.pools[static_cast<std::size_t>(s)].argmax_flat,
                             pool_input.shape);
        grad = relu_grad(act.conv_out[static_cast<std::size_t>(s)], grad);
        const Tensor& stage_input =
            (s == 0) ? input : act.pools[static_cast<std::size_t>(s - 1)].output;
        ConvGrads cg =
            conv2d_grad(stage_input, model.stages[static_cast<std::size_t>(s)].kernels, grad);
        res.grads.tensors[static_cast<std::size_t>(2 * s)] = std::move(cg.d_kernels);
        res.grads.tensors[static_cast<std::size_t>(2 * s + 1)] = std::move(cg.d_bias);
        grad = std::move(cg.d_input);
    }
    return res;
}

namespace {

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in, const std::string& where) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw std::runtime_error(where + ": truncated model file");
    return v;
}

}  // namespace

void save_model(const CnnModel& model, const std::filesystem::path& path) {
    model.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write model file: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_u32(out, static_cast<std::uint32_t>(model.in_ch));
    write_u32(out, static_cast<std::uint32_t>(model.in_h));
    write_u32(out, static_cast<std::uint32_t>(model.in_w));
    write_u32(out, static_cast<std::uint32_t>(model.n_classes));
    write_u32(out, static_cast<std::uint32_t>(model.stages.size()));

    const auto params = parameters(model);
    write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const Tensor* t : params) {
        write_u32(out, static_cast<std::uint32_t>(t->shape.size()));
        for (int d : t->shape) write_u32(out, static_cast<std::uint32_t>(d));
    }
    for (const Tensor* t : params)
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    if (!out) throw std::runtime_error("model write failed: " + path.string());
}

CnnModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path.string());
    const std::string where = path.string();

    char magic[sizeof(kMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error(where + ": not a model file (bad magic)");

    CnnModel m;
    m.in_ch = static_cast<int>(read_u32(in, where));
    m.in_h = static_cast<int>(read_u32(in, where));
    m.in_w = static_cast<int>(read_u32(in, where));
    m.n_classes = static_cast<int>(read_u32(in, where));
    const auto n_stages = read_u32(in, where);
    const auto n_params = read_u32(in, where);
    if (n_params != 2 * n_stages + 2)
        throw std::runtime_error(where + ": inconsistent parameter count");

    std::vector<std::vector<int>> shapes;
    for (std::uint32_t i = 0; i < n_params; ++i) {
        const auto ndim = read_u32(in, where);
        if (ndim == 0 || ndim > 4) throw std::runtime_error(where + ": bad tensor rank");
        std::vector<int> shape;
        for (std::uint32_t d = 0; d < ndim; ++d)
            shape.push_back(static_cast<int>(read_u32(in, where)));
        shapes.push_back(std::move(shape));
    }
    m.stages.resize(n_stages);
    for (std::uint32_t s = 0; s < n_stages; ++s) {
        m.stages[s].kernels = Tensor(shapes[2 * s]);
        m.stages[s].bias = Tensor(shapes[2 * s + 1]);
    }
    m.dense_w = Tensor(shapes[n_params - 2]);
    m.dense_b = Tensor(shapes[n_params - 1]);

    for (Tensor* t : parameters(m)) {
        in.read(reinterpret_cast<char*>(t->data.data()),
                static_cast<std::streamsize>(t->data.size() * sizeof(double)));
        if (!in) throw std::runtime_error(where + ": truncated model data");
    }
    m.validate();
    return m;
}

}  // namespace rftwin::nn
