#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "rftwin/nn.hpp"

using namespace rftwin;
using nn::CnnModel;
using nn::Tensor;

namespace {

Tensor random_input(int ch, int h, int w, Rng& rng) {
    Tensor t({ch, h, w});
    for (double& v : t.data) v = rng.uniform(-1.5, 1.5);
    return t;
}

CnnModel toy_model(Rng& rng) {
    return CnnModel::init(2, 12, 12, {4, 6}, 4, 3, rng);
}

}  // namespace

TEST_CASE("model shape chaining: 32x32 input yields a 4x4x32 feature map") {
    Rng rng(3);
    const auto model = CnnModel::init(2, 32, 32, {8, 16, 32}, 36, 3, rng);
    CHECK(model.feature_count() == 4 * 4 * 32);
    CHECK(model.dense_w.dim(1) == 512);
    CHECK(nn::parameters(model).size() == 8);
}

TEST_CASE("invalid stage chains are rejected") {
    Rng rng(4);
    auto model = CnnModel::init(2, 16, 16, {4, 8}, 5, 3, rng);
    model.stages[1].kernels = Tensor({8, 3, 3, 3});  // wrong input channels
    CHECK_THROWS_AS(model.validate(), std::invalid_argument);

    auto odd = CnnModel::init(2, 16, 16, {4}, 5, 3, rng);
    odd.in_h = 17;
    CHECK_THROWS_AS(odd.validate(), std::invalid_argument);

    CHECK_THROWS_AS(CnnModel::init(2, 12, 12, {4, 6, 8}, 4, 3, rng),
                    std::invalid_argument);  // 12 does not divide by 8
}

TEST_CASE("forward probabilities sum to one") {
    Rng rng(5);
    const auto model = toy_model(rng);
    const auto input = random_input(2, 12, 12, rng);
    const auto p = nn::softmax(nn::forward(model, input));
    double sum = 0;
    for (double v : p) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(nn::forward(model, random_input(2, 10, 12, rng)), std::invalid_argument);
}

TEST_CASE("permuting dense rows permutes logits identically") {
    Rng rng(6);
    auto model = toy_model(rng);
    const auto input = random_input(2, 12, 12, rng);
    const auto before = nn::forward(model, input);

    // Swap class rows 1 and 3.
    const int feats = model.dense_w.dim(1);
    for (int i = 0; i < feats; ++i)
        std::swap(model.dense_w.data[1 * feats + i], model.dense_w.data[3 * feats + i]);
    std::swap(model.dense_b.data[1], model.dense_b.data[3]);
    const auto after = nn::forward(model, input);
    CHECK(after[0] == before[0]);
    CHECK(after[1] == before[3]);
    CHECK(after[3] == before[1]);
    CHECK(after[2] == before[2]);
}

TEST_CASE("forward matches a layer-by-layer composition") {
    Rng rng(8);
    const auto model = toy_model(rng);
    const auto input = random_input(2, 12, 12, rng);

    Tensor cur = input;
    for (const auto& st : model.stages)
        cur = nn::maxpool2(nn::relu(nn::conv2d(cur, st.kernels, st.bias))).output;
    std::vector<double> logits(static_cast<std::size_t>(model.n_classes));
    const int feats = static_cast<int>(cur.size());
    for (int c = 0; c < model.n_classes; ++c) {
        double acc = model.dense_b.data[static_cast<std::size_t>(c)];
        for (int i = 0; i < feats; ++i)
            acc += model.dense_w.data[static_cast<std::size_t>(c) * feats + i] *
                   cur.data[static_cast<std::size_t>(i)];
        logits[static_cast<std::size_t>(c)] = acc;
    }

    const auto direct = nn::forward(model, input);
    REQUIRE(direct.size() == logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        CHECK(direct[i] == doctest::Approx(logits[i]).epsilon(1e-12));
}

TEST_CASE("predict_class breaks ties toward the lowest index") {
    Rng rng(9);
    auto model = toy_model(rng);
    // Identical rows -> identical logits -> class 0.
    const int feats = model.dense_w.dim(1);
    for (int c = 1; c < model.n_classes; ++c)
        for (int i = 0; i < feats; ++i)
            model.dense_w.data[static_cast<std::size_t>(c) * feats + i] =
                model.dense_w.data[static_cast<std::size_t>(i)];
    for (int c = 0; c < model.n_classes; ++c) model.dense_b.data[static_cast<std::size_t>(c)] = 0;
    CHECK(nn::predict_class(model, random_input(2, 12, 12, rng)) == 0);
}

TEST_CASE("analytic gradients match central differences on a 12x12 toy model") {
    Rng rng(20240515);
    auto model = toy_model(rng);
    const auto input = random_input(2, 12, 12, rng);
    const int label = 2;

    const auto analytic = nn::backward(model, input, label);
    CHECK(analytic.loss > 0.0);

    const double h = 1e-5;
    auto params = nn::parameters(model);
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& t = *params[p];
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double saved = t.data[i];
            t.data[i] = saved + h;
            const double up = nn::softmax_xent(nn::forward(model, input), label).loss;
            t.data[i] = saved - h;
            const double dn = nn::softmax_xent(nn::forward(model, input), label).loss;
            t.data[i] = saved;
            const double numeric = (up - dn) / (2.0 * h);
            const double a = analytic.grads.tensors[p].data[i];
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric),
                                                                 1e-8});
            worst = std::max(worst, rel);
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("init is deterministic per seed") {
    Rng a(77), b(77), c(78);
    const auto m1 = toy_model(a);
    const auto m2 = toy_model(b);
    const auto m3 = toy_model(c);
    CHECK(m1.dense_w.data == m2.dense_w.data);
    CHECK(m1.stages[0].kernels.data == m2.stages[0].kernels.data);
    CHECK(m1.dense_w.data != m3.dense_w.data);
}

TEST_CASE("model files round-trip bit-exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "rftwin_nn_test";
    fs::create_directories(dir);

    Rng rng(11);
    const auto model = CnnModel::init(2, 16, 16, {4, 8}, 6, 3, rng);
    nn::save_model(model, dir / "m.bin");
    const auto back = nn::load_model(dir / "m.bin");
    CHECK(back.in_h == model.in_h);
    CHECK(back.n_classes == model.n_classes);
    const auto pa = nn::parameters(model);
    const auto pb = nn::parameters(back);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data == pb[i]->data);

    const auto input = random_input(2, 16, 16, rng);
    CHECK(nn::forward(model, input) == nn::forward(back, input));

    {
        std::ofstream junk(dir / "junk.bin", std::ios::binary);
        junk << "NOTAMODEL.......";
    }
    CHECK_THROWS_AS(nn::load_model(dir / "junk.bin"), std::runtime_error);
    {
        std::ofstream trunc(dir / "trunc.bin", std::ios::binary);
        trunc << "RFTWNN01";
    }
    CHECK_THROWS_AS(nn::load_model(dir / "trunc.bin"), std::runtime_error);
}
