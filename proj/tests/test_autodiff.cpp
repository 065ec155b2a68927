#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "xlmeta/autodiff.hpp"
#include "xlmeta/params.hpp"

using namespace xlmeta;
using ad::Tape;
using ad::Tensor;
using ad::Var;

TEST_CASE("tensor construction and accessors") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 6.0);
    CHECK(Tensor::zeros({2, 2}).data == std::vector<double>{0, 0, 0, 0});
    CHECK(Tensor::ones({1, 2}).data == std::vector<double>{1, 1});
    CHECK(Tensor::scalar(3.5).is_scalar());
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ContractError);
}

TEST_CASE("elementwise add") {
    Tape tape;
    Var a = tape.input(Tensor({1, 2}, {1, 2}));
    Var b = tape.input(Tensor({1, 2}, {3, 4}));
    CHECK(tape.value(tape.add(a, b)).data == std::vector<double>{4, 6});
    Var c = tape.input(Tensor({1, 3}, {0, 0, 0}));
    CHECK_THROWS_AS(tape.add(a, c), DimensionError);
}

TEST_CASE("matmul against identity") {
    Tape tape;
    Var a = tape.input(Tensor({1, 2}, {1, 0}));
    Var eye = tape.input(Tensor({2, 2}, {1, 0, 0, 1}));
    CHECK(tape.value(tape.matmul(a, eye)).data == std::vector<double>{1, 0});
    Var bad = tape.input(Tensor({3, 2}, {0, 0, 0, 0, 0, 0}));
    CHECK_THROWS_AS(tape.matmul(a, bad), DimensionError);
}

TEST_CASE("gather_mean means the gathered rows") {
    Tape tape;
    Var table = tape.input(Tensor({2, 2}, {2, 4, 6, 8}));
    Var out = tape.gather_mean(table, {{0, 1}});
    CHECK(tape.value(out).data == std::vector<double>{4, 6});
}

TEST_CASE("quadratic gradient is analytic") {
    // L(theta) = (theta - c)^2 with theta = 0, c = 1; dL/dtheta = -2.
    Tape tape;
    Var theta = tape.input(Tensor({1, 1}, {0.0}));
    Var c = tape.input(Tensor({1, 1}, {1.0}));
    Var d = tape.sub(theta, c);
    Var loss = tape.matmul(d, d);
    auto grads = tape.backward(loss);
    CHECK(grads[static_cast<std::size_t>(theta.id)].data[0] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("constant loss yields zero gradients off the path") {
    Tape tape;
    Var x = tape.input(Tensor({1, 1}, {5.0}));
    Var c = tape.input(Tensor({1, 1}, {2.0}));
    Var loss = tape.matmul(c, c);
    auto grads = tape.backward(loss);
    CHECK(grads[static_cast<std::size_t>(x.id)].data == std::vector<double>{0.0});
}

TEST_CASE("backward requires a scalar loss") {
    Tape tape;
    Var a = tape.input(Tensor({1, 2}, {1, 2}));
    CHECK_THROWS_AS(tape.backward(a), ContractError);
}

TEST_CASE("nll of uniform logits is ln C") {
    Tape tape;
    Var logits = tape.input(Tensor({1, 2}, {0.0, 0.0}));
    Var lp = tape.log_softmax(logits);
    Var loss = tape.nll(lp, {0});
    CHECK(tape.value(loss).data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("nll saturates with a large margin") {
    Tape tape;
    Var logits = tape.input(Tensor({1, 2}, {20.0, 0.0}));
    Var loss = tape.nll(tape.log_softmax(logits), {0});
    CHECK(tape.value(loss).data[0] < 1e-8);
}

TEST_CASE("nll hand case logits [1,0] label 0") {
    Tape tape;
    Var logits = tape.input(Tensor({1, 2}, {1.0, 0.0}));
    Var loss = tape.nll(tape.log_softmax(logits), {0});
    CHECK(tape.value(loss).data[0] ==
          doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("nll gradient at uniform logits") {
    // d(loss)/d(logit_true) = (1/C - 1)/B; C=2, B=1 gives -0.5.
    Tape tape;
    Var logits = tape.input(Tensor({1, 2}, {0.0, 0.0}));
    Var loss = tape.nll(tape.log_softmax(logits), {0});
    auto grads = tape.backward(loss);
    const auto& g = grads[static_cast<std::size_t>(logits.id)];
    CHECK(g.at(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(g.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("relu clamps and gates gradients") {
    Tape tape;
    Var a = tape.input(Tensor({1, 3}, {-1.0, 0.0, 2.0}));
    Var r = tape.relu(a);
    CHECK(tape.value(r).data == std::vector<double>{0, 0, 2});
}

TEST_CASE("forward_op dispatches by name") {
    Tape tape;
    Var a = tape.input(Tensor({1, 2}, {1, 2}));
    Var b = tape.input(Tensor({1, 2}, {3, 4}));
    Var via_name = tape.forward_op("add", {a, b});
    CHECK(tape.value(via_name).data == std::vector<double>{4, 6});
    CHECK_THROWS_AS(tape.forward_op("conv2d", {a, b}), ContractError);
}

namespace {

// Central finite differences over every input element of a prebuilt graph.
double max_rel_error(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> dim_dist(1, 8);
    std::uniform_real_distribution<double> val(-1.0, 1.0);
    const std::size_t b = dim_dist(rng), d = dim_dist(rng), c = dim_dist(rng);

    auto fill = [&](std::size_t r, std::size_t cc) {
        Tensor t = Tensor::zeros({r, cc});
        for (auto& v : t.data) v = val(rng);
        return t;
    };
    Tensor x0 = fill(b, d), w0 = fill(d, d), v0 = fill(d, c);
    std::vector<std::size_t> labels(b);
    for (auto& l : labels) l = rng() % c;

    auto loss_of = [&](const Tensor& x, const Tensor& w, const Tensor& v) {
        Tape tape;
        Var xs = tape.input(x), ws = tape.input(w), vs = tape.input(v);
        Var h = tape.relu(tape.matmul(xs, ws));
        Var logits = tape.matmul(h, vs);
        return tape.value(tape.nll(tape.log_softmax(logits), labels)).data[0];
    };

    Tape tape;
    Var xs = tape.input(x0), ws = tape.input(w0), vs = tape.input(v0);
    Var h = tape.relu(tape.matmul(xs, ws));
    Var logits = tape.matmul(h, vs);
    auto grads = tape.backward(tape.nll(tape.log_softmax(logits), labels));

    const double hstep = 1e-5;
    double worst = 0.0;
    auto check_input = [&](Tensor base, Var var, int which) {
        const auto& g = grads[static_cast<std::size_t>(var.id)];
        for (std::size_t i = 0; i < base.data.size(); ++i) {
            Tensor plus = base, minus = base;
            plus.data[i] += hstep;
            minus.data[i] -= hstep;
            double fd;
            if (which == 0) fd = (loss_of(plus, w0, v0) - loss_of(minus, w0, v0)) / (2 * hstep);
            else if (which == 1) fd = (loss_of(x0, plus, v0) - loss_of(x0, minus, v0)) / (2 * hstep);
            else fd = (loss_of(x0, w0, plus) - loss_of(x0, w0, minus)) / (2 * hstep);
            const double denom = std::max({std::abs(fd), std::abs(g.data[i]), 1e-3});
            worst = std::max(worst, std::abs(fd - g.data[i]) / denom);
        }
    };
    check_input(x0, xs, 0);
    check_input(w0, ws, 1);
    check_input(v0, vs, 2);
    return worst;
}

}  // namespace

TEST_CASE("random graphs agree with finite differences") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 25; ++i) {
        CHECK(max_rel_error(rng) <= 1e-4);
    }
}

TEST_CASE("sgd_step is functional and validates") {
    ad::ParamSet params;
    params.values["w"] = Tensor({1, 2}, {1.0, 2.0});
    ad::GradMap grads;
    grads["w"] = Tensor({1, 2}, {0.5, -0.5});
    auto next = ad::sgd_step(params, grads, 0.1);
    CHECK(next.values["w"].data == std::vector<double>{0.95, 2.05});
    CHECK(params.values["w"].data == std::vector<double>{1.0, 2.0});

    ad::GradMap zero;
    zero["w"] = Tensor({1, 2}, {0.0, 0.0});
    CHECK(ad::sgd_step(params, zero, 0.1) == params);

    CHECK_THROWS_AS(ad::sgd_step(params, grads, 0.0), ContractError);
    CHECK_THROWS_AS(ad::sgd_step(params, ad::GradMap{}, 0.1), ContractError);
}

TEST_CASE("checkpoint round trip is bit exact") {
    ad::ParamSet params;
    params.values["embeddings"] = Tensor({3, 2}, {0.1, -0.2, 1e-300, 3.14, -0.0, 7.0});
    params.values["head_bias"] = Tensor({1, 2}, {0.25, -0.75});
    const auto path = std::filesystem::temp_directory_path() / "xlmeta_ckpt_test.bin";
    ad::save_checkpoint(params, path);
    auto loaded = ad::load_checkpoint(path);
    CHECK(loaded == params);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(ad::load_checkpoint(path), DataError);
}
