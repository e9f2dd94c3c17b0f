#include <doctest.h>

#include "support/test_util.hpp"
#include "vvpit/autodiff.hpp"
#include "vvpit/errors.hpp"
#include "vvpit/ops.hpp"
#include "vvpit/tensor.hpp"
#include "vvpit/xcorr.hpp"

using namespace vvpit;
using testutil::fd_relative_error;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("backward of sum(w*x) w.r.t. w equals x") {
    const Tensor x = random_tensor({5}, 1);
    const Tensor w = random_tensor({5}, 2);
    GradTape tape;
    Var wv = tape.param("w", w);
    Var loss = tape.reduce(ReduceOp::sum, tape.mul(wv, tape.constant(x)), {0});
    auto grads = tape.backward(loss);
    CHECK(max_abs_diff(grads.at("w"), x) == 0.0);
}

TEST_CASE("backward of sum(w^2) at w=[1,2] is [2,4]") {
    GradTape tape;
    Var w = tape.param("w", Tensor({2}, {1.0, 2.0}));
    Var loss = tape.reduce(ReduceOp::sum, tape.mul(w, w), {0});
    auto grads = tape.backward(loss);
    CHECK(grads.at("w").values() == std::vector<double>{2.0, 4.0});
}

TEST_CASE("backward errors") {
    GradTape empty_tape;
    CHECK_THROWS_AS(empty_tape.backward(empty_tape.constant(Tensor::scalar(1.0))), DataError);

    GradTape tape;
    Var w = tape.param("w", Tensor({2}, {1.0, 2.0}));
    Var vec = tape.mul(w, w);
    CHECK_THROWS_AS(tape.backward(vec), DataError);
}

namespace {

// Builds a scalar loss from taped inputs; the same builder is re-run for
// finite differences.
double check_op(const std::function<Var(GradTape&, std::vector<Var>&)>& build, std::vector<Tensor> inputs,
                double floor = 1e-4) {
    GradTape tape;
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.param("p" + std::to_string(i), inputs[i]));
    Var loss = build(tape, vars);
    auto grads = tape.backward(loss);
    std::vector<Tensor> analytic;
    for (std::size_t i = 0; i < inputs.size(); ++i) analytic.push_back(grads.at("p" + std::to_string(i)));

    auto f = [&](const std::vector<Tensor>& xs) {
        GradTape t(false);
        std::vector<Var> vs;
        for (const Tensor& x : xs) vs.push_back(t.constant(x));
        return build(t, vs).value.item();
    };
    return fd_relative_error(f, std::move(inputs), analytic, 1e-5, floor);
}

// Weighted sum against fixed coefficients turns any tensor output into a
// scalar so every output element contributes to the loss.
Var spread_sum(GradTape& tape, const Var& v, std::uint64_t seed) {
    const Tensor coeff = random_tensor(v.value.shape(), seed, 0.5, 1.5);
    Var weighted = tape.mul(v, tape.constant(coeff));
    std::vector<int> axes;
    for (int ax = 0; ax < v.value.rank(); ++ax) axes.push_back(ax);
    return tape.reduce(ReduceOp::sum, weighted, axes);
}

}  // namespace

TEST_CASE("finite differences: conv2d w.r.t. input and kernel") {
    const double err = check_op(
        [](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.conv2d(v[0], v[1], 1, 1), 42); },
        {random_tensor({2, 5, 5}, 10), random_tensor({3, 2, 3, 3}, 11)});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: conv2d with stride 2") {
    const double err = check_op(
        [](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.conv2d(v[0], v[1], 2, 1), 43); },
        {random_tensor({2, 6, 6}, 12), random_tensor({2, 2, 3, 3}, 13)});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: bias, activations") {
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.add_bias(v[0], v[1]), 44); },
                   {random_tensor({3, 4, 4}, 14), random_tensor({3}, 15)}) < 1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.leaky_relu(v[0], 0.1), 45); },
                   {random_tensor({3, 4, 4}, 16)}) < 1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.softplus(v[0]), 46); },
                   {random_tensor({3, 4, 4}, 17)}) < 1e-4);
}

TEST_CASE("finite differences: elementwise ops") {
    const Tensor a = random_tensor({4, 4}, 18);
    Tensor b = random_tensor({4, 4}, 19, 0.5, 2.0);  // away from zero for div and from a for max
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.add(v[0], v[1]), 47); }, {a, b}) <
          1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.sub(v[0], v[1]), 48); }, {a, b}) <
          1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.mul(v[0], v[1]), 49); }, {a, b}) <
          1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.div(v[0], v[1]), 50); }, {a, b}) <
          1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.emax(v[0], v[1]), 51); }, {a, b}) <
          1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.scale(v[0], -2.5), 52); }, {a}) <
          1e-4);
}

TEST_CASE("finite differences: scalar broadcast") {
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.mul(v[0], v[1]), 53); },
                   {random_tensor({3, 3}, 20), Tensor::scalar(1.7)}) < 1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.div(v[0], v[1]), 54); },
                   {random_tensor({3, 3}, 21), Tensor::scalar(1.3)}) < 1e-4);
}

TEST_CASE("finite differences: reductions") {
    const Tensor x = random_tensor({3, 4}, 22);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.reduce(ReduceOp::sum, v[0], {1}), 55); },
                   {x}) < 1e-4);
    CHECK(check_op(
              [](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.reduce(ReduceOp::mean, v[0], {0}), 56); },
              {x}) < 1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.reduce(ReduceOp::max, v[0], {1}), 57); },
                   {x}) < 1e-4);
    CHECK(check_op([](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.reduce(ReduceOp::min, v[0], {0}), 58); },
                   {x}) < 1e-4);
}

TEST_CASE("finite differences: normalize_variance") {
    const double err = check_op(
        [](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.normalize_variance(v[0], 3.0), 59); },
        {random_tensor({2, 4, 4}, 23, 0.1, 2.0)});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: penalized correlation core") {
    // normalized variances live in [1, rho]; keep them there during FD
    const double err = check_op(
        [](GradTape& t, std::vector<Var>& v) { return spread_sum(t, t.xcorr_pen(v[0], v[1], v[2], v[3]), 60); },
        {random_tensor({2, 5, 5}, 24), random_tensor({2, 3, 3}, 25), random_tensor({2, 5, 5}, 26, 1.1, 2.9),
         random_tensor({2, 3, 3}, 27, 1.1, 2.9)});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: penalized correlation through normalization") {
    const double err = check_op(
        [](GradTape& t, std::vector<Var>& v) {
            Var vns = t.normalize_variance(v[2], 2.0);
            Var vnt = t.normalize_variance(v[3], 2.0);
            return spread_sum(t, t.xcorr_pen(v[0], v[1], vns, vnt), 61);
        },
        {random_tensor({2, 5, 5}, 28), random_tensor({2, 3, 3}, 29), random_tensor({2, 5, 5}, 30, 0.1, 1.0),
         random_tensor({2, 3, 3}, 31, 0.1, 1.0)});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: bce_with_logits") {
    Tensor label({1, 4, 4});
    Rng rng(32);
    for (double& v : label.values()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    const double err = check_op(
        [label](GradTape& t, std::vector<Var>& v) { return t.bce_with_logits(v[0], label, 3.0, 1.0); },
        {random_tensor({1, 4, 4}, 33, -2.0, 2.0)});
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: double-similarity composition") {
    const double err = check_op(
        [](GradTape& t, std::vector<Var>& v) {
            auto plain = [&](const Var& s, const Var& tg) {
                Var k = t.reshape(tg, {1, tg.value.dim(0), tg.value.dim(1), tg.value.dim(2)});
                return t.conv2d(s, k, 1, 0);
            };
            Var map = t.add(plain(v[0], v[1]), t.scale(plain(v[2], v[3]), 0.5));
            return spread_sum(t, map, 62);
        },
        {random_tensor({2, 5, 5}, 34), random_tensor({2, 3, 3}, 35), random_tensor({2, 5, 5}, 36, 0.0, 1.0),
         random_tensor({2, 3, 3}, 37, 0.0, 1.0)});
    CHECK(err < 1e-4);
}

TEST_CASE("two-layer conv net gradient vs finite differences") {
    const Tensor x = random_tensor({2, 6, 6}, 38);
    const double err = check_op(
        [x](GradTape& t, std::vector<Var>& v) {
            Var h = t.leaky_relu(t.add_bias(t.conv2d(t.constant(x), v[0], 1, 0), v[1]), 0.1);
            Var out = t.add_bias(t.conv2d(h, v[2], 1, 0), v[3]);
            return spread_sum(t, out, 63);
        },
        {random_tensor({3, 2, 3, 3}, 39), random_tensor({3}, 40), random_tensor({2, 3, 2, 2}, 41),
         random_tensor({2}, 42)});
    CHECK(err < 1e-4);
}

TEST_CASE("tape replays in reverse order and accumulates shared nodes") {
    GradTape tape;
    Var w = tape.param("w", Tensor({2}, {3.0, -1.0}));
    Var y = tape.add(tape.mul(w, w), w);  // w^2 + w -> d/dw = 2w + 1
    Var loss = tape.reduce(ReduceOp::sum, y, {0});
    auto grads = tape.backward(loss);
    CHECK(grads.at("w").values() == std::vector<double>{7.0, -1.0});
}

TEST_CASE("grad() exposes gradients of recorded leaves") {
    GradTape tape;
    Var x = tape.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    Var loss = tape.reduce(ReduceOp::sum, tape.mul(x, x), {0});
    tape.backward(loss);
    CHECK(tape.grad(x).values() == std::vector<double>{2.0, 4.0, 6.0});
}
