#include <doctest.h>

#include "reference.hpp"
#include "support/test_util.hpp"
#include "vvpit/errors.hpp"
#include "vvpit/ops.hpp"
#include "vvpit/tensor.hpp"

using namespace vvpit;
using testutil::bit_equal;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("conv2d constant case") {
    const Tensor input = Tensor::full({1, 3, 3}, 1.0);
    const Tensor kernel = Tensor::full({1, 1, 2, 2}, 1.0);
    const Tensor out = conv2d(input, kernel, 1, 0);
    CHECK(out.shape() == std::vector<int>{1, 2, 2});
    for (double v : out.values()) CHECK(v == doctest::Approx(4.0));
}

TEST_CASE("conv2d identity-size case") {
    const Tensor input({1, 1, 1}, {3.5});
    const Tensor kernel({1, 1, 1, 1}, {-2.0});
    const Tensor out = conv2d(input, kernel, 1, 0);
    CHECK(out.at({0, 0, 0}) == doctest::Approx(-7.0));
}

TEST_CASE("conv2d matches brute-force oracle") {
    const Tensor input = random_tensor({2, 5, 5}, 11);
    const Tensor kernel = random_tensor({3, 2, 3, 3}, 12);
    const Tensor got = conv2d(input, kernel, 1, 0);
    const Tensor want = ref::conv2d(input, kernel, 1, 0);
    CHECK(max_abs_diff(got, want) < 1e-9);
}

TEST_CASE("conv2d oracle sweep with stride and padding") {
    Rng pick(99);
    for (int trial = 0; trial < 200; ++trial) {
        const int C = 1 + static_cast<int>(pick.index(3));
        const int H = 2 + static_cast<int>(pick.index(7));
        const int W = 2 + static_cast<int>(pick.index(7));
        const int O = 1 + static_cast<int>(pick.index(3));
        const int K = 1 + static_cast<int>(pick.index(std::min(H, W)));
        const int stride = 1 + static_cast<int>(pick.index(2));
        const int padding = static_cast<int>(pick.index(2));
        if ((H + 2 * padding - K) / stride + 1 < 1 || H + 2 * padding < K) continue;
        if ((W + 2 * padding - K) / stride + 1 < 1 || W + 2 * padding < K) continue;

        const Tensor input = random_tensor({C, H, W}, 1000 + trial);
        const Tensor kernel = random_tensor({O, C, K, K}, 2000 + trial);
        CHECK(max_abs_diff(conv2d(input, kernel, stride, padding), ref::conv2d(input, kernel, stride, padding)) <
              1e-9);
    }
}

TEST_CASE("conv2d shape errors") {
    CHECK_THROWS_AS(conv2d(Tensor({2, 3, 3}), Tensor({1, 3, 2, 2}), 1, 0), DataError);
    CHECK_THROWS_AS(conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 3}), 1, 0), DataError);
}

TEST_CASE("conv2d is deterministic") {
    const Tensor input = random_tensor({3, 6, 6}, 5);
    const Tensor kernel = random_tensor({4, 3, 3, 3}, 6);
    CHECK(bit_equal(conv2d(input, kernel, 1, 1), conv2d(input, kernel, 1, 1)));
}

TEST_CASE("ewise basics") {
    CHECK(add(Tensor({2}, {1, 2}), Tensor({2}, {3, 4})).values() == std::vector<double>{4, 6});
    CHECK(div(Tensor({2}, {2, 4}), Tensor({2}, {2, 2})).values() == std::vector<double>{1, 2});

    const Tensor a = random_tensor({7}, 3);
    CHECK(bit_equal(mul(a, Tensor::full({7}, 1.0)), a));
}

TEST_CASE("ewise scalar broadcast and errors") {
    const Tensor a({3}, {1, 2, 3});
    CHECK(mul(a, Tensor::scalar(2.0)).values() == std::vector<double>{2, 4, 6});
    CHECK_THROWS_AS(add(a, Tensor({2}, {1, 2})), DataError);
    CHECK_THROWS_AS(div(a, Tensor({3}, {1, 0, 1})), NumericError);
    CHECK(emax(a, Tensor::scalar(2.0)).values() == std::vector<double>{2, 2, 3});
}

TEST_CASE("reduce basics") {
    CHECK(reduce(ReduceOp::sum, Tensor({3}, {1, 2, 3}), {0}).item() == doctest::Approx(6.0));
    const Tensor m({2, 2}, {1, 5, 3, 2});
    CHECK(reduce(ReduceOp::max, m, {1}).values() == std::vector<double>{5, 3});
    CHECK(reduce(ReduceOp::min, m, {0}).values() == std::vector<double>{1, 2});
}

TEST_CASE("reduce mean matches loop oracle") {
    const Tensor t = random_tensor({4, 4}, 17);
    double acc = 0.0;
    for (double v : t.values()) acc += v;
    CHECK(reduce(ReduceOp::mean, t, {0, 1}).item() == doctest::Approx(acc / 16.0).epsilon(1e-12));
}

TEST_CASE("reduce errors") {
    CHECK_THROWS_AS(reduce(ReduceOp::sum, Tensor(), {0}), DataError);
    CHECK_THROWS_AS(reduce(ReduceOp::sum, Tensor({2}, {1, 2}), {1}), DataError);
}

TEST_CASE("operations preserve finiteness on finite inputs") {
    const Tensor a = random_tensor({3, 4, 4}, 21, -100.0, 100.0);
    const Tensor k = random_tensor({2, 3, 2, 2}, 22, -10.0, 10.0);
    CHECK(conv2d(a, k, 1, 0).all_finite());
    CHECK(softplus(scale(a, 50.0)).all_finite());
    CHECK(leaky_relu(a, 0.1).all_finite());
}
