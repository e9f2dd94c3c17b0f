#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "reference.hpp"
#include "support/test_util.hpp"
#include "vvpit/errors.hpp"
#include "vvpit/ops.hpp"
#include "vvpit/vnet.hpp"

using namespace vvpit;
using testutil::bit_equal;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

VfgnParams small_net(std::uint64_t seed) {
    VfgnArch arch;
    arch.channels = {3, 4, 4};
    arch.kernel = 3;
    return make_vfgn(arch, seed);
}

// Deterministic forward through the mean branch only.
Tensor mean_forward(const VfgnParams& params, const Tensor& x) {
    Tensor h = x;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const VariationalConvLayer& l = params.layers[i];
        h = add_channel_bias(conv2d(h, l.mean_kernel, l.stride, l.padding), l.mean_bias);
        if (i + 1 < params.layers.size()) h = leaky_relu(h, params.leaky_slope);
    }
    return h;
}

}  // namespace

TEST_CASE("collapsed variance branch reduces to the deterministic network") {
    const VfgnParams params = collapse_variance(small_net(1));
    const Tensor x = random_tensor({3, 8, 8}, 2, 0.0, 1.0);
    const Tensor sampled = sample_forward(params, x, 12345);
    const Tensor deterministic = mean_forward(params, x);
    CHECK(max_abs_diff(sampled, deterministic) < 1e-6);
}

TEST_CASE("same noise seed gives identical outputs") {
    const VfgnParams params = small_net(3);
    const Tensor x = random_tensor({3, 8, 8}, 4, 0.0, 1.0);
    CHECK(bit_equal(sample_forward(params, x, 42), sample_forward(params, x, 42)));
    CHECK(!bit_equal(sample_forward(params, x, 42), sample_forward(params, x, 43)));
}

TEST_CASE("single-pixel layer output has the predicted moments") {
    // one layer, 1x1 kernel, 1x1 image: y = mu + softplus(raw)*eps exactly
    VfgnParams params;
    VariationalConvLayer layer;
    layer.mean_kernel = Tensor({1, 1, 1, 1}, {0.8});
    layer.mean_bias = Tensor({1}, {0.1});
    layer.var_kernel = Tensor({1, 1, 1, 1}, {0.5});
    layer.var_bias = Tensor({1}, {-0.2});
    params.layers.push_back(layer);

    const Tensor x({1, 1, 1}, {1.4});
    const double mu = 0.8 * 1.4 + 0.1;
    const double sigma = softplus_scalar(0.5 * 1.4 - 0.2);

    const int n = 10000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double y = sample_forward(params, x, static_cast<std::uint64_t>(i)).item();
        sum += y;
        sumsq += y * y;
    }
    const double mean = sum / n;
    const double stddev = std::sqrt(std::max(0.0, sumsq / n - mean * mean));

    const double se_mean = sigma / std::sqrt(static_cast<double>(n));
    const double se_std = sigma / std::sqrt(2.0 * n);
    CHECK(std::abs(mean - mu) < 3.0 * se_mean);
    CHECK(std::abs(stddev - sigma) < 3.0 * se_std);
}

TEST_CASE("sample_set with P=1 has zero variance and mean equal to the sample") {
    const VfgnParams params = small_net(5);
    const Tensor x = random_tensor({3, 8, 8}, 6, 0.0, 1.0);
    const VariationalOutputSet set = sample_set(params, x, 1, 9);
    REQUIRE(set.samples.size() == 1);
    CHECK(bit_equal(set.mean, set.samples[0]));
    for (double v : set.variance.values()) CHECK(v == 0.0);
}

TEST_CASE("aggregate of hand-built samples matches the population form") {
    const std::vector<Tensor> samples = {Tensor({1}, {1.0}), Tensor({1}, {3.0})};
    const auto [mean, variance] = aggregate(samples);
    CHECK(mean[0] == doctest::Approx(2.0));
    CHECK(variance[0] == doctest::Approx(1.0));  // population: ((1-2)^2 + (3-2)^2)/2
}

TEST_CASE("aggregate analytic case {0,0,3,3}") {
    const std::vector<Tensor> samples = {Tensor({1}, {0.0}), Tensor({1}, {0.0}), Tensor({1}, {3.0}),
                                         Tensor({1}, {3.0})};
    const auto [mean, variance] = aggregate(samples);
    CHECK(mean[0] == doctest::Approx(1.5));
    CHECK(variance[0] == doctest::Approx(2.25));
}

TEST_CASE("aggregate of identical samples has exactly zero variance") {
    const Tensor s = random_tensor({2, 3, 3}, 7);
    const auto [mean, variance] = aggregate({s, s, s});
    CHECK(bit_equal(mean, s));
    for (double v : variance.values()) CHECK(v == 0.0);
}

TEST_CASE("aggregate matches the two-pass oracle on 20 random samples") {
    std::vector<Tensor> samples;
    for (int i = 0; i < 20; ++i) samples.push_back(random_tensor({3, 4, 4}, 100 + static_cast<std::uint64_t>(i)));
    const auto [mean, variance] = aggregate(samples);
    const auto [ref_mean, ref_variance] = ref::aggregate(samples);
    CHECK(max_abs_diff(mean, ref_mean) < 1e-12);
    CHECK(max_abs_diff(variance, ref_variance) < 1e-12);
}

TEST_CASE("aggregate errors") {
    CHECK_THROWS_AS(aggregate({}), DataError);
    CHECK_THROWS_AS(aggregate({Tensor({2}, {1, 2}), Tensor({3}, {1, 2, 3})}), DataError);
}

TEST_CASE("aggregate variance is non-negative and permutation invariant") {
    Rng rng(200);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Tensor> samples;
        const int P = 2 + static_cast<int>(rng.index(6));
        for (int i = 0; i < P; ++i)
            samples.push_back(random_tensor({2, 3}, 300 + static_cast<std::uint64_t>(trial * 10 + i)));
        const auto [mean, variance] = aggregate(samples);
        for (double v : variance.values()) CHECK(v >= 0.0);

        std::vector<Tensor> shuffled = samples;
        for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.index(i)]);
        const auto [mean2, variance2] = aggregate(shuffled);
        CHECK(max_abs_diff(mean, mean2) < 1e-12);
        CHECK(max_abs_diff(variance, variance2) < 1e-12);
    }
}

TEST_CASE("sample_set matches aggregate over its own samples") {
    const VfgnParams params = small_net(8);
    const Tensor x = random_tensor({3, 10, 10}, 9, 0.0, 1.0);
    const VariationalOutputSet set = sample_set(params, x, 20, 77);
    const auto [mean, variance] = ref::aggregate(set.samples);
    CHECK(max_abs_diff(set.mean, mean) < 1e-12);
    CHECK(max_abs_diff(set.variance, variance) < 1e-12);
}

TEST_CASE("collapsed branch keeps variance below 1e-10 for any P") {
    const VfgnParams params = collapse_variance(small_net(10));
    const Tensor x = random_tensor({3, 8, 8}, 11, 0.0, 1.0);
    for (int P : {1, 2, 8}) {
        const VariationalOutputSet set = sample_set(params, x, P, 13);
        for (double v : set.variance.values()) CHECK(v < 1e-10);
        CHECK(max_abs_diff(set.mean, mean_forward(params, x)) < 1e-6);
    }
}

TEST_CASE("output spatial size follows the conv formula for default regions") {
    VfgnArch arch;  // default channels, kernel 3, stride 1, no padding
    const VfgnParams params = make_vfgn(arch, 14);
    const int layers = static_cast<int>(params.layers.size());
    for (int input : {18, 24}) {
        const int expect = input - 2 * layers;  // each 3x3 valid conv trims 2
        CHECK(vfgn_out_size(params, input) == expect);
        const Tensor x = random_tensor({arch.channels[0], input, input}, 15, 0.0, 1.0);
        const Tensor y = sample_forward(params, x, 16);
        CHECK(y.dim(1) == expect);
        CHECK(y.dim(2) == expect);
    }
}

TEST_CASE("vfgn validation rejects inconsistent layers") {
    VfgnParams params = small_net(17);
    params.layers[1].var_kernel = Tensor({4, 4, 2, 2});
    CHECK_THROWS_AS(validate_vfgn(params), DataError);
    VfgnParams empty;
    CHECK_THROWS_AS(validate_vfgn(empty), DataError);
}
