#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vvpit/autodiff.hpp"
#include "vvpit/tensor.hpp"

namespace vvpit {

// One variational conv layer: a mean sub-layer and a variance sub-layer with
// identical geometry. The sampled output is mean(x) + softplus(raw(x)) * eps
// with eps ~ N(0, 1) per element.
struct VariationalConvLayer {
    Tensor mean_kernel;  // O×C×K×K
    Tensor mean_bias;    // O
    Tensor var_kernel;   // O×C×K×K
    Tensor var_bias;     // O
    int stride = 1;
    int padding = 0;
};

struct VfgnParams {
    std::vector<VariationalConvLayer> layers;
    double leaky_slope = 0.1;  // activation between layers, none after the last
};

void validate_vfgn(const VfgnParams& params);

struct VfgnArch {
    std::vector<int> channels{3, 12, 12, 12};  // input channels then per-layer outputs
    int kernel = 3;
    int stride = 1;
    int padding = 0;
    double leaky_slope = 0.1;
};

// He-style random init for the mean branch; variance branch starts with a
// small kernel and a negative bias so initial noise is mild.
VfgnParams make_vfgn(const VfgnArch& arch, std::uint64_t seed);

// Variance branch forced to ~0 (softplus of a large negative raw output);
// the network becomes deterministic.
VfgnParams collapse_variance(VfgnParams params);

// Spatial size of the network output for a square input of the given size.
int vfgn_out_size(const VfgnParams& params, int input_size);
int vfgn_out_channels(const VfgnParams& params);

// The P sampled feature maps with their elementwise mean and population
// variance.
struct VariationalOutputSet {
    std::vector<Tensor> samples;
    Tensor mean;
    Tensor variance;
    int sample_count = 0;
};

// mean = (1/P) sum y_i, variance = (1/P) sum (y_i - mean)^2, both elementwise
// with fixed summation order.
std::pair<Tensor, Tensor> aggregate(const std::vector<Tensor>& samples);

// One stochastic pass; deterministic given (params, x, noise_seed). Noise is
// drawn fresh per layer from seeds derived from (noise_seed, layer index).
Tensor sample_forward(const VfgnParams& params, const Tensor& x, std::uint64_t noise_seed);

// P passes with seeds derived from (base_seed, i), then Eq.-style aggregation.
VariationalOutputSet sample_set(const VfgnParams& params, const Tensor& x, int sample_count, std::uint64_t base_seed);

// --- taped variants for training ------------------------------------------

struct VfgnLayerVars {
    Var mean_kernel, mean_bias, var_kernel, var_bias;
    int stride = 1;
    int padding = 0;
};

struct VfgnVars {
    std::vector<VfgnLayerVars> layers;
    double leaky_slope = 0.1;
};

// Parameter names: <prefix>layers.N.{mean_kernel,mean_bias,var_kernel,var_bias}
VfgnVars register_vfgn(GradTape& tape, const VfgnParams& params, const std::string& prefix = "");

Var sample_forward(GradTape& tape, const VfgnVars& net, const Var& x, std::uint64_t noise_seed);

struct VarOutputSet {
    std::vector<Var> samples;
    Var mean;
    Var variance;
};

VarOutputSet sample_set(GradTape& tape, const VfgnVars& net, const Var& x, int sample_count,
                        std::uint64_t base_seed);

}  // namespace vvpit
