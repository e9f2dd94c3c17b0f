#include "vvpit/vnet.hpp"

#include <cmath>
#include <string>

#include "vvpit/errors.hpp"
#include "vvpit/ops.hpp"
#include "vvpit/rng.hpp"

namespace vvpit {

void validate_vfgn(const VfgnParams& params) {
    if (params.layers.empty()) throw DataError("VFGN needs at least one layer");
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const VariationalConvLayer& l = params.layers[i];
        if (!l.mean_kernel.same_shape(l.var_kernel))
            throw DataError("VFGN layer " + std::to_string(i) + ": mean/variance kernel shapes differ");
        if (!l.mean_bias.same_shape(l.var_bias))
            throw DataError("VFGN layer " + std::to_string(i) + ": mean/variance bias shapes differ");
        if (i > 0 && params.layers[i - 1].mean_kernel.dim(0) != l.mean_kernel.dim(1))
            throw DataError("VFGN layer " + std::to_string(i) + ": channel count incompatible with previous layer");
    }
}

VfgnParams make_vfgn(const VfgnArch& arch, std::uint64_t seed) {
    if (arch.channels.size() < 2) throw ConfigError("VFGN arch needs input channels plus at least one layer");
    Rng rng(derive_seed(seed, "vfgn-init"));
    VfgnParams params;
    params.leaky_slope = arch.leaky_slope;
    for (std::size_t i = 0; i + 1 < arch.channels.size(); ++i) {
        const int cin = arch.channels[i], cout = arch.channels[i + 1];
        VariationalConvLayer layer;
        layer.stride = arch.stride;
        layer.padding = arch.padding;
        const double he = std::sqrt(2.0 / (cin * arch.kernel * arch.kernel));
        layer.mean_kernel = Tensor({cout, cin, arch.kernel, arch.kernel});
        for (double& v : layer.mean_kernel.values()) v = rng.normal(0.0, he);
        layer.mean_bias = Tensor({cout});
        layer.var_kernel = Tensor({cout, cin, arch.kernel, arch.kernel});
        for (double& v : layer.var_kernel.values()) v = rng.normal(0.0, 0.3 * he);
        layer.var_bias = Tensor::full({cout}, -3.0);
        params.layers.push_back(std::move(layer));
    }
    return params;
}

VfgnParams collapse_variance(VfgnParams params) {
    for (VariationalConvLayer& l : params.layers) {
        for (double& v : l.var_kernel.values()) v = 0.0;
        for (double& v : l.var_bias.values()) v = -40.0;
    }
    return params;
}

int vfgn_out_size(const VfgnParams& params, int input_size) {
    int s = input_size;
    for (const VariationalConvLayer& l : params.layers)
        s = conv2d_out_size(s, l.mean_kernel.dim(2), l.stride, l.padding);
    return s;
}

int vfgn_out_channels(const VfgnParams& params) { return params.layers.back().mean_kernel.dim(0); }

std::pair<Tensor, Tensor> aggregate(const std::vector<Tensor>& samples) {
    if (samples.empty()) throw DataError("aggregate on empty sample list");
    for (std::size_t i = 1; i < samples.size(); ++i)
        if (!samples[i].same_shape(samples[0]))
            throw DataError("aggregate: ragged sample shapes " + samples[0].shape_str() + " vs " +
                            samples[i].shape_str());

    const double inv = 1.0 / static_cast<double>(samples.size());
    Tensor sum = samples[0];
    for (std::size_t i = 1; i < samples.size(); ++i)
        for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += samples[i][j];
    Tensor mean = sum;
    for (double& v : mean.values()) v *= inv;

    Tensor vacc(samples[0].shape());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Tensor& s = samples[i];
        for (std::size_t j = 0; j < vacc.size(); ++j) {
            const double d = s[j] - mean[j];
            const double sq = d * d;
            vacc[j] = i == 0 ? sq : vacc[j] + sq;
        }
    }
    for (double& v : vacc.values()) v *= inv;
    return {std::move(mean), std::move(vacc)};
}

VfgnVars register_vfgn(GradTape& tape, const VfgnParams& params, const std::string& prefix) {
    validate_vfgn(params);
    VfgnVars net;
    net.leaky_slope = params.leaky_slope;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const VariationalConvLayer& l = params.layers[i];
        const std::string base = prefix + "layers." + std::to_string(i) + ".";
        VfgnLayerVars vars;
        vars.stride = l.stride;
        vars.padding = l.padding;
        vars.mean_kernel = tape.param(base + "mean_kernel", l.mean_kernel);
        vars.mean_bias = tape.param(base + "mean_bias", l.mean_bias);
        vars.var_kernel = tape.param(base + "var_kernel", l.var_kernel);
        vars.var_bias = tape.param(base + "var_bias", l.var_bias);
        net.layers.push_back(std::move(vars));
    }
    return net;
}

namespace {

Tensor normal_noise(const std::vector<int>& shape, std::uint64_t seed) {
    Tensor eps(shape);
    Rng rng(seed);
    for (double& v : eps.values()) v = rng.normal();
    return eps;
}

}  // namespace

Var sample_forward(GradTape& tape, const VfgnVars& net, const Var& x, std::uint64_t noise_seed) {
    if (net.layers.empty()) throw DataError("VFGN needs at least one layer");
    Var h = x;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const VfgnLayerVars& l = net.layers[i];
        Var m = tape.add_bias(tape.conv2d(h, l.mean_kernel, l.stride, l.padding), l.mean_bias);
        Var s = tape.softplus(tape.add_bias(tape.conv2d(h, l.var_kernel, l.stride, l.padding), l.var_bias));
        Var eps = tape.constant(normal_noise(m.value.shape(), derive_seed(noise_seed, static_cast<std::uint64_t>(i))));
        h = tape.add(m, tape.mul(s, eps));
        if (i + 1 < net.layers.size()) h = tape.leaky_relu(h, net.leaky_slope);
    }
    return h;
}

VarOutputSet sample_set(GradTape& tape, const VfgnVars& net, const Var& x, int sample_count,
                        std::uint64_t base_seed) {
    if (sample_count < 1) throw DataError("sample_set needs sample_count >= 1");
    VarOutputSet out;
    for (int i = 0; i < sample_count; ++i)
        out.samples.push_back(sample_forward(tape, net, x, derive_seed(base_seed, static_cast<std::uint64_t>(i))));

    const double inv = 1.0 / static_cast<double>(sample_count);
    Var sum = out.samples[0];
    for (int i = 1; i < sample_count; ++i) sum = tape.add(sum, out.samples[static_cast<std::size_t>(i)]);
    out.mean = tape.scale(sum, inv);

    Var d0 = tape.sub(out.samples[0], out.mean);
    Var vsum = tape.mul(d0, d0);
    for (int i = 1; i < sample_count; ++i) {
        Var d = tape.sub(out.samples[static_cast<std::size_t>(i)], out.mean);
        vsum = tape.add(vsum, tape.mul(d, d));
    }
    out.variance = tape.scale(vsum, inv);
    return out;
}

Tensor sample_forward(const VfgnParams& params, const Tensor& x, std::uint64_t noise_seed) {
    validate_vfgn(params);
    GradTape tape(false);
    VfgnVars net = register_vfgn(tape, params);
    return sample_forward(tape, net, tape.constant(x), noise_seed).value;
}

VariationalOutputSet sample_set(const VfgnParams& params, const Tensor& x, int sample_count,
                                std::uint64_t base_seed) {
    validate_vfgn(params);
    GradTape tape(false);
    VfgnVars net = register_vfgn(tape, params);
    VarOutputSet set = sample_set(tape, net, tape.constant(x), sample_count, base_seed);

    VariationalOutputSet out;
    out.sample_count = sample_count;
    for (Var& s : set.samples) out.samples.push_back(std::move(s.value));
    out.mean = std::move(set.mean.value);
    out.variance = std::move(set.variance.value);
    return out;
}

}  // namespace vvpit
