#include "vvpit/ops.hpp"

#include <cmath>

#include "vvpit/errors.hpp"

namespace vvpit {

int conv2d_out_size(int in, int kernel, int stride, int padding) {
    if (stride < 1) throw DataError("conv2d stride must be positive");
    if (padding < 0) throw DataError("conv2d padding must be non-negative");
    const int out = (in + 2 * padding - kernel) / stride + 1;
    if (out < 1 || in + 2 * padding < kernel)
        throw DataError("conv2d output size would be non-positive (input " + std::to_string(in) + ", kernel " +
                        std::to_string(kernel) + ", stride " + std::to_string(stride) + ", padding " +
                        std::to_string(padding) + ")");
    return out;
}

namespace {

void check_conv_args(const Tensor& input, const Tensor& kernel) {
    if (input.rank() != 3) throw DataError("conv2d input must be C×H×W, got " + input.shape_str());
    if (kernel.rank() != 4) throw DataError("conv2d kernel must be O×C×Kh×Kw, got " + kernel.shape_str());
    if (kernel.dim(1) != input.dim(0))
        throw DataError("conv2d channel mismatch: input " + input.shape_str() + " vs kernel " + kernel.shape_str());
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    check_conv_args(input, kernel);
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int O = kernel.dim(0), Kh = kernel.dim(2), Kw = kernel.dim(3);
    const int Ho = conv2d_out_size(H, Kh, stride, padding);
    const int Wo = conv2d_out_size(W, Kw, stride, padding);

    Tensor out({O, Ho, Wo});
    const double* in = input.data();
    const double* k = kernel.data();
    double* po = out.data();

#pragma omp parallel for schedule(static)
    for (int o = 0; o < O; ++o) {
        double* out_ch = po + static_cast<std::size_t>(o) * Ho * Wo;
        for (int c = 0; c < C; ++c) {
            const double* in_ch = in + static_cast<std::size_t>(c) * H * W;
            for (int ky = 0; ky < Kh; ++ky) {
                for (int kx = 0; kx < Kw; ++kx) {
                    const double w = k[((static_cast<std::size_t>(o) * C + c) * Kh + ky) * Kw + kx];
                    if (w == 0.0) continue;
                    // valid ox range so that 0 <= ox*stride + kx - padding < W
                    const int xnum = padding - kx;
                    const int xlo = xnum <= 0 ? 0 : (xnum + stride - 1) / stride;
                    const int xhi_raw = W - 1 - kx + padding;
                    const int xhi = xhi_raw < 0 ? -1 : std::min(Wo - 1, xhi_raw / stride);
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= H) continue;
                        const double* in_row = in_ch + static_cast<std::size_t>(iy) * W;
                        double* out_row = out_ch + static_cast<std::size_t>(oy) * Wo;
                        const int base = kx - padding;
                        for (int ox = xlo; ox <= xhi; ++ox) out_row[ox] += w * in_row[ox * stride + base];
                    }
                }
            }
        }
    }
    return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& kernel, int stride, int padding,
                         const std::vector<int>& input_shape) {
    if (input_shape.size() != 3) throw DataError("conv2d_grad_input expects C×H×W input shape");
    const int C = input_shape[0], H = input_shape[1], W = input_shape[2];
    const int O = kernel.dim(0), Kh = kernel.dim(2), Kw = kernel.dim(3);
    const int Ho = grad_out.dim(1), Wo = grad_out.dim(2);

    Tensor gin({C, H, W});
    const double* g = grad_out.data();
    const double* k = kernel.data();
    double* pg = gin.data();

#pragma omp parallel for schedule(static)
    for (int c = 0; c < C; ++c) {
        // scatter of the forward access pattern, accumulated per input channel
        // in fixed (o, ky, kx) order; writes stay within channel c
        double* gin_ch = pg + static_cast<std::size_t>(c) * H * W;
        for (int o = 0; o < O; ++o) {
            const double* g_ch = g + static_cast<std::size_t>(o) * Ho * Wo;
            for (int ky = 0; ky < Kh; ++ky) {
                for (int kx = 0; kx < Kw; ++kx) {
                    const double w = k[((static_cast<std::size_t>(o) * C + c) * Kh + ky) * Kw + kx];
                    if (w == 0.0) continue;
                    const int xnum = padding - kx;
                    const int xlo = xnum <= 0 ? 0 : (xnum + stride - 1) / stride;
                    const int xhi_raw = W - 1 - kx + padding;
                    const int xhi = xhi_raw < 0 ? -1 : std::min(Wo - 1, xhi_raw / stride);
                    const int base = kx - padding;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= H) continue;
                        double* gin_row = gin_ch + static_cast<std::size_t>(iy) * W;
                        const double* g_row = g_ch + static_cast<std::size_t>(oy) * Wo;
                        for (int ox = xlo; ox <= xhi; ++ox) gin_row[ox * stride + base] += w * g_row[ox];
                    }
                }
            }
        }
    }
    return gin;
}

Tensor conv2d_grad_kernel(const Tensor& grad_out, const Tensor& input, int stride, int padding,
                          const std::vector<int>& kernel_shape) {
    if (kernel_shape.size() != 4) throw DataError("conv2d_grad_kernel expects O×C×Kh×Kw kernel shape");
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int O = kernel_shape[0], Kh = kernel_shape[2], Kw = kernel_shape[3];
    const int Ho = grad_out.dim(1), Wo = grad_out.dim(2);

    Tensor gk(kernel_shape);
    const double* g = grad_out.data();
    const double* in = input.data();
    double* pk = gk.data();

#pragma omp parallel for collapse(2) schedule(static)
    for (int o = 0; o < O; ++o) {
        for (int c = 0; c < C; ++c) {
            const double* g_ch = g + static_cast<std::size_t>(o) * Ho * Wo;
            const double* in_ch = in + static_cast<std::size_t>(c) * H * W;
            double* gk_oc = pk + (static_cast<std::size_t>(o) * C + c) * Kh * Kw;
            for (int ky = 0; ky < Kh; ++ky) {
                for (int kx = 0; kx < Kw; ++kx) {
                    double acc = 0.0;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= H) continue;
                        const double* in_row = in_ch + static_cast<std::size_t>(iy) * W;
                        const double* g_row = g_ch + static_cast<std::size_t>(oy) * Wo;
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= W) continue;
                            acc += g_row[ox] * in_row[ix];
                        }
                    }
                    gk_oc[ky * Kw + kx] = acc;
                }
            }
        }
    }
    return gk;
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
    if (input.rank() != 3 || bias.rank() != 1 || bias.dim(0) != input.dim(0))
        throw DataError("add_channel_bias shape mismatch: " + input.shape_str() + " vs " + bias.shape_str());
    Tensor out = input;
    const int O = input.dim(0);
    const std::size_t hw = static_cast<std::size_t>(input.dim(1)) * input.dim(2);
    double* p = out.data();
    for (int o = 0; o < O; ++o) {
        const double b = bias[static_cast<std::size_t>(o)];
        for (std::size_t i = 0; i < hw; ++i) p[o * hw + i] += b;
    }
    return out;
}

Tensor channel_bias_grad(const Tensor& grad_out) {
    const int O = grad_out.dim(0);
    const std::size_t hw = static_cast<std::size_t>(grad_out.dim(1)) * grad_out.dim(2);
    Tensor g({O});
    const double* p = grad_out.data();
    for (int o = 0; o < O; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < hw; ++i) acc += p[o * hw + i];
        g[static_cast<std::size_t>(o)] = acc;
    }
    return g;
}

Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor out = x;
    for (double& v : out.values())
        if (v < 0.0) v *= slope;
    return out;
}

Tensor leaky_relu_grad(const Tensor& grad_out, const Tensor& x, double slope) {
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (x[i] < 0.0) g[i] *= slope;
    return g;
}

double softplus_scalar(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor softplus(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values()) v = softplus_scalar(v);
    return out;
}

Tensor softplus_grad(const Tensor& grad_out, const Tensor& x) {
    Tensor g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= sigmoid_scalar(x[i]);
    return g;
}

}  // namespace vvpit
