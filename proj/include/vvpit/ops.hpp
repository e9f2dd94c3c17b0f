#pragma once

#include "vvpit/tensor.hpp"

namespace vvpit {

struct Conv2dSpec {
    int stride = 1;
    int padding = 0;
};

// Output spatial size (H + 2*padding - K) / stride + 1; throws if < 1.
int conv2d_out_size(int in, int kernel, int stride, int padding);

// input C×H×W, kernel O×C×Kh×Kw -> O×H'×W'. Zero padding, accumulation in
// fixed (c, ky, kx) order per output element. Parallel over output channels.
Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);

// d(loss)/d(input) given d(loss)/d(output); gather form, race-free.
Tensor conv2d_grad_input(const Tensor& grad_out, const Tensor& kernel, int stride, int padding,
                         const std::vector<int>& input_shape);

// d(loss)/d(kernel).
Tensor conv2d_grad_kernel(const Tensor& grad_out, const Tensor& input, int stride, int padding,
                          const std::vector<int>& kernel_shape);

// Adds bias[o] to every spatial position of channel o. input O×H×W, bias O.
Tensor add_channel_bias(const Tensor& input, const Tensor& bias);
Tensor channel_bias_grad(const Tensor& grad_out);  // sums spatial dims -> O

Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_grad(const Tensor& grad_out, const Tensor& x, double slope);

// Numerically stable softplus / logistic sigmoid.
double softplus_scalar(double x);
double sigmoid_scalar(double x);
Tensor softplus(const Tensor& x);
Tensor softplus_grad(const Tensor& grad_out, const Tensor& x);

}  // namespace vvpit
