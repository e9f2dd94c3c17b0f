#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vvpit/scene.hpp"
#include "vvpit/tensor.hpp"

// Naive serial implementations kept for testing and benchmarking. Each one is
// written independently of the kernels in vvpit_core (straight loops, no
// shared helpers) so it can serve as a brute-force oracle.
namespace vvpit::ref {

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding);

Tensor xcorr_plain(const Tensor& search, const Tensor& target);

Tensor xcorr_double(const Tensor& ysm, const Tensor& ytm, const Tensor& ysv, const Tensor& ytv, double lambda);

Tensor xcorr_penalized(const Tensor& ysm, const Tensor& ytm, const Tensor& ysv, const Tensor& ytv, double rho);

// Two-pass mean/population-variance.
std::pair<Tensor, Tensor> aggregate(const std::vector<Tensor>& samples);

// Hash-map-of-cells pillar accumulation.
PseudoImage voxelize(const PointCloudFrame& frame, double cell_size, const Extent& extent);

// Monte Carlo volume-sampling IoU estimate.
double iou3d_mc(const Box3D& a, const Box3D& b, int samples, std::uint64_t seed);

// Full-scan argmax over a 1×H×W map; ties keep the earliest row-major cell.
// Returns (row, col).
std::pair<int, int> argmax_cell(const Tensor& map);

}  // namespace vvpit::ref
