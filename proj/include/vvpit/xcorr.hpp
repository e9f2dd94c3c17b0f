#pragma once

#include <string>

#include "vvpit/tensor.hpp"

namespace vvpit {

enum class XcorrMode { averaging, double_similarity, penalization };

XcorrMode parse_xcorr_mode(const std::string& name);  // throws ConfigError naming valid modes
std::string xcorr_mode_name(XcorrMode mode);

struct XcorrConfig {
    XcorrMode mode = XcorrMode::penalization;
    double lambda = 0.5;  // variance-similarity weight, >= 0
    double rho = 2.0;     // penalization strength, >= 1
};

// 2D similarity map plus the geometry needed to map a peak back to a world
// offset: meters per score cell and the rotation of the crop frame.
struct ScoreMap {
    Tensor values;  // 1×H'×W'
    double cell_meters = 1.0;
    double rotation = 0.0;
};

struct PeakOffset {
    int dx_cells = 0;  // column offset from map center
    int dy_cells = 0;  // row offset from map center
    double score = 0.0;
};

// Sliding-window inner product of target over search; stride 1, no padding.
ScoreMap xcorr_plain(const Tensor& search, const Tensor& target);

// g(mean) + lambda * g(variance).
ScoreMap xcorr_double(const Tensor& ysm, const Tensor& ytm, const Tensor& ysv, const Tensor& ytv, double lambda);

// Channel-wise affine map of v into [1, rho]; a channel with max == min
// (within 1e-30) maps to all ones, i.e. no penalty.
Tensor normalize_variance(const Tensor& v, double rho);

// Per-position sum over the patch of 2*ms*mt / (vns + vnt), with vns/vnt
// already normalized into [1, rho].
Tensor xcorr_pen_core(const Tensor& ysm, const Tensor& ytm, const Tensor& vns, const Tensor& vnt);

// Penalized correlation on raw (non-negative) variances; normalizes both
// sides channel-wise with rho, then applies the patch sum above.
ScoreMap xcorr_penalized(const Tensor& ysm, const Tensor& ytm, const Tensor& ysv, const Tensor& ytv, double rho);

// Blends a centered Hann window into the map (v' = (1-w)*v + w*hann) and
// returns the argmax displacement from the map center. Ties break toward the
// smallest row, then column.
PeakOffset peak_to_offset(const ScoreMap& map, double window_weight);

// Mode dispatch on aggregated mean/variance feature sets.
ScoreMap fuse_xcorr(const XcorrConfig& cfg, const Tensor& ysm, const Tensor& ytm, const Tensor& ysv,
                    const Tensor& ytv);

}  // namespace vvpit
