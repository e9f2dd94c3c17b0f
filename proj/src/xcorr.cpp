#include "vvpit/xcorr.hpp"

#include <cmath>
#include <limits>

#include "vvpit/errors.hpp"
#include "vvpit/ops.hpp"

namespace vvpit {

XcorrMode parse_xcorr_mode(const std::string& name) {
    if (name == "averaging") return XcorrMode::averaging;
    if (name == "double" || name == "double_similarity") return XcorrMode::double_similarity;
    if (name == "penalization") return XcorrMode::penalization;
    throw ConfigError("unknown xcorr mode '" + name + "' (valid: averaging, double, penalization)");
}

std::string xcorr_mode_name(XcorrMode mode) {
    switch (mode) {
        case XcorrMode::averaging: return "averaging";
        case XcorrMode::double_similarity: return "double";
        case XcorrMode::penalization: return "penalization";
    }
    return "?";
}

namespace {

void check_pair(const Tensor& search, const Tensor& target, const char* what) {
    if (search.rank() != 3 || target.rank() != 3)
        throw DataError(std::string(what) + " expects C×H×W tensors, got " + search.shape_str() + " and " +
                        target.shape_str());
    if (search.dim(0) != target.dim(0))
        throw DataError(std::string(what) + " channel mismatch: " + search.shape_str() + " vs " + target.shape_str());
    if (target.dim(1) > search.dim(1) || target.dim(2) > search.dim(2))
        throw DataError(std::string(what) + ": target " + target.shape_str() + " larger than search " +
                        search.shape_str());
}

}  // namespace

ScoreMap xcorr_plain(const Tensor& search, const Tensor& target) {
    check_pair(search, target, "xcorr_plain");
    Tensor kernel(std::vector<int>{1, target.dim(0), target.dim(1), target.dim(2)}, target.values());
    ScoreMap map;
    map.values = conv2d(search, kernel, 1, 0);
    return map;
}

ScoreMap xcorr_double(const Tensor& ysm, const Tensor& ytm, const Tensor& ysv, const Tensor& ytv, double lambda) {
    check_pair(ysm, ytm, "xcorr_double(mean)");
    check_pair(ysv, ytv, "xcorr_double(variance)");
    if (!ysm.same_shape(ysv) || !ytm.same_shape(ytv))
        throw DataError("xcorr_double: mean/variance shapes inconsistent");
    ScoreMap mean_map = xcorr_plain(ysm, ytm);
    if (lambda == 0.0) return mean_map;
    ScoreMap var_map = xcorr_plain(ysv, ytv);
    mean_map.values = add(mean_map.values, scale(var_map.values, lambda));
    return mean_map;
}

Tensor normalize_variance(const Tensor& v, double rho) {
    if (v.rank() != 3) throw DataError("normalize_variance expects C×H×W, got " + v.shape_str());
    if (rho < 1.0) throw ConfigError("normalize_variance rho must be >= 1");
    const int C = v.dim(0);
    const std::size_t hw = static_cast<std::size_t>(v.dim(1)) * v.dim(2);
    Tensor out(v.shape());
    const double* pv = v.data();
    double* po = out.data();
    for (int c = 0; c < C; ++c) {
        const double* ch = pv + c * hw;
        double lo = ch[0], hi = ch[0];
        for (std::size_t i = 1; i < hw; ++i) {
            if (ch[i] < lo) lo = ch[i];
            if (ch[i] > hi) hi = ch[i];
        }
        double* och = po + c * hw;
        if (hi - lo <= 1e-30) {
            for (std::size_t i = 0; i < hw; ++i) och[i] = 1.0;
        } else {
            const double r = (rho - 1.0) / (hi - lo);
            for (std::size_t i = 0; i < hw; ++i) och[i] = r * (ch[i] - lo) + 1.0;
        }
    }
    return out;
}

Tensor xcorr_pen_core(const Tensor& ysm, const Tensor& ytm, const Tensor& vns, const Tensor& vnt) {
    check_pair(ysm, ytm, "xcorr_penalized(mean)");
    if (!ysm.same_shape(vns) || !ytm.same_shape(vnt))
        throw DataError("xcorr_penalized: mean/variance shapes inconsistent");
    const int C = ysm.dim(0), Hs = ysm.dim(1), Ws = ysm.dim(2);
    const int Ht = ytm.dim(1), Wt = ytm.dim(2);
    const int Ho = Hs - Ht + 1, Wo = Ws - Wt + 1;

    Tensor out({1, Ho, Wo});
    const double* ms = ysm.data();
    const double* mt = ytm.data();
    const double* ns = vns.data();
    const double* nt = vnt.data();
    double* po = out.data();

#pragma omp parallel for collapse(2) schedule(static)
    for (int py = 0; py < Ho; ++py) {
        for (int px = 0; px < Wo; ++px) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c) {
                const std::size_t s_ch = static_cast<std::size_t>(c) * Hs * Ws;
                const std::size_t t_ch = static_cast<std::size_t>(c) * Ht * Wt;
                for (int i = 0; i < Ht; ++i) {
                    const double* ms_row = ms + s_ch + static_cast<std::size_t>(py + i) * Ws + px;
                    const double* ns_row = ns + s_ch + static_cast<std::size_t>(py + i) * Ws + px;
                    const double* mt_row = mt + t_ch + static_cast<std::size_t>(i) * Wt;
                    const double* nt_row = nt + t_ch + static_cast<std::size_t>(i) * Wt;
                    for (int j = 0; j < Wt; ++j)
                        acc += 2.0 * ms_row[j] * mt_row[j] / (ns_row[j] + nt_row[j]);
                }
            }
            po[static_cast<std::size_t>(py) * Wo + px] = acc;
        }
    }
    return out;
}

ScoreMap xcorr_penalized(const Tensor& ysm, const Tensor& ytm, const Tensor& ysv, const Tensor& ytv, double rho) {
    for (const Tensor* v : {&ysv, &ytv})
        for (double x : v->values())
            if (x < 0.0) throw DataError("xcorr_penalized: negative variance input");
    ScoreMap map;
    map.values = xcorr_pen_core(ysm, ytm, normalize_variance(ysv, rho), normalize_variance(ytv, rho));
    return map;
}

ScoreMap fuse_xcorr(const XcorrConfig& cfg, const Tensor& ysm, const Tensor& ytm, const Tensor& ysv,
                    const Tensor& ytv) {
    switch (cfg.mode) {
        case XcorrMode::averaging: return xcorr_plain(ysm, ytm);
        case XcorrMode::double_similarity: return xcorr_double(ysm, ytm, ysv, ytv, cfg.lambda);
        case XcorrMode::penalization: return xcorr_penalized(ysm, ytm, ysv, ytv, cfg.rho);
    }
    throw ConfigError("invalid xcorr mode");
}

PeakOffset peak_to_offset(const ScoreMap& map, double window_weight) {
    const Tensor& v = map.values;
    if (v.rank() != 3 || v.dim(0) != 1 || v.empty()) throw DataError("peak_to_offset expects a non-empty 1×H×W map");
    const int H = v.dim(1), W = v.dim(2);
    const int cy = H / 2, cx = W / 2;

    PeakOffset best;
    double best_val = -std::numeric_limits<double>::infinity();
    const double pi = 3.14159265358979323846;
    for (int r = 0; r < H; ++r) {
        // Hann window with peak value 1 at the map center.
        const double wy = H == 1 ? 1.0 : 0.5 * (1.0 + std::cos(2.0 * pi * (r - cy) / (H - 1)));
        for (int c = 0; c < W; ++c) {
            const double wx = W == 1 ? 1.0 : 0.5 * (1.0 + std::cos(2.0 * pi * (c - cx) / (W - 1)));
            const double blended = (1.0 - window_weight) * v.at({0, r, c}) + window_weight * (wy * wx);
            if (blended > best_val) {
                best_val = blended;
                best = PeakOffset{c - cx, r - cy, blended};
            }
        }
    }
    best.score = best_val;
    return best;
}

}  // namespace vvpit
