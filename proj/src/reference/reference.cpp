#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "vvpit/rng.hpp"

namespace vvpit::ref {

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int O = kernel.dim(0), Kh = kernel.dim(2), Kw = kernel.dim(3);
    const int Ho = (H + 2 * padding - Kh) / stride + 1;
    const int Wo = (W + 2 * padding - Kw) / stride + 1;

    Tensor out({O, Ho, Wo});
    for (int o = 0; o < O; ++o)
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                double acc = 0.0;
                for (int c = 0; c < C; ++c)
                    for (int i = 0; i < Kh; ++i)
                        for (int j = 0; j < Kw; ++j) {
                            const int iy = oy * stride + i - padding;
                            const int ix = ox * stride + j - padding;
                            double v = 0.0;
                            if (iy >= 0 && iy < H && ix >= 0 && ix < W) v = input.at({c, iy, ix});
                            acc += v * kernel.at({o, c, i, j});
                        }
                out.at({o, oy, ox}) = acc;
            }
    return out;
}

Tensor xcorr_plain(const Tensor& search, const Tensor& target) {
    const int C = search.dim(0), Hs = search.dim(1), Ws = search.dim(2);
    const int Ht = target.dim(1), Wt = target.dim(2);
    const int Ho = Hs - Ht + 1, Wo = Ws - Wt + 1;

    Tensor out({1, Ho, Wo});
    for (int py = 0; py < Ho; ++py)
        for (int px = 0; px < Wo; ++px) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < Ht; ++i)
                    for (int j = 0; j < Wt; ++j) acc += search.at({c, py + i, px + j}) * target.at({c, i, j});
            out.at({0, py, px}) = acc;
        }
    return out;
}

Tensor xcorr_double(const Tensor& ysm, const Tensor& ytm, const Tensor& ysv, const Tensor& ytv, double lambda) {
    Tensor mean_map = xcorr_plain(ysm, ytm);
    const Tensor var_map = xcorr_plain(ysv, ytv);
    for (std::size_t i = 0; i < mean_map.size(); ++i) mean_map[i] += lambda * var_map[i];
    return mean_map;
}

namespace {

Tensor normalize_channels(const Tensor& v, double rho) {
    const int C = v.dim(0), H = v.dim(1), W = v.dim(2);
    Tensor out(v.shape());
    for (int c = 0; c < C; ++c) {
        double lo = v.at({c, 0, 0}), hi = lo;
        for (int r = 0; r < H; ++r)
            for (int x = 0; x < W; ++x) {
                lo = std::min(lo, v.at({c, r, x}));
                hi = std::max(hi, v.at({c, r, x}));
            }
        for (int r = 0; r < H; ++r)
            for (int x = 0; x < W; ++x)
                out.at({c, r, x}) =
                    hi - lo <= 1e-30 ? 1.0 : (rho - 1.0) * (v.at({c, r, x}) - lo) / (hi - lo) + 1.0;
    }
    return out;
}

}  // namespace

Tensor xcorr_penalized(const Tensor& ysm, const Tensor& ytm, const Tensor& ysv, const Tensor& ytv, double rho) {
    const Tensor vns = normalize_channels(ysv, rho);
    const Tensor vnt = normalize_channels(ytv, rho);
    const int C = ysm.dim(0), Hs = ysm.dim(1), Ws = ysm.dim(2);
    const int Ht = ytm.dim(1), Wt = ytm.dim(2);
    const int Ho = Hs - Ht + 1, Wo = Ws - Wt + 1;

    Tensor out({1, Ho, Wo});
    for (int py = 0; py < Ho; ++py)
        for (int px = 0; px < Wo; ++px) {
            double acc = 0.0;
            for (int c = 0; c < C; ++c)
                for (int i = 0; i < Ht; ++i)
                    for (int j = 0; j < Wt; ++j)
                        acc += 2.0 * ysm.at({c, py + i, px + j}) * ytm.at({c, i, j}) /
                               (vns.at({c, py + i, px + j}) + vnt.at({c, i, j}));
            out.at({0, py, px}) = acc;
        }
    return out;
}

std::pair<Tensor, Tensor> aggregate(const std::vector<Tensor>& samples) {
    const std::size_t n = samples.size();
    Tensor mean(samples[0].shape());
    for (std::size_t e = 0; e < mean.size(); ++e) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += samples[i][e];
        mean[e] = acc / static_cast<double>(n);
    }
    Tensor variance(samples[0].shape());
    for (std::size_t e = 0; e < variance.size(); ++e) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = samples[i][e] - mean[e];
            acc += d * d;
        }
        variance[e] = acc / static_cast<double>(n);
    }
    return {std::move(mean), std::move(variance)};
}

PseudoImage voxelize(const PointCloudFrame& frame, double cell_size, const Extent& extent) {
    const int W = static_cast<int>(std::floor((extent.x_max - extent.x_min) / cell_size + 1e-9));
    const int H = static_cast<int>(std::floor((extent.y_max - extent.y_min) / cell_size + 1e-9));

    struct Cell {
        int count = 0;
        double zsum = 0.0;
        double zmax = 0.0;
    };
    std::unordered_map<long long, Cell> cells;
    for (const Vec3& p : frame.points) {
        const double fx = (p.x - extent.x_min) / cell_size;
        const double fy = (p.y - extent.y_min) / cell_size;
        if (fx < 0.0 || fy < 0.0) continue;
        const int ix = static_cast<int>(fx);
        const int iy = static_cast<int>(fy);
        if (ix >= W || iy >= H) continue;
        Cell& cell = cells[static_cast<long long>(iy) * W + ix];
        ++cell.count;
        cell.zsum += p.z;
        if (cell.count == 1 || p.z > cell.zmax) cell.zmax = p.z;
    }

    PseudoImage img;
    img.cell_size = cell_size;
    img.origin_x = extent.x_min;
    img.origin_y = extent.y_min;
    img.channels = Tensor({3, H, W});
    for (const auto& [key, cell] : cells) {
        const int iy = static_cast<int>(key / W);
        const int ix = static_cast<int>(key % W);
        img.channels.at({0, iy, ix}) = std::min(static_cast<double>(cell.count), kVoxelSaturation) / kVoxelSaturation;
        img.channels.at({1, iy, ix}) = std::clamp(cell.zsum / cell.count / kVoxelHeightCap, 0.0, 1.0);
        img.channels.at({2, iy, ix}) = std::clamp(cell.zmax / kVoxelHeightCap, 0.0, 1.0);
    }
    return img;
}

namespace {

bool inside(const Box3D& b, double x, double y, double z) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double dx = x - b.center.x, dy = y - b.center.y;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= b.length / 2.0 && std::abs(ly) <= b.width / 2.0 && std::abs(z - b.center.z) <= b.height / 2.0;
}

}  // namespace

double iou3d_mc(const Box3D& a, const Box3D& b, int samples, std::uint64_t seed) {
    // sample inside the bounding region of both boxes
    const double ra = std::sqrt(a.length * a.length + a.width * a.width) / 2.0;
    const double rb = std::sqrt(b.length * b.length + b.width * b.width) / 2.0;
    const double x_lo = std::min(a.center.x - ra, b.center.x - rb);
    const double x_hi = std::max(a.center.x + ra, b.center.x + rb);
    const double y_lo = std::min(a.center.y - ra, b.center.y - rb);
    const double y_hi = std::max(a.center.y + ra, b.center.y + rb);
    const double z_lo = std::min(a.center.z - a.height / 2.0, b.center.z - b.height / 2.0);
    const double z_hi = std::max(a.center.z + a.height / 2.0, b.center.z + b.height / 2.0);

    Rng rng(seed);
    long long hit_a = 0, hit_b = 0, hit_both = 0;
    for (int i = 0; i < samples; ++i) {
        const double x = rng.uniform(x_lo, x_hi);
        const double y = rng.uniform(y_lo, y_hi);
        const double z = rng.uniform(z_lo, z_hi);
        const bool in_a = inside(a, x, y, z);
        const bool in_b = inside(b, x, y, z);
        hit_a += in_a;
        hit_b += in_b;
        hit_both += in_a && in_b;
    }
    const long long uni = hit_a + hit_b - hit_both;
    if (uni <= 0) return 0.0;
    return static_cast<double>(hit_both) / static_cast<double>(uni);
}

std::pair<int, int> argmax_cell(const Tensor& map) {
    const int H = map.dim(1), W = map.dim(2);
    int br = 0, bc = 0;
    double best = map.at({0, 0, 0});
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
            if (map.at({0, r, c}) > best) {
                best = map.at({0, r, c});
                br = r;
                bc = c;
            }
    return {br, bc};
}

}  // namespace vvpit::ref
