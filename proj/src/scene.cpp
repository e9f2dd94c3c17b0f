#include "vvpit/scene.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vvpit/errors.hpp"
#include "vvpit/rng.hpp"

namespace vvpit {

namespace fs = std::filesystem;

double normalize_yaw(double yaw) {
    const double two_pi = 6.283185307179586477;
    double y = std::fmod(yaw, two_pi);
    if (y <= -3.14159265358979323846) y += two_pi;
    if (y > 3.14159265358979323846) y -= two_pi;
    return y;
}

void validate_box(const Box3D& box) {
    if (box.length <= 0.0 || box.width <= 0.0 || box.height <= 0.0)
        throw DataError("degenerate box: size must be positive");
}

void validate_scene_config(const SceneConfig& cfg) {
    if (cfg.frame_count < 1) throw ConfigError("scene frame_count must be >= 1");
    if (cfg.object_density < 0.0 || cfg.background_density < 0.0 || cfg.clutter_density < 0.0)
        throw ConfigError("scene densities must be >= 0");
    if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw ConfigError("scene dropout must be in [0, 1)");
    if (cfg.clutter_count < 0) throw ConfigError("scene clutter_count must be >= 0");
    if (cfg.noise_sigma < 0.0) throw ConfigError("scene noise_sigma must be >= 0");
    if (cfg.speed_max < cfg.speed_min || cfg.yaw_rate_max < cfg.yaw_rate_min)
        throw ConfigError("scene trajectory ranges must have max >= min");
    if (cfg.extent.x_max <= cfg.extent.x_min || cfg.extent.y_max <= cfg.extent.y_min)
        throw ConfigError("scene extent must be non-empty");
    Box3D b;
    b.length = cfg.object_length;
    b.width = cfg.object_width;
    b.height = cfg.object_height;
    validate_box(b);
}

namespace {

struct Trajectory {
    double speed = 0.0;
    double yaw_rate = 0.0;
    std::vector<Box3D> boxes;  // one per frame
};

Trajectory make_trajectory(const SceneConfig& cfg) {
    Rng rng(derive_seed(cfg.seed, "trajectory"));
    Trajectory traj;
    traj.speed = rng.uniform(cfg.speed_min, cfg.speed_max);
    traj.yaw_rate = rng.uniform(cfg.yaw_rate_min, cfg.yaw_rate_max);

    Box3D box;
    box.center = cfg.init_center;
    box.length = cfg.object_length;
    box.width = cfg.object_width;
    box.height = cfg.object_height;
    box.yaw = normalize_yaw(cfg.init_yaw);
    traj.boxes.push_back(box);
    for (int k = 1; k < cfg.frame_count; ++k) {
        box.yaw = normalize_yaw(box.yaw + traj.yaw_rate);
        box.center.x += traj.speed * std::cos(box.yaw);
        box.center.y += traj.speed * std::sin(box.yaw);
        traj.boxes.push_back(box);
    }
    return traj;
}

std::vector<Box3D> make_clutter(const SceneConfig& cfg, const Trajectory& traj) {
    Rng rng(derive_seed(cfg.seed, "clutter"));
    std::vector<Box3D> boxes;
    const double clearance = 4.0;
    for (int i = 0; i < cfg.clutter_count; ++i) {
        Box3D box;
        for (int attempt = 0; attempt < 200; ++attempt) {
            box.center.x = rng.uniform(cfg.extent.x_min + 2.0, cfg.extent.x_max - 2.0);
            box.center.y = rng.uniform(cfg.extent.y_min + 2.0, cfg.extent.y_max - 2.0);
            box.center.z = rng.uniform(0.5, 1.0);
            box.length = rng.uniform(1.0, 4.0);
            box.width = rng.uniform(1.0, 2.5);
            box.height = rng.uniform(0.8, 2.0);
            box.yaw = normalize_yaw(rng.uniform(-3.141592653589793, 3.141592653589793));
            bool clear = true;
            for (const Box3D& gt : traj.boxes) {
                const double dx = box.center.x - gt.center.x;
                const double dy = box.center.y - gt.center.y;
                if (dx * dx + dy * dy < clearance * clearance) {
                    clear = false;
                    break;
                }
            }
            if (clear) break;
        }
        boxes.push_back(box);
    }
    return boxes;
}

double box_surface_area(const Box3D& b) {
    return 2.0 * (b.length * b.width + b.length * b.height + b.width * b.height);
}

// Uniform point on the box surface, faces weighted by area.
Vec3 sample_box_surface(const Box3D& b, Rng& rng) {
    const double a_top = b.length * b.width;
    const double a_front = b.width * b.height;
    const double a_side = b.length * b.height;
    const double total = 2.0 * (a_top + a_front + a_side);
    double u = rng.uniform() * total;

    double lx, ly, lz;
    const double hl = b.length / 2.0, hw = b.width / 2.0, hh = b.height / 2.0;
    if (u < 2.0 * a_top) {
        lz = u < a_top ? hh : -hh;
        lx = rng.uniform(-hl, hl);
        ly = rng.uniform(-hw, hw);
    } else if (u < 2.0 * (a_top + a_front)) {
        u -= 2.0 * a_top;
        lx = u < a_front ? hl : -hl;
        ly = rng.uniform(-hw, hw);
        lz = rng.uniform(-hh, hh);
    } else {
        u -= 2.0 * (a_top + a_front);
        ly = u < a_side ? hw : -hw;
        lx = rng.uniform(-hl, hl);
        lz = rng.uniform(-hh, hh);
    }

    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    return Vec3{b.center.x + c * lx - s * ly, b.center.y + s * lx + c * ly, b.center.z + lz};
}

bool point_in_box(const Vec3& p, const Box3D& b) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double dx = p.x - b.center.x, dy = p.y - b.center.y, dz = p.z - b.center.z;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    const double eps = 1e-9;
    return std::abs(lx) <= b.length / 2.0 + eps && std::abs(ly) <= b.width / 2.0 + eps &&
           std::abs(dz) <= b.height / 2.0 + eps;
}

// Emits surface points of one box with per-point noise and dropout applied.
void emit_box_points(const Box3D& box, double density, double noise_sigma, double dropout, Rng& rng,
                     std::vector<Vec3>& out) {
    const int count = rng.poisson(density * box_surface_area(box));
    for (int i = 0; i < count; ++i) {
        Vec3 p = sample_box_surface(box, rng);
        if (noise_sigma > 0.0) {
            p.x += rng.normal(0.0, noise_sigma);
            p.y += rng.normal(0.0, noise_sigma);
            p.z += rng.normal(0.0, noise_sigma);
        }
        const bool keep = dropout <= 0.0 || rng.uniform() >= dropout;
        if (keep) out.push_back(p);
    }
}

}  // namespace

std::vector<PointCloudFrame> generate_sequence(const SceneConfig& cfg) {
    validate_scene_config(cfg);
    const Trajectory traj = make_trajectory(cfg);
    const std::vector<Box3D> clutter = make_clutter(cfg, traj);

    std::vector<PointCloudFrame> frames(static_cast<std::size_t>(cfg.frame_count));
#pragma omp parallel for schedule(static)
    for (int k = 0; k < cfg.frame_count; ++k) {
        PointCloudFrame& frame = frames[static_cast<std::size_t>(k)];
        frame.frame_index = k;
        frame.gt_box = traj.boxes[static_cast<std::size_t>(k)];

        Rng rng(derive_seed(derive_seed(cfg.seed, "frame"), static_cast<std::uint64_t>(k)));
        emit_box_points(frame.gt_box, cfg.object_density, cfg.noise_sigma, cfg.dropout, rng, frame.points);
        for (const Box3D& b : clutter)
            emit_box_points(b, cfg.clutter_density, cfg.noise_sigma, cfg.dropout, rng, frame.points);

        const double area =
            (cfg.extent.x_max - cfg.extent.x_min) * (cfg.extent.y_max - cfg.extent.y_min);
        const int ground_count = rng.poisson(cfg.background_density * area);
        for (int i = 0; i < ground_count; ++i) {
            Vec3 p{rng.uniform(cfg.extent.x_min, cfg.extent.x_max), rng.uniform(cfg.extent.y_min, cfg.extent.y_max),
                   0.0};
            if (cfg.noise_sigma > 0.0) {
                p.x += rng.normal(0.0, cfg.noise_sigma);
                p.y += rng.normal(0.0, cfg.noise_sigma);
                p.z += rng.normal(0.0, cfg.noise_sigma);
            }
            const bool keep = cfg.dropout <= 0.0 || rng.uniform() >= cfg.dropout;
            if (keep) frame.points.push_back(p);
        }

        // generator guarantee: the box is never empty
        bool occupied = false;
        for (const Vec3& p : frame.points)
            if (point_in_box(p, frame.gt_box)) {
                occupied = true;
                break;
            }
        if (!occupied) frame.points.push_back(frame.gt_box.center);
    }
    return frames;
}

SceneConfig sequence_variant(const SceneConfig& base, std::uint64_t run_seed, int index) {
    SceneConfig cfg = base;
    cfg.seed = derive_seed(derive_seed(run_seed, "sequence"), static_cast<std::uint64_t>(index));
    Rng rng(derive_seed(cfg.seed, "init-pose"));
    cfg.init_center.x = rng.uniform(-5.0, 5.0);
    cfg.init_center.y = rng.uniform(-5.0, 5.0);
    cfg.init_yaw = rng.uniform(-3.141592653589793, 3.141592653589793);
    return cfg;
}

PseudoImage voxelize(const PointCloudFrame& frame, double cell_size, const Extent& extent) {
    if (cell_size <= 0.0) throw ConfigError("voxelize cell_size must be positive");
    const int W = static_cast<int>(std::floor((extent.x_max - extent.x_min) / cell_size + 1e-9));
    const int H = static_cast<int>(std::floor((extent.y_max - extent.y_min) / cell_size + 1e-9));
    if (W < 2 || H < 2) throw ConfigError("voxelize extent must span more than one cell each way");

    std::vector<int> count(static_cast<std::size_t>(W) * H, 0);
    std::vector<double> zsum(static_cast<std::size_t>(W) * H, 0.0);
    std::vector<double> zmax(static_cast<std::size_t>(W) * H, 0.0);

    for (const Vec3& p : frame.points) {
        const double fx = (p.x - extent.x_min) / cell_size;
        const double fy = (p.y - extent.y_min) / cell_size;
        if (fx < 0.0 || fy < 0.0) continue;
        const int ix = static_cast<int>(fx);
        const int iy = static_cast<int>(fy);
        if (ix >= W || iy >= H) continue;
        const std::size_t cell = static_cast<std::size_t>(iy) * W + ix;
        ++count[cell];
        zsum[cell] += p.z;
        if (count[cell] == 1 || p.z > zmax[cell]) zmax[cell] = p.z;
    }

    PseudoImage img;
    img.cell_size = cell_size;
    img.origin_x = extent.x_min;
    img.origin_y = extent.y_min;
    img.channels = Tensor({3, H, W});
    double* occ = img.channels.data();
    double* mean_h = occ + static_cast<std::size_t>(H) * W;
    double* max_h = mean_h + static_cast<std::size_t>(H) * W;
    for (std::size_t cell = 0; cell < count.size(); ++cell) {
        if (count[cell] == 0) continue;
        const double n = static_cast<double>(count[cell]);
        occ[cell] = std::min(n, kVoxelSaturation) / kVoxelSaturation;
        mean_h[cell] = std::clamp(zsum[cell] / n / kVoxelHeightCap, 0.0, 1.0);
        max_h[cell] = std::clamp(zmax[cell] / kVoxelHeightCap, 0.0, 1.0);
    }
    return img;
}

double crop_cell_meters(const Box3D& box, double context_scale, int out_size) {
    return context_scale * box.max_footprint() / static_cast<double>(out_size);
}

Tensor crop_region(const PseudoImage& img, const Box3D& box, double context_scale, double rotation, int out_size) {
    validate_box(box);
    if (context_scale < 1.0) throw ConfigError("crop_region context_scale must be >= 1");
    if (out_size < 1) throw ConfigError("crop_region out_size must be >= 1");

    const int C = img.channels.dim(0), H = img.channels.dim(1), W = img.channels.dim(2);
    const double side = context_scale * box.max_footprint();
    const double theta = box.yaw + rotation;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double step = side / static_cast<double>(out_size);

    Tensor out({C, out_size, out_size});
    const double* src = img.channels.data();
    double* dst = out.data();
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t out_plane = static_cast<std::size_t>(out_size) * out_size;

#pragma omp parallel for collapse(2) schedule(static)
    for (int r = 0; r < out_size; ++r) {
        for (int c = 0; c < out_size; ++c) {
            const double lx = -side / 2.0 + (c + 0.5) * step;
            const double ly = -side / 2.0 + (r + 0.5) * step;
            const double wx = box.center.x + ct * lx - st * ly;
            const double wy = box.center.y + st * lx + ct * ly;
            // continuous cell coordinates; integer values land on cell centers
            const double gx = (wx - img.origin_x) / img.cell_size - 0.5;
            const double gy = (wy - img.origin_y) / img.cell_size - 0.5;
            const int x0 = static_cast<int>(std::floor(gx));
            const int y0 = static_cast<int>(std::floor(gy));
            const double fx = gx - x0, fy = gy - y0;
            const double w00 = (1.0 - fx) * (1.0 - fy);
            const double w01 = fx * (1.0 - fy);
            const double w10 = (1.0 - fx) * fy;
            const double w11 = fx * fy;
            for (int ch = 0; ch < C; ++ch) {
                const double* p = src + static_cast<std::size_t>(ch) * plane;
                auto sample = [&](int yy, int xx) -> double {
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) return 0.0;
                    return p[static_cast<std::size_t>(yy) * W + xx];
                };
                double v = 0.0;
                if (w00 > 0.0) v += w00 * sample(y0, x0);
                if (w01 > 0.0) v += w01 * sample(y0, x0 + 1);
                if (w10 > 0.0) v += w10 * sample(y0 + 1, x0);
                if (w11 > 0.0) v += w11 * sample(y0 + 1, x0 + 1);
                dst[static_cast<std::size_t>(ch) * out_plane + static_cast<std::size_t>(r) * out_size + c] = v;
            }
        }
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end)
        throw DataError("bad number '" + std::string(s) + "' in " + context);
    return v;
}

std::string frame_file_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "frame_%05d.xyz", index);
    return buf;
}

}  // namespace

void save_sequence(const std::vector<PointCloudFrame>& frames, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream gt(fs::path(dir) / "gt.csv", std::ios::binary);
    if (!gt) throw DataError("cannot write " + dir + "/gt.csv");
    gt << "frame,cx,cy,cz,l,w,h,yaw\n";
    for (const PointCloudFrame& frame : frames) {
        const Box3D& b = frame.gt_box;
        gt << frame.frame_index << ',' << format_double(b.center.x) << ',' << format_double(b.center.y) << ','
           << format_double(b.center.z) << ',' << format_double(b.length) << ',' << format_double(b.width) << ','
           << format_double(b.height) << ',' << format_double(b.yaw) << '\n';

        std::ofstream xyz(fs::path(dir) / frame_file_name(frame.frame_index), std::ios::binary);
        if (!xyz) throw DataError("cannot write frame file in " + dir);
        for (const Vec3& p : frame.points)
            xyz << format_double(p.x) << ' ' << format_double(p.y) << ' ' << format_double(p.z) << '\n';
    }
}

std::vector<PointCloudFrame> load_sequence(const std::string& dir) {
    std::ifstream gt(fs::path(dir) / "gt.csv", std::ios::binary);
    if (!gt) throw DataError("cannot open " + dir + "/gt.csv");
    std::string line;
    if (!std::getline(gt, line) || line != "frame,cx,cy,cz,l,w,h,yaw")
        throw DataError("bad gt.csv header in " + dir);

    std::vector<PointCloudFrame> frames;
    while (std::getline(gt, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string col;
        while (std::getline(ss, col, ',')) cols.push_back(col);
        if (cols.size() != 8) throw DataError("bad gt.csv row in " + dir + ": " + line);

        PointCloudFrame frame;
        frame.frame_index = static_cast<int>(parse_double(cols[0], "gt.csv frame"));
        frame.gt_box.center = Vec3{parse_double(cols[1], "gt.csv cx"), parse_double(cols[2], "gt.csv cy"),
                                   parse_double(cols[3], "gt.csv cz")};
        frame.gt_box.length = parse_double(cols[4], "gt.csv l");
        frame.gt_box.width = parse_double(cols[5], "gt.csv w");
        frame.gt_box.height = parse_double(cols[6], "gt.csv h");
        frame.gt_box.yaw = parse_double(cols[7], "gt.csv yaw");

        std::ifstream xyz(fs::path(dir) / frame_file_name(frame.frame_index), std::ios::binary);
        if (!xyz) throw DataError("missing frame file for frame " + std::to_string(frame.frame_index) + " in " + dir);
        std::string pline;
        while (std::getline(xyz, pline)) {
            if (pline.empty()) continue;
            std::stringstream ps(pline);
            std::string a, b, c;
            if (!(ps >> a >> b >> c)) throw DataError("bad point line in " + dir + ": " + pline);
            frame.points.push_back(
                Vec3{parse_double(a, "xyz"), parse_double(b, "xyz"), parse_double(c, "xyz")});
        }
        frames.push_back(std::move(frame));
    }
    if (frames.empty()) throw DataError("sequence " + dir + " has no frames");
    return frames;
}

}  // namespace vvpit
