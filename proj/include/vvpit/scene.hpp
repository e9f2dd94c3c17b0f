#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vvpit/tensor.hpp"

namespace vvpit {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

// Upright 3D box: center, size (length, width, height) and yaw about the
// vertical axis, yaw normalized to (-pi, pi].
struct Box3D {
    Vec3 center;
    double length = 1.0, width = 1.0, height = 1.0;
    double yaw = 0.0;

    double max_footprint() const { return length > width ? length : width; }
    double volume() const { return length * width * height; }
};

double normalize_yaw(double yaw);
void validate_box(const Box3D& box);  // throws DataError on non-positive size

struct PointCloudFrame {
    std::vector<Vec3> points;
    Box3D gt_box;
    int frame_index = 0;
};

// BEV voxel pseudo image: 3 channels (occupancy, mean height, max height),
// every channel normalized into [0, 1].
struct PseudoImage {
    Tensor channels;  // 3×H×W
    double cell_size = 0.25;
    double origin_x = 0.0, origin_y = 0.0;  // world position of cell (0, 0) corner
};

struct Extent {
    double x_min = -24.0, x_max = 24.0;
    double y_min = -24.0, y_max = 24.0;
};

struct SceneConfig {
    int frame_count = 60;

    // object trajectory: fixed speed along the heading, fixed yaw rate, both
    // drawn once per sequence from the ranges below
    Vec3 init_center{0.0, 0.0, 0.8};
    double init_yaw = 0.0;
    double object_length = 4.2, object_width = 1.9, object_height = 1.6;
    double speed_min = 0.10, speed_max = 0.30;        // meters per frame
    double yaw_rate_min = -0.02, yaw_rate_max = 0.02; // radians per frame

    double object_density = 24.0;      // points per m^2 of box surface
    double background_density = 0.05;  // ground points per m^2 of extent
    int clutter_count = 6;
    double clutter_density = 16.0;

    double noise_sigma = 0.02;  // meters
    double dropout = 0.05;      // per-point removal probability, in [0, 1)

    Extent extent;
    std::uint64_t seed = 0;
};

void validate_scene_config(const SceneConfig& cfg);

// Deterministic given cfg.seed; each frame's randomness derives from
// (seed, frame_index) so frames may be generated in any order.
std::vector<PointCloudFrame> generate_sequence(const SceneConfig& cfg);

// Per-sequence variant of a base config: fresh sub-seed plus a randomized
// initial pose so a dataset covers headings and positions.
SceneConfig sequence_variant(const SceneConfig& base, std::uint64_t run_seed, int index);

constexpr double kVoxelSaturation = 16.0;  // points per cell mapping occupancy to 1
constexpr double kVoxelHeightCap = 3.0;    // meters mapping height channels to 1

PseudoImage voxelize(const PointCloudFrame& frame, double cell_size, const Extent& extent);

// Square region of side context_scale*max(length,width) centered on the box,
// rotated by box.yaw + rotation, bilinearly resampled to out_size×out_size
// cells. Out-of-image samples read as zero.
Tensor crop_region(const PseudoImage& img, const Box3D& box, double context_scale, double rotation, int out_size);

// Meters covered by one cell of such a crop.
double crop_cell_meters(const Box3D& box, double context_scale, int out_size);

// --- sequence persistence ------------------------------------------------
// One directory per sequence: frame_%05d.xyz ("x y z" per line) plus gt.csv
// with header frame,cx,cy,cz,l,w,h,yaw.

void save_sequence(const std::vector<PointCloudFrame>& frames, const std::string& dir);
std::vector<PointCloudFrame> load_sequence(const std::string& dir);

// Round-trip double formatting (shortest representation that parses back
// exactly).
std::string format_double(double v);

}  // namespace vvpit
