#include <doctest.h>

#include <cmath>

#include "support/test_util.hpp"
#include "vvpit/errors.hpp"
#include "vvpit/tracker.hpp"

using namespace vvpit;
using testutil::bit_equal;

namespace {

// Identity-on-occupancy feature net: one 1x1 layer copying channel 0 with a
// collapsed variance branch.
VfgnParams stub_net() {
    VfgnParams params;
    VariationalConvLayer layer;
    layer.mean_kernel = Tensor({1, 3, 1, 1}, {1.0, 0.0, 0.0});
    layer.mean_bias = Tensor({1});
    layer.var_kernel = Tensor({1, 3, 1, 1});
    layer.var_bias = Tensor::full({1}, -40.0);
    params.layers.push_back(layer);
    return params;
}

TrackerConfig stub_config() {
    TrackerConfig cfg;
    cfg.sample_count = 1;
    cfg.xcorr.mode = XcorrMode::averaging;
    cfg.cell_size = 1.0 / 3.0;
    cfg.extent = Extent{-8.0, 8.0, -8.0, 8.0};
    cfg.context_target = 1.5;
    cfg.context_search = 2.0;
    cfg.size_target = 18;
    cfg.size_search = 24;
    cfg.window_weight = 0.0;
    cfg.rotation_candidates = 1;
    cfg.seed = 5;
    return cfg;
}

Box3D stub_box(double x, double y, double yaw = 0.0) {
    Box3D box;
    box.center = Vec3{x, y, 0.8};
    box.length = 4.0;
    box.width = 2.0;
    box.height = 1.6;
    box.yaw = yaw;
    return box;
}

// An asymmetric L-shaped point pattern in box-local coordinates.
std::vector<Vec3> pattern_local() {
    std::vector<Vec3> pts;
    for (int i = -5; i <= 5; ++i) pts.push_back(Vec3{i * 1.0 / 3.0, 0.0, 0.8});
    for (int j = 1; j <= 2; ++j) pts.push_back(Vec3{5.0 / 3.0, j * 1.0 / 3.0, 0.8});
    pts.push_back(Vec3{-5.0 / 3.0, -1.0 / 3.0, 1.4});
    return pts;
}

PointCloudFrame pattern_frame(int index, const Box3D& box) {
    PointCloudFrame frame;
    frame.frame_index = index;
    frame.gt_box = box;
    const double c = std::cos(box.yaw), s = std::sin(box.yaw);
    for (const Vec3& local : pattern_local()) {
        // nudge off the cell border so each point lands in a unique cell
        const double lx = local.x + 0.05, ly = local.y + 0.05;
        frame.points.push_back(
            Vec3{box.center.x + c * lx - s * ly, box.center.y + s * lx + c * ly, box.center.z + local.z - 0.8});
    }
    return frame;
}

}  // namespace

TEST_CASE("init freezes finite non-zero target features") {
    SceneConfig scene;
    scene.frame_count = 1;
    scene.noise_sigma = 0.0;
    scene.dropout = 0.0;
    scene.seed = 31;
    const PointCloudFrame frame = generate_sequence(scene)[0];

    TrackerConfig cfg = stub_config();
    cfg.extent = scene.extent;
    cfg.cell_size = 0.25;
    const TrackerState state = tracker_init(frame, frame.gt_box, stub_net(), cfg);
    CHECK(state.target_set.mean.all_finite());
    bool nonzero = false;
    for (double v : state.target_set.mean.values())
        if (v != 0.0) nonzero = true;
    CHECK(nonzero);
}

TEST_CASE("init with P=1 has all-zero target variance") {
    const PointCloudFrame frame = pattern_frame(0, stub_box(0, 0));
    const TrackerState state = tracker_init(frame, frame.gt_box, stub_net(), stub_config());
    for (double v : state.target_set.variance.values()) CHECK(v == 0.0);
}

TEST_CASE("init is bit-deterministic") {
    SceneConfig scene;
    scene.frame_count = 1;
    scene.seed = 33;
    const PointCloudFrame frame = generate_sequence(scene)[0];
    TrackerConfig cfg = stub_config();
    cfg.extent = scene.extent;
    cfg.cell_size = 0.25;
    cfg.sample_count = 4;

    VfgnArch arch;
    arch.channels = {3, 4, 4};
    const VfgnParams net = make_vfgn(arch, 71);
    const TrackerState a = tracker_init(frame, frame.gt_box, net, cfg);
    const TrackerState b = tracker_init(frame, frame.gt_box, net, cfg);
    CHECK(bit_equal(a.target_set.mean, b.target_set.mean));
    CHECK(bit_equal(a.target_set.variance, b.target_set.variance));
}

TEST_CASE("init on an empty region fails") {
    PointCloudFrame frame;  // no points at all
    frame.gt_box = stub_box(0, 0);
    CHECK_THROWS_AS(tracker_init(frame, frame.gt_box, stub_net(), stub_config()), DataError);
}

TEST_CASE("static pattern stays locked at zero error") {
    const Box3D box = stub_box(0, 0);
    TrackerState state = tracker_init(pattern_frame(0, box), box, stub_net(), stub_config());
    for (int k = 1; k <= 5; ++k) {
        const StepResult step = tracker_step(state, pattern_frame(k, box));
        CHECK(std::abs(step.box.center.x - box.center.x) < 1e-9);
        CHECK(std::abs(step.box.center.y - box.center.y) < 1e-9);
    }
}

TEST_CASE("translation by an exact cell count is recovered") {
    const Box3D box0 = stub_box(0, 0);
    TrackerState state = tracker_init(pattern_frame(0, box0), box0, stub_net(), stub_config());

    const double cell = 2.0 * 4.0 / 24.0;  // crop cell in meters
    const Box3D box1 = stub_box(2.0 * cell, -1.0 * cell);
    const StepResult step = tracker_step(state, pattern_frame(1, box1));
    CHECK(step.box.center.x == doctest::Approx(box1.center.x).epsilon(1e-9));
    CHECK(step.box.center.y == doctest::Approx(box1.center.y).epsilon(1e-9));
}

TEST_CASE("rotation candidate matching the scene yaw rate wins") {
    TrackerConfig cfg = stub_config();
    cfg.rotation_candidates = 3;
    cfg.rotation_step = 0.3;
    cfg.rotation_penalty = 0.98;

    const Box3D box0 = stub_box(0, 0, 0.0);
    TrackerState state = tracker_init(pattern_frame(0, box0), box0, stub_net(), cfg);

    const Box3D box1 = stub_box(0, 0, 0.3);
    const StepResult step = tracker_step(state, pattern_frame(1, box1));
    CHECK(step.rotation == doctest::Approx(0.3));
    CHECK(step.box.yaw == doctest::Approx(0.3));
}

TEST_CASE("step never moves the box beyond the search radius") {
    SceneConfig scene;
    scene.frame_count = 6;
    scene.speed_min = 0.2;
    scene.speed_max = 0.3;
    scene.seed = 35;
    const auto frames = generate_sequence(scene);

    TrackerConfig cfg = stub_config();
    cfg.extent = scene.extent;
    cfg.cell_size = 0.25;
    cfg.rotation_candidates = 3;
    cfg.window_weight = 0.25;
    TrackerState state = tracker_init(frames[0], frames[0].gt_box, stub_net(), cfg);

    const double radius = cfg.context_search * frames[0].gt_box.max_footprint() / 2.0 + 1e-9;
    Box3D prev = frames[0].gt_box;
    for (std::size_t k = 1; k < frames.size(); ++k) {
        const StepResult step = tracker_step(state, frames[k]);
        const double dx = step.box.center.x - prev.center.x;
        const double dy = step.box.center.y - prev.center.y;
        CHECK(std::sqrt(dx * dx + dy * dy) <= radius);
        prev = step.box;
    }
}

TEST_CASE("empty search region carries the box over and flags the state") {
    const Box3D box = stub_box(0, 0);
    TrackerState state = tracker_init(pattern_frame(0, box), box, stub_net(), stub_config());

    PointCloudFrame empty;
    empty.frame_index = 1;
    empty.gt_box = box;
    empty.points.push_back(Vec3{100.0, 100.0, 0.0});  // outside the extent
    const StepResult step = tracker_step(state, empty);
    CHECK(state.search_empty);
    CHECK(step.box.center.x == box.center.x);
    CHECK(step.box.center.y == box.center.y);
    CHECK(step.score == 0.0);
}

TEST_CASE("averaging with P=1 and a collapsed branch matches every fusion mode") {
    // the variance path is provably inert: all three modes agree step by step
    SceneConfig scene;
    scene.frame_count = 5;
    scene.seed = 36;
    const auto frames = generate_sequence(scene);

    VfgnArch arch;
    arch.channels = {3, 4, 4};
    const VfgnParams net = collapse_variance(make_vfgn(arch, 72));

    TrackerConfig base = stub_config();
    base.extent = scene.extent;
    base.cell_size = 0.25;
    base.sample_count = 1;
    base.rotation_candidates = 3;

    std::vector<Box3D> results[3];
    const XcorrMode modes[3] = {XcorrMode::averaging, XcorrMode::double_similarity, XcorrMode::penalization};
    for (int m = 0; m < 3; ++m) {
        TrackerConfig cfg = base;
        cfg.xcorr.mode = modes[m];
        cfg.xcorr.lambda = 0.7;
        cfg.xcorr.rho = 3.0;
        TrackerState state = tracker_init(frames[0], frames[0].gt_box, net, cfg);
        for (std::size_t k = 1; k < frames.size(); ++k) results[m].push_back(tracker_step(state, frames[k]).box);
    }
    for (std::size_t k = 0; k < results[0].size(); ++k) {
        for (int m = 1; m < 3; ++m) {
            CHECK(results[m][k].center.x == doctest::Approx(results[0][k].center.x).epsilon(1e-12));
            CHECK(results[m][k].center.y == doctest::Approx(results[0][k].center.y).epsilon(1e-12));
            CHECK(results[m][k].yaw == doctest::Approx(results[0][k].yaw).epsilon(1e-12));
        }
    }
}

TEST_CASE("tracker config validation") {
    TrackerConfig cfg = stub_config();
    cfg.rotation_candidates = 2;
    CHECK_THROWS_AS(validate_tracker_config(cfg), ConfigError);
    cfg = stub_config();
    cfg.window_weight = 1.0;
    CHECK_THROWS_AS(validate_tracker_config(cfg), ConfigError);
    cfg = stub_config();
    cfg.size_target = 30;
    CHECK_THROWS_AS(validate_tracker_config(cfg), ConfigError);
}
