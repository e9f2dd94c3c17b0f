#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "reference.hpp"
#include "support/test_util.hpp"
#include "vvpit/errors.hpp"
#include "vvpit/eval.hpp"

using namespace vvpit;

namespace {

Box3D box_at(double x, double y, double z, double l, double w, double h, double yaw) {
    Box3D b;
    b.center = Vec3{x, y, z};
    b.length = l;
    b.width = w;
    b.height = h;
    b.yaw = yaw;
    return b;
}

TrackResult result_with_ious(const std::vector<double>& offsets) {
    // unit cubes displaced along x produce exactly controllable IoU
    TrackResult r;
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        r.frames.push_back(static_cast<int>(i));
        r.ground_truth.push_back(box_at(0, 0, 0, 1, 1, 1, 0));
        r.predicted.push_back(box_at(offsets[i], 0, 0, 1, 1, 1, 0));
    }
    return r;
}

}  // namespace

TEST_CASE("iou3d of identical boxes is 1") {
    const Box3D b = box_at(1.0, -2.0, 0.5, 4.0, 2.0, 1.5, 0.7);
    CHECK(iou3d(b, b) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("iou3d of disjoint boxes is 0") {
    CHECK(iou3d(box_at(0, 0, 0, 1, 1, 1, 0), box_at(5, 5, 0, 1, 1, 1, 0.3)) == 0.0);
    // overlapping footprints but separated in z
    CHECK(iou3d(box_at(0, 0, 0, 1, 1, 1, 0), box_at(0, 0, 3, 1, 1, 1, 0)) == 0.0);
}

TEST_CASE("iou3d analytic case: unit cubes offset by half") {
    CHECK(iou3d(box_at(0, 0, 0, 1, 1, 1, 0), box_at(0.5, 0, 0, 1, 1, 1, 0)) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("iou3d matches the Monte Carlo oracle on random yawed pairs") {
    Rng rng(1);
    for (int trial = 0; trial < 12; ++trial) {
        const Box3D a = box_at(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-0.3, 0.3), rng.uniform(1.5, 4.0),
                               rng.uniform(1.0, 2.5), rng.uniform(1.0, 2.0), rng.uniform(-3.1, 3.1));
        const Box3D b = box_at(a.center.x + rng.uniform(-1.5, 1.5), a.center.y + rng.uniform(-1.5, 1.5),
                               a.center.z + rng.uniform(-0.4, 0.4), rng.uniform(1.5, 4.0), rng.uniform(1.0, 2.5),
                               rng.uniform(1.0, 2.0), rng.uniform(-3.1, 3.1));
        const double exact = iou3d(a, b);
        const double mc = ref::iou3d_mc(a, b, 1000000, 4000 + static_cast<std::uint64_t>(trial));
        CHECK(std::abs(exact - mc) < 2e-3);
    }
}

TEST_CASE("iou3d is symmetric and rigid-invariant") {
    Rng rng(2);
    for (int trial = 0; trial < 30; ++trial) {
        const Box3D a = box_at(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-1, 1), rng.uniform(1, 4),
                               rng.uniform(1, 3), rng.uniform(1, 2), rng.uniform(-3, 3));
        const Box3D b = box_at(a.center.x + rng.uniform(-2, 2), a.center.y + rng.uniform(-2, 2),
                               a.center.z + rng.uniform(-0.5, 0.5), rng.uniform(1, 4), rng.uniform(1, 3),
                               rng.uniform(1, 2), rng.uniform(-3, 3));
        CHECK(std::abs(iou3d(a, b) - iou3d(b, a)) < 1e-12);

        const double tx = rng.uniform(-10, 10), ty = rng.uniform(-10, 10), phi = rng.uniform(-3, 3);
        auto moved = [&](const Box3D& box) {
            Box3D out = box;
            const double c = std::cos(phi), s = std::sin(phi);
            out.center.x = tx + c * box.center.x - s * box.center.y;
            out.center.y = ty + s * box.center.x + c * box.center.y;
            out.yaw = normalize_yaw(box.yaw + phi);
            return out;
        };
        CHECK(std::abs(iou3d(moved(a), moved(b)) - iou3d(a, b)) < 1e-9);
    }
}

TEST_CASE("iou3d rejects degenerate boxes") {
    Box3D bad = box_at(0, 0, 0, 1, 1, 1, 0);
    bad.width = 0.0;
    CHECK_THROWS_AS(iou3d(bad, box_at(0, 0, 0, 1, 1, 1, 0)), DataError);
}

TEST_CASE("success_auc threshold rules") {
    // perfect track: IoU 1 passes all thresholds except tau=1 (strict)
    const TrackResult perfect = result_with_ious({0.0, 0.0, 0.0});
    CHECK(success_auc(perfect) == doctest::Approx(100.0 * 20.0 / 21.0).epsilon(1e-12));

    // all-miss track: IoU 0 is never strictly above any tau >= 0
    const TrackResult miss = result_with_ious({5.0, 5.0});
    CHECK(success_auc(miss) == 0.0);
}

TEST_CASE("success_auc hand enumeration for a two-frame track") {
    const TrackResult r = result_with_ious({1.0 / 3.0, 0.0});
    const double iou0 = iou3d(r.predicted[0], r.ground_truth[0]);  // ~0.5
    const double iou1 = iou3d(r.predicted[1], r.ground_truth[1]);  // 1.0
    double acc = 0.0;
    for (int k = 0; k < 21; ++k) {
        const double tau = k / 20.0;
        double pass = 0.0;
        if (iou0 > tau) pass += 1.0;
        if (iou1 > tau) pass += 1.0;
        acc += pass / 2.0;
    }
    CHECK(success_auc(r) == doctest::Approx(100.0 * acc / 21.0).epsilon(1e-12));
}

TEST_CASE("precision_auc threshold rules") {
    const TrackResult zero_error = result_with_ious({0.0, 0.0});
    CHECK(precision_auc(zero_error) == doctest::Approx(100.0 * 20.0 / 21.0).epsilon(1e-12));

    const TrackResult far = result_with_ious({5.0});
    CHECK(precision_auc(far) == 0.0);

    // single frame at exactly 1.0 m: passes d in {1.1, ..., 2.0}, 10 of 21 samples
    const TrackResult one_meter = result_with_ious({1.0});
    CHECK(precision_auc(one_meter) == doctest::Approx(100.0 * 10.0 / 21.0).epsilon(1e-12));
}

TEST_CASE("metrics error on empty results") {
    CHECK_THROWS_AS(success_auc(TrackResult{}), DataError);
    CHECK_THROWS_AS(precision_auc(TrackResult{}), DataError);
}

TEST_CASE("metrics are monotone in per-frame quality") {
    Rng rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> offsets;
        for (int i = 0; i < 6; ++i) offsets.push_back(rng.uniform(0.0, 2.0));
        const double base_s = success_auc(result_with_ious(offsets));
        const double base_p = precision_auc(result_with_ious(offsets));

        // improving one frame (smaller offset => larger IoU, smaller distance)
        std::vector<double> better = offsets;
        const std::size_t which = rng.index(better.size());
        better[which] *= rng.uniform(0.0, 0.9);
        CHECK(success_auc(result_with_ious(better)) >= base_s - 1e-12);
        CHECK(precision_auc(result_with_ious(better)) >= base_p - 1e-12);
    }
}

TEST_CASE("track result validation") {
    TrackResult bad;
    bad.frames = {0, 0};
    bad.predicted = {box_at(0, 0, 0, 1, 1, 1, 0), box_at(0, 0, 0, 1, 1, 1, 0)};
    bad.ground_truth = bad.predicted;
    CHECK_THROWS_AS(validate_track_result(bad), DataError);
}

TEST_CASE("static baseline scores ground truth tracks at the rule maximum") {
    SceneConfig cfg;
    cfg.frame_count = 4;
    cfg.speed_min = cfg.speed_max = 0.0;
    cfg.yaw_rate_min = cfg.yaw_rate_max = 0.0;
    cfg.noise_sigma = 0.0;
    cfg.dropout = 0.0;
    cfg.seed = 4;
    const std::vector<Sequence> data = {generate_sequence(cfg)};
    const EvalReport report = static_baseline(data);
    CHECK(report.success == doctest::Approx(100.0 * 20.0 / 21.0).epsilon(1e-12));
    CHECK(report.precision == doctest::Approx(100.0 * 20.0 / 21.0).epsilon(1e-12));
    CHECK(report.frames == 4);
}

TEST_CASE("report csv layout") {
    EvalReport report;
    report.mode = XcorrMode::double_similarity;
    report.sample_count = 8;
    report.lambda = 0.5;
    report.rho = 2.0;
    report.success = 51.25;
    report.precision = 64.5;
    report.frames = 300;
    report.seed = 42;

    const std::string path = (std::filesystem::temp_directory_path() / "vvpit_report_test.csv").string();
    write_report_csv(report, path);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "mode,P,lambda,rho,success,precision,frames,seed");
    CHECK(row == "double,8,0.5,2,51.25,64.5,300,42");
    std::filesystem::remove(path);
}
