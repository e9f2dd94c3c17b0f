#include <benchmark/benchmark.h>

#include "reference.hpp"
#include "vvpit/ops.hpp"
#include "vvpit/rng.hpp"
#include "vvpit/scene.hpp"
#include "vvpit/tensor.hpp"
#include "vvpit/xcorr.hpp"

// Serial reference kernels vs the OpenMP kernels in vvpit_core. Sizes match
// the tracker defaults (search 24 -> 18-cell features after three 3x3 convs).

using namespace vvpit;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
    return t;
}

Tensor random_nonneg(std::vector<int> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& v : t.values()) v = rng.uniform(0.0, 1.0);
    return t;
}

void bm_conv2d_serial(benchmark::State& state) {
    const Tensor x = random_tensor({12, 24, 24}, 1);
    const Tensor k = random_tensor({12, 12, 3, 3}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(ref::conv2d(x, k, 1, 0));
}

void bm_conv2d_omp(benchmark::State& state) {
    const Tensor x = random_tensor({12, 24, 24}, 1);
    const Tensor k = random_tensor({12, 12, 3, 3}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, 0));
}

void bm_xcorr_pen_serial(benchmark::State& state) {
    const Tensor ms = random_tensor({12, 18, 18}, 3);
    const Tensor mt = random_tensor({12, 12, 12}, 4);
    const Tensor vs = random_nonneg({12, 18, 18}, 5);
    const Tensor vt = random_nonneg({12, 12, 12}, 6);
    for (auto _ : state) benchmark::DoNotOptimize(ref::xcorr_penalized(ms, mt, vs, vt, 2.0));
}

void bm_xcorr_pen_omp(benchmark::State& state) {
    const Tensor ms = random_tensor({12, 18, 18}, 3);
    const Tensor mt = random_tensor({12, 12, 12}, 4);
    const Tensor vs = random_nonneg({12, 18, 18}, 5);
    const Tensor vt = random_nonneg({12, 12, 12}, 6);
    for (auto _ : state) benchmark::DoNotOptimize(xcorr_penalized(ms, mt, vs, vt, 2.0));
}

PointCloudFrame bench_frame() {
    SceneConfig cfg;
    cfg.frame_count = 1;
    cfg.seed = 7;
    return generate_sequence(cfg)[0];
}

void bm_voxelize_serial(benchmark::State& state) {
    const PointCloudFrame frame = bench_frame();
    const Extent extent;
    for (auto _ : state) benchmark::DoNotOptimize(ref::voxelize(frame, 0.25, extent));
}

void bm_voxelize_grid(benchmark::State& state) {
    const PointCloudFrame frame = bench_frame();
    const Extent extent;
    for (auto _ : state) benchmark::DoNotOptimize(voxelize(frame, 0.25, extent));
}

void bm_crop_region(benchmark::State& state) {
    const PointCloudFrame frame = bench_frame();
    const PseudoImage img = voxelize(frame, 0.25, Extent{});
    for (auto _ : state) benchmark::DoNotOptimize(crop_region(img, frame.gt_box, 2.0, 0.1, 24));
}

BENCHMARK(bm_conv2d_serial);
BENCHMARK(bm_conv2d_omp);
BENCHMARK(bm_xcorr_pen_serial);
BENCHMARK(bm_xcorr_pen_omp);
BENCHMARK(bm_voxelize_serial);
BENCHMARK(bm_voxelize_grid);
BENCHMARK(bm_crop_region);

}  // namespace

BENCHMARK_MAIN();
