#include "vvpit/tracker.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "vvpit/errors.hpp"
#include "vvpit/rng.hpp"

namespace vvpit {

void validate_tracker_config(const TrackerConfig& cfg) {
    if (cfg.sample_count < 1) throw ConfigError("tracker sample_count must be >= 1");
    if (cfg.rotation_candidates < 1 || cfg.rotation_candidates % 2 == 0)
        throw ConfigError("tracker rotation_candidates must be odd");
    if (cfg.rotation_penalty <= 0.0 || cfg.rotation_penalty > 1.0)
        throw ConfigError("tracker rotation_penalty must be in (0, 1]");
    if (cfg.context_target < 1.0 || cfg.context_search < 1.0)
        throw ConfigError("tracker context scales must be >= 1");
    if (cfg.size_target < 1 || cfg.size_search < 1) throw ConfigError("tracker region sizes must be >= 1");
    if (cfg.size_target > cfg.size_search) throw ConfigError("tracker target region larger than search region");
    if (cfg.window_weight < 0.0 || cfg.window_weight >= 1.0)
        throw ConfigError("tracker window_weight must be in [0, 1)");
    if (cfg.cell_size <= 0.0) throw ConfigError("tracker cell_size must be positive");
    if (cfg.xcorr.lambda < 0.0) throw ConfigError("xcorr lambda must be >= 0");
    if (cfg.xcorr.rho < 1.0) throw ConfigError("xcorr rho must be >= 1");
}

namespace {

bool all_zero(const Tensor& t) {
    for (double v : t.values())
        if (v != 0.0) return false;
    return true;
}

}  // namespace

TrackerState tracker_init(const PointCloudFrame& frame, const Box3D& init_box, const VfgnParams& params,
                          const TrackerConfig& cfg) {
    validate_tracker_config(cfg);
    validate_box(init_box);
    validate_vfgn(params);

    const PseudoImage img = voxelize(frame, cfg.cell_size, cfg.extent);
    const Tensor target = crop_region(img, init_box, cfg.context_target, 0.0, cfg.size_target);
    if (all_zero(target)) throw DataError("tracker init: empty target region");

    TrackerState state;
    state.current_box = init_box;
    state.current_box.yaw = normalize_yaw(init_box.yaw);
    state.net = params;
    state.config = cfg;
    state.frame_index = frame.frame_index;
    state.target_set = sample_set(params, target, cfg.sample_count, derive_seed(cfg.seed, "target"));
    return state;
}

StepResult tracker_step(TrackerState& state, const PointCloudFrame& frame) {
    const TrackerConfig& cfg = state.config;
    const PseudoImage img = voxelize(frame, cfg.cell_size, cfg.extent);
    const Box3D& box = state.current_box;

    const int half = (cfg.rotation_candidates - 1) / 2;
    const double cell_m = crop_cell_meters(box, cfg.context_search, cfg.size_search);
    const std::uint64_t frame_seed =
        derive_seed(derive_seed(cfg.seed, "search"), static_cast<std::uint64_t>(frame.frame_index));

    bool any_valid = false;
    double best_score = -std::numeric_limits<double>::infinity();
    double best_rotation = 0.0;
    PeakOffset best_peak;

    for (int cand = 0; cand < cfg.rotation_candidates; ++cand) {
        const double rotation = (cand - half) * cfg.rotation_step;
        const Tensor crop = crop_region(img, box, cfg.context_search, rotation, cfg.size_search);
        if (all_zero(crop)) continue;
        any_valid = true;

        const VariationalOutputSet search_set =
            sample_set(state.net, crop, cfg.sample_count, derive_seed(frame_seed, static_cast<std::uint64_t>(cand)));

        ScoreMap map = fuse_xcorr(cfg.xcorr, search_set.mean, state.target_set.mean, search_set.variance,
                                  state.target_set.variance);
        map.cell_meters = cell_m;
        map.rotation = box.yaw + rotation;

        PeakOffset peak = peak_to_offset(map, cfg.window_weight);
        double score = peak.score;
        if (rotation != 0.0) score *= cfg.rotation_penalty;
        if (score > best_score) {
            best_score = score;
            best_rotation = rotation;
            best_peak = peak;
        }
    }

    StepResult result;
    if (!any_valid) {
        state.search_empty = true;
        state.frame_index = frame.frame_index;
        result.box = state.current_box;
        result.score = 0.0;
        return result;
    }
    state.search_empty = false;

    const double theta = box.yaw + best_rotation;
    const double lx = best_peak.dx_cells * cell_m;
    const double ly = best_peak.dy_cells * cell_m;
    Box3D next = box;
    next.center.x += std::cos(theta) * lx - std::sin(theta) * ly;
    next.center.y += std::sin(theta) * lx + std::cos(theta) * ly;
    next.yaw = normalize_yaw(box.yaw + best_rotation);

    state.current_box = next;
    state.frame_index = frame.frame_index;
    result.box = next;
    result.score = best_score;
    result.rotation = best_rotation;
    return result;
}

void write_track_csv(const std::vector<TrackRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write track csv " + path);
    out << "frame,cx,cy,cz,l,w,h,yaw,score,mode\n";
    for (const TrackRow& row : rows) {
        const Box3D& b = row.box;
        out << row.frame << ',' << format_double(b.center.x) << ',' << format_double(b.center.y) << ','
            << format_double(b.center.z) << ',' << format_double(b.length) << ',' << format_double(b.width) << ','
            << format_double(b.height) << ',' << format_double(b.yaw) << ',' << format_double(row.score) << ','
            << row.mode << '\n';
    }
}

}  // namespace vvpit
