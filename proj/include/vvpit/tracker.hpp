#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vvpit/scene.hpp"
#include "vvpit/vnet.hpp"
#include "vvpit/xcorr.hpp"

namespace vvpit {

struct TrackerConfig {
    int sample_count = 8;  // P
    XcorrConfig xcorr;

    double rotation_step = 0.1;      // radians between yaw candidates
    int rotation_candidates = 3;     // odd, so the zero-rotation candidate exists
    double rotation_penalty = 0.98;  // peak-score multiplier for non-zero rotations

    double context_target = 1.5;
    double context_search = 2.0;
    int size_target = 18;  // cells
    int size_search = 24;  // cells

    double window_weight = 0.25;
    double cell_size = 0.25;  // meters per voxel cell
    Extent extent;
    std::uint64_t seed = 0;
};

void validate_tracker_config(const TrackerConfig& cfg);

struct TrackerState {
    Box3D current_box;
    VariationalOutputSet target_set;  // frozen at init
    VfgnParams net;
    TrackerConfig config;
    int frame_index = 0;
    bool search_empty = false;  // last step saw an empty search region
};

struct StepResult {
    Box3D box;
    double score = 0.0;
    double rotation = 0.0;  // winning candidate
};

// Crops the target region at the given box, runs sample_set with P samples
// and freezes the aggregated target features for the whole track. Throws
// DataError if the target region is empty.
TrackerState tracker_init(const PointCloudFrame& frame, const Box3D& init_box, const VfgnParams& params,
                          const TrackerConfig& cfg);

// One tracking step: evaluates all rotation candidates, picks the best peak
// (non-zero rotations penalized), integrates the offset. On an empty search
// region the box carries over unchanged and the state is flagged.
StepResult tracker_step(TrackerState& state, const PointCloudFrame& frame);

// Per-frame track row as written by the CLI: frame,cx,cy,cz,l,w,h,yaw,score,mode.
struct TrackRow {
    int frame = 0;
    Box3D box;
    double score = 0.0;
    std::string mode;
};

void write_track_csv(const std::vector<TrackRow>& rows, const std::string& path);

}  // namespace vvpit
