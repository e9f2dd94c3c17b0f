#pragma once

#include <string>
#include <vector>

#include "vvpit/scene.hpp"
#include "vvpit/tracker.hpp"
#include "vvpit/vnet.hpp"

namespace vvpit {

// Per-frame predicted and ground-truth boxes, aligned by frame index.
struct TrackResult {
    std::vector<int> frames;
    std::vector<Box3D> predicted;
    std::vector<Box3D> ground_truth;
};

void validate_track_result(const TrackResult& r);  // equal lengths, strictly increasing frames

// BEV overlap of the yawed footprints (convex polygon clipping) times the
// vertical overlap, over the union volume.
double iou3d(const Box3D& a, const Box3D& b);

// Area of the intersection of the two BEV footprints (exposed for tests).
double bev_intersection_area(const Box3D& a, const Box3D& b);

inline constexpr int kAucSamples = 21;
inline constexpr double kPrecisionMaxDistance = 2.0;  // meters

// Success: mean over 21 IoU thresholds {0, 0.05, ..., 1} of the fraction of
// frames with IoU strictly above the threshold, scaled to [0, 100].
double success_auc(const TrackResult& results);
// Precision: same rule over center distance strictly below 21 thresholds
// {0, 0.1, ..., 2.0} meters.
double precision_auc(const TrackResult& results);

// Pooled-frame variants used when aggregating several sequences.
double success_auc(const std::vector<double>& ious);
double precision_auc(const std::vector<double>& center_distances);

struct SequenceEval {
    std::string name;
    double success = 0.0;
    double precision = 0.0;
    int frames = 0;
};

struct EvalReport {
    double success = 0.0;
    double precision = 0.0;
    int frames = 0;
    std::vector<SequenceEval> sequences;
    XcorrMode mode = XcorrMode::penalization;
    int sample_count = 0;
    double lambda = 0.0;
    double rho = 1.0;
    std::uint64_t seed = 0;
};

using Sequence = std::vector<PointCloudFrame>;

// Runs the tracker over every sequence (init from the first frame's gt box)
// and aggregates frame-pooled Success/Precision. Sequences evaluate in
// parallel; aggregation is sequential in sequence order.
EvalReport evaluate(const VfgnParams& params, const TrackerConfig& cfg, const std::vector<Sequence>& sequences);

// Box frozen at init for every frame: the no-tracker baseline.
EvalReport static_baseline(const std::vector<Sequence>& sequences);

// report.csv: header mode,P,lambda,rho,success,precision,frames,seed.
void write_report_csv(const EvalReport& report, const std::string& path);

// Fig-style feature images for the search region around `box`: mean.pgm and
// variance.pgm (channel-max projections) plus composite.ppm with certainty in
// red and mean magnitude in blue. Binary P5/P6.
void emit_feature_maps(const VfgnParams& params, const PointCloudFrame& frame, const Box3D& box, int sample_count,
                       const std::string& out_dir, const TrackerConfig& cfg);

struct VizStats {
    bool variance_nonconstant = false;
    // Fraction of background feature cells (receptive field free of occupied
    // pseudo-image cells) whose variance lies in the lowest quartile of the
    // observed variance range.
    double background_low_variance_fraction = 0.0;
    int background_cells = 0;
};

VizStats viz_stats(const VfgnParams& params, const PointCloudFrame& frame, const Box3D& box, int sample_count,
                   const TrackerConfig& cfg);

}  // namespace vvpit
