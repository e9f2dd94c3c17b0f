#include "vvpit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vvpit/errors.hpp"
#include "vvpit/rng.hpp"

namespace vvpit {

void validate_track_result(const TrackResult& r) {
    if (r.frames.size() != r.predicted.size() || r.frames.size() != r.ground_truth.size())
        throw DataError("track result arrays have different lengths");
    for (std::size_t i = 1; i < r.frames.size(); ++i)
        if (r.frames[i] <= r.frames[i - 1]) throw DataError("track result frame indices not strictly increasing");
}

namespace {

struct Pt {
    double x, y;
};

// corners of the yawed BEV footprint, counter-clockwise
std::vector<Pt> footprint(const Box3D& b) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const double hl = b.length / 2.0, hw = b.width / 2.0;
    std::vector<Pt> pts;
    for (const Pt& local : {Pt{hl, hw}, Pt{-hl, hw}, Pt{-hl, -hw}, Pt{hl, -hw}})
        pts.push_back(Pt{b.center.x + c * local.x - s * local.y, b.center.y + s * local.x + c * local.y});
    return pts;
}

double shoelace(const std::vector<Pt>& poly) {
    double acc = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Pt& a = poly[i];
        const Pt& b = poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    return std::abs(acc) / 2.0;
}

// Sutherland-Hodgman clip of a convex subject polygon by the half-plane left
// of edge (e0, e1); clip polygon is counter-clockwise.
std::vector<Pt> clip_edge(const std::vector<Pt>& poly, const Pt& e0, const Pt& e1) {
    std::vector<Pt> out;
    const std::size_t n = poly.size();
    auto side = [&](const Pt& p) { return (e1.x - e0.x) * (p.y - e0.y) - (e1.y - e0.y) * (p.x - e0.x); };
    for (std::size_t i = 0; i < n; ++i) {
        const Pt& cur = poly[i];
        const Pt& prev = poly[(i + n - 1) % n];
        const double sc = side(cur), sp = side(prev);
        const bool in_cur = sc >= 0.0, in_prev = sp >= 0.0;
        if (in_cur != in_prev) {
            const double t = sp / (sp - sc);
            out.push_back(Pt{prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
        }
        if (in_cur) out.push_back(cur);
    }
    return out;
}

}  // namespace

double bev_intersection_area(const Box3D& a, const Box3D& b) {
    std::vector<Pt> poly = footprint(a);
    const std::vector<Pt> clip = footprint(b);
    for (std::size_t i = 0; i < clip.size() && !poly.empty(); ++i)
        poly = clip_edge(poly, clip[i], clip[(i + 1) % clip.size()]);
    if (poly.size() < 3) return 0.0;
    return shoelace(poly);
}

double iou3d(const Box3D& a, const Box3D& b) {
    validate_box(a);
    validate_box(b);
    const double bev = bev_intersection_area(a, b);
    const double z_lo = std::max(a.center.z - a.height / 2.0, b.center.z - b.height / 2.0);
    const double z_hi = std::min(a.center.z + a.height / 2.0, b.center.z + b.height / 2.0);
    const double inter = bev * std::max(0.0, z_hi - z_lo);
    const double uni = a.volume() + b.volume() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double success_auc(const std::vector<double>& ious) {
    if (ious.empty()) throw DataError("success_auc on empty results");
    double acc = 0.0;
    for (int k = 0; k < kAucSamples; ++k) {
        const double tau = static_cast<double>(k) / (kAucSamples - 1);
        int pass = 0;
        for (double iou : ious)
            if (iou > tau) ++pass;
        acc += static_cast<double>(pass) / static_cast<double>(ious.size());
    }
    return 100.0 * acc / kAucSamples;
}

double precision_auc(const std::vector<double>& center_distances) {
    if (center_distances.empty()) throw DataError("precision_auc on empty results");
    double acc = 0.0;
    for (int k = 0; k < kAucSamples; ++k) {
        const double d = kPrecisionMaxDistance * static_cast<double>(k) / (kAucSamples - 1);
        int pass = 0;
        for (double dist : center_distances)
            if (dist < d) ++pass;
        acc += static_cast<double>(pass) / static_cast<double>(center_distances.size());
    }
    return 100.0 * acc / kAucSamples;
}

namespace {

double center_distance(const Box3D& a, const Box3D& b) {
    const double dx = a.center.x - b.center.x;
    const double dy = a.center.y - b.center.y;
    const double dz = a.center.z - b.center.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void result_metrics(const TrackResult& r, std::vector<double>& ious, std::vector<double>& dists) {
    for (std::size_t i = 0; i < r.frames.size(); ++i) {
        ious.push_back(iou3d(r.predicted[i], r.ground_truth[i]));
        dists.push_back(center_distance(r.predicted[i], r.ground_truth[i]));
    }
}

}  // namespace

double success_auc(const TrackResult& results) {
    validate_track_result(results);
    std::vector<double> ious, dists;
    result_metrics(results, ious, dists);
    return success_auc(ious);
}

double precision_auc(const TrackResult& results) {
    validate_track_result(results);
    std::vector<double> ious, dists;
    result_metrics(results, ious, dists);
    return precision_auc(dists);
}

namespace {

TrackResult run_tracker(const VfgnParams& params, const TrackerConfig& cfg, const Sequence& seq) {
    if (seq.empty()) throw DataError("evaluate: empty sequence");
    TrackerState state = tracker_init(seq[0], seq[0].gt_box, params, cfg);
    TrackResult result;
    result.frames.push_back(seq[0].frame_index);
    result.predicted.push_back(seq[0].gt_box);
    result.ground_truth.push_back(seq[0].gt_box);
    for (std::size_t i = 1; i < seq.size(); ++i) {
        const StepResult step = tracker_step(state, seq[i]);
        result.frames.push_back(seq[i].frame_index);
        result.predicted.push_back(step.box);
        result.ground_truth.push_back(seq[i].gt_box);
    }
    return result;
}

}  // namespace

EvalReport evaluate(const VfgnParams& params, const TrackerConfig& cfg, const std::vector<Sequence>& sequences) {
    if (sequences.empty()) throw DataError("evaluate: no sequences");
    std::vector<TrackResult> results(sequences.size());

#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < sequences.size(); ++i) results[i] = run_tracker(params, cfg, sequences[i]);

    EvalReport report;
    report.mode = cfg.xcorr.mode;
    report.sample_count = cfg.sample_count;
    report.lambda = cfg.xcorr.lambda;
    report.rho = cfg.xcorr.rho;
    report.seed = cfg.seed;

    std::vector<double> all_ious, all_dists;
    for (std::size_t i = 0; i < results.size(); ++i) {
        std::vector<double> ious, dists;
        result_metrics(results[i], ious, dists);
        SequenceEval se;
        se.name = "seq_" + std::to_string(i);
        se.success = success_auc(ious);
        se.precision = precision_auc(dists);
        se.frames = static_cast<int>(ious.size());
        report.sequences.push_back(se);
        all_ious.insert(all_ious.end(), ious.begin(), ious.end());
        all_dists.insert(all_dists.end(), dists.begin(), dists.end());
    }
    report.frames = static_cast<int>(all_ious.size());
    report.success = success_auc(all_ious);
    report.precision = precision_auc(all_dists);
    return report;
}

EvalReport static_baseline(const std::vector<Sequence>& sequences) {
    if (sequences.empty()) throw DataError("static_baseline: no sequences");
    EvalReport report;
    std::vector<double> all_ious, all_dists;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
        const Sequence& seq = sequences[i];
        if (seq.empty()) throw DataError("static_baseline: empty sequence");
        std::vector<double> ious, dists;
        const Box3D frozen = seq[0].gt_box;
        for (const PointCloudFrame& frame : seq) {
            ious.push_back(iou3d(frozen, frame.gt_box));
            dists.push_back(center_distance(frozen, frame.gt_box));
        }
        SequenceEval se;
        se.name = "seq_" + std::to_string(i);
        se.success = success_auc(ious);
        se.precision = precision_auc(dists);
        se.frames = static_cast<int>(ious.size());
        report.sequences.push_back(se);
        all_ious.insert(all_ious.end(), ious.begin(), ious.end());
        all_dists.insert(all_dists.end(), dists.begin(), dists.end());
    }
    report.frames = static_cast<int>(all_ious.size());
    report.success = success_auc(all_ious);
    report.precision = precision_auc(all_dists);
    report.sample_count = 0;
    return report;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report " + path);
    out << "mode,P,lambda,rho,success,precision,frames,seed\n";
    out << xcorr_mode_name(report.mode) << ',' << report.sample_count << ',' << format_double(report.lambda) << ','
        << format_double(report.rho) << ',' << format_double(report.success) << ',' << format_double(report.precision)
        << ',' << report.frames << ',' << report.seed << '\n';
}

// --- feature-map emission ----------------------------------------------

namespace {

struct VizData {
    Tensor mean_proj;      // H×W channel-max of y_m
    Tensor variance_proj;  // H×W channel-max of y_v
    Tensor occupancy;      // search-crop channel 0
    int receptive_field = 1;
};

Tensor channel_max(const Tensor& t) {
    const int C = t.dim(0), H = t.dim(1), W = t.dim(2);
    Tensor out({H, W});
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            double best = t.at({0, r, c});
            for (int ch = 1; ch < C; ++ch) best = std::max(best, t.at({ch, r, c}));
            out.at({r, c}) = best;
        }
    return out;
}

VizData compute_viz(const VfgnParams& params, const PointCloudFrame& frame, const Box3D& box, int sample_count,
                    const TrackerConfig& cfg) {
    const PseudoImage img = voxelize(frame, cfg.cell_size, cfg.extent);
    const Tensor crop = crop_region(img, box, cfg.context_search, 0.0, cfg.size_search);
    const VariationalOutputSet set = sample_set(params, crop, sample_count, derive_seed(cfg.seed, "viz"));

    VizData viz;
    viz.mean_proj = channel_max(set.mean);
    viz.variance_proj = channel_max(set.variance);

    const int H = crop.dim(1), W = crop.dim(2);
    viz.occupancy = Tensor({H, W});
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) viz.occupancy.at({r, c}) = crop.at({0, r, c});

    int rf = 1;
    for (const VariationalConvLayer& l : params.layers) rf += l.mean_kernel.dim(2) - 1;
    viz.receptive_field = rf;
    return viz;
}

unsigned char to_byte(double v) {
    const long b = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<unsigned char>(b);
}

void write_pgm(const Tensor& img, const std::string& path) {
    const int H = img.dim(0), W = img.dim(1);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write image " + path);
    out << "P5\n" << W << ' ' << H << "\n255\n";
    for (std::size_t i = 0; i < img.size(); ++i) {
        const unsigned char b = to_byte(img[i]);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

// min/max normalization; a constant image maps to zeros
Tensor normalized_unit(const Tensor& img) {
    double lo = img[0], hi = img[0];
    for (double v : img.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    Tensor out(img.shape());
    if (hi - lo <= 0.0) return out;
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = (img[i] - lo) / (hi - lo);
    return out;
}

// variance keeps its zero point so an all-zero map stays black
Tensor max_normalized(const Tensor& img) {
    double hi = 0.0;
    for (double v : img.values()) hi = std::max(hi, v);
    Tensor out(img.shape());
    if (hi <= 0.0) return out;
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = std::clamp(img[i] / hi, 0.0, 1.0);
    return out;
}

}  // namespace

void emit_feature_maps(const VfgnParams& params, const PointCloudFrame& frame, const Box3D& box, int sample_count,
                       const std::string& out_dir, const TrackerConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const VizData viz = compute_viz(params, frame, box, sample_count, cfg);

    const Tensor mean_u = normalized_unit(viz.mean_proj);
    const Tensor var_u = max_normalized(viz.variance_proj);
    write_pgm(mean_u, (fs::path(out_dir) / "mean.pgm").string());
    write_pgm(var_u, (fs::path(out_dir) / "variance.pgm").string());

    // red = certainty, blue = mean magnitude; purple marks confident features
    const int H = mean_u.dim(0), W = mean_u.dim(1);
    std::ofstream out(fs::path(out_dir) / "composite.ppm", std::ios::binary);
    if (!out) throw DataError("cannot write image " + out_dir + "/composite.ppm");
    out << "P6\n" << W << ' ' << H << "\n255\n";
    for (std::size_t i = 0; i < mean_u.size(); ++i) {
        const unsigned char rgb[3] = {to_byte(1.0 - var_u[i]), 0, to_byte(mean_u[i])};
        out.write(reinterpret_cast<const char*>(rgb), 3);
    }
}

VizStats viz_stats(const VfgnParams& params, const PointCloudFrame& frame, const Box3D& box, int sample_count,
                   const TrackerConfig& cfg) {
    const VizData viz = compute_viz(params, frame, box, sample_count, cfg);
    const int H = viz.variance_proj.dim(0), W = viz.variance_proj.dim(1);

    double lo = viz.variance_proj[0], hi = viz.variance_proj[0];
    for (double v : viz.variance_proj.values()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }

    VizStats stats;
    stats.variance_nonconstant = hi - lo > 1e-12;
    const double quartile = lo + 0.25 * (hi - lo);

    const int rf = viz.receptive_field;
    int background = 0, low = 0;
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) {
            bool empty = true;
            for (int dr = 0; dr < rf && empty; ++dr)
                for (int dc = 0; dc < rf && empty; ++dc)
                    if (viz.occupancy.at({r + dr, c + dc}) != 0.0) empty = false;
            if (!empty) continue;
            ++background;
            if (viz.variance_proj.at({r, c}) <= quartile) ++low;
        }
    stats.background_cells = background;
    stats.background_low_variance_fraction = background > 0 ? static_cast<double>(low) / background : 0.0;
    return stats;
}

}  // namespace vvpit
