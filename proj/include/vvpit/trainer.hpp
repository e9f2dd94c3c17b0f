#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vvpit/scene.hpp"
#include "vvpit/tracker.hpp"
#include "vvpit/vnet.hpp"
#include "vvpit/xcorr.hpp"

namespace vvpit {

struct TrainConfig {
    int steps = 2000;
    double learning_rate = 0.05;
    double momentum = 0.9;
    int samples_per_step = 8;  // P during training
    int frame_gap_min = 1;
    int frame_gap_max = 3;
    int label_radius = 2;    // cells
    double pos_weight = 0.0; // <= 0 balances positives to negatives per label
    double neg_weight = 1.0;
    double grad_clip = 5.0;  // global gradient norm cap; 0 disables
    int checkpoint_interval = 500;  // 0 disables periodic snapshots
    std::uint64_t seed = 0;
};

void validate_train_config(const TrainConfig& cfg);

// Binary ground-truth score map: 1 within Euclidean distance <= radius of the
// peak cell (map center displaced by gt_dx/gt_dy), 0 elsewhere. Throws when
// the peak falls outside the map.
Tensor make_label(int height, int width, int gt_dx_cells, int gt_dy_cells, int radius);

// Weighted BCE treating the score map as logits; mean over cells, stable form.
Tensor bce_loss(const ScoreMap& logits, const Tensor& label, double pos_weight, double neg_weight);

struct Checkpoint {
    std::uint32_t version = 1;
    VfgnParams params;
    TrainConfig train_config;  // in-memory echo; the file stores tensors + counters only
    std::uint64_t step = 0;
    float running_loss = 0.0f;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<double> losses;  // one entry per step
};

using Sequence = std::vector<PointCloudFrame>;

// SGD with momentum on the BCE between the fused score map and the
// displacement label; pairs drawn with a frame gap in the configured range.
// Geometry and fusion mode come from the tracker config. Deterministic given
// cfg.seed. `snapshot_dir` non-empty enables periodic checkpoint files.
TrainResult train(const std::vector<Sequence>& dataset, const TrainConfig& cfg, const TrackerConfig& tracker_cfg,
                  const VfgnParams& init, const std::string& snapshot_dir = "");

// Little-endian binary checkpoint: magic "VVPT", u32 version, u32 tensor
// count, per tensor (u16 name length, name, u8 rank, u32 dims, f32 payload
// row-major), then u64 step and f32 running loss.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

void write_loss_csv(const std::vector<double>& losses, const std::string& path);

}  // namespace vvpit
