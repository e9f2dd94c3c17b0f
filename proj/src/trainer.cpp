#include "vvpit/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "vvpit/autodiff.hpp"
#include "vvpit/errors.hpp"
#include "vvpit/ops.hpp"
#include "vvpit/rng.hpp"

namespace vvpit {

void validate_train_config(const TrainConfig& cfg) {
    if (cfg.steps < 1) throw ConfigError("train steps must be >= 1");
    if (cfg.samples_per_step < 1) throw ConfigError("train samples_per_step must be >= 1");
    if (cfg.label_radius < 0) throw ConfigError("train label_radius must be >= 0");
    if (cfg.learning_rate < 0.0) throw ConfigError("train learning_rate must be >= 0");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw ConfigError("train momentum must be in [0, 1)");
    if (cfg.frame_gap_min < 1 || cfg.frame_gap_max < cfg.frame_gap_min)
        throw ConfigError("train frame gap range invalid");
    if (cfg.neg_weight <= 0.0) throw ConfigError("train neg_weight must be positive");
    if (cfg.grad_clip < 0.0) throw ConfigError("train grad_clip must be >= 0");
    if (cfg.checkpoint_interval < 0) throw ConfigError("train checkpoint_interval must be >= 0");
}

Tensor make_label(int height, int width, int gt_dx_cells, int gt_dy_cells, int radius) {
    if (radius < 0) throw ConfigError("label radius must be >= 0");
    const int cy = height / 2, cx = width / 2;
    const int py = cy + gt_dy_cells, px = cx + gt_dx_cells;
    if (py < 0 || py >= height || px < 0 || px >= width)
        throw DataError("label peak (" + std::to_string(gt_dx_cells) + "," + std::to_string(gt_dy_cells) +
                        ") outside a " + std::to_string(height) + "x" + std::to_string(width) + " map");
    Tensor label({1, height, width});
    const long long r2 = static_cast<long long>(radius) * radius;
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            const long long dy = r - py, dx = c - px;
            if (dy * dy + dx * dx <= r2) label.at({0, r, c}) = 1.0;
        }
    return label;
}

Tensor bce_loss(const ScoreMap& logits, const Tensor& label, double pos_weight, double neg_weight) {
    if (!logits.values.same_shape(label))
        throw DataError("bce_loss shape mismatch: " + logits.values.shape_str() + " vs " +
                        shape_to_string(label.shape()));
    if (pos_weight <= 0.0 || neg_weight <= 0.0) throw ConfigError("bce_loss weights must be positive");
    const std::size_t n = label.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = logits.values[i], y = label[i];
        acc += pos_weight * y * softplus_scalar(-x) + neg_weight * (1.0 - y) * softplus_scalar(x);
    }
    return Tensor::scalar(acc / static_cast<double>(n));
}

namespace {

Var taped_plain_xcorr(GradTape& tape, const Var& search, const Var& target) {
    const Tensor& t = target.value;
    Var kernel = tape.reshape(target, {1, t.dim(0), t.dim(1), t.dim(2)});
    return tape.conv2d(search, kernel, 1, 0);
}

Var taped_fuse(GradTape& tape, const XcorrConfig& cfg, const VarOutputSet& search, const VarOutputSet& target) {
    switch (cfg.mode) {
        case XcorrMode::averaging: return taped_plain_xcorr(tape, search.mean, target.mean);
        case XcorrMode::double_similarity: {
            Var mean_map = taped_plain_xcorr(tape, search.mean, target.mean);
            if (cfg.lambda == 0.0) return mean_map;
            Var var_map = taped_plain_xcorr(tape, search.variance, target.variance);
            return tape.add(mean_map, tape.scale(var_map, cfg.lambda));
        }
        case XcorrMode::penalization:
            return tape.xcorr_pen(search.mean, target.mean, tape.normalize_variance(search.variance, cfg.rho),
                                  tape.normalize_variance(target.variance, cfg.rho));
    }
    throw ConfigError("invalid xcorr mode");
}

struct ParamSlot {
    std::string name;
    Tensor* tensor;
};

std::vector<ParamSlot> param_slots(VfgnParams& params) {
    std::vector<ParamSlot> slots;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
        const std::string base = "layers." + std::to_string(i) + ".";
        slots.push_back({base + "mean_kernel", &params.layers[i].mean_kernel});
        slots.push_back({base + "mean_bias", &params.layers[i].mean_bias});
        slots.push_back({base + "var_kernel", &params.layers[i].var_kernel});
        slots.push_back({base + "var_bias", &params.layers[i].var_bias});
    }
    return slots;
}

bool crop_all_zero(const Tensor& t) {
    for (double v : t.values())
        if (v != 0.0) return false;
    return true;
}

struct TrainPair {
    Tensor target_crop;
    Tensor search_crop;
    int dx_cells = 0;
    int dy_cells = 0;
};

bool draw_pair(const std::vector<Sequence>& dataset, const TrainConfig& cfg, const TrackerConfig& tcfg, Rng& rng,
               int map_h, int map_w, TrainPair& out) {
    const Sequence& seq = dataset[rng.index(dataset.size())];
    const int gap = cfg.frame_gap_min +
                    (cfg.frame_gap_max > cfg.frame_gap_min
                         ? static_cast<int>(rng.index(static_cast<std::size_t>(cfg.frame_gap_max - cfg.frame_gap_min + 1)))
                         : 0);
    if (static_cast<int>(seq.size()) <= gap) return false;
    const int ti = static_cast<int>(rng.index(seq.size() - static_cast<std::size_t>(gap)));
    const int si = ti + gap;

    const Box3D& box_t = seq[static_cast<std::size_t>(ti)].gt_box;
    const Box3D& box_s = seq[static_cast<std::size_t>(si)].gt_box;
    const double cell_m = crop_cell_meters(box_t, tcfg.context_search, tcfg.size_search);
    const double dxw = box_s.center.x - box_t.center.x;
    const double dyw = box_s.center.y - box_t.center.y;
    const double c = std::cos(box_t.yaw), s = std::sin(box_t.yaw);
    const double lx = c * dxw + s * dyw;
    const double ly = -s * dxw + c * dyw;
    const int dx_cells = static_cast<int>(std::lround(lx / cell_m));
    const int dy_cells = static_cast<int>(std::lround(ly / cell_m));
    const int py = map_h / 2 + dy_cells, px = map_w / 2 + dx_cells;
    if (py < 0 || py >= map_h || px < 0 || px >= map_w) return false;

    const PseudoImage img_t = voxelize(seq[static_cast<std::size_t>(ti)], tcfg.cell_size, tcfg.extent);
    Tensor target_crop = crop_region(img_t, box_t, tcfg.context_target, 0.0, tcfg.size_target);
    if (crop_all_zero(target_crop)) return false;

    const PseudoImage img_s = voxelize(seq[static_cast<std::size_t>(si)], tcfg.cell_size, tcfg.extent);
    Tensor search_crop = crop_region(img_s, box_t, tcfg.context_search, 0.0, tcfg.size_search);
    if (crop_all_zero(search_crop)) return false;

    out.target_crop = std::move(target_crop);
    out.search_crop = std::move(search_crop);
    out.dx_cells = dx_cells;
    out.dy_cells = dy_cells;
    return true;
}

}  // namespace

TrainResult train(const std::vector<Sequence>& dataset, const TrainConfig& cfg, const TrackerConfig& tracker_cfg,
                  const VfgnParams& init, const std::string& snapshot_dir) {
    validate_train_config(cfg);
    validate_tracker_config(tracker_cfg);
    validate_vfgn(init);
    if (dataset.empty()) throw DataError("train: empty dataset");

    VfgnParams params = init;
    std::vector<ParamSlot> slots = param_slots(params);
    std::map<std::string, Tensor> velocity;
    for (const ParamSlot& slot : slots) velocity[slot.name] = Tensor(slot.tensor->shape());

    const int feat_t = vfgn_out_size(params, tracker_cfg.size_target);
    const int feat_s = vfgn_out_size(params, tracker_cfg.size_search);
    const int map_h = feat_s - feat_t + 1, map_w = map_h;
    if (map_h < 1) throw ConfigError("train: target features larger than search features");
    // fixed logit scale so unit-magnitude random features give O(1) logits
    const double logit_scale = 1.0 / std::sqrt(static_cast<double>(vfgn_out_channels(params)) * feat_t * feat_t);

    TrainResult result;
    double running = 0.0;
    for (int step = 0; step < cfg.steps; ++step) {
        const std::uint64_t step_seed =
            derive_seed(derive_seed(cfg.seed, "train-step"), static_cast<std::uint64_t>(step));
        Rng rng(step_seed);

        TrainPair pair;
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt)
            ok = draw_pair(dataset, cfg, tracker_cfg, rng, map_h, map_w, pair);
        if (!ok) throw DataError("train: no valid (target, search) pair found in dataset");

        GradTape tape;
        VfgnVars net = register_vfgn(tape, params);
        VarOutputSet target_set =
            sample_set(tape, net, tape.constant(pair.target_crop), cfg.samples_per_step, derive_seed(step_seed, "t"));
        VarOutputSet search_set =
            sample_set(tape, net, tape.constant(pair.search_crop), cfg.samples_per_step, derive_seed(step_seed, "s"));

        Var score = taped_fuse(tape, tracker_cfg.xcorr, search_set, target_set);
        Var logits = tape.scale(score, logit_scale);

        const Tensor label = make_label(map_h, map_w, pair.dx_cells, pair.dy_cells, cfg.label_radius);
        double pos = 0.0;
        for (double v : label.values()) pos += v;
        const double neg = static_cast<double>(label.size()) - pos;
        const double wp = cfg.pos_weight > 0.0 ? cfg.pos_weight : std::max(neg, 1.0) / std::max(pos, 1.0);

        Var loss = tape.bce_with_logits(logits, label, wp, cfg.neg_weight);
        if (!std::isfinite(loss.value.item()))
            throw NumericError("train: non-finite loss at step " + std::to_string(step));

        std::map<std::string, Tensor> grads = tape.backward(loss);
        double clip_scale = 1.0;
        if (cfg.grad_clip > 0.0) {
            double norm_sq = 0.0;
            for (const ParamSlot& slot : slots)
                for (double g : grads.at(slot.name).values()) norm_sq += g * g;
            const double norm = std::sqrt(norm_sq);
            if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
        }
        for (const ParamSlot& slot : slots) {
            const Tensor& g = grads.at(slot.name);
            Tensor& v = velocity.at(slot.name);
            Tensor& p = *slot.tensor;
            for (std::size_t i = 0; i < p.size(); ++i) {
                v[i] = cfg.momentum * v[i] - cfg.learning_rate * clip_scale * g[i];
                p[i] += v[i];
            }
        }

        const double l = loss.value.item();
        result.losses.push_back(l);
        running = step == 0 ? l : 0.98 * running + 0.02 * l;

        if (cfg.checkpoint_interval > 0 && !snapshot_dir.empty() && (step + 1) % cfg.checkpoint_interval == 0 &&
            step + 1 < cfg.steps) {
            Checkpoint snap;
            snap.params = params;
            snap.train_config = cfg;
            snap.step = static_cast<std::uint64_t>(step + 1);
            snap.running_loss = static_cast<float>(running);
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%06d.vvpt", step + 1);
            save_checkpoint(snap, (std::filesystem::path(snapshot_dir) / name).string());
        }
    }

    result.checkpoint.params = std::move(params);
    result.checkpoint.train_config = cfg;
    result.checkpoint.step = static_cast<std::uint64_t>(cfg.steps);
    result.checkpoint.running_loss = static_cast<float>(running);
    return result;
}

// --- checkpoint serialization ----------------------------------------------

namespace {

void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

void put_u16(std::string& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>(v >> 8)};
    put_bytes(out, b, 2);
}

void put_u32(std::string& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    put_bytes(out, b, 8);
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

struct Cursor {
    const unsigned char* p;
    std::size_t left;
    std::string path;

    void need(std::size_t n) const {
        if (left < n) throw DataError("truncated checkpoint " + path);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        left -= 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
        p += 8;
        left -= 8;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        left -= n;
        return s;
    }
};

void append_tensor(std::string& out, const std::string& name, const Tensor& t) {
    if (name.size() > 0xffff) throw DataError("checkpoint tensor name too long");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    if (t.rank() > 255) throw DataError("checkpoint tensor rank too large");
    out.push_back(static_cast<char>(t.rank()));
    for (int d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) put_f32(out, static_cast<float>(t[i]));
}

constexpr std::size_t kMaxTensorElems = std::size_t{1} << 26;

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string buf;
    buf.append("VVPT", 4);
    put_u32(buf, ckpt.version);

    std::vector<std::pair<std::string, Tensor>> tensors;
    tensors.emplace_back("net.meta", Tensor({1}, {ckpt.params.leaky_slope}));
    for (std::size_t i = 0; i < ckpt.params.layers.size(); ++i) {
        const VariationalConvLayer& l = ckpt.params.layers[i];
        const std::string base = "layers." + std::to_string(i) + ".";
        tensors.emplace_back(base + "meta",
                             Tensor({2}, {static_cast<double>(l.stride), static_cast<double>(l.padding)}));
        tensors.emplace_back(base + "mean_kernel", l.mean_kernel);
        tensors.emplace_back(base + "mean_bias", l.mean_bias);
        tensors.emplace_back(base + "var_kernel", l.var_kernel);
        tensors.emplace_back(base + "var_bias", l.var_bias);
    }
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, tensor] : tensors) append_tensor(buf, name, tensor);
    put_u64(buf, ckpt.step);
    put_f32(buf, ckpt.running_loss);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Cursor cur{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), path};
    if (cur.str(4) != "VVPT") throw DataError("bad checkpoint magic in " + path);
    Checkpoint ckpt;
    ckpt.version = cur.u32();
    if (ckpt.version != 1) throw DataError("unsupported checkpoint version in " + path);

    const std::uint32_t count = cur.u32();
    if (count > 4096) throw DataError("implausible tensor count in " + path);

    std::map<std::string, Tensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = cur.u16();
        const std::string name = cur.str(name_len);
        cur.need(1);
        const int rank = *cur.p;
        cur.p += 1;
        cur.left -= 1;
        if (rank > 8) throw DataError("implausible tensor rank in " + path);
        std::vector<int> shape;
        std::size_t elems = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint32_t dim = cur.u32();
            if (dim == 0 || dim > (std::uint32_t{1} << 20)) throw DataError("tensor shape overflow in " + path);
            elems *= dim;
            if (elems > kMaxTensorElems) throw DataError("tensor shape overflow in " + path);
            shape.push_back(static_cast<int>(dim));
        }
        std::vector<double> values(elems);
        for (std::size_t e = 0; e < elems; ++e) values[e] = static_cast<double>(cur.f32());
        tensors.emplace(name, rank == 0 ? Tensor::scalar(values[0]) : Tensor(shape, std::move(values)));
    }
    ckpt.step = cur.u64();
    ckpt.running_loss = cur.f32();
    if (cur.left != 0) throw DataError("trailing bytes in checkpoint " + path);

    auto fetch = [&](const std::string& name) -> const Tensor& {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw DataError("checkpoint " + path + " missing tensor " + name);
        return it->second;
    };

    ckpt.params.leaky_slope = fetch("net.meta")[0];
    for (std::size_t i = 0;; ++i) {
        const std::string base = "layers." + std::to_string(i) + ".";
        if (tensors.find(base + "mean_kernel") == tensors.end()) break;
        VariationalConvLayer layer;
        const Tensor& meta = fetch(base + "meta");
        layer.stride = static_cast<int>(meta[0]);
        layer.padding = static_cast<int>(meta[1]);
        layer.mean_kernel = fetch(base + "mean_kernel");
        layer.mean_bias = fetch(base + "mean_bias");
        layer.var_kernel = fetch(base + "var_kernel");
        layer.var_bias = fetch(base + "var_bias");
        ckpt.params.layers.push_back(std::move(layer));
    }
    validate_vfgn(ckpt.params);
    return ckpt;
}

void write_loss_csv(const std::vector<double>& losses, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << "step,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i)
        out << (i + 1) << ',' << format_double(losses[i]) << '\n';
}

}  // namespace vvpit
