#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vvpit/config.hpp"
#include "vvpit/errors.hpp"
#include "vvpit/eval.hpp"
#include "vvpit/rng.hpp"
#include "vvpit/scene.hpp"
#include "vvpit/tracker.hpp"
#include "vvpit/trainer.hpp"
#include "vvpit/vnet.hpp"

namespace fs = std::filesystem;
using namespace vvpit;

namespace {

RunConfig load_config(const std::string& path) {
    if (path.empty()) {
        RunConfig cfg;
        cfg.finalize();
        return cfg;
    }
    return parse_config_file(path);
}

std::string sequence_dir_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "seq_%03d", index);
    return buf;
}

std::vector<Sequence> load_dataset(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("data directory not found: " + dir);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory() && fs::exists(entry.path() / "gt.csv")) names.push_back(entry.path().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw DataError("no sequences (directories with gt.csv) under " + dir);
    std::vector<Sequence> dataset;
    for (const std::string& name : names) dataset.push_back(load_sequence(name));
    return dataset;
}

VfgnParams params_from_checkpoint(const std::string& path) { return load_checkpoint(path).params; }

int cmd_gen(const RunConfig& cfg, const std::string& out_dir) {
    if (cfg.sequence_count < 1) throw ConfigError("gen.sequence_count must be >= 1");
    fs::create_directories(out_dir);
    for (int i = 0; i < cfg.sequence_count; ++i) {
        const SceneConfig seq_cfg = sequence_variant(cfg.scene, cfg.seed, i);
        const std::vector<PointCloudFrame> frames = generate_sequence(seq_cfg);
        save_sequence(frames, (fs::path(out_dir) / sequence_dir_name(i)).string());
    }
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, const std::string& out_dir) {
    const std::vector<Sequence> dataset = load_dataset(data_dir);
    fs::create_directories(out_dir);
    const VfgnParams init = make_vfgn(cfg.net, derive_seed(cfg.seed, "net-init"));
    const TrainResult result = train(dataset, cfg.train, cfg.tracker, init, out_dir);
    save_checkpoint(result.checkpoint, (fs::path(out_dir) / "checkpoint.vvpt").string());
    write_loss_csv(result.losses, (fs::path(out_dir) / "loss.csv").string());
    return 0;
}

int cmd_track(const RunConfig& cfg, const std::string& checkpoint, const std::string& sequence_dir,
              const std::string& out_file) {
    const VfgnParams params = params_from_checkpoint(checkpoint);
    const Sequence seq = load_sequence(sequence_dir);
    const std::string mode = xcorr_mode_name(cfg.tracker.xcorr.mode);

    TrackerState state = tracker_init(seq.at(0), seq.at(0).gt_box, params, cfg.tracker);
    std::vector<TrackRow> rows;
    rows.push_back(TrackRow{seq[0].frame_index, seq[0].gt_box, 0.0, mode});
    for (std::size_t i = 1; i < seq.size(); ++i) {
        const StepResult step = tracker_step(state, seq[i]);
        if (!std::isfinite(step.score)) throw NumericError("track: non-finite score");
        rows.push_back(TrackRow{seq[i].frame_index, step.box, step.score, mode});
    }
    write_track_csv(rows, out_file);
    return 0;
}

int cmd_eval(RunConfig cfg, const std::string& checkpoint, const std::string& data_dir, const std::string& mode,
             const std::string& out_file) {
    cfg.tracker.xcorr.mode = parse_xcorr_mode(mode);
    const VfgnParams params = params_from_checkpoint(checkpoint);
    const std::vector<Sequence> dataset = load_dataset(data_dir);
    const EvalReport report = evaluate(params, cfg.tracker, dataset);
    if (!std::isfinite(report.success) || !std::isfinite(report.precision))
        throw NumericError("eval: non-finite metric");
    write_report_csv(report, out_file);
    return 0;
}

int cmd_viz(const RunConfig& cfg, const std::string& checkpoint, const std::string& sequence_dir, int frame,
            const std::string& out_dir) {
    const VfgnParams params = params_from_checkpoint(checkpoint);
    const Sequence seq = load_sequence(sequence_dir);
    if (frame < 0 || frame >= static_cast<int>(seq.size()))
        throw DataError("viz: frame " + std::to_string(frame) + " out of range (sequence has " +
                        std::to_string(seq.size()) + " frames)");
    emit_feature_maps(params, seq[static_cast<std::size_t>(frame)], seq[static_cast<std::size_t>(frame)].gt_box,
                      cfg.tracker.sample_count, out_dir, cfg.tracker);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational voxel pseudo image tracker"};
    app.require_subcommand(0, 1);

    bool show_config = false;
    int threads = 0;
    app.add_flag("--print-config", show_config, "print the full default configuration and exit");
    app.add_option("--threads", threads, "cap worker thread count (0 = library default)");

    std::string config_path, data_dir, out_path, checkpoint, sequence_dir, mode = "penalization";
    int frame = 0;

    CLI::App* gen = app.add_subcommand("gen", "generate synthetic sequences");
    gen->add_option("--config", config_path, "config file");
    gen->add_option("--out", out_path, "output directory")->required();

    CLI::App* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", config_path, "config file");
    train_cmd->add_option("--data", data_dir, "directory of sequences")->required();
    train_cmd->add_option("--out", out_path, "output directory")->required();

    CLI::App* track = app.add_subcommand("track", "track one sequence");
    track->add_option("--config", config_path, "config file");
    track->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    track->add_option("--sequence", sequence_dir, "sequence directory")->required();
    track->add_option("--out", out_path, "output csv")->required();

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate over a dataset");
    eval_cmd->add_option("--config", config_path, "config file");
    eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--data", data_dir, "directory of sequences")->required();
    eval_cmd->add_option("--mode", mode, "averaging|double|penalization");
    eval_cmd->add_option("--out", out_path, "output csv")->required();

    CLI::App* viz = app.add_subcommand("viz", "emit feature-map images");
    viz->add_option("--config", config_path, "config file");
    viz->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    viz->add_option("--sequence", sequence_dir, "sequence directory")->required();
    viz->add_option("--frame", frame, "frame index");
    viz->add_option("--out", out_path, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        if (show_config) {
            RunConfig cfg = load_config(config_path);
            std::fputs(print_config(cfg).c_str(), stdout);
            return 0;
        }
        if (app.get_subcommands().empty()) {
            std::fputs(app.help().c_str(), stdout);
            return 0;
        }
        const RunConfig cfg = load_config(config_path);
        if (gen->parsed()) return cmd_gen(cfg, out_path);
        if (train_cmd->parsed()) return cmd_train(cfg, data_dir, out_path);
        if (track->parsed()) return cmd_track(cfg, checkpoint, sequence_dir, out_path);
        if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint, data_dir, mode, out_path);
        if (viz->parsed()) return cmd_viz(cfg, checkpoint, sequence_dir, frame, out_path);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
