#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vvpit/scene.hpp"
#include "vvpit/tracker.hpp"
#include "vvpit/trainer.hpp"
#include "vvpit/vnet.hpp"

namespace vvpit {

// Merged run configuration parsed from a line-oriented `key = value` file.
// Unknown keys are rejected; --print-config emits every key with its default.
struct RunConfig {
    std::uint64_t seed = 42;
    int sequence_count = 20;  // sequences written by the gen command

    SceneConfig scene;
    VfgnArch net;
    TrackerConfig tracker;
    TrainConfig train;

    std::string data_path;
    std::string out_path;
    std::string checkpoint_path;

    // Scene/tracker/train sub-seeds all derive from `seed`; the extent is
    // shared between scene generation and voxelization.
    void finalize();
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin);
std::string print_config(const RunConfig& cfg);

}  // namespace vvpit
