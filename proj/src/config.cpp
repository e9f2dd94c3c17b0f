#include "vvpit/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "vvpit/errors.hpp"
#include "vvpit/rng.hpp"

namespace vvpit {

void RunConfig::finalize() {
    scene.seed = derive_seed(seed, "scene");
    tracker.seed = derive_seed(seed, "tracker");
    train.seed = derive_seed(seed, "train");
    tracker.extent = scene.extent;
    net.stride = 1;
    net.padding = 0;
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Field {
    std::string key;
    std::function<std::string(const RunConfig&)> print;
    std::function<void(RunConfig&, const std::string&, std::vector<std::string>&)> parse;
};

void parse_err(std::vector<std::string>& errors, const std::string& key, const std::string& value,
               const char* type) {
    errors.push_back("key '" + key + "': cannot parse '" + value + "' as " + type);
}

long long to_ll(const std::string& v, bool& ok) {
    long long out = 0;
    const char* b = v.data();
    const char* e = b + v.size();
    auto res = std::from_chars(b, e, out);
    ok = res.ec == std::errc{} && res.ptr == e;
    return out;
}

double to_dbl(const std::string& v, bool& ok) {
    double out = 0.0;
    const char* b = v.data();
    const char* e = b + v.size();
    auto res = std::from_chars(b, e, out);
    ok = res.ec == std::errc{} && res.ptr == e;
    return out;
}

Field make_int(const std::string& key, std::function<int&(RunConfig&)> ref) {
    return Field{key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
                 [key, ref](RunConfig& c, const std::string& v, std::vector<std::string>& errors) {
                     bool ok = false;
                     const long long x = to_ll(v, ok);
                     if (!ok)
                         parse_err(errors, key, v, "integer");
                     else
                         ref(c) = static_cast<int>(x);
                 }};
}

Field make_u64(const std::string& key, std::function<std::uint64_t&(RunConfig&)> ref) {
    return Field{key, [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
                 [key, ref](RunConfig& c, const std::string& v, std::vector<std::string>& errors) {
                     std::uint64_t out = 0;
                     const char* b = v.data();
                     const char* e = b + v.size();
                     auto res = std::from_chars(b, e, out);
                     if (res.ec != std::errc{} || res.ptr != e)
                         parse_err(errors, key, v, "unsigned integer");
                     else
                         ref(c) = out;
                 }};
}

Field make_dbl(const std::string& key, std::function<double&(RunConfig&)> ref) {
    return Field{key, [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); },
                 [key, ref](RunConfig& c, const std::string& v, std::vector<std::string>& errors) {
                     bool ok = false;
                     const double x = to_dbl(v, ok);
                     if (!ok)
                         parse_err(errors, key, v, "number");
                     else
                         ref(c) = x;
                 }};
}

Field make_str(const std::string& key, std::function<std::string&(RunConfig&)> ref) {
    return Field{key, [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); },
                 [ref](RunConfig& c, const std::string& v, std::vector<std::string>&) { ref(c) = v; }};
}

Field make_mode(const std::string& key) {
    return Field{key, [](const RunConfig& c) { return xcorr_mode_name(c.tracker.xcorr.mode); },
                 [key](RunConfig& c, const std::string& v, std::vector<std::string>& errors) {
                     try {
                         c.tracker.xcorr.mode = parse_xcorr_mode(v);
                     } catch (const ConfigError& e) {
                         errors.push_back("key '" + key + "': " + e.what());
                     }
                 }};
}

Field make_channels(const std::string& key) {
    return Field{key,
                 [](const RunConfig& c) {
                     std::string s;
                     for (std::size_t i = 0; i < c.net.channels.size(); ++i) {
                         if (i) s += ",";
                         s += std::to_string(c.net.channels[i]);
                     }
                     return s;
                 },
                 [key](RunConfig& c, const std::string& v, std::vector<std::string>& errors) {
                     std::vector<int> channels;
                     std::stringstream ss(v);
                     std::string part;
                     bool ok = !v.empty();
                     while (ok && std::getline(ss, part, ',')) {
                         bool num_ok = false;
                         const long long x = to_ll(trim(part), num_ok);
                         if (!num_ok || x < 1) {
                             ok = false;
                             break;
                         }
                         channels.push_back(static_cast<int>(x));
                     }
                     if (!ok || channels.size() < 2)
                         parse_err(errors, key, v, "comma-separated channel list (input plus one per layer)");
                     else
                         c.net.channels = std::move(channels);
                 }};
}

const std::vector<Field>& schema() {
    static const std::vector<Field> fields = [] {
        std::vector<Field> f;
        f.push_back(make_u64("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
        f.push_back(make_int("gen.sequence_count", [](RunConfig& c) -> int& { return c.sequence_count; }));

        f.push_back(make_int("scene.frame_count", [](RunConfig& c) -> int& { return c.scene.frame_count; }));
        f.push_back(make_dbl("scene.init_x", [](RunConfig& c) -> double& { return c.scene.init_center.x; }));
        f.push_back(make_dbl("scene.init_y", [](RunConfig& c) -> double& { return c.scene.init_center.y; }));
        f.push_back(make_dbl("scene.init_z", [](RunConfig& c) -> double& { return c.scene.init_center.z; }));
        f.push_back(make_dbl("scene.init_yaw", [](RunConfig& c) -> double& { return c.scene.init_yaw; }));
        f.push_back(make_dbl("scene.object_length", [](RunConfig& c) -> double& { return c.scene.object_length; }));
        f.push_back(make_dbl("scene.object_width", [](RunConfig& c) -> double& { return c.scene.object_width; }));
        f.push_back(make_dbl("scene.object_height", [](RunConfig& c) -> double& { return c.scene.object_height; }));
        f.push_back(make_dbl("scene.speed_min", [](RunConfig& c) -> double& { return c.scene.speed_min; }));
        f.push_back(make_dbl("scene.speed_max", [](RunConfig& c) -> double& { return c.scene.speed_max; }));
        f.push_back(make_dbl("scene.yaw_rate_min", [](RunConfig& c) -> double& { return c.scene.yaw_rate_min; }));
        f.push_back(make_dbl("scene.yaw_rate_max", [](RunConfig& c) -> double& { return c.scene.yaw_rate_max; }));
        f.push_back(make_dbl("scene.object_density", [](RunConfig& c) -> double& { return c.scene.object_density; }));
        f.push_back(
            make_dbl("scene.background_density", [](RunConfig& c) -> double& { return c.scene.background_density; }));
        f.push_back(make_int("scene.clutter_count", [](RunConfig& c) -> int& { return c.scene.clutter_count; }));
        f.push_back(
            make_dbl("scene.clutter_density", [](RunConfig& c) -> double& { return c.scene.clutter_density; }));
        f.push_back(make_dbl("scene.noise_sigma", [](RunConfig& c) -> double& { return c.scene.noise_sigma; }));
        f.push_back(make_dbl("scene.dropout", [](RunConfig& c) -> double& { return c.scene.dropout; }));
        f.push_back(make_dbl("scene.extent_x_min", [](RunConfig& c) -> double& { return c.scene.extent.x_min; }));
        f.push_back(make_dbl("scene.extent_x_max", [](RunConfig& c) -> double& { return c.scene.extent.x_max; }));
        f.push_back(make_dbl("scene.extent_y_min", [](RunConfig& c) -> double& { return c.scene.extent.y_min; }));
        f.push_back(make_dbl("scene.extent_y_max", [](RunConfig& c) -> double& { return c.scene.extent.y_max; }));

        f.push_back(make_channels("net.channels"));
        f.push_back(make_int("net.kernel", [](RunConfig& c) -> int& { return c.net.kernel; }));
        f.push_back(make_dbl("net.leaky_slope", [](RunConfig& c) -> double& { return c.net.leaky_slope; }));

        f.push_back(make_int("tracker.sample_count", [](RunConfig& c) -> int& { return c.tracker.sample_count; }));
        f.push_back(make_mode("xcorr.mode"));
        f.push_back(make_dbl("xcorr.lambda", [](RunConfig& c) -> double& { return c.tracker.xcorr.lambda; }));
        f.push_back(make_dbl("xcorr.rho", [](RunConfig& c) -> double& { return c.tracker.xcorr.rho; }));
        f.push_back(make_dbl("tracker.rotation_step", [](RunConfig& c) -> double& { return c.tracker.rotation_step; }));
        f.push_back(
            make_int("tracker.rotation_candidates", [](RunConfig& c) -> int& { return c.tracker.rotation_candidates; }));
        f.push_back(
            make_dbl("tracker.rotation_penalty", [](RunConfig& c) -> double& { return c.tracker.rotation_penalty; }));
        f.push_back(make_dbl("tracker.context_target", [](RunConfig& c) -> double& { return c.tracker.context_target; }));
        f.push_back(make_dbl("tracker.context_search", [](RunConfig& c) -> double& { return c.tracker.context_search; }));
        f.push_back(make_int("tracker.size_target", [](RunConfig& c) -> int& { return c.tracker.size_target; }));
        f.push_back(make_int("tracker.size_search", [](RunConfig& c) -> int& { return c.tracker.size_search; }));
        f.push_back(make_dbl("tracker.window_weight", [](RunConfig& c) -> double& { return c.tracker.window_weight; }));
        f.push_back(make_dbl("tracker.cell_size", [](RunConfig& c) -> double& { return c.tracker.cell_size; }));

        f.push_back(make_int("train.steps", [](RunConfig& c) -> int& { return c.train.steps; }));
        f.push_back(make_dbl("train.learning_rate", [](RunConfig& c) -> double& { return c.train.learning_rate; }));
        f.push_back(make_dbl("train.momentum", [](RunConfig& c) -> double& { return c.train.momentum; }));
        f.push_back(
            make_int("train.samples_per_step", [](RunConfig& c) -> int& { return c.train.samples_per_step; }));
        f.push_back(make_int("train.frame_gap_min", [](RunConfig& c) -> int& { return c.train.frame_gap_min; }));
        f.push_back(make_int("train.frame_gap_max", [](RunConfig& c) -> int& { return c.train.frame_gap_max; }));
        f.push_back(make_int("train.label_radius", [](RunConfig& c) -> int& { return c.train.label_radius; }));
        f.push_back(make_dbl("train.pos_weight", [](RunConfig& c) -> double& { return c.train.pos_weight; }));
        f.push_back(make_dbl("train.neg_weight", [](RunConfig& c) -> double& { return c.train.neg_weight; }));
        f.push_back(make_dbl("train.grad_clip", [](RunConfig& c) -> double& { return c.train.grad_clip; }));
        f.push_back(
            make_int("train.checkpoint_interval", [](RunConfig& c) -> int& { return c.train.checkpoint_interval; }));

        f.push_back(make_str("paths.data", [](RunConfig& c) -> std::string& { return c.data_path; }));
        f.push_back(make_str("paths.out", [](RunConfig& c) -> std::string& { return c.out_path; }));
        f.push_back(make_str("paths.checkpoint", [](RunConfig& c) -> std::string& { return c.checkpoint_path; }));
        return f;
    }();
    return fields;
}

}  // namespace

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
    RunConfig cfg;
    std::vector<std::string> errors;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const std::size_t eq = t.find('=');
        if (eq == std::string::npos) {
            errors.push_back(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        bool found = false;
        for (const Field& field : schema()) {
            if (field.key == key) {
                field.parse(cfg, value, errors);
                found = true;
                break;
            }
        }
        if (!found) errors.push_back("unknown key '" + key + "'");
    }
    if (!errors.empty()) {
        std::string msg = "config " + origin + " invalid:";
        for (const std::string& e : errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    cfg.finalize();
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, path);
}

std::string print_config(const RunConfig& cfg) {
    std::string out;
    for (const Field& field : schema()) {
        out += field.key;
        out += " = ";
        out += field.print(cfg);
        out += "\n";
    }
    return out;
}

}  // namespace vvpit
