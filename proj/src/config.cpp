#include "surfcast/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

using nlohmann::json;

namespace surfcast {

namespace {

void check_object(const json& j, const std::string& path, const std::set<std::string>& required,
                  const std::set<std::string>& optional) {
    if (!j.is_object()) throw ConfigError("expected an object at " + path);
    for (const auto& [key, _] : j.items()) {
        if (!required.count(key) && !optional.count(key)) {
            throw ConfigError("unknown key '" + key + "' at " + path);
        }
    }
    for (const auto& key : required) {
        if (!j.contains(key)) throw ConfigError("missing required key '" + key + "' at " + path);
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::pair<double, double> get_range(const json& j, const char* key, std::pair<double, double> fallback,
                                    const std::string& path) {
    if (!j.contains(key)) return fallback;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2) {
        throw ConfigError(std::string("key '") + key + "' at " + path + " must be a [lo, hi] pair");
    }
    return {a[0].get<double>(), a[1].get<double>()};
}

GridSpec parse_grid(const json& j, const std::string& path) {
    check_object(j, path, {"lat_min", "lat_max", "lon_min", "lon_max"}, {"resolution"});
    return GridSpec::make(j.at("lat_min").get<double>(), j.at("lat_max").get<double>(),
                          j.at("lon_min").get<double>(), j.at("lon_max").get<double>(),
                          get_or(j, "resolution", 1.0 / 30.0));
}

WorldConfig parse_world(const json& j, const std::string& path) {
    check_object(j, path, {"grid", "n_days"},
                 {"n_eddies", "eddy_amplitude_range", "eddy_radius_range", "eddy_drift_speed_range",
                  "background_ssh_gradient", "land_fraction", "ageo_amplitude",
                  "ageo_length_scale_cells"});
    WorldConfig w;
    w.grid = parse_grid(j.at("grid"), path + ".grid");
    w.n_days = j.at("n_days").get<int>();
    w.n_eddies = get_or(j, "n_eddies", 8);
    w.eddy_amplitude_range = get_range(j, "eddy_amplitude_range", {0.15, 0.35}, path);
    w.eddy_radius_range = get_range(j, "eddy_radius_range", {40.0, 80.0}, path);
    w.eddy_drift_speed_range = get_range(j, "eddy_drift_speed_range", {2.0, 6.0}, path);
    w.background_ssh_gradient = get_or(j, "background_ssh_gradient", 0.0);
    w.land_fraction = get_or(j, "land_fraction", 0.0);
    w.ageo_amplitude = get_or(j, "ageo_amplitude", 0.0);
    w.ageo_length_scale_cells = get_or(j, "ageo_length_scale_cells", 24.0);
    return w;
}

ObservationConfig parse_observations(const json& j, const std::string& path) {
    check_object(j, path, {}, {"nadir", "swot", "imagery", "l4", "neurost", "drifters"});
    ObservationConfig o;
    if (j.contains("nadir")) {
        const auto& n = j.at("nadir");
        check_object(n, path + ".nadir", {}, {"n_tracks", "along_track_spacing_km", "noise_std"});
        o.nadir_tracks = get_or(n, "n_tracks", o.nadir_tracks);
        o.nadir_spacing_km = get_or(n, "along_track_spacing_km", o.nadir_spacing_km);
        o.nadir_noise_std = get_or(n, "noise_std", o.nadir_noise_std);
    }
    if (j.contains("swot")) {
        const auto& s = j.at("swot");
        check_object(s, path + ".swot", {},
                     {"swath_half_width_km", "gap_width_km", "revisit_days", "bias_mean", "bias_std",
                      "noise_std", "inclination_deg"});
        o.swot.swath_half_width_km = get_or(s, "swath_half_width_km", o.swot.swath_half_width_km);
        o.swot.gap_width_km = get_or(s, "gap_width_km", o.swot.gap_width_km);
        o.swot.revisit_days = get_or(s, "revisit_days", o.swot.revisit_days);
        o.swot.bias_mean = get_or(s, "bias_mean", o.swot.bias_mean);
        o.swot.bias_std = get_or(s, "bias_std", o.swot.bias_std);
        o.swot.noise_std = get_or(s, "noise_std", o.swot.noise_std);
        o.swot.inclination_deg = get_or(s, "inclination_deg", o.swot.inclination_deg);
    }
    if (j.contains("imagery")) {
        const auto& im = j.at("imagery");
        check_object(im, path + ".imagery", {}, {"cloud_cover"});
        o.cloud_cover = get_or(im, "cloud_cover", o.cloud_cover);
    }
    if (j.contains("l4")) {
        const auto& l = j.at("l4");
        check_object(l, path + ".l4", {}, {"smoothing_sigma_cells"});
        o.l4_sigma_cells = get_or(l, "smoothing_sigma_cells", o.l4_sigma_cells);
    }
    if (j.contains("neurost")) {
        const auto& nrs = j.at("neurost");
        check_object(nrs, path + ".neurost", {}, {"smoothing_sigma_cells"});
        o.neurost_sigma_cells = get_or(nrs, "smoothing_sigma_cells", o.neurost_sigma_cells);
    }
    if (j.contains("drifters")) {
        const auto& d = j.at("drifters");
        check_object(d, path + ".drifters", {}, {"n_train", "n_eval"});
        o.n_drifters_train = get_or(d, "n_train", o.n_drifters_train);
        o.n_drifters_eval = get_or(d, "n_eval", o.n_drifters_eval);
    }
    return o;
}

ModelConfig parse_model(const json& j, const std::string& path) {
    check_object(j, path, {},
                 {"t_in", "t_out", "patch_h", "patch_w", "input_variables", "latent_channels",
                  "n_gsta_blocks", "embed_dim", "hidden_channels"});
    ModelConfig m;
    m.t_in = get_or(j, "t_in", m.t_in);
    m.t_out = get_or(j, "t_out", m.t_out);
    m.patch_h = get_or(j, "patch_h", m.patch_h);
    m.patch_w = get_or(j, "patch_w", m.patch_w);
    if (j.contains("input_variables")) {
        m.input_variables.clear();
        for (const auto& v : j.at("input_variables")) {
            m.input_variables.push_back(input_var_from_name(v.get<std::string>()));
        }
    }
    m.latent_channels = get_or(j, "latent_channels", m.latent_channels);
    m.n_gsta_blocks = get_or(j, "n_gsta_blocks", m.n_gsta_blocks);
    m.embed_dim = get_or(j, "embed_dim", m.embed_dim);
    m.hidden_channels = get_or(j, "hidden_channels", m.hidden_channels);
    m.validate();
    return m;
}

StageConfig parse_stage(const json& j, const std::string& path) {
    check_object(j, path, {"stage"},
                 {"learning_rate", "weight_decay", "epochs", "patches_per_epoch", "frozen_groups",
                  "target_source"});
    StageConfig s = StageConfig::defaults(stage_from_int(j.at("stage").get<int>()));
    s.learning_rate = get_or(j, "learning_rate", s.learning_rate);
    s.weight_decay = get_or(j, "weight_decay", s.weight_decay);
    s.epochs = get_or(j, "epochs", s.epochs);
    s.patches_per_epoch = get_or(j, "patches_per_epoch", s.patches_per_epoch);
    if (j.contains("frozen_groups")) {
        for (const auto& g : j.at("frozen_groups")) s.frozen_groups.insert(g.get<std::string>());
    }
    if (j.contains("target_source")) {
        const std::string t = j.at("target_source").get<std::string>();
        if (t == "L4_ANALOG") {
            s.target_source = Stage1Target::L4_ANALOG;
        } else if (t == "NEUROST_ANALOG") {
            s.target_source = Stage1Target::NEUROST_ANALOG;
        } else {
            throw ConfigError("unknown target_source '" + t + "' at " + path);
        }
    }
    return s;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    check_object(j, "$", {"world"},
                 {"seed", "output_dir", "observations", "model", "stages", "training", "tile",
                  "evaluation"});
    RunConfig c;
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.output_dir = get_or<std::string>(j, "output_dir", "out");
    c.world = parse_world(j.at("world"), "$.world");
    c.world.seed = c.seed;
    if (j.contains("observations")) c.observations = parse_observations(j.at("observations"), "$.observations");
    if (j.contains("model")) {
        c.model = parse_model(j.at("model"), "$.model");
    } else {
        c.model.validate();
    }
    if (j.contains("stages")) {
        for (std::size_t i = 0; i < j.at("stages").size(); ++i) {
            c.stages.push_back(parse_stage(j.at("stages")[i], "$.stages[" + std::to_string(i) + "]"));
        }
    } else {
        c.stages = {StageConfig::defaults(Stage::S1), StageConfig::defaults(Stage::S2),
                    StageConfig::defaults(Stage::S3)};
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        check_object(t, "$.training", {}, {"batch_size", "v_ref", "w_max", "min_ocean_fraction"});
        c.training.batch_size = get_or(t, "batch_size", c.training.batch_size);
        c.training.v_ref = get_or(t, "v_ref", c.training.v_ref);
        c.training.w_max = get_or(t, "w_max", c.training.w_max);
        c.training.min_ocean_fraction = get_or(t, "min_ocean_fraction", c.training.min_ocean_fraction);
    }
    if (j.contains("tile")) {
        const auto& t = j.at("tile");
        check_object(t, "$.tile", {}, {"stride_rows", "stride_cols", "sigma_cells"});
        c.tile.stride_rows = get_or(t, "stride_rows", 0);
        c.tile.stride_cols = get_or(t, "stride_cols", 0);
        c.tile.sigma_cells = get_or(t, "sigma_cells", 0.0);
    }
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        check_object(e, "$.evaluation", {}, {"region", "issue_days"});
        c.eval_region = get_or<std::string>(e, "region", c.eval_region);
        if (e.contains("issue_days")) {
            for (const auto& d : e.at("issue_days")) c.issue_days.push_back(d.get<int>());
        }
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

}  // namespace surfcast
