#include "surfcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "surfcast/kernels.hpp"

namespace fs = std::filesystem;

namespace surfcast {

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::S1: return "stage1";
        case Stage::S2: return "stage2";
        case Stage::S3: return "stage3";
    }
    return "?";
}

Stage stage_from_int(int s) {
    if (s < 1 || s > 3) throw ConfigError("stage must be 1, 2 or 3");
    return static_cast<Stage>(s);
}

StageConfig StageConfig::defaults(Stage s) {
    StageConfig c;
    c.stage = s;
    c.weight_decay = 1e-3;
    c.patches_per_epoch = 1000;
    switch (s) {
        case Stage::S1:
            c.learning_rate = 1e-3;
            c.epochs = 50;
            break;
        case Stage::S2:
            c.learning_rate = 1e-4;
            c.epochs = 20;
            break;
        case Stage::S3:
            c.learning_rate = 1e-4;
            c.epochs = 10;
            break;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Data generation and assembly
// ---------------------------------------------------------------------------

namespace {

Dataset empty_like(const OceanWorld& world, std::initializer_list<Variable> vars) {
    Dataset ds;
    ds.grid = world.grid;
    ds.day_start = 0;
    ds.n_days = world.n_days();
    ds.ocean = world.ocean;
    for (Variable v : vars) ds.add_variable(v);
    return ds;
}

GriddedField smoothed(const GriddedField& f, double sigma) {
    GriddedField out = f;
    kern::masked_gaussian_smooth(f.values.data(), f.mask.data(), f.n_lat, f.n_lon, sigma,
                                 out.values.data(), out.mask.data());
    for (std::size_t i = 0; i < out.mask.size(); ++i) {
        if (!out.mask[i]) out.values[i] = 0.0;
    }
    return out;
}

}  // namespace

GeneratedData generate_data(const OceanWorld& world, const ObservationConfig& obs, std::uint64_t seed) {
    GeneratedData g;
    g.world = world_to_dataset(world);

    g.nadir = empty_like(world, {Variable::SSH});
    g.imagery = empty_like(world, {Variable::SST, Variable::CHL});
    g.swot = empty_like(world, {Variable::SSH});
    g.l4 = empty_like(world, {Variable::SSH, Variable::U, Variable::V});
    g.neurost = empty_like(world, {Variable::SSH, Variable::U, Variable::V});

    for (int day = 0; day < world.n_days(); ++day) {
        g.nadir.set_field(observe_nadir(world, day, obs.nadir_tracks, obs.nadir_spacing_km,
                                        obs.nadir_noise_std, sub_seed(seed, "nadir" + std::to_string(day))));
        g.imagery.set_field(observe_imagery(world, day, Variable::SST, obs.cloud_cover,
                                            sub_seed(seed, "sst" + std::to_string(day))));
        g.imagery.set_field(observe_imagery(world, day, Variable::CHL, obs.cloud_cover,
                                            sub_seed(seed, "chl" + std::to_string(day))));
        g.swot.set_field(observe_swot(world, day, obs.swot, sub_seed(seed, "swot")));

        GriddedField l4_ssh = smoothed(world.ssh[day], obs.l4_sigma_cells);
        GriddedField l4_u = smoothed(world.u[day], obs.l4_sigma_cells);
        GriddedField l4_v = smoothed(world.v[day], obs.l4_sigma_cells);
        g.l4.set_field(std::move(l4_ssh));
        g.l4.set_field(std::move(l4_u));
        g.l4.set_field(std::move(l4_v));

        g.neurost.set_field(smoothed(world.ssh[day], obs.neurost_sigma_cells));
        g.neurost.set_field(smoothed(world.u[day], obs.neurost_sigma_cells));
        g.neurost.set_field(smoothed(world.v[day], obs.neurost_sigma_cells));
    }

    g.drifters_train = simulate_drifters(world, obs.n_drifters_train, sub_seed(seed, "drifters-train"));
    g.drifters_eval = simulate_drifters(world, obs.n_drifters_eval, sub_seed(seed, "drifters-eval"));
    return g;
}

void save_generated(const GeneratedData& data, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "obs");
    data.world.save((fs::path(dir) / "world").string());
    data.nadir.save((fs::path(dir) / "obs" / "nadir").string());
    data.imagery.save((fs::path(dir) / "obs" / "imagery").string());
    data.swot.save((fs::path(dir) / "obs" / "swot").string());
    data.l4.save((fs::path(dir) / "obs" / "l4").string());
    data.neurost.save((fs::path(dir) / "obs" / "neurost").string());
    save_drifters_csv(data.drifters_train, (fs::path(dir) / "drifters_train.csv").string());
    save_drifters_csv(data.drifters_eval, (fs::path(dir) / "drifters_eval.csv").string());
}

const Climatology& TrainingData::clim_for(Variable v) const {
    switch (v) {
        case Variable::SSH: return clim_ssh;
        case Variable::U: return clim_u;
        case Variable::V: return clim_v;
        case Variable::SST: return clim_sst;
        case Variable::CHL: return clim_chl;
    }
    return clim_ssh;
}

namespace {

Climatology clim_from_dataset(const Dataset& ds, Variable v) {
    std::vector<const GriddedField*> series;
    series.reserve(ds.n_days);
    for (int d = ds.day_start; d < ds.day_start + ds.n_days; ++d) series.push_back(&ds.field(v, d));
    return compute_climatology(series, ds.grid);
}

}  // namespace

TrainingData TrainingData::build(GeneratedData data, const GeophysParams& geo) {
    TrainingData td;
    td.grid = data.world.grid;
    td.ocean = data.world.ocean;
    td.day_lo = data.world.day_start;
    td.day_hi = data.world.day_start + data.world.n_days - 1;

    // Normalization statistics: SSH and currents from the gridded L4 analog,
    // tracers from their own (cloud-masked) imagery.
    td.clim_ssh = clim_from_dataset(data.l4, Variable::SSH);
    td.clim_u = clim_from_dataset(data.l4, Variable::U);
    td.clim_v = clim_from_dataset(data.l4, Variable::V);
    td.clim_sst = clim_from_dataset(data.imagery, Variable::SST);
    td.clim_chl = clim_from_dataset(data.imagery, Variable::CHL);

    // Derived stage targets.
    td.swath_uv.grid = td.grid;
    td.swath_uv.day_start = data.swot.day_start;
    td.swath_uv.n_days = data.swot.n_days;
    td.swath_uv.ocean = td.ocean;
    td.swath_uv.add_variable(Variable::U);
    td.swath_uv.add_variable(Variable::V);
    for (int d = data.swot.day_start; d < data.swot.day_start + data.swot.n_days; ++d) {
        auto [u, v] = swath_geostrophy(data.swot.field(Variable::SSH, d), td.grid, geo);
        td.swath_uv.set_field(std::move(u));
        td.swath_uv.set_field(std::move(v));
    }

    td.drifter_uv.grid = td.grid;
    td.drifter_uv.day_start = td.day_lo;
    td.drifter_uv.n_days = td.day_hi - td.day_lo + 1;
    td.drifter_uv.ocean = td.ocean;
    td.drifter_uv.add_variable(Variable::U);
    td.drifter_uv.add_variable(Variable::V);
    for (int d = td.day_lo; d <= td.day_hi; ++d) {
        GriddedField u, v;
        rasterize_drifters(data.drifters_train, td.grid, d, u, v);
        td.drifter_uv.set_field(std::move(u));
        td.drifter_uv.set_field(std::move(v));
    }

    td.nadir = std::move(data.nadir);
    td.imagery = std::move(data.imagery);
    td.swot = std::move(data.swot);
    td.l4 = std::move(data.l4);
    td.neurost = std::move(data.neurost);
    return td;
}

TrainingData TrainingData::load(const std::string& dir, const GeophysParams& geo) {
    GeneratedData g;
    g.world = Dataset::load((fs::path(dir) / "world").string());
    g.nadir = Dataset::load((fs::path(dir) / "obs" / "nadir").string());
    g.imagery = Dataset::load((fs::path(dir) / "obs" / "imagery").string());
    g.swot = Dataset::load((fs::path(dir) / "obs" / "swot").string());
    g.l4 = Dataset::load((fs::path(dir) / "obs" / "l4").string());
    g.neurost = Dataset::load((fs::path(dir) / "obs" / "neurost").string());
    g.drifters_train = load_drifters_csv((fs::path(dir) / "drifters_train.csv").string());
    return build(std::move(g), geo);
}

// ---------------------------------------------------------------------------
// Loss pieces
// ---------------------------------------------------------------------------

std::vector<double> magnitude_weights(const std::vector<double>& target_u,
                                      const std::vector<double>& target_v,
                                      const std::vector<std::uint8_t>& mask, double v_ref, double w_max) {
    if (v_ref <= 0.0) throw ConfigError("magnitude_weights: v_ref must be > 0");
    if (target_u.size() != target_v.size() || target_u.size() != mask.size()) {
        throw InputError("magnitude_weights: shape mismatch");
    }
    std::vector<double> w(target_u.size(), 1.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!mask[i]) continue;
        const double mag = std::hypot(target_u[i], target_v[i]);
        w[i] = std::min(1.0 + mag / v_ref, w_max);
    }
    return w;
}

MaskedMse weighted_masked_mse(const double* pred, const double* target, const std::uint8_t* mask,
                              const double* weights, std::size_t n) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const double w = weights ? weights[i] : 1.0;
        const double e = pred[i] - target[i];
        num += w * e * e;
        den += w;
    }
    MaskedMse r;
    if (den > 0.0) {
        r.value = num / den;
        r.supervised = true;
    }
    return r;
}

void weighted_masked_mse_grad(const double* pred, const double* target, const std::uint8_t* mask,
                              const double* weights, std::size_t n, double scale, double* dpred) {
    double den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (mask[i]) den += weights ? weights[i] : 1.0;
    }
    if (den <= 0.0) {
        std::fill(dpred, dpred + n, 0.0);
        return;
    }
    const double k = 2.0 * scale / den;
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) {
            dpred[i] = 0.0;
            continue;
        }
        const double w = weights ? weights[i] : 1.0;
        dpred[i] = k * w * (pred[i] - target[i]);
    }
}

// ---------------------------------------------------------------------------
// Sample construction
// ---------------------------------------------------------------------------

namespace {

// Crops one field, normalizes observed cells, and emits value/mask planes.
void normalized_crop(const GriddedField& f, const GridSpec& grid, const Climatology& clim, int row,
                     int col, int h, int w, double* values, double* mask01) {
    for (int i = 0; i < h; ++i) {
        const double lat = grid.lat_center(row + i);
        for (int j = 0; j < w; ++j) {
            const std::size_t src = static_cast<std::size_t>(row + i) * f.n_lon + (col + j);
            const std::size_t dst = static_cast<std::size_t>(i) * w + j;
            if (f.mask[src]) {
                double mean, std;
                clim.lookup(f.day, lat, grid.lon_center(col + j), mean, std);
                values[dst] = (f.values[src] - mean) / std;
                mask01[dst] = 1.0;
            } else {
                values[dst] = 0.0;
                mask01[dst] = 0.0;
            }
        }
    }
}

void crop_raw(const GriddedField& f, int row, int col, int h, int w, double* values,
              std::uint8_t* mask) {
    for (int i = 0; i < h; ++i) {
        const std::size_t src = static_cast<std::size_t>(row + i) * f.n_lon + col;
        std::memcpy(values + static_cast<std::size_t>(i) * w, &f.values[src], sizeof(double) * w);
        std::memcpy(mask + static_cast<std::size_t>(i) * w, &f.mask[src], sizeof(std::uint8_t) * w);
    }
}

void normalize_in_place(std::vector<double>& values, const std::vector<std::uint8_t>& mask,
                        const GridSpec& grid, const Climatology& clim, int day, int row, int col, int h,
                        int w) {
    for (int i = 0; i < h; ++i) {
        const double lat = grid.lat_center(row + i);
        for (int j = 0; j < w; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * w + j;
            if (!mask[k]) {
                values[k] = 0.0;
                continue;
            }
            double mean, std;
            clim.lookup(day, lat, grid.lon_center(col + j), mean, std);
            values[k] = (values[k] - mean) / std;
        }
    }
}

const Dataset& input_dataset(const TrainingData& data, InputVar v) {
    switch (v) {
        case InputVar::SSH_NADIR: return data.nadir;
        case InputVar::SST: return data.imagery;
        case InputVar::CHL: return data.imagery;
        case InputVar::SSH_SWOT: return data.swot;
    }
    return data.nadir;
}

}  // namespace

NetInput build_net_input(const Model& model, const TrainingData& data, int anchor_day, int row,
                         int col) {
    const ModelConfig& cfg = model.config();
    const int h = cfg.patch_h, w = cfg.patch_w;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    NetInput input;
    input.values.resize(cfg.n_vars());
    input.masks.resize(cfg.n_vars());
    for (int vi = 0; vi < cfg.n_vars(); ++vi) {
        const InputVar iv = cfg.input_variables[vi];
        const Dataset& ds = input_dataset(data, iv);
        const Variable src = input_var_source(iv);
        const Climatology& clim = data.clim_for(src);
        input.values[vi].resize(plane * cfg.t_in);
        input.masks[vi].resize(plane * cfg.t_in);
        for (int t = 0; t < cfg.t_in; ++t) {
            const GriddedField& f = ds.field(src, anchor_day + t);
            normalized_crop(f, data.grid, clim, row, col, h, w, input.values[vi].data() + t * plane,
                            input.masks[vi].data() + t * plane);
        }
    }
    return input;
}

TrainingSample build_sample(const Model& model, const TrainingData& data, const StageConfig& stage,
                            int anchor_day, int row, int col, const TrainingOptions& opts) {
    const ModelConfig& cfg = model.config();
    const int h = cfg.patch_h, w = cfg.patch_w;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const int issue_day = anchor_day + cfg.t_in - 1;

    TrainingSample s;
    s.anchor_day = anchor_day;
    s.row = row;
    s.col = col;
    s.coords = make_patch_coords(data.grid, row, col, h, w, issue_day);
    s.input = build_net_input(model, data, anchor_day, row, col);

    // Targets for days issue_day + 1 .. issue_day + t_out.
    const std::size_t tplane = plane * cfg.t_out;
    s.target_ssh.assign(tplane, 0.0);
    s.target_u.assign(tplane, 0.0);
    s.target_v.assign(tplane, 0.0);
    s.mask_ssh.assign(tplane, 0);
    s.mask_u.assign(tplane, 0);
    s.mask_v.assign(tplane, 0);
    std::vector<double> phys_u(tplane, 0.0), phys_v(tplane, 0.0);

    for (int t = 0; t < cfg.t_out; ++t) {
        const int day = issue_day + 1 + t;
        const std::size_t off = static_cast<std::size_t>(t) * plane;
        switch (stage.stage) {
            case Stage::S1: {
                if (!data.nadir.has(Variable::SSH)) throw InputError("stage 1 requires nadir observations");
                const Dataset& cur =
                    (stage.target_source == Stage1Target::NEUROST_ANALOG) ? data.neurost : data.l4;
                if (!cur.has(Variable::U)) throw InputError("stage 1 requires the gridded current analog");
                crop_raw(data.nadir.field(Variable::SSH, day), row, col, h, w, s.target_ssh.data() + off,
                         s.mask_ssh.data() + off);
                crop_raw(cur.field(Variable::U, day), row, col, h, w, phys_u.data() + off,
                         s.mask_u.data() + off);
                crop_raw(cur.field(Variable::V, day), row, col, h, w, phys_v.data() + off,
                         s.mask_v.data() + off);
                break;
            }
            case Stage::S2: {
                if (!data.swot.has(Variable::SSH)) throw InputError("stage 2 requires SWOT observations");
                crop_raw(data.swot.field(Variable::SSH, day), row, col, h, w, s.target_ssh.data() + off,
                         s.mask_ssh.data() + off);
                crop_raw(data.swath_uv.field(Variable::U, day), row, col, h, w, phys_u.data() + off,
                         s.mask_u.data() + off);
                crop_raw(data.swath_uv.field(Variable::V, day), row, col, h, w, phys_v.data() + off,
                         s.mask_v.data() + off);
                break;
            }
            case Stage::S3: {
                if (data.drifter_uv.n_days == 0) throw InputError("stage 3 requires drifter targets");
                // SSH unsupervised in stage 3.
                crop_raw(data.drifter_uv.field(Variable::U, day), row, col, h, w, phys_u.data() + off,
                         s.mask_u.data() + off);
                crop_raw(data.drifter_uv.field(Variable::V, day), row, col, h, w, phys_v.data() + off,
                         s.mask_v.data() + off);
                break;
            }
        }
    }

    // Weights from physical magnitudes, then normalize the targets.
    s.weights_uv = magnitude_weights(phys_u, phys_v, s.mask_u, opts.v_ref, opts.w_max);

    for (int t = 0; t < cfg.t_out; ++t) {
        const int day = issue_day + 1 + t;
        const std::size_t off = static_cast<std::size_t>(t) * plane;
        if (stage.stage != Stage::S3) {
            std::vector<double> tmp(s.target_ssh.begin() + off, s.target_ssh.begin() + off + plane);
            std::vector<std::uint8_t> m(s.mask_ssh.begin() + off, s.mask_ssh.begin() + off + plane);
            normalize_in_place(tmp, m, data.grid, data.clim_ssh, day, row, col, h, w);
            std::copy(tmp.begin(), tmp.end(), s.target_ssh.begin() + off);
        }
        std::vector<double> tu(phys_u.begin() + off, phys_u.begin() + off + plane);
        std::vector<std::uint8_t> mu(s.mask_u.begin() + off, s.mask_u.begin() + off + plane);
        normalize_in_place(tu, mu, data.grid, data.clim_u, day, row, col, h, w);
        std::copy(tu.begin(), tu.end(), s.target_u.begin() + off);
        std::vector<double> tv(phys_v.begin() + off, phys_v.begin() + off + plane);
        std::vector<std::uint8_t> mv(s.mask_v.begin() + off, s.mask_v.begin() + off + plane);
        normalize_in_place(tv, mv, data.grid, data.clim_v, day, row, col, h, w);
        std::copy(tv.begin(), tv.end(), s.target_v.begin() + off);
    }
    return s;
}

TrainingSample sample_patch(const Model& model, const TrainingData& data, const StageConfig& stage,
                            Rng& rng, const TrainingOptions& opts) {
    const ModelConfig& cfg = model.config();
    const int window = cfg.t_in + cfg.t_out;
    const int n_anchor = data.day_hi - data.day_lo + 1 - window + 1;
    if (n_anchor < 1) throw InputError("sample_patch: dataset shorter than t_in + t_out days");
    const int max_row = data.grid.n_lat - cfg.patch_h;
    const int max_col = data.grid.n_lon - cfg.patch_w;
    if (max_row < 0 || max_col < 0) throw InputError("sample_patch: patch larger than grid");

    for (int attempt = 0; attempt < 1000; ++attempt) {
        const int anchor = data.day_lo + static_cast<int>(rng.uniform_int(n_anchor));
        const int row = static_cast<int>(rng.uniform_int(max_row + 1));
        const int col = static_cast<int>(rng.uniform_int(max_col + 1));
        std::size_t n_ocean = 0;
        for (int i = 0; i < cfg.patch_h; ++i) {
            for (int j = 0; j < cfg.patch_w; ++j) {
                n_ocean += data.ocean[static_cast<std::size_t>(row + i) * data.grid.n_lon + (col + j)];
            }
        }
        if (static_cast<double>(n_ocean) <
            opts.min_ocean_fraction * cfg.patch_h * cfg.patch_w) {
            continue;
        }
        return build_sample(model, data, stage, anchor, row, col, opts);
    }
    throw InputError("sample_patch: could not find a crop with enough ocean");
}

LossTerms sample_loss(const Model& model, const ParameterSet& ps, const TrainingSample& sample,
                      double scale, GradientSet* grads) {
    const ModelConfig& cfg = model.config();
    const std::size_t n = static_cast<std::size_t>(cfg.t_out) * cfg.patch_h * cfg.patch_w;

    LossTerms terms;
    if (grads) {
        auto cache = model.make_cache();
        NetOutput out = model.forward(ps, sample.input, sample.coords, *cache);
        const MaskedMse ssh = weighted_masked_mse(out.ssh.data(), sample.target_ssh.data(),
                                                  sample.mask_ssh.data(), nullptr, n);
        const MaskedMse mu = weighted_masked_mse(out.u.data(), sample.target_u.data(),
                                                 sample.mask_u.data(), sample.weights_uv.data(), n);
        const MaskedMse mv = weighted_masked_mse(out.v.data(), sample.target_v.data(),
                                                 sample.mask_v.data(), sample.weights_uv.data(), n);
        terms.ssh = ssh.value;
        terms.uv = mu.value + mv.value;
        terms.total = terms.ssh + terms.uv;

        NetOutput dout;
        dout.ssh.resize(n);
        dout.u.resize(n);
        dout.v.resize(n);
        weighted_masked_mse_grad(out.ssh.data(), sample.target_ssh.data(), sample.mask_ssh.data(), nullptr,
                                 n, scale, dout.ssh.data());
        weighted_masked_mse_grad(out.u.data(), sample.target_u.data(), sample.mask_u.data(),
                                 sample.weights_uv.data(), n, scale, dout.u.data());
        weighted_masked_mse_grad(out.v.data(), sample.target_v.data(), sample.mask_v.data(),
                                 sample.weights_uv.data(), n, scale, dout.v.data());
        model.backward(ps, *cache, dout, *grads);
    } else {
        NetOutput out = model.forward(ps, sample.input, sample.coords);
        terms.ssh = weighted_masked_mse(out.ssh.data(), sample.target_ssh.data(), sample.mask_ssh.data(),
                                        nullptr, n)
                        .value;
        terms.uv = weighted_masked_mse(out.u.data(), sample.target_u.data(), sample.mask_u.data(),
                                       sample.weights_uv.data(), n)
                       .value +
                   weighted_masked_mse(out.v.data(), sample.target_v.data(), sample.mask_v.data(),
                                       sample.weights_uv.data(), n)
                       .value;
        terms.total = terms.ssh + terms.uv;
    }
    return terms;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

namespace {

struct AdamState {
    std::vector<std::vector<double>> m, v;
    long t = 0;

    void init_like(const ParameterSet& ps) {
        m.resize(ps.params.size());
        v.resize(ps.params.size());
        for (std::size_t i = 0; i < ps.params.size(); ++i) {
            m[i].assign(ps.params[i].numel(), 0.0);
            v[i].assign(ps.params[i].numel(), 0.0);
        }
    }
};

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void adam_step(ParameterSet& ps, const GradientSet& grads, AdamState& st, double lr, double wd) {
    st.t += 1;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < ps.params.size(); ++i) {
        Param& p = ps.params[i];
        if (ps.is_frozen(p.group)) continue;
        auto& m = st.m[i];
        auto& v = st.v[i];
        const auto& g = grads.g[i];
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * g[k];
            v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            p.value[k] -= lr * (mhat / (std::sqrt(vhat) + kAdamEps) + wd * p.value[k]);
        }
    }
}

std::string param_norm_snapshot(const ParameterSet& ps) {
    std::map<std::string, double> norms;
    for (const auto& p : ps.params) {
        double s = 0.0;
        for (double x : p.value) s += x * x;
        norms[p.group] += s;
    }
    std::string out;
    for (const auto& [g, s] : norms) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s=%.6g ", g.c_str(), std::sqrt(s));
        out += buf;
    }
    return out;
}

std::set<std::string> effective_frozen(const Model& model, const StageConfig& stage) {
    std::set<std::string> frozen = stage.frozen_groups;
    if (stage.stage == Stage::S3) {
        // Stage 3 finetunes only the current decoders: the SSH decoder is
        // frozen along with the shared trunk, so SSH forecasts are unchanged.
        frozen.insert("decoder.SSH");
        frozen.insert("pos_embed");
        frozen.insert("translator");
        for (InputVar v : model.config().input_variables) {
            frozen.insert(std::string("encoder.") + input_var_name(v));
        }
    }
    return frozen;
}

}  // namespace

std::vector<EpochStats> train_stage(const Model& model, ParameterSet& params, const StageConfig& stage,
                                    const TrainingData& data, std::uint64_t seed,
                                    const TrainingOptions& opts) {
    params.frozen_groups = effective_frozen(model, stage);

    std::vector<EpochStats> history;
    if (stage.epochs <= 0) return history;

    AdamState adam;
    adam.init_like(params);
    Rng sampler(sub_seed(seed, std::string(stage_name(stage.stage)) + "-sampler"));

    const int batch = std::max(1, opts.batch_size);
    const int steps_per_epoch = std::max(1, (stage.patches_per_epoch + batch - 1) / batch);

    std::vector<TrainingSample> samples(batch);
    std::vector<GradientSet> sample_grads(batch);
    std::vector<LossTerms> sample_terms(batch);
    GradientSet grads;
    grads.init_like(params);

    for (int epoch = 0; epoch < stage.epochs; ++epoch) {
        double ep_loss = 0.0, ep_ssh = 0.0, ep_uv = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            for (int b = 0; b < batch; ++b) {
                samples[b] = sample_patch(model, data, stage, sampler, opts);
            }
            const double scale = 1.0 / batch;
#pragma omp parallel for schedule(dynamic, 1)
            for (int b = 0; b < batch; ++b) {
                if (sample_grads[b].g.empty()) sample_grads[b].init_like(params);
                sample_grads[b].zero();
                sample_terms[b] = sample_loss(model, params, samples[b], scale, &sample_grads[b]);
            }
            grads.zero();
            double batch_loss = 0.0, batch_ssh = 0.0, batch_uv = 0.0;
            for (int b = 0; b < batch; ++b) {
                grads.add(sample_grads[b]);
                batch_loss += sample_terms[b].total;
                batch_ssh += sample_terms[b].ssh;
                batch_uv += sample_terms[b].uv;
            }
            batch_loss /= batch;
            batch_ssh /= batch;
            batch_uv /= batch;
            if (!std::isfinite(batch_loss)) {
                throw NumericalError("non-finite loss in " + std::string(stage_name(stage.stage)) +
                                     " epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                     "; parameter norms: " + param_norm_snapshot(params));
            }
            adam_step(params, grads, adam, stage.learning_rate, stage.weight_decay);
            ep_loss += batch_loss;
            ep_ssh += batch_ssh;
            ep_uv += batch_uv;
        }
        history.push_back({epoch, ep_loss / steps_per_epoch, ep_ssh / steps_per_epoch,
                           ep_uv / steps_per_epoch});
    }
    return history;
}

void save_loss_history(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot write loss history: " + path);
    f << "epoch,mean_loss,ssh_term,uv_term\n";
    char buf[160];
    for (const auto& e : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.mean_loss, e.ssh_term,
                      e.uv_term);
        f << buf;
    }
}

std::vector<CurriculumStageResult> run_curriculum(const Model& model, ParameterSet params,
                                                  const std::vector<StageConfig>& stages,
                                                  const TrainingData& data, std::uint64_t seed,
                                                  const std::string& checkpoint_root,
                                                  const TrainingOptions& opts) {
    if (stages.empty()) throw ConfigError("run_curriculum: no stages requested");
    for (std::size_t i = 1; i < stages.size(); ++i) {
        if (static_cast<int>(stages[i].stage) <= static_cast<int>(stages[i - 1].stage)) {
            throw ConfigError("run_curriculum: stages must be in strictly ascending order");
        }
    }

    std::vector<CurriculumStageResult> results;
    for (const StageConfig& sc : stages) {
        CurriculumStageResult r;
        r.stage = sc.stage;
        r.history = train_stage(model, params, sc, data, seed, opts);
        r.params = params;
        if (!checkpoint_root.empty()) {
            const std::string dir = (fs::path(checkpoint_root) / stage_name(sc.stage)).string();
            save_checkpoint(dir, params, model.config(), stage_name(sc.stage), seed);
            save_loss_history(r.history, (fs::path(checkpoint_root) /
                                          (std::string(stage_name(sc.stage)) + "_loss.csv"))
                                             .string());
        }
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace surfcast
