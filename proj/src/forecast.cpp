#include "surfcast/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "surfcast/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace surfcast {

TilePlan tile_domain(int extent_rows, int extent_cols, int patch_h, int patch_w, int stride_rows,
                     int stride_cols) {
    if (patch_h < 1 || patch_w < 1) throw ConfigError("tile_domain: patch must be positive");
    if (patch_h > extent_rows || patch_w > extent_cols) {
        throw ConfigError("tile_domain: patch larger than the extent");
    }
    if (stride_rows < 1 || stride_cols < 1) throw ConfigError("tile_domain: stride must be positive");
    if (stride_rows > patch_h || stride_cols > patch_w) {
        throw ConfigError("tile_domain: stride must not exceed the patch size");
    }

    auto axis_anchors = [](int extent, int patch, int stride) {
        std::vector<int> xs;
        for (int a = 0;; a += stride) {
            if (a + patch >= extent) {
                xs.push_back(extent - patch);  // clamp the last anchor inside
                break;
            }
            xs.push_back(a);
        }
        return xs;
    };

    TilePlan plan;
    plan.patch_h = patch_h;
    plan.patch_w = patch_w;
    plan.stride_rows = stride_rows;
    plan.stride_cols = stride_cols;
    const auto rows = axis_anchors(extent_rows, patch_h, stride_rows);
    const auto cols = axis_anchors(extent_cols, patch_w, stride_cols);
    for (int r : rows) {
        for (int c : cols) plan.anchors.emplace_back(r, c);
    }
    return plan;
}

MergedField gaussian_merge(const std::vector<std::pair<int, int>>& anchors,
                           const std::vector<const double*>& patches, int patch_h, int patch_w,
                           int extent_rows, int extent_cols, double sigma_cells) {
    if (patches.empty()) throw InputError("gaussian_merge: empty patch list");
    if (anchors.size() != patches.size()) throw InputError("gaussian_merge: anchors/patches mismatch");
    if (sigma_cells <= 0.0) throw ConfigError("gaussian_merge: sigma must be positive");

    const std::size_t n = static_cast<std::size_t>(extent_rows) * extent_cols;
    std::vector<double> num(n, 0.0), den(n, 0.0);
    for (std::size_t k = 0; k < patches.size(); ++k) {
        kern::gaussian_merge_accumulate(patches[k], patch_h, patch_w, anchors[k].first,
                                        anchors[k].second, sigma_cells, extent_rows, extent_cols,
                                        num.data(), den.data());
    }
    MergedField out;
    out.values.assign(n, 0.0);
    out.mask.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (den[i] > 0.0) {
            out.values[i] = num[i] / den[i];
            out.mask[i] = 1;
        }
    }
    return out;
}

const GriddedField& ForecastProduct::lead_field(Variable var, int lead) const {
    if (lead < 1 || lead > t_out) throw InputError("lead outside 1..t_out");
    switch (var) {
        case Variable::SSH: return ssh[lead - 1];
        case Variable::U: return u[lead - 1];
        case Variable::V: return v[lead - 1];
        default: throw InputError("forecast product holds SSH, U, V only");
    }
}

ForecastProduct forecast(const Model& model, const ParameterSet& params, const TrainingData& data,
                         int issue_day, const ForecastOptions& opts, const std::string& checkpoint_hash) {
    const ModelConfig& cfg = model.config();
    const int anchor_day = issue_day - cfg.t_in + 1;
    if (anchor_day < data.day_lo || issue_day > data.day_hi) {
        throw InputError("forecast: input window [" + std::to_string(anchor_day) + ", " +
                         std::to_string(issue_day) + "] not fully available (dataset spans [" +
                         std::to_string(data.day_lo) + ", " + std::to_string(data.day_hi) + "])");
    }

    const int stride_r = opts.stride_rows > 0 ? opts.stride_rows : cfg.patch_h / 2;
    const int stride_c = opts.stride_cols > 0 ? opts.stride_cols : cfg.patch_w / 2;
    const double sigma = opts.sigma_cells > 0.0 ? opts.sigma_cells : cfg.patch_h / 4.0;
    const TilePlan plan = tile_domain(data.grid.n_lat, data.grid.n_lon, cfg.patch_h, cfg.patch_w,
                                      stride_r, stride_c);

    const std::size_t plane = static_cast<std::size_t>(cfg.patch_h) * cfg.patch_w;
    const int n_patches = static_cast<int>(plan.anchors.size());

    // Per-patch denormalized outputs: [patch][var][lead-plane].
    std::vector<std::array<std::vector<double>, 3>> outputs(n_patches);

#pragma omp parallel for schedule(dynamic, 1)
    for (int k = 0; k < n_patches; ++k) {
        const auto [row, col] = plan.anchors[k];
        NetInput input = build_net_input(model, data, anchor_day, row, col);
        const PatchCoords coords = make_patch_coords(data.grid, row, col, cfg.patch_h, cfg.patch_w,
                                                     issue_day);
        NetOutput out = model.forward(params, input, coords);
        for (int ov = 0; ov < 3; ++ov) {
            const Variable var = (ov == 0) ? Variable::SSH : (ov == 1 ? Variable::U : Variable::V);
            const Climatology& clim = data.clim_for(var);
            const std::vector<double>& src = (ov == 0) ? out.ssh : (ov == 1 ? out.u : out.v);
            auto& dst = outputs[k][ov];
            dst.resize(src.size());
            for (int t = 0; t < cfg.t_out; ++t) {
                const int day = issue_day + 1 + t;
                for (int i = 0; i < cfg.patch_h; ++i) {
                    const double lat = data.grid.lat_center(row + i);
                    for (int j = 0; j < cfg.patch_w; ++j) {
                        double mean, std;
                        clim.lookup(day, lat, data.grid.lon_center(col + j), mean, std);
                        const std::size_t idx = t * plane + static_cast<std::size_t>(i) * cfg.patch_w + j;
                        dst[idx] = src[idx] * std + mean;
                    }
                }
            }
        }
    }

    ForecastProduct product;
    product.grid = data.grid;
    product.issue_day = issue_day;
    product.t_out = cfg.t_out;
    product.checkpoint_hash = checkpoint_hash;
    product.model_config_json = model_config_to_json_str(cfg);

    for (int t = 0; t < cfg.t_out; ++t) {
        for (int ov = 0; ov < 3; ++ov) {
            std::vector<const double*> patches(n_patches);
            for (int k = 0; k < n_patches; ++k) patches[k] = outputs[k][ov].data() + t * plane;
            MergedField merged = gaussian_merge(plan.anchors, patches, cfg.patch_h, cfg.patch_w,
                                                data.grid.n_lat, data.grid.n_lon, sigma);
            const Variable var = (ov == 0) ? Variable::SSH : (ov == 1 ? Variable::U : Variable::V);
            GriddedField f = GriddedField::zeros(var, issue_day + 1 + t, data.grid.n_lat, data.grid.n_lon);
            for (std::size_t i = 0; i < merged.values.size(); ++i) {
                const bool keep = merged.mask[i] && (data.ocean.empty() || data.ocean[i]);
                f.values[i] = keep ? merged.values[i] : 0.0;
                f.mask[i] = keep ? 1 : 0;
            }
            if (ov == 0) product.ssh.push_back(std::move(f));
            if (ov == 1) product.u.push_back(std::move(f));
            if (ov == 2) product.v.push_back(std::move(f));
        }
    }
    return product;
}

ForecastProduct persistence_forecast(const GriddedField& ssh_ref, const GriddedField& u_ref,
                                     const GriddedField& v_ref, const GridSpec& grid, int issue_day,
                                     int t_out) {
    if (u_ref.values.empty() || v_ref.values.empty()) {
        throw InputError("persistence_forecast: missing reference fields");
    }
    ForecastProduct product;
    product.grid = grid;
    product.issue_day = issue_day;
    product.t_out = t_out;
    product.checkpoint_hash = "persistence";
    for (int t = 0; t < t_out; ++t) {
        GriddedField s = ssh_ref, u = u_ref, v = v_ref;
        s.day = issue_day + 1 + t;
        u.day = s.day;
        v.day = s.day;
        product.ssh.push_back(std::move(s));
        product.u.push_back(std::move(u));
        product.v.push_back(std::move(v));
    }
    return product;
}

void save_product(const ForecastProduct& product, const std::string& dir) {
    Dataset ds;
    ds.grid = product.grid;
    ds.day_start = product.issue_day + 1;
    ds.n_days = product.t_out;
    for (Variable v : {Variable::SSH, Variable::U, Variable::V}) ds.add_variable(v);
    for (int t = 0; t < product.t_out; ++t) {
        ds.set_field(product.ssh[t]);
        ds.set_field(product.u[t]);
        ds.set_field(product.v[t]);
    }
    json extra;
    extra["issue_day"] = product.issue_day;
    extra["leads"] = product.t_out;
    extra["checkpoint_hash"] = product.checkpoint_hash;
    if (!product.model_config_json.empty()) {
        extra["model_config"] = json::parse(product.model_config_json);
    }
    ds.extra_json = extra.dump();
    ds.save(dir);
}

ForecastProduct load_product(const std::string& dir) {
    Dataset ds = Dataset::load(dir);
    if (ds.extra_json.empty()) throw InputError("not a forecast product (missing metadata): " + dir);
    json extra = json::parse(ds.extra_json);
    ForecastProduct product;
    product.grid = ds.grid;
    product.issue_day = extra.at("issue_day").get<int>();
    product.t_out = extra.at("leads").get<int>();
    product.checkpoint_hash = extra.at("checkpoint_hash").get<std::string>();
    if (extra.contains("model_config")) product.model_config_json = extra["model_config"].dump();
    for (int t = 0; t < product.t_out; ++t) {
        const int day = product.issue_day + 1 + t;
        product.ssh.push_back(ds.field(Variable::SSH, day));
        product.u.push_back(ds.field(Variable::U, day));
        product.v.push_back(ds.field(Variable::V, day));
    }
    return product;
}

}  // namespace surfcast
