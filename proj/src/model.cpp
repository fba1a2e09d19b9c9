#include "surfcast/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "surfcast/kernels.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace surfcast {

const char* input_var_name(InputVar v) {
    switch (v) {
        case InputVar::SSH_NADIR: return "SSH_nadir";
        case InputVar::SST: return "SST";
        case InputVar::CHL: return "CHL";
        case InputVar::SSH_SWOT: return "SSH_swot";
    }
    return "?";
}

InputVar input_var_from_name(const std::string& name) {
    if (name == "SSH_nadir") return InputVar::SSH_NADIR;
    if (name == "SST") return InputVar::SST;
    if (name == "CHL") return InputVar::CHL;
    if (name == "SSH_swot") return InputVar::SSH_SWOT;
    throw ConfigError("unknown input variable: " + name);
}

Variable input_var_source(InputVar v) {
    switch (v) {
        case InputVar::SSH_NADIR: return Variable::SSH;
        case InputVar::SST: return Variable::SST;
        case InputVar::CHL: return Variable::CHL;
        case InputVar::SSH_SWOT: return Variable::SSH;
    }
    return Variable::SSH;
}

void ModelConfig::validate() const {
    if (t_in < 1 || t_out < 1) throw ConfigError("model requires t_in >= 1 and t_out >= 1");
    if (patch_h % 4 != 0 || patch_w % 4 != 0) {
        throw ConfigError("patch_h and patch_w must be divisible by 4 (two stride-2 stages)");
    }
    if (patch_h < 8 || patch_w < 8) throw ConfigError("patch too small");
    if (embed_dim != 32) throw ConfigError("embed_dim is fixed at 32");
    if (input_variables.empty()) throw ConfigError("at least one input variable required");
    std::set<InputVar> seen;
    for (InputVar v : input_variables) {
        if (!seen.insert(v).second) throw ConfigError("duplicate input variable");
    }
    if (latent_channels < 4 || latent_channels % 4 != 0) {
        throw ConfigError("latent_channels must be a positive multiple of 4 (GroupNorm groups)");
    }
    if (n_gsta_blocks < 1) throw ConfigError("n_gsta_blocks must be >= 1");
    if (hidden_channels < 1) throw ConfigError("hidden_channels must be >= 1");
}

std::size_t Param::numel() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

int ParameterSet::find(const std::string& name) const {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

const Param& ParameterSet::at(const std::string& name) const {
    const int i = find(name);
    if (i < 0) throw InputError("no such parameter: " + name);
    return params[i];
}

Param& ParameterSet::at(const std::string& name) {
    return const_cast<Param&>(static_cast<const ParameterSet*>(this)->at(name));
}

std::size_t ParameterSet::total_params() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
}

std::vector<std::string> ParameterSet::groups() const {
    std::vector<std::string> gs;
    for (const auto& p : params) {
        if (std::find(gs.begin(), gs.end(), p.group) == gs.end()) gs.push_back(p.group);
    }
    return gs;
}

void GradientSet::init_like(const ParameterSet& ps) {
    g.resize(ps.params.size());
    for (std::size_t i = 0; i < ps.params.size(); ++i) g[i].assign(ps.params[i].numel(), 0.0);
}

void GradientSet::zero() {
    for (auto& v : g) std::fill(v.begin(), v.end(), 0.0);
}

void GradientSet::add(const GradientSet& other) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& o = other.g[i];
        for (std::size_t k = 0; k < o.size(); ++k) g[i][k] += o[k];
    }
}

PatchCoords make_patch_coords(const GridSpec& grid, int row, int col, int h, int w, int day) {
    PatchCoords c;
    c.center_lat = grid.lat_min + (row + 0.5 * h) * grid.resolution;
    c.center_lon = grid.lon_min + (col + 0.5 * w) * grid.resolution;
    int doy = day % 365;
    if (doy < 0) doy += 365;
    c.week_index = std::min(doy / 7, 52);
    const int hl = h / 4, wl = w / 4;
    c.pix_lat.resize(hl);
    c.pix_lon.resize(wl);
    for (int i = 0; i < hl; ++i) c.pix_lat[i] = grid.lat_min + (row + 4 * i + 2) * grid.resolution;
    for (int j = 0; j < wl; ++j) c.pix_lon[j] = grid.lon_min + (col + 4 * j + 2) * grid.resolution;
    return c;
}

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

namespace {

constexpr int kFourierFreqs = 8;
constexpr int kFeatDim = 3 * 2 * kFourierFreqs;  // sin/cos per frequency per coordinate
constexpr int kMlpHidden = 64;
constexpr int kGroups = 4;
constexpr double kGnEps = 1e-5;
constexpr int kFfnExpand = 2;

const char* output_var_name(OutputVar v) {
    switch (v) {
        case OutputVar::SSH: return "SSH";
        case OutputVar::U: return "U";
        case OutputVar::V: return "V";
    }
    return "?";
}

struct EncIdx {
    int ca_w, ca_b, n_g, n_b, cs_w, cs_b;
    int ca2_w, ca2_b, n2_g, n2_b, cs2_w, cs2_b;
};

struct BlockIdx {
    int gate_w, gate_b, val_w, val_b, res_a;
    int pw1_w, pw1_b, dw_w, dw_b, pw2_w, pw2_b, res_f;
};

struct DecIdx {
    int a_w, a_b, b_w, b_b, o_w, o_b;
};

void fourier_features(const PatchCoords& coords, int hl, int wl, double* feats) {
    // Row-major [pixel, feature]; one pixel per latent cell.
    for (int i = 0; i < hl; ++i) {
        for (int j = 0; j < wl; ++j) {
            double* row = feats + (static_cast<std::size_t>(i) * wl + j) * kFeatDim;
            const double coord[3] = {coords.pix_lat[i] / 90.0, coords.pix_lon[j] / 180.0,
                                     coords.week_index / 53.0};
            int o = 0;
            for (int c = 0; c < 3; ++c) {
                double freq = M_PI;
                for (int k = 0; k < kFourierFreqs; ++k) {
                    row[o++] = std::sin(freq * coord[c]);
                    row[o++] = std::cos(freq * coord[c]);
                    freq *= 2.0;
                }
            }
        }
    }
}

}  // namespace

struct Model::Cache {
    struct EncT {
        std::vector<double> in, ca, gn, ge, cs, ca2, gn2, ge2;
        std::array<double, kGroups> mean1{}, rstd1{}, mean2{}, rstd2{};
    };
    struct Block {
        std::vector<double> x, g_pre, g, val, attn, x1, f1, f2, f3, f4;
    };
    struct DecT {
        std::vector<double> in, a, ga, u1, b, gb, u2;
    };

    std::vector<std::vector<EncT>> enc;                  // [var][t]
    std::vector<std::vector<std::vector<double>>> lat;   // [var][t]
    std::vector<double> feats, h1, hg, emb_pix, proj_pix, embC;
    std::vector<double> zcat, tr_in;
    std::vector<Block> blocks;
    std::vector<double> tr_last, fut;
    std::vector<std::vector<DecT>> dec;                  // [output var][t]
};

// Parameter indices and conv specs fixed at construction.
struct ModelWiring {
    kern::ConvSpec enc_ca0, enc_cs0, enc_ca1, enc_cs1;
    kern::ConvSpec tr_in, value, pw1, pw2, tr_out;
    std::vector<kern::ConvSpec> gates;
    kern::ConvSpec dec_a, dec_b, dec_o;
    std::vector<EncIdx> enc_idx;
    int mlp1_w = -1, mlp1_b = -1, mlp2_w = -1, mlp2_b = -1, proj_w = -1, proj_b = -1;
    int tr_in_w = -1, tr_in_b = -1, tr_out_w = -1, tr_out_b = -1;
    std::vector<BlockIdx> blocks;
    std::array<DecIdx, 3> dec;
    bool has_proj = false;
};

void Model::register_param(const std::string& name, const std::string& group, std::vector<int> shape) {
    Param p;
    p.name = name;
    p.group = group;
    p.shape = std::move(shape);
    index_[name] = static_cast<int>(layout_.size());
    layout_.push_back(std::move(p));
}

Model::Model(ModelConfig config) : cfg_(std::move(config)) {
    cfg_.validate();
    const int C = cfg_.latent_channels;
    const int H = cfg_.patch_h, W = cfg_.patch_w;
    const int hl = cfg_.latent_h(), wl = cfg_.latent_w();
    const int hid = cfg_.hidden_channels;
    const int vtc = cfg_.n_vars() * cfg_.t_in * C;

    ModelWiring w;
    w.enc_ca0 = kern::make_conv_spec(2, H, W, C, 4, 4, 1, 1, 2, 1, 2);
    w.enc_cs0 = kern::make_conv_spec(C, H, W, C, 3, 3, 2, 1, 1, 1, 1);
    w.enc_ca1 = kern::make_conv_spec(C, H / 2, W / 2, C, 4, 4, 1, 1, 2, 1, 2);
    w.enc_cs1 = kern::make_conv_spec(C, H / 2, W / 2, C, 3, 3, 2, 1, 1, 1, 1);
    w.tr_in = kern::make_conv_spec(vtc, hl, wl, hid, 1, 1, 1, 0, 0, 0, 0);
    w.value = kern::make_conv_spec(hid, hl, wl, hid, 1, 1, 1, 0, 0, 0, 0);
    w.pw1 = kern::make_conv_spec(hid, hl, wl, kFfnExpand * hid, 1, 1, 1, 0, 0, 0, 0);
    w.pw2 = kern::make_conv_spec(kFfnExpand * hid, hl, wl, hid, 1, 1, 1, 0, 0, 0, 0);
    w.tr_out = kern::make_conv_spec(hid, hl, wl, cfg_.t_out * C, 1, 1, 1, 0, 0, 0, 0);
    w.dec_a = kern::make_conv_spec(C, hl, wl, C, 4, 4, 1, 1, 2, 1, 2);
    w.dec_b = kern::make_conv_spec(C, 2 * hl, 2 * wl, C, 4, 4, 1, 1, 2, 1, 2);
    w.dec_o = kern::make_conv_spec(C, H, W, 1, 1, 1, 1, 0, 0, 0, 0);

    for (InputVar var : cfg_.input_variables) {
        const std::string g = std::string("encoder.") + input_var_name(var);
        EncIdx e;
        register_param(g + ".b0.conv_a.weight", g, {C, 2, 4, 4});
        e.ca_w = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b0.conv_a.bias", g, {C});
        e.ca_b = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b0.norm.gamma", g, {C});
        e.n_g = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b0.norm.beta", g, {C});
        e.n_b = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b0.conv_s.weight", g, {C, C, 3, 3});
        e.cs_w = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b0.conv_s.bias", g, {C});
        e.cs_b = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b1.conv_a.weight", g, {C, C, 4, 4});
        e.ca2_w = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b1.conv_a.bias", g, {C});
        e.ca2_b = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b1.norm.gamma", g, {C});
        e.n2_g = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b1.norm.beta", g, {C});
        e.n2_b = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b1.conv_s.weight", g, {C, C, 3, 3});
        e.cs2_w = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".b1.conv_s.bias", g, {C});
        e.cs2_b = static_cast<int>(layout_.size()) - 1;
        w.enc_idx.push_back(e);
    }

    {
        const std::string g = "pos_embed";
        register_param("pos_embed.mlp1.weight", g, {kMlpHidden, kFeatDim});
        w.mlp1_w = static_cast<int>(layout_.size()) - 1;
        register_param("pos_embed.mlp1.bias", g, {kMlpHidden});
        w.mlp1_b = static_cast<int>(layout_.size()) - 1;
        register_param("pos_embed.mlp2.weight", g, {cfg_.embed_dim, kMlpHidden});
        w.mlp2_w = static_cast<int>(layout_.size()) - 1;
        register_param("pos_embed.mlp2.bias", g, {cfg_.embed_dim});
        w.mlp2_b = static_cast<int>(layout_.size()) - 1;
        w.has_proj = (C != cfg_.embed_dim);
        if (w.has_proj) {
            register_param("pos_embed.proj.weight", g, {C, cfg_.embed_dim});
            w.proj_w = static_cast<int>(layout_.size()) - 1;
            register_param("pos_embed.proj.bias", g, {C});
            w.proj_b = static_cast<int>(layout_.size()) - 1;
        }
    }

    {
        const std::string g = "translator";
        register_param("translator.in_conv.weight", g, {hid, vtc, 1, 1});
        w.tr_in_w = static_cast<int>(layout_.size()) - 1;
        register_param("translator.in_conv.bias", g, {hid});
        w.tr_in_b = static_cast<int>(layout_.size()) - 1;
        for (int k = 0; k < cfg_.n_gsta_blocks; ++k) {
            const int dil = 1 << (k % 4);
            w.gates.push_back(kern::make_conv_spec(hid, hl, wl, hid, 3, 3, 1, dil, dil, dil, dil, dil));
            const std::string b = "translator.block" + std::to_string(k);
            BlockIdx bi;
            register_param(b + ".gate.weight", g, {hid, hid, 3, 3});
            bi.gate_w = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".gate.bias", g, {hid});
            bi.gate_b = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".value.weight", g, {hid, hid, 1, 1});
            bi.val_w = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".value.bias", g, {hid});
            bi.val_b = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".attn_rescale", g, {hid});
            bi.res_a = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".ffn_pw1.weight", g, {kFfnExpand * hid, hid, 1, 1});
            bi.pw1_w = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".ffn_pw1.bias", g, {kFfnExpand * hid});
            bi.pw1_b = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".ffn_dw.weight", g, {kFfnExpand * hid, 3, 3});
            bi.dw_w = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".ffn_dw.bias", g, {kFfnExpand * hid});
            bi.dw_b = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".ffn_pw2.weight", g, {hid, kFfnExpand * hid, 1, 1});
            bi.pw2_w = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".ffn_pw2.bias", g, {hid});
            bi.pw2_b = static_cast<int>(layout_.size()) - 1;
            register_param(b + ".ffn_rescale", g, {hid});
            bi.res_f = static_cast<int>(layout_.size()) - 1;
            w.blocks.push_back(bi);
        }
        register_param("translator.out_conv.weight", g, {cfg_.t_out * C, hid, 1, 1});
        w.tr_out_w = static_cast<int>(layout_.size()) - 1;
        register_param("translator.out_conv.bias", g, {cfg_.t_out * C});
        w.tr_out_b = static_cast<int>(layout_.size()) - 1;
    }

    for (int ov = 0; ov < 3; ++ov) {
        const std::string g = std::string("decoder.") + output_var_name(static_cast<OutputVar>(ov));
        DecIdx d;
        register_param(g + ".conv_a.weight", g, {C, C, 4, 4});
        d.a_w = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".conv_a.bias", g, {C});
        d.a_b = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".conv_b.weight", g, {C, C, 4, 4});
        d.b_w = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".conv_b.bias", g, {C});
        d.b_b = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".out_conv.weight", g, {1, C, 1, 1});
        d.o_w = static_cast<int>(layout_.size()) - 1;
        register_param(g + ".out_conv.bias", g, {1});
        d.o_b = static_cast<int>(layout_.size()) - 1;
        w.dec[ov] = d;
    }

    wiring_ = std::make_shared<ModelWiring>(std::move(w));
}

ParameterSet Model::init_parameters(std::uint64_t seed) const {
    ParameterSet ps;
    ps.params = layout_;
    Rng rng(seed);
    for (auto& p : ps.params) {
        p.value.assign(p.numel(), 0.0);
        const bool is_bias = p.name.size() > 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0;
        const bool is_gamma = p.name.find("norm.gamma") != std::string::npos;
        const bool is_beta = p.name.find("norm.beta") != std::string::npos;
        const bool is_rescale = p.name.find("rescale") != std::string::npos;
        const bool zero_weight = p.name == "pos_embed.mlp2.weight";
        if (is_gamma) {
            std::fill(p.value.begin(), p.value.end(), 1.0);
        } else if (is_bias || is_beta || is_rescale || zero_weight) {
            // zeros
        } else {
            for (auto& v : p.value) v = rng.truncated_normal(0.02);
        }
    }
    return ps;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

inline const double* pv(const ParameterSet& ps, int i) { return ps.params[i].value.data(); }
inline double* gv(GradientSet& gs, int i) { return gs.g[i].data(); }

}  // namespace

std::shared_ptr<Model::Cache> Model::make_cache() const { return std::make_shared<Cache>(); }

NetOutput Model::forward(const ParameterSet& ps, const NetInput& in, const PatchCoords& coords) const {
    Cache cache;
    return forward(ps, in, coords, cache);
}

NetOutput Model::forward(const ParameterSet& ps, const NetInput& in, const PatchCoords& coords,
                         Cache& cache) const {
    const ModelWiring& w = *wiring_;
    const int C = cfg_.latent_channels;
    const int H = cfg_.patch_h, W = cfg_.patch_w;
    const int hl = cfg_.latent_h(), wl = cfg_.latent_w();
    const int n = hl * wl;
    const int nv = cfg_.n_vars();
    const int hid = cfg_.hidden_channels;
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    if (static_cast<int>(in.values.size()) != nv || static_cast<int>(in.masks.size()) != nv) {
        throw InputError("forward: expected " + std::to_string(nv) + " input variables");
    }
    for (int vi = 0; vi < nv; ++vi) {
        if (in.values[vi].size() != plane * cfg_.t_in || in.masks[vi].size() != plane * cfg_.t_in) {
            throw InputError("forward: input plane size mismatch for variable " +
                             std::string(input_var_name(cfg_.input_variables[vi])));
        }
    }
    if (static_cast<int>(coords.pix_lat.size()) != hl || static_cast<int>(coords.pix_lon.size()) != wl) {
        throw InputError("forward: patch coords do not match latent dimensions");
    }
    for (double lat : coords.pix_lat) {
        if (lat < -90.0 || lat > 90.0) throw InputError("patch coords: latitude outside [-90, 90]");
    }
    for (double lon : coords.pix_lon) {
        if (lon < -180.0 || lon > 180.0) throw InputError("patch coords: longitude outside [-180, 180]");
    }
    if (coords.week_index < 0 || coords.week_index > 52) {
        throw InputError("patch coords: week_index outside [0, 52]");
    }

    // Encoders.
    cache.enc.assign(nv, std::vector<Cache::EncT>(cfg_.t_in));
    cache.lat.assign(nv, std::vector<std::vector<double>>(cfg_.t_in));
    for (int vi = 0; vi < nv; ++vi) {
        const EncIdx& e = w.enc_idx[vi];
        for (int t = 0; t < cfg_.t_in; ++t) {
            Cache::EncT& ec = cache.enc[vi][t];
            ec.in.resize(2 * plane);
            std::memcpy(ec.in.data(), in.values[vi].data() + t * plane, plane * sizeof(double));
            std::memcpy(ec.in.data() + plane, in.masks[vi].data() + t * plane, plane * sizeof(double));

            ec.ca.resize(static_cast<std::size_t>(C) * plane);
            kern::conv2d_forward(ec.in.data(), pv(ps, e.ca_w), pv(ps, e.ca_b), w.enc_ca0, ec.ca.data());
            ec.gn.resize(ec.ca.size());
            kern::groupnorm_forward(ec.ca.data(), pv(ps, e.n_g), pv(ps, e.n_b), C, static_cast<int>(plane),
                                    kGroups, kGnEps, ec.gn.data(), ec.mean1.data(), ec.rstd1.data());
            ec.ge.resize(ec.gn.size());
            kern::gelu_forward(ec.gn.data(), static_cast<int>(ec.gn.size()), ec.ge.data());
            ec.cs.resize(static_cast<std::size_t>(C) * (H / 2) * (W / 2));
            kern::conv2d_forward(ec.ge.data(), pv(ps, e.cs_w), pv(ps, e.cs_b), w.enc_cs0, ec.cs.data());

            ec.ca2.resize(ec.cs.size());
            kern::conv2d_forward(ec.cs.data(), pv(ps, e.ca2_w), pv(ps, e.ca2_b), w.enc_ca1, ec.ca2.data());
            ec.gn2.resize(ec.ca2.size());
            kern::groupnorm_forward(ec.ca2.data(), pv(ps, e.n2_g), pv(ps, e.n2_b), C,
                                    (H / 2) * (W / 2), kGroups, kGnEps, ec.gn2.data(), ec.mean2.data(),
                                    ec.rstd2.data());
            ec.ge2.resize(ec.gn2.size());
            kern::gelu_forward(ec.gn2.data(), static_cast<int>(ec.gn2.size()), ec.ge2.data());
            auto& lat = cache.lat[vi][t];
            lat.resize(static_cast<std::size_t>(C) * n);
            kern::conv2d_forward(ec.ge2.data(), pv(ps, e.cs2_w), pv(ps, e.cs2_b), w.enc_cs1, lat.data());
        }
    }

    // Positional embedding.
    cache.feats.resize(static_cast<std::size_t>(n) * kFeatDim);
    fourier_features(coords, hl, wl, cache.feats.data());
    cache.h1.resize(static_cast<std::size_t>(n) * kMlpHidden);
    kern::linear_forward(cache.feats.data(), pv(ps, w.mlp1_w), pv(ps, w.mlp1_b), n, kFeatDim, kMlpHidden,
                         cache.h1.data());
    cache.hg.resize(cache.h1.size());
    kern::gelu_forward(cache.h1.data(), static_cast<int>(cache.h1.size()), cache.hg.data());
    cache.emb_pix.resize(static_cast<std::size_t>(n) * cfg_.embed_dim);
    kern::linear_forward(cache.hg.data(), pv(ps, w.mlp2_w), pv(ps, w.mlp2_b), n, kMlpHidden, cfg_.embed_dim,
                         cache.emb_pix.data());
    cache.embC.resize(static_cast<std::size_t>(C) * n);
    if (w.has_proj) {
        cache.proj_pix.resize(static_cast<std::size_t>(n) * C);
        kern::linear_forward(cache.emb_pix.data(), pv(ps, w.proj_w), pv(ps, w.proj_b), n, cfg_.embed_dim, C,
                             cache.proj_pix.data());
        for (int p = 0; p < n; ++p) {
            for (int c = 0; c < C; ++c) {
                cache.embC[static_cast<std::size_t>(c) * n + p] = cache.proj_pix[static_cast<std::size_t>(p) * C + c];
            }
        }
    } else {
        for (int p = 0; p < n; ++p) {
            for (int c = 0; c < C; ++c) {
                cache.embC[static_cast<std::size_t>(c) * n + p] = cache.emb_pix[static_cast<std::size_t>(p) * C + c];
            }
        }
    }

    // Concatenate latents + embedding shift; temporal dim goes to channels.
    const int vtc = nv * cfg_.t_in * C;
    cache.zcat.resize(static_cast<std::size_t>(vtc) * n);
    for (int vi = 0; vi < nv; ++vi) {
        for (int t = 0; t < cfg_.t_in; ++t) {
            const double* lat = cache.lat[vi][t].data();
            double* dst = cache.zcat.data() + (static_cast<std::size_t>(vi) * cfg_.t_in + t) * C * n;
            for (std::size_t k = 0; k < static_cast<std::size_t>(C) * n; ++k) {
                dst[k] = lat[k] + cache.embC[k];
            }
        }
    }

    // Translator.
    cache.tr_in.resize(static_cast<std::size_t>(hid) * n);
    kern::conv2d_forward(cache.zcat.data(), pv(ps, w.tr_in_w), pv(ps, w.tr_in_b), w.tr_in,
                         cache.tr_in.data());
    cache.blocks.assign(cfg_.n_gsta_blocks, Cache::Block{});
    std::vector<double> x = cache.tr_in;
    const std::size_t hn = static_cast<std::size_t>(hid) * n;
    for (int k = 0; k < cfg_.n_gsta_blocks; ++k) {
        Cache::Block& bc = cache.blocks[k];
        const BlockIdx& bi = w.blocks[k];
        bc.x = x;
        bc.g_pre.resize(hn);
        kern::conv2d_forward(bc.x.data(), pv(ps, bi.gate_w), pv(ps, bi.gate_b), w.gates[k], bc.g_pre.data());
        bc.g.resize(hn);
        kern::sigmoid_forward(bc.g_pre.data(), static_cast<int>(hn), bc.g.data());
        bc.val.resize(hn);
        kern::conv2d_forward(bc.x.data(), pv(ps, bi.val_w), pv(ps, bi.val_b), w.value, bc.val.data());
        bc.attn.resize(hn);
        for (std::size_t i = 0; i < hn; ++i) bc.attn[i] = bc.g[i] * bc.val[i];
        bc.x1.resize(hn);
        const double* res_a = pv(ps, bi.res_a);
        for (int c = 0; c < hid; ++c) {
            const double r = res_a[c];
            for (int p = 0; p < n; ++p) {
                const std::size_t i = static_cast<std::size_t>(c) * n + p;
                bc.x1[i] = bc.x[i] + r * bc.attn[i];
            }
        }
        const std::size_t fn = static_cast<std::size_t>(kFfnExpand) * hid * n;
        bc.f1.resize(fn);
        kern::conv2d_forward(bc.x1.data(), pv(ps, bi.pw1_w), pv(ps, bi.pw1_b), w.pw1, bc.f1.data());
        bc.f2.resize(fn);
        kern::dwconv2d_forward(bc.f1.data(), pv(ps, bi.dw_w), pv(ps, bi.dw_b), kFfnExpand * hid, hl, wl, 3,
                               bc.f2.data());
        bc.f3.resize(fn);
        kern::gelu_forward(bc.f2.data(), static_cast<int>(fn), bc.f3.data());
        bc.f4.resize(hn);
        kern::conv2d_forward(bc.f3.data(), pv(ps, bi.pw2_w), pv(ps, bi.pw2_b), w.pw2, bc.f4.data());
        const double* res_f = pv(ps, bi.res_f);
        for (int c = 0; c < hid; ++c) {
            const double r = res_f[c];
            for (int p = 0; p < n; ++p) {
                const std::size_t i = static_cast<std::size_t>(c) * n + p;
                x[i] = bc.x1[i] + r * bc.f4[i];
            }
        }
    }
    cache.tr_last = x;
    cache.fut.resize(static_cast<std::size_t>(cfg_.t_out) * C * n);
    kern::conv2d_forward(cache.tr_last.data(), pv(ps, w.tr_out_w), pv(ps, w.tr_out_b), w.tr_out,
                         cache.fut.data());

    // Decoders.
    NetOutput out;
    out.ssh.resize(static_cast<std::size_t>(cfg_.t_out) * plane);
    out.u.resize(out.ssh.size());
    out.v.resize(out.ssh.size());
    cache.dec.assign(3, std::vector<Cache::DecT>(cfg_.t_out));
    for (int ov = 0; ov < 3; ++ov) {
        const DecIdx& d = w.dec[ov];
        double* dst = (ov == 0) ? out.ssh.data() : (ov == 1 ? out.u.data() : out.v.data());
        for (int t = 0; t < cfg_.t_out; ++t) {
            Cache::DecT& dc = cache.dec[ov][t];
            dc.in.assign(cache.fut.begin() + static_cast<std::size_t>(t) * C * n,
                         cache.fut.begin() + static_cast<std::size_t>(t + 1) * C * n);
            dc.a.resize(static_cast<std::size_t>(C) * n);
            kern::conv2d_forward(dc.in.data(), pv(ps, d.a_w), pv(ps, d.a_b), w.dec_a, dc.a.data());
            dc.ga.resize(dc.a.size());
            kern::gelu_forward(dc.a.data(), static_cast<int>(dc.a.size()), dc.ga.data());
            dc.u1.resize(static_cast<std::size_t>(C) * 4 * n);
            kern::upsample2x_forward(dc.ga.data(), C, hl, wl, dc.u1.data());
            dc.b.resize(dc.u1.size());
            kern::conv2d_forward(dc.u1.data(), pv(ps, d.b_w), pv(ps, d.b_b), w.dec_b, dc.b.data());
            dc.gb.resize(dc.b.size());
            kern::gelu_forward(dc.b.data(), static_cast<int>(dc.b.size()), dc.gb.data());
            dc.u2.resize(static_cast<std::size_t>(C) * plane);
            kern::upsample2x_forward(dc.gb.data(), C, 2 * hl, 2 * wl, dc.u2.data());
            kern::conv2d_forward(dc.u2.data(), pv(ps, d.o_w), pv(ps, d.o_b), w.dec_o,
                                 dst + static_cast<std::size_t>(t) * plane);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

void Model::backward(const ParameterSet& ps, const Cache& cache, const NetOutput& dout,
                     GradientSet& grads) const {
    const ModelWiring& w = *wiring_;
    const int C = cfg_.latent_channels;
    const int H = cfg_.patch_h, W = cfg_.patch_w;
    const int hl = cfg_.latent_h(), wl = cfg_.latent_w();
    const int n = hl * wl;
    const int nv = cfg_.n_vars();
    const int hid = cfg_.hidden_channels;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t hn = static_cast<std::size_t>(hid) * n;

    // Decoders -> d(future latent).
    std::vector<double> dfut(static_cast<std::size_t>(cfg_.t_out) * C * n, 0.0);
    std::vector<double> du2(static_cast<std::size_t>(C) * plane);
    std::vector<double> dgb(du2.size()), db_buf(du2.size());
    std::vector<double> du1(static_cast<std::size_t>(C) * 4 * n);
    std::vector<double> dga(static_cast<std::size_t>(C) * n), da(dga.size()), din(dga.size());
    for (int ov = 0; ov < 3; ++ov) {
        const DecIdx& d = w.dec[ov];
        const std::vector<double>& src = (ov == 0) ? dout.ssh : (ov == 1 ? dout.u : dout.v);
        for (int t = 0; t < cfg_.t_out; ++t) {
            const Cache::DecT& dc = cache.dec[ov][t];
            const double* dy = src.data() + static_cast<std::size_t>(t) * plane;
            kern::conv2d_backward_params(dy, dc.u2.data(), w.dec_o, gv(grads, d.o_w), gv(grads, d.o_b));
            kern::conv2d_backward_input(dy, pv(ps, d.o_w), w.dec_o, du2.data());
            kern::upsample2x_backward(du2.data(), C, 2 * hl, 2 * wl, dgb.data());
            kern::gelu_backward(dgb.data(), dc.b.data(), static_cast<int>(dgb.size()), db_buf.data());
            kern::conv2d_backward_params(db_buf.data(), dc.u1.data(), w.dec_b, gv(grads, d.b_w),
                                         gv(grads, d.b_b));
            kern::conv2d_backward_input(db_buf.data(), pv(ps, d.b_w), w.dec_b, du1.data());
            kern::upsample2x_backward(du1.data(), C, hl, wl, dga.data());
            kern::gelu_backward(dga.data(), dc.a.data(), static_cast<int>(dga.size()), da.data());
            kern::conv2d_backward_params(da.data(), dc.in.data(), w.dec_a, gv(grads, d.a_w),
                                         gv(grads, d.a_b));
            kern::conv2d_backward_input(da.data(), pv(ps, d.a_w), w.dec_a, din.data());
            double* dst = dfut.data() + static_cast<std::size_t>(t) * C * n;
            for (std::size_t i = 0; i < din.size(); ++i) dst[i] += din[i];
        }
    }

    // Translator output conv.
    std::vector<double> dx(hn);
    kern::conv2d_backward_params(dfut.data(), cache.tr_last.data(), w.tr_out, gv(grads, w.tr_out_w),
                                 gv(grads, w.tr_out_b));
    kern::conv2d_backward_input(dfut.data(), pv(ps, w.tr_out_w), w.tr_out, dx.data());

    // GSTa blocks, reversed.
    const std::size_t fn = static_cast<std::size_t>(kFfnExpand) * hid * n;
    std::vector<double> df4(hn), df3(fn), df2(fn), df1(fn), dx1(hn), dattn(hn), dval(hn), dgpre(hn);
    std::vector<double> tmp_hn(hn), tmp2_hn(hn);
    for (int k = cfg_.n_gsta_blocks - 1; k >= 0; --k) {
        const Cache::Block& bc = cache.blocks[k];
        const BlockIdx& bi = w.blocks[k];

        // x2 = x1 + res_f * f4
        double* g_res_f = gv(grads, bi.res_f);
        const double* res_f = pv(ps, bi.res_f);
        for (int c = 0; c < hid; ++c) {
            double acc = 0.0;
            const std::size_t off = static_cast<std::size_t>(c) * n;
            for (int p = 0; p < n; ++p) acc += dx[off + p] * bc.f4[off + p];
            g_res_f[c] += acc;
            for (int p = 0; p < n; ++p) df4[off + p] = dx[off + p] * res_f[c];
        }
        std::memcpy(dx1.data(), dx.data(), hn * sizeof(double));
        kern::conv2d_backward_params(df4.data(), bc.f3.data(), w.pw2, gv(grads, bi.pw2_w),
                                     gv(grads, bi.pw2_b));
        kern::conv2d_backward_input(df4.data(), pv(ps, bi.pw2_w), w.pw2, df3.data());
        kern::gelu_backward(df3.data(), bc.f2.data(), static_cast<int>(fn), df2.data());
        kern::dwconv2d_backward_params(df2.data(), bc.f1.data(), kFfnExpand * hid, hl, wl, 3,
                                       gv(grads, bi.dw_w), gv(grads, bi.dw_b));
        kern::dwconv2d_backward_input(df2.data(), pv(ps, bi.dw_w), kFfnExpand * hid, hl, wl, 3, df1.data());
        kern::conv2d_backward_params(df1.data(), bc.x1.data(), w.pw1, gv(grads, bi.pw1_w),
                                     gv(grads, bi.pw1_b));
        kern::conv2d_backward_input(df1.data(), pv(ps, bi.pw1_w), w.pw1, tmp_hn.data());
        for (std::size_t i = 0; i < hn; ++i) dx1[i] += tmp_hn[i];

        // x1 = x + res_a * (g * val)
        double* g_res_a = gv(grads, bi.res_a);
        const double* res_a = pv(ps, bi.res_a);
        for (int c = 0; c < hid; ++c) {
            double acc = 0.0;
            const std::size_t off = static_cast<std::size_t>(c) * n;
            for (int p = 0; p < n; ++p) acc += dx1[off + p] * bc.attn[off + p];
            g_res_a[c] += acc;
            for (int p = 0; p < n; ++p) dattn[off + p] = dx1[off + p] * res_a[c];
        }
        for (std::size_t i = 0; i < hn; ++i) {
            dval[i] = dattn[i] * bc.g[i];
            dgpre[i] = dattn[i] * bc.val[i] * bc.g[i] * (1.0 - bc.g[i]);
        }
        kern::conv2d_backward_params(dval.data(), bc.x.data(), w.value, gv(grads, bi.val_w),
                                     gv(grads, bi.val_b));
        kern::conv2d_backward_input(dval.data(), pv(ps, bi.val_w), w.value, tmp_hn.data());
        kern::conv2d_backward_params(dgpre.data(), bc.x.data(), w.gates[k], gv(grads, bi.gate_w),
                                     gv(grads, bi.gate_b));
        kern::conv2d_backward_input(dgpre.data(), pv(ps, bi.gate_w), w.gates[k], tmp2_hn.data());
        for (std::size_t i = 0; i < hn; ++i) dx[i] = dx1[i] + tmp_hn[i] + tmp2_hn[i];
    }

    // Translator input conv -> d(zcat).
    const int vtc = nv * cfg_.t_in * C;
    std::vector<double> dzcat(static_cast<std::size_t>(vtc) * n);
    kern::conv2d_backward_params(dx.data(), cache.zcat.data(), w.tr_in, gv(grads, w.tr_in_w),
                                 gv(grads, w.tr_in_b));
    kern::conv2d_backward_input(dx.data(), pv(ps, w.tr_in_w), w.tr_in, dzcat.data());

    // Split into per-(var, t) latent grads; the embedding grad is their sum.
    std::vector<double> dembC(static_cast<std::size_t>(C) * n, 0.0);
    for (int vi = 0; vi < nv; ++vi) {
        for (int t = 0; t < cfg_.t_in; ++t) {
            const double* src = dzcat.data() + (static_cast<std::size_t>(vi) * cfg_.t_in + t) * C * n;
            for (std::size_t i = 0; i < static_cast<std::size_t>(C) * n; ++i) dembC[i] += src[i];
        }
    }

    // Embedding backward.
    {
        std::vector<double> demb_pix(static_cast<std::size_t>(n) * cfg_.embed_dim);
        if (w.has_proj) {
            std::vector<double> dproj_pix(static_cast<std::size_t>(n) * C);
            for (int p = 0; p < n; ++p) {
                for (int c = 0; c < C; ++c) {
                    dproj_pix[static_cast<std::size_t>(p) * C + c] = dembC[static_cast<std::size_t>(c) * n + p];
                }
            }
            kern::linear_backward(dproj_pix.data(), cache.emb_pix.data(), pv(ps, w.proj_w), n,
                                  cfg_.embed_dim, C, demb_pix.data(), gv(grads, w.proj_w),
                                  gv(grads, w.proj_b));
        } else {
            for (int p = 0; p < n; ++p) {
                for (int c = 0; c < C; ++c) {
                    demb_pix[static_cast<std::size_t>(p) * C + c] = dembC[static_cast<std::size_t>(c) * n + p];
                }
            }
        }
        std::vector<double> dhg(static_cast<std::size_t>(n) * kMlpHidden);
        kern::linear_backward(demb_pix.data(), cache.hg.data(), pv(ps, w.mlp2_w), n, kMlpHidden,
                              cfg_.embed_dim, dhg.data(), gv(grads, w.mlp2_w), gv(grads, w.mlp2_b));
        std::vector<double> dh1(dhg.size());
        kern::gelu_backward(dhg.data(), cache.h1.data(), static_cast<int>(dhg.size()), dh1.data());
        kern::linear_backward(dh1.data(), cache.feats.data(), pv(ps, w.mlp1_w), n, kFeatDim, kMlpHidden,
                              nullptr, gv(grads, w.mlp1_w), gv(grads, w.mlp1_b));
    }

    // Encoders backward.
    const std::size_t half_plane = static_cast<std::size_t>(H / 2) * (W / 2);
    std::vector<double> dge2(static_cast<std::size_t>(C) * half_plane);
    std::vector<double> dgn2(dge2.size()), dca2(dge2.size()), dcs(dge2.size());
    std::vector<double> dge(static_cast<std::size_t>(C) * plane);
    std::vector<double> dgn(dge.size()), dca(dge.size());
    for (int vi = 0; vi < nv; ++vi) {
        const EncIdx& e = w.enc_idx[vi];
        for (int t = 0; t < cfg_.t_in; ++t) {
            const Cache::EncT& ec = cache.enc[vi][t];
            const double* dlat = dzcat.data() + (static_cast<std::size_t>(vi) * cfg_.t_in + t) * C * n;
            kern::conv2d_backward_params(dlat, ec.ge2.data(), w.enc_cs1, gv(grads, e.cs2_w),
                                         gv(grads, e.cs2_b));
            kern::conv2d_backward_input(dlat, pv(ps, e.cs2_w), w.enc_cs1, dge2.data());
            kern::gelu_backward(dge2.data(), ec.gn2.data(), static_cast<int>(dge2.size()), dgn2.data());
            kern::groupnorm_backward(dgn2.data(), ec.ca2.data(), pv(ps, e.n2_g), C,
                                     static_cast<int>(half_plane), kGroups, ec.mean2.data(),
                                     ec.rstd2.data(), dca2.data(), gv(grads, e.n2_g), gv(grads, e.n2_b));
            kern::conv2d_backward_params(dca2.data(), ec.cs.data(), w.enc_ca1, gv(grads, e.ca2_w),
                                         gv(grads, e.ca2_b));
            kern::conv2d_backward_input(dca2.data(), pv(ps, e.ca2_w), w.enc_ca1, dcs.data());

            kern::conv2d_backward_params(dcs.data(), ec.ge.data(), w.enc_cs0, gv(grads, e.cs_w),
                                         gv(grads, e.cs_b));
            kern::conv2d_backward_input(dcs.data(), pv(ps, e.cs_w), w.enc_cs0, dge.data());
            kern::gelu_backward(dge.data(), ec.gn.data(), static_cast<int>(dge.size()), dgn.data());
            kern::groupnorm_backward(dgn.data(), ec.ca.data(), pv(ps, e.n_g), C, static_cast<int>(plane),
                                     kGroups, ec.mean1.data(), ec.rstd1.data(), dca.data(),
                                     gv(grads, e.n_g), gv(grads, e.n_b));
            kern::conv2d_backward_params(dca.data(), ec.in.data(), w.enc_ca0, gv(grads, e.ca_w),
                                         gv(grads, e.ca_b));
            // No gradient needed w.r.t. the raw observations.
        }
    }
}

// ---------------------------------------------------------------------------
// Standalone spec operations
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> Model::encode(const ParameterSet& ps, int var_idx,
                                               const std::vector<double>& values,
                                               const std::vector<double>& masks) const {
    const ModelWiring& w = *wiring_;
    if (var_idx < 0 || var_idx >= cfg_.n_vars()) throw ConfigError("encode: unknown variable index");
    const int C = cfg_.latent_channels;
    const int H = cfg_.patch_h, W = cfg_.patch_w;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    if (values.size() != plane * cfg_.t_in || masks.size() != plane * cfg_.t_in) {
        throw InputError("encode: stack size mismatch");
    }
    const EncIdx& e = w.enc_idx[var_idx];
    std::vector<std::vector<double>> latents(cfg_.t_in);
    std::vector<double> in(2 * plane), ca(static_cast<std::size_t>(C) * plane), gn(ca.size()), ge(ca.size());
    std::vector<double> cs(static_cast<std::size_t>(C) * plane / 4), ca2(cs.size()), gn2(cs.size()),
        ge2(cs.size());
    std::array<double, kGroups> m1, r1, m2, r2;
    for (int t = 0; t < cfg_.t_in; ++t) {
        std::memcpy(in.data(), values.data() + t * plane, plane * sizeof(double));
        std::memcpy(in.data() + plane, masks.data() + t * plane, plane * sizeof(double));
        kern::conv2d_forward(in.data(), pv(ps, e.ca_w), pv(ps, e.ca_b), w.enc_ca0, ca.data());
        kern::groupnorm_forward(ca.data(), pv(ps, e.n_g), pv(ps, e.n_b), C, static_cast<int>(plane),
                                kGroups, kGnEps, gn.data(), m1.data(), r1.data());
        kern::gelu_forward(gn.data(), static_cast<int>(gn.size()), ge.data());
        kern::conv2d_forward(ge.data(), pv(ps, e.cs_w), pv(ps, e.cs_b), w.enc_cs0, cs.data());
        kern::conv2d_forward(cs.data(), pv(ps, e.ca2_w), pv(ps, e.ca2_b), w.enc_ca1, ca2.data());
        kern::groupnorm_forward(ca2.data(), pv(ps, e.n2_g), pv(ps, e.n2_b), C,
                                static_cast<int>(plane / 4), kGroups, kGnEps, gn2.data(), m2.data(),
                                r2.data());
        kern::gelu_forward(gn2.data(), static_cast<int>(gn2.size()), ge2.data());
        latents[t].resize(static_cast<std::size_t>(C) * cfg_.latent_h() * cfg_.latent_w());
        kern::conv2d_forward(ge2.data(), pv(ps, e.cs2_w), pv(ps, e.cs2_b), w.enc_cs1, latents[t].data());
    }
    return latents;
}

std::vector<double> Model::embedding_vector(const ParameterSet& ps, double lat, double lon,
                                            int week_index) const {
    const ModelWiring& w = *wiring_;
    if (lat < -90.0 || lat > 90.0 || lon < -180.0 || lon > 180.0 || week_index < 0 || week_index > 52) {
        throw InputError("embedding_vector: coordinates outside valid domain");
    }
    double feats[kFeatDim];
    const double coord[3] = {lat / 90.0, lon / 180.0, week_index / 53.0};
    int o = 0;
    for (int c = 0; c < 3; ++c) {
        double freq = M_PI;
        for (int k = 0; k < kFourierFreqs; ++k) {
            feats[o++] = std::sin(freq * coord[c]);
            feats[o++] = std::cos(freq * coord[c]);
            freq *= 2.0;
        }
    }
    std::vector<double> h1(kMlpHidden), hg(kMlpHidden), emb(cfg_.embed_dim);
    kern::linear_forward(feats, pv(ps, w.mlp1_w), pv(ps, w.mlp1_b), 1, kFeatDim, kMlpHidden, h1.data());
    kern::gelu_forward(h1.data(), kMlpHidden, hg.data());
    kern::linear_forward(hg.data(), pv(ps, w.mlp2_w), pv(ps, w.mlp2_b), 1, kMlpHidden, cfg_.embed_dim,
                         emb.data());
    return emb;
}

std::vector<double> Model::positional_embedding(const ParameterSet& ps, const PatchCoords& coords) const {
    const ModelWiring& w = *wiring_;
    const int hl = cfg_.latent_h(), wl = cfg_.latent_w();
    const int n = hl * wl;
    const int C = cfg_.latent_channels;
    if (static_cast<int>(coords.pix_lat.size()) != hl || static_cast<int>(coords.pix_lon.size()) != wl) {
        throw InputError("positional_embedding: coords do not match latent dims");
    }
    for (double lat : coords.pix_lat) {
        if (lat < -90.0 || lat > 90.0) throw InputError("positional_embedding: latitude out of range");
    }
    for (double lon : coords.pix_lon) {
        if (lon < -180.0 || lon > 180.0) throw InputError("positional_embedding: longitude out of range");
    }
    if (coords.week_index < 0 || coords.week_index > 52) {
        throw InputError("positional_embedding: week_index out of range");
    }
    std::vector<double> feats(static_cast<std::size_t>(n) * kFeatDim);
    fourier_features(coords, hl, wl, feats.data());
    std::vector<double> h1(static_cast<std::size_t>(n) * kMlpHidden), hg(h1.size());
    kern::linear_forward(feats.data(), pv(ps, w.mlp1_w), pv(ps, w.mlp1_b), n, kFeatDim, kMlpHidden,
                         h1.data());
    kern::gelu_forward(h1.data(), static_cast<int>(h1.size()), hg.data());
    std::vector<double> emb_pix(static_cast<std::size_t>(n) * cfg_.embed_dim);
    kern::linear_forward(hg.data(), pv(ps, w.mlp2_w), pv(ps, w.mlp2_b), n, kMlpHidden, cfg_.embed_dim,
                         emb_pix.data());
    std::vector<double> embC(static_cast<std::size_t>(C) * n);
    if (w.has_proj) {
        std::vector<double> proj_pix(static_cast<std::size_t>(n) * C);
        kern::linear_forward(emb_pix.data(), pv(ps, w.proj_w), pv(ps, w.proj_b), n, cfg_.embed_dim, C,
                             proj_pix.data());
        for (int p = 0; p < n; ++p) {
            for (int c = 0; c < C; ++c) embC[static_cast<std::size_t>(c) * n + p] = proj_pix[static_cast<std::size_t>(p) * C + c];
        }
    } else {
        for (int p = 0; p < n; ++p) {
            for (int c = 0; c < C; ++c) embC[static_cast<std::size_t>(c) * n + p] = emb_pix[static_cast<std::size_t>(p) * C + c];
        }
    }
    return embC;
}

std::vector<double> Model::gsta_translate(const ParameterSet& ps, const std::vector<double>& zcat) const {
    const ModelWiring& w = *wiring_;
    const int C = cfg_.latent_channels;
    const int hl = cfg_.latent_h(), wl = cfg_.latent_w();
    const int n = hl * wl;
    const int hid = cfg_.hidden_channels;
    const int vtc = cfg_.n_vars() * cfg_.t_in * C;
    if (zcat.size() != static_cast<std::size_t>(vtc) * n) {
        throw ConfigError("gsta_translate: channel count mismatch");
    }
    const std::size_t hn = static_cast<std::size_t>(hid) * n;
    std::vector<double> x(hn);
    kern::conv2d_forward(zcat.data(), pv(ps, w.tr_in_w), pv(ps, w.tr_in_b), w.tr_in, x.data());
    std::vector<double> g_pre(hn), g(hn), val(hn), x1(hn);
    const std::size_t fn = static_cast<std::size_t>(kFfnExpand) * hid * n;
    std::vector<double> f1(fn), f2(fn), f3(fn), f4(hn);
    for (int k = 0; k < cfg_.n_gsta_blocks; ++k) {
        const BlockIdx& bi = w.blocks[k];
        kern::conv2d_forward(x.data(), pv(ps, bi.gate_w), pv(ps, bi.gate_b), w.gates[k], g_pre.data());
        kern::sigmoid_forward(g_pre.data(), static_cast<int>(hn), g.data());
        kern::conv2d_forward(x.data(), pv(ps, bi.val_w), pv(ps, bi.val_b), w.value, val.data());
        const double* res_a = pv(ps, bi.res_a);
        for (int c = 0; c < hid; ++c) {
            const std::size_t off = static_cast<std::size_t>(c) * n;
            for (int p = 0; p < n; ++p) x1[off + p] = x[off + p] + res_a[c] * g[off + p] * val[off + p];
        }
        kern::conv2d_forward(x1.data(), pv(ps, bi.pw1_w), pv(ps, bi.pw1_b), w.pw1, f1.data());
        kern::dwconv2d_forward(f1.data(), pv(ps, bi.dw_w), pv(ps, bi.dw_b), kFfnExpand * hid, hl, wl, 3,
                               f2.data());
        kern::gelu_forward(f2.data(), static_cast<int>(fn), f3.data());
        kern::conv2d_forward(f3.data(), pv(ps, bi.pw2_w), pv(ps, bi.pw2_b), w.pw2, f4.data());
        const double* res_f = pv(ps, bi.res_f);
        for (int c = 0; c < hid; ++c) {
            const std::size_t off = static_cast<std::size_t>(c) * n;
            for (int p = 0; p < n; ++p) x[off + p] = x1[off + p] + res_f[c] * f4[off + p];
        }
    }
    std::vector<double> fut(static_cast<std::size_t>(cfg_.t_out) * C * n);
    kern::conv2d_forward(x.data(), pv(ps, w.tr_out_w), pv(ps, w.tr_out_b), w.tr_out, fut.data());
    return fut;
}

std::vector<double> Model::decode(const ParameterSet& ps, OutputVar var,
                                  const std::vector<double>& future_latent) const {
    const ModelWiring& w = *wiring_;
    const int C = cfg_.latent_channels;
    const int hl = cfg_.latent_h(), wl = cfg_.latent_w();
    const int n = hl * wl;
    const std::size_t plane = static_cast<std::size_t>(cfg_.patch_h) * cfg_.patch_w;
    if (future_latent.size() != static_cast<std::size_t>(cfg_.t_out) * C * n) {
        throw InputError("decode: future latent size mismatch");
    }
    const DecIdx& d = w.dec[static_cast<int>(var)];
    std::vector<double> out(static_cast<std::size_t>(cfg_.t_out) * plane);
    std::vector<double> a(static_cast<std::size_t>(C) * n), ga(a.size());
    std::vector<double> u1(static_cast<std::size_t>(C) * 4 * n), b(u1.size()), gb(u1.size());
    std::vector<double> u2(static_cast<std::size_t>(C) * plane);
    for (int t = 0; t < cfg_.t_out; ++t) {
        const double* in = future_latent.data() + static_cast<std::size_t>(t) * C * n;
        kern::conv2d_forward(in, pv(ps, d.a_w), pv(ps, d.a_b), w.dec_a, a.data());
        kern::gelu_forward(a.data(), static_cast<int>(a.size()), ga.data());
        kern::upsample2x_forward(ga.data(), C, hl, wl, u1.data());
        kern::conv2d_forward(u1.data(), pv(ps, d.b_w), pv(ps, d.b_b), w.dec_b, b.data());
        kern::gelu_forward(b.data(), static_cast<int>(b.size()), gb.data());
        kern::upsample2x_forward(gb.data(), C, 2 * hl, 2 * wl, u2.data());
        kern::conv2d_forward(u2.data(), pv(ps, d.o_w), pv(ps, d.o_b), w.dec_o,
                             out.data() + static_cast<std::size_t>(t) * plane);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

std::string model_config_to_json_str(const ModelConfig& c) {
    json j;
    j["t_in"] = c.t_in;
    j["t_out"] = c.t_out;
    j["patch_h"] = c.patch_h;
    j["patch_w"] = c.patch_w;
    json vars = json::array();
    for (InputVar v : c.input_variables) vars.push_back(input_var_name(v));
    j["input_variables"] = vars;
    j["latent_channels"] = c.latent_channels;
    j["n_gsta_blocks"] = c.n_gsta_blocks;
    j["embed_dim"] = c.embed_dim;
    j["hidden_channels"] = c.hidden_channels;
    return j.dump();
}

ModelConfig model_config_from_json_str(const std::string& s) {
    json j = json::parse(s);
    ModelConfig c;
    c.t_in = j.at("t_in").get<int>();
    c.t_out = j.at("t_out").get<int>();
    c.patch_h = j.at("patch_h").get<int>();
    c.patch_w = j.at("patch_w").get<int>();
    c.input_variables.clear();
    for (const auto& v : j.at("input_variables")) c.input_variables.push_back(input_var_from_name(v));
    c.latent_channels = j.at("latent_channels").get<int>();
    c.n_gsta_blocks = j.at("n_gsta_blocks").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.hidden_channels = j.at("hidden_channels").get<int>();
    c.validate();
    return c;
}

std::string checkpoint_content_hash(const ParameterSet& ps) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : ps.params) {
        std::vector<float> f32(p.value.size());
        for (std::size_t i = 0; i < p.value.size(); ++i) f32[i] = static_cast<float>(p.value[i]);
        h = fnv1a64(f32.data(), f32.size() * sizeof(float), h);
    }
    return to_hex(h);
}

void save_checkpoint(const std::string& dir, const ParameterSet& ps, const ModelConfig& config,
                     const std::string& stage, std::uint64_t seed) {
    fs::create_directories(dir);
    json manifest;
    manifest["format"] = "surfcast-checkpoint-v1";
    manifest["stage"] = stage;
    manifest["seed"] = seed;
    manifest["config"] = json::parse(model_config_to_json_str(config));
    json params = json::array();
    for (const auto& p : ps.params) {
        params.push_back(json{{"name", p.name}, {"group", p.group}, {"shape", p.shape}});
    }
    manifest["params"] = params;
    json frozen = json::array();
    for (const auto& g : ps.frozen_groups) frozen.push_back(g);
    manifest["frozen_groups"] = frozen;
    manifest["content_hash"] = checkpoint_content_hash(ps);

    for (const auto& p : ps.params) {
        std::vector<float> f32(p.value.size());
        for (std::size_t i = 0; i < p.value.size(); ++i) f32[i] = static_cast<float>(p.value[i]);
        std::ofstream f(fs::path(dir) / (p.name + ".bin"), std::ios::binary | std::ios::trunc);
        if (!f) throw InputError("cannot write checkpoint tensor in " + dir);
        f.write(reinterpret_cast<const char*>(f32.data()),
                static_cast<std::streamsize>(f32.size() * sizeof(float)));
    }
    std::ofstream mf(fs::path(dir) / "manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
    const fs::path mp = fs::path(dir) / "manifest.json";
    if (!fs::exists(mp)) throw InputError("not a checkpoint directory (no manifest.json): " + dir);
    json manifest = json::parse(std::ifstream(mp));
    Checkpoint ck;
    ck.config = model_config_from_json_str(manifest.at("config").dump());
    ck.stage = manifest.at("stage").get<std::string>();
    ck.seed = manifest.at("seed").get<std::uint64_t>();

    Model model(ck.config);
    ck.params.params = model.layout();
    for (auto& p : ck.params.params) {
        std::ifstream f(fs::path(dir) / (p.name + ".bin"), std::ios::binary);
        if (!f) throw InputError("checkpoint missing tensor file for " + p.name + " in " + dir);
        std::vector<float> f32(p.numel());
        f.read(reinterpret_cast<char*>(f32.data()), static_cast<std::streamsize>(f32.size() * sizeof(float)));
        if (!f) throw InputError("short tensor file for " + p.name + " in " + dir);
        p.value.resize(f32.size());
        for (std::size_t i = 0; i < f32.size(); ++i) p.value[i] = static_cast<double>(f32[i]);
    }
    for (const auto& g : manifest.at("frozen_groups")) ck.params.frozen_groups.insert(g.get<std::string>());
    ck.content_hash = checkpoint_content_hash(ck.params);
    const std::string recorded = manifest.at("content_hash").get<std::string>();
    if (recorded != ck.content_hash) {
        throw InputError("checkpoint content hash mismatch in " + dir);
    }
    return ck;
}

}  // namespace surfcast
