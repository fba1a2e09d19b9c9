#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "surfcast/common.hpp"
#include "surfcast/grid.hpp"

namespace surfcast {

// Network input sources. SSH arrives either as sparse nadir tracks or as a
// separate SWOT swath arm.
enum class InputVar { SSH_NADIR, SST, CHL, SSH_SWOT };
const char* input_var_name(InputVar v);
InputVar input_var_from_name(const std::string& name);
// Which gridded variable an input arm reads.
Variable input_var_source(InputVar v);

enum class OutputVar { SSH = 0, U = 1, V = 2 };

struct ModelConfig {
    int t_in = 5;
    int t_out = 3;
    int patch_h = 32, patch_w = 32;
    std::vector<InputVar> input_variables{InputVar::SSH_NADIR, InputVar::SST};
    int latent_channels = 16;
    int n_gsta_blocks = 4;
    int embed_dim = 32;  // inspectable embedding width; fixed
    int hidden_channels = 64;

    void validate() const;
    int n_vars() const { return static_cast<int>(input_variables.size()); }
    int latent_h() const { return patch_h / 4; }
    int latent_w() const { return patch_w / 4; }
};

struct Param {
    std::string name;
    std::string group;
    std::vector<int> shape;
    std::vector<double> value;
    std::size_t numel() const;
};

struct ParameterSet {
    std::vector<Param> params;
    std::set<std::string> frozen_groups;

    int find(const std::string& name) const;
    const Param& at(const std::string& name) const;
    Param& at(const std::string& name);
    std::size_t total_params() const;
    std::vector<std::string> groups() const;
    bool is_frozen(const std::string& group) const { return frozen_groups.count(group) > 0; }
};

// Gradients aligned with ParameterSet::params.
struct GradientSet {
    std::vector<std::vector<double>> g;
    void init_like(const ParameterSet& ps);
    void zero();
    void add(const GradientSet& other);  // fixed-order accumulation
};

// Spatio-temporal coordinates of one patch.
struct PatchCoords {
    double center_lat = 0.0, center_lon = 0.0;
    int week_index = 0;                  // 0..52
    std::vector<double> pix_lat, pix_lon;  // per latent pixel, degrees
};

PatchCoords make_patch_coords(const GridSpec& grid, int row, int col, int h, int w, int day);

// One normalized sample: per input arm, t_in planes of values (masked cells
// zero-filled) and the 0/1 observation masks fed as an extra channel.
struct NetInput {
    std::vector<std::vector<double>> values;  // [var][t_in * h * w]
    std::vector<std::vector<double>> masks;   // [var][t_in * h * w]
};

struct NetOutput {
    std::vector<double> ssh, u, v;  // each [t_out * h * w]
};

struct ModelWiring;

class Model {
public:
    explicit Model(ModelConfig config);

    const ModelConfig& config() const { return cfg_; }
    const std::vector<Param>& layout() const { return layout_; }

    ParameterSet init_parameters(std::uint64_t seed) const;

    struct Cache;  // opaque to callers; defined in model.cpp
    std::shared_ptr<Cache> make_cache() const;
    NetOutput forward(const ParameterSet& ps, const NetInput& in, const PatchCoords& coords) const;
    NetOutput forward(const ParameterSet& ps, const NetInput& in, const PatchCoords& coords,
                      Cache& cache) const;
    void backward(const ParameterSet& ps, const Cache& cache, const NetOutput& dout,
                  GradientSet& grads) const;

    // Spec operations, also usable standalone.
    // Per-variable encoder over a stack of t_in (value, mask) plane pairs.
    std::vector<std::vector<double>> encode(const ParameterSet& ps, int var_idx,
                                            const std::vector<double>& values,
                                            const std::vector<double>& masks) const;
    // Additive embedding field in latent channels, [latent_channels, hl, wl].
    std::vector<double> positional_embedding(const ParameterSet& ps, const PatchCoords& coords) const;
    // The raw 32-dim embedding vector at one coordinate (pre-projection).
    std::vector<double> embedding_vector(const ParameterSet& ps, double lat, double lon,
                                         int week_index) const;
    // Translator over the concatenated latents.
    std::vector<double> gsta_translate(const ParameterSet& ps, const std::vector<double>& zcat) const;
    // Per-variable decoder over the future latent.
    std::vector<double> decode(const ParameterSet& ps, OutputVar var,
                               const std::vector<double>& future_latent) const;

private:
    ModelConfig cfg_;
    std::vector<Param> layout_;
    std::map<std::string, int> index_;
    std::shared_ptr<ModelWiring> wiring_;

    void register_param(const std::string& name, const std::string& group, std::vector<int> shape);
};

// Checkpoint = directory with manifest.json + one little-endian f32 binary
// per parameter tensor.
struct Checkpoint {
    ModelConfig config;
    ParameterSet params;
    std::string stage;
    std::uint64_t seed = 0;
    std::string content_hash;
};

std::string checkpoint_content_hash(const ParameterSet& ps);
void save_checkpoint(const std::string& dir, const ParameterSet& ps, const ModelConfig& config,
                     const std::string& stage, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& dir);

ModelConfig model_config_from_json_str(const std::string& s);
std::string model_config_to_json_str(const ModelConfig& c);

}  // namespace surfcast
