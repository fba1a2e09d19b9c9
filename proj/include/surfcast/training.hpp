#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "surfcast/grid.hpp"
#include "surfcast/model.hpp"
#include "surfcast/ocean.hpp"

namespace surfcast {

enum class Stage { S1 = 1, S2 = 2, S3 = 3 };
enum class Stage1Target { L4_ANALOG, NEUROST_ANALOG };

const char* stage_name(Stage s);
Stage stage_from_int(int s);

struct StageConfig {
    Stage stage = Stage::S1;
    double learning_rate = 1e-3;
    double weight_decay = 1e-3;
    int epochs = 50;
    int patches_per_epoch = 1000;
    std::set<std::string> frozen_groups;
    Stage1Target target_source = Stage1Target::L4_ANALOG;

    // Stage defaults: S1 lr 1e-3; S2/S3 lr reduced by 10. Desk epoch
    // defaults 50/20/10.
    static StageConfig defaults(Stage s);
};

struct TrainingOptions {
    int batch_size = 8;
    double v_ref = 0.25;  // m/s, magnitude-weight scale
    double w_max = 5.0;
    double min_ocean_fraction = 0.5;
};

// Observation simulator settings used when generating a dataset bundle.
struct ObservationConfig {
    int nadir_tracks = 6;
    double nadir_spacing_km = 7.0;
    double nadir_noise_std = 0.01;
    SwotConfig swot;
    double cloud_cover = 0.3;
    double l4_sigma_cells = 3.0;       // DUACS-analog effective resolution
    double neurost_sigma_cells = 1.0;  // milder NeurOST-analog smoothing
    int n_drifters_train = 40;
    int n_drifters_eval = 40;
};

// Everything cmd_generate writes to disk.
struct GeneratedData {
    Dataset world;
    Dataset nadir, imagery, swot, l4, neurost;
    std::vector<DrifterTrack> drifters_train, drifters_eval;
};

GeneratedData generate_data(const OceanWorld& world, const ObservationConfig& obs, std::uint64_t seed);
void save_generated(const GeneratedData& data, const std::string& dir);

// The in-memory bundle training consumes: observation inputs, per-stage
// target sources (including derived swath geostrophy and drifter rasters)
// and climatology normalization.
struct TrainingData {
    GridSpec grid;
    std::vector<std::uint8_t> ocean;
    Dataset nadir, imagery, swot, l4, neurost;
    Dataset swath_uv;    // U, V from swath_geostrophy per day
    Dataset drifter_uv;  // U, V rasterized per day
    Climatology clim_ssh, clim_u, clim_v, clim_sst, clim_chl;
    int day_lo = 0, day_hi = -1;

    static TrainingData build(GeneratedData data, const GeophysParams& geo = {});
    static TrainingData load(const std::string& dir, const GeophysParams& geo = {});
    const Climatology& clim_for(Variable v) const;
};

struct TrainingSample {
    NetInput input;
    PatchCoords coords;
    int anchor_day = 0, row = 0, col = 0;
    std::vector<double> target_ssh, target_u, target_v;       // normalized units
    std::vector<std::uint8_t> mask_ssh, mask_u, mask_v;
    std::vector<double> weights_uv;  // per-cell magnitude weights (>= 1)
};

// w = min(1 + |w_target| / v_ref, w_max) on physical target magnitudes.
std::vector<double> magnitude_weights(const std::vector<double>& target_u,
                                      const std::vector<double>& target_v,
                                      const std::vector<std::uint8_t>& mask, double v_ref, double w_max);

struct MaskedMse {
    double value = 0.0;
    bool supervised = false;  // false when the mask is empty
};

MaskedMse weighted_masked_mse(const double* pred, const double* target, const std::uint8_t* mask,
                              const double* weights, std::size_t n);
// d(loss)/d(pred) scaled by `scale`, written into dpred (overwrites).
void weighted_masked_mse_grad(const double* pred, const double* target, const std::uint8_t* mask,
                              const double* weights, std::size_t n, double scale, double* dpred);

// Normalized, mask-filled network input for the window starting at anchor_day.
NetInput build_net_input(const Model& model, const TrainingData& data, int anchor_day, int row, int col);

// Deterministic target construction for one patch window.
TrainingSample build_sample(const Model& model, const TrainingData& data, const StageConfig& stage,
                            int anchor_day, int row, int col, const TrainingOptions& opts = {});

TrainingSample sample_patch(const Model& model, const TrainingData& data, const StageConfig& stage,
                            Rng& rng, const TrainingOptions& opts);

struct LossTerms {
    double total = 0.0, ssh = 0.0, uv = 0.0;
};

// Forward + loss; when grads is non-null also runs backward with d(loss)
// scaled by `scale` (the 1/batch factor).
LossTerms sample_loss(const Model& model, const ParameterSet& ps, const TrainingSample& sample,
                      double scale, GradientSet* grads);

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0, ssh_term = 0.0, uv_term = 0.0;
};

std::vector<EpochStats> train_stage(const Model& model, ParameterSet& params, const StageConfig& stage,
                                    const TrainingData& data, std::uint64_t seed,
                                    const TrainingOptions& opts = {});

void save_loss_history(const std::vector<EpochStats>& history, const std::string& path);

struct CurriculumStageResult {
    Stage stage;
    ParameterSet params;  // checkpointed state after the stage
    std::vector<EpochStats> history;
};

// Runs the requested stages in order; each resumes from the previous result.
// checkpoint_root may be empty (no files written); otherwise one checkpoint
// directory per stage (stage1/stage2/stage3) plus loss CSVs.
std::vector<CurriculumStageResult> run_curriculum(const Model& model, ParameterSet params,
                                                  const std::vector<StageConfig>& stages,
                                                  const TrainingData& data, std::uint64_t seed,
                                                  const std::string& checkpoint_root,
                                                  const TrainingOptions& opts = {});

}  // namespace surfcast
