#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "surfcast/common.hpp"
#include "surfcast/grid.hpp"

namespace surfcast {

struct WorldConfig {
    GridSpec grid;
    int n_days = 0;
    int n_eddies = 0;
    std::pair<double, double> eddy_amplitude_range{0.15, 0.35};   // m, sign randomized
    std::pair<double, double> eddy_radius_range{40.0, 80.0};      // km
    std::pair<double, double> eddy_drift_speed_range{2.0, 6.0};   // km/day
    double background_ssh_gradient = 0.0;                         // m per degree latitude
    double land_fraction = 0.0;
    // Steady non-geostrophic current component added to the truth (U, V);
    // zero keeps the truth exactly geostrophic.
    double ageo_amplitude = 0.0;           // m/s RMS over ocean
    double ageo_length_scale_cells = 24.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Daily synthetic truth. (U, V) = geostrophic_currents(SSH) plus the optional
// steady ageostrophic component.
struct OceanWorld {
    GridSpec grid;
    GeophysParams geo;
    std::vector<std::uint8_t> ocean;  // 1 = water
    std::vector<GriddedField> ssh, u, v, sst, chl;  // indexed by day

    int n_days() const { return static_cast<int>(ssh.size()); }
};

struct SwotConfig {
    double swath_half_width_km = 50.0;  // width of each band
    double gap_width_km = 20.0;
    int revisit_days = 21;
    double bias_mean = 0.0526;  // m, per-pass
    double bias_std = 0.0332;   // m
    double noise_std = 0.0;     // m, per-pixel
    double inclination_deg = 15.0;  // swath direction, clockwise from north

    double footprint_width_km() const { return 2.0 * swath_half_width_km + gap_width_km; }
};

struct DrifterHourlySample {
    int hour = 0;  // hours since day 0, 00:00
    double lat = 0.0, lon = 0.0;
    double u = 0.0, v = 0.0;
};

struct DrifterDailySample {
    int day = 0;
    double lat = 0.0, lon = 0.0;  // 24 h mean position
    double u = 0.0, v = 0.0;      // 24 h mean velocity
};

struct DrifterTrack {
    std::string id;
    std::vector<DrifterHourlySample> hourly;
    std::vector<DrifterDailySample> daily;
};

OceanWorld simulate_world(const WorldConfig& config);

std::pair<GriddedField, GriddedField> geostrophic_currents(const GriddedField& ssh, const GridSpec& grid,
                                                           const GeophysParams& params);
// Same stencil, but only fully-observed central stencils produce output
// (edge and gap-adjacent cells come back masked out).
std::pair<GriddedField, GriddedField> swath_geostrophy(const GriddedField& swot_ssh, const GridSpec& grid,
                                                       const GeophysParams& params);

GriddedField observe_nadir(const OceanWorld& world, int day, int n_tracks, double along_track_spacing_km,
                           double noise_std, std::uint64_t seed);
GriddedField observe_swot(const OceanWorld& world, int day, const SwotConfig& cfg, std::uint64_t seed);
GriddedField observe_imagery(const OceanWorld& world, int day, Variable variable, double cloud_cover,
                             std::uint64_t seed);

std::vector<DrifterTrack> simulate_drifters(const OceanWorld& world, int n_drifters, std::uint64_t seed);

void rasterize_drifters(const std::vector<DrifterTrack>& tracks, const GridSpec& grid, int day,
                        GriddedField& u_target, GriddedField& v_target);

// Daily 24 h-mean rows: id,timestamp_iso8601,lat,lon,u,v
void save_drifters_csv(const std::vector<DrifterTrack>& tracks, const std::string& path);
std::vector<DrifterTrack> load_drifters_csv(const std::string& path);

// Smooth unit-scale random field (white noise blurred over ~sigma cells),
// shared by the imagery cloud masks and the ageostrophic component.
std::vector<double> smooth_noise_field(int n_lat, int n_lon, double sigma_cells, Rng& rng);

Dataset world_to_dataset(const OceanWorld& world);

// Deterministic sub-stream seed for a named purpose.
std::uint64_t sub_seed(std::uint64_t seed, const std::string& tag);

}  // namespace surfcast
