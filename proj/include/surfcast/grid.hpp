#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "surfcast/common.hpp"

namespace surfcast {

enum class Variable { SSH, U, V, SST, CHL };

const char* variable_name(Variable v);
Variable variable_from_name(const std::string& name);

struct GridSpec {
    double lat_min = 0.0, lat_max = 0.0;
    double lon_min = 0.0, lon_max = 0.0;
    double resolution = 1.0 / 30.0;  // degrees per cell
    int n_lat = 0, n_lon = 0;

    static GridSpec make(double lat_min, double lat_max, double lon_min, double lon_max,
                         double resolution);
    void validate() const;

    double lat_center(int i) const { return lat_min + (i + 0.5) * resolution; }
    double lon_center(int j) const { return lon_min + (j + 0.5) * resolution; }
    // Cell index containing a coordinate, or -1 when outside.
    int lat_index(double lat) const;
    int lon_index(double lon) const;
    std::size_t n_cells() const { return static_cast<std::size_t>(n_lat) * n_lon; }
    bool same_as(const GridSpec& o) const;
};

// Cell-center coordinate vectors, strictly increasing.
std::pair<std::vector<double>, std::vector<double>> make_grid(const GridSpec& spec);

struct GriddedField {
    Variable variable = Variable::SSH;
    int day = 0;
    int n_lat = 0, n_lon = 0;
    std::vector<double> values;       // [n_lat * n_lon], physical units
    std::vector<std::uint8_t> mask;   // 1 = observed/valid

    static GriddedField zeros(Variable v, int day, int n_lat, int n_lon);
    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * n_lon + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n_lon + j]; }
    std::uint8_t& m(int i, int j) { return mask[static_cast<std::size_t>(i) * n_lon + j]; }
    std::uint8_t m(int i, int j) const { return mask[static_cast<std::size_t>(i) * n_lon + j]; }
};

struct RegionSpec {
    std::string name;
    std::vector<std::pair<double, double>> lat_ranges;
    std::pair<double, double> lon_range;
};

// The four built-in evaluation regions.
const std::vector<RegionSpec>& region_registry();
const RegionSpec& region_by_name(const std::string& name);
bool region_contains(const RegionSpec& region, double lat, double lon);

struct Climatology {
    Variable variable = Variable::SSH;
    double cell_size = 2.0;  // degrees
    int period = 7;          // days
    int n_weeks = 0;
    int coarse_lat = 0, coarse_lon = 0;
    double lat_min = 0.0, lon_min = 0.0;  // anchor of the coarse grid
    std::vector<double> means;  // [n_weeks * coarse_lat * coarse_lon]
    std::vector<double> stds;   // same shape, >= std_floor
    double global_mean = 0.0;
    double global_std = 1.0;

    static constexpr double kStdFloor = 1e-3;

    int period_index(int day) const;
    std::size_t cell_index(int week, int ci, int cj) const {
        return (static_cast<std::size_t>(week) * coarse_lat + ci) * coarse_lon + cj;
    }
    // Statistics for the coarse cell containing a fine-cell center.
    void lookup(int day, double lat, double lon, double& mean, double& std) const;
};

Climatology compute_climatology(const std::vector<const GriddedField*>& series, const GridSpec& grid,
                                double cell_size = 2.0, int period = 7);

GriddedField normalize(const GriddedField& field, const GridSpec& grid, const Climatology& clim);
GriddedField denormalize(const GriddedField& field, const GridSpec& grid, const Climatology& clim);

struct Patch {
    int row = 0, col = 0, h = 0, w = 0;
    double center_lat = 0.0, center_lon = 0.0;
    std::vector<double> values;
    std::vector<std::uint8_t> mask;
};

Patch crop_patch(const GriddedField& field, const GridSpec& grid, int row, int col, int h, int w);

// ---------------------------------------------------------------------------
// Gridded dataset on disk: meta.json + <var>.values.bin (little-endian f32,
// C-order [day, lat, lon]) + <var>.mask.bin (bytes, 1 = observed), plus an
// optional land.bin ocean map. Shared by every module.
// ---------------------------------------------------------------------------

class Dataset {
public:
    GridSpec grid;
    int day_start = 0;
    int n_days = 0;
    float fill_value = -9999.0f;
    std::vector<Variable> variables;
    std::vector<std::uint8_t> ocean;  // [n_lat * n_lon], 1 = water; empty if absent
    std::string extra_json;           // serialized "extra" object (product metadata)

    // In-memory storage: per variable, per day.
    const GriddedField& field(Variable v, int day) const;
    GriddedField& field(Variable v, int day);
    bool has(Variable v) const;
    void add_variable(Variable v);
    void set_field(GriddedField f);

    void save(const std::string& dir) const;
    static Dataset load(const std::string& dir);
    // Loads only days in [day_lo, day_hi] (inclusive, absolute day indices).
    static Dataset load_window(const std::string& dir, int day_lo, int day_hi);

private:
    std::vector<std::vector<GriddedField>> store_;  // [variable][day - day_start]
    int var_slot(Variable v) const;
};

}  // namespace surfcast
