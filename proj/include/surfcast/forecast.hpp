#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "surfcast/grid.hpp"
#include "surfcast/model.hpp"
#include "surfcast/training.hpp"

namespace surfcast {

struct TilePlan {
    int patch_h = 0, patch_w = 0;
    int stride_rows = 0, stride_cols = 0;
    std::vector<std::pair<int, int>> anchors;  // (row, col), deterministic order
};

// Anchors at multiples of the stride, with the last row/column clamped so the
// final patch stays inside the extent.
TilePlan tile_domain(int extent_rows, int extent_cols, int patch_h, int patch_w, int stride_rows,
                     int stride_cols);

struct MergedField {
    std::vector<double> values;
    std::vector<std::uint8_t> mask;  // 0 where no patch covered the cell
};

MergedField gaussian_merge(const std::vector<std::pair<int, int>>& anchors,
                           const std::vector<const double*>& patches, int patch_h, int patch_w,
                           int extent_rows, int extent_cols, double sigma_cells);

struct ForecastProduct {
    GridSpec grid;
    int issue_day = 0;
    int t_out = 0;
    std::vector<GriddedField> ssh, u, v;  // index = lead - 1, field day = issue_day + lead
    std::string checkpoint_hash;
    std::string model_config_json;

    const GriddedField& lead_field(Variable v, int lead) const;
};

struct ForecastOptions {
    int stride_rows = 0, stride_cols = 0;  // 0 = patch/2
    double sigma_cells = 0.0;              // 0 = patch/4
};

// Tiles the grid, runs the network on every patch (never touching any
// observation dated after issue_day), denormalizes, and merges.
ForecastProduct forecast(const Model& model, const ParameterSet& params, const TrainingData& data,
                         int issue_day, const ForecastOptions& opts = {},
                         const std::string& checkpoint_hash = "");

// Constant-in-time product from a reference analysis.
ForecastProduct persistence_forecast(const GriddedField& ssh_ref, const GriddedField& u_ref,
                                     const GriddedField& v_ref, const GridSpec& grid, int issue_day,
                                     int t_out);

void save_product(const ForecastProduct& product, const std::string& dir);
ForecastProduct load_product(const std::string& dir);

}  // namespace surfcast
