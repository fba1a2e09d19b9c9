#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "surfcast/forecast.hpp"
#include "surfcast/metrics.hpp"
#include "surfcast/model.hpp"
#include "surfcast/training.hpp"

namespace surfcast {

struct EmbeddingGrid {
    std::vector<std::array<double, 3>> points;  // (lat, lon, week_index)
    std::vector<double> vectors;                // [n_points * 32], row-major
    int dim = 32;

    std::size_t size() const { return points.size(); }
};

// Evaluates the learned positional embedding over a lat/lon/week grid.
// When a land map is supplied, points whose containing cell is land are
// excluded.
EmbeddingGrid embedding_grid(const Model& model, const ParameterSet& params, const RegionSpec& region,
                             double lat_step, double lon_step, const std::vector<int>& weeks,
                             const GridSpec* land_grid = nullptr,
                             const std::vector<std::uint8_t>* ocean = nullptr);

struct KMeansConfig {
    int k = 30;
    int batch_size = 8;
    int max_iters = 10000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct KMeansResult {
    std::vector<double> centroids;  // [k * d]
    std::vector<int> assignments;   // [n]
    int k = 0, d = 0;
};

// Mini-batch k-means with per-centroid 1/count learning rates; empty
// clusters are reseeded from the farthest point. Deterministic given seed.
KMeansResult minibatch_kmeans(const std::vector<double>& points, int n, int d, const KMeansConfig& cfg);

double kmeans_inertia(const std::vector<double>& points, int n, int d, const std::vector<double>& centroids,
                      const std::vector<int>& assignments);

// Relabels clusters by ascending mean member latitude (ties by mean
// longitude); pure permutation of labels.
KMeansResult reorder_clusters(const KMeansResult& result, const std::vector<std::array<double, 3>>& points_meta);

struct ClusterMatrices {
    int k = 0;
    std::vector<double> correlation;  // [k * k], diagonal 1
    std::vector<double> distance;     // [k * k], diagonal 0
    bool zero_variance_warning = false;
};

ClusterMatrices cluster_matrices(const std::vector<double>& centroids, int k, int d);

struct CrossoverStats {
    long n_points = 0;
    double mean_bias = 0.0;  // m, swot - nadir
    double std = 0.0;        // sample std
};

CrossoverStats crossover_bias(const Dataset& swot, const Dataset& nadir);

// Shared evaluation glue: forecast at each issue day, match drifters,
// aggregate across issue days.
MetricsReport evaluate_params(const Model& model, const ParameterSet& params, const TrainingData& data,
                              const std::vector<int>& issue_days,
                              const std::vector<DrifterTrack>& drifters,
                              const ForecastOptions& fopts = {});

struct AblationRow {
    Stage1Target variant;
    Stage stage;
    MetricsReport report;
};

// Appendix-C-style harness: runs the curriculum once per Stage-1 target
// variant and evaluates after every stage.
std::vector<AblationRow> ablation_run(const Model& model, const TrainingData& data,
                                      std::vector<StageConfig> stages,
                                      const std::vector<DrifterTrack>& eval_drifters,
                                      const std::vector<int>& issue_days, std::uint64_t seed,
                                      const TrainingOptions& opts = {});

std::string ablation_to_json(const std::vector<AblationRow>& rows);
std::string ablation_to_markdown(const std::vector<AblationRow>& rows);

// CSV exports for the cluster map and matrices.
void save_cluster_map_csv(const EmbeddingGrid& grid, const std::vector<int>& assignments,
                          const std::string& path);
void save_matrix_csv(const std::vector<double>& m, int k, const std::string& path);

}  // namespace surfcast
