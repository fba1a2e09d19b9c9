#include "surfcast/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

using nlohmann::json;

namespace surfcast {

EmbeddingGrid embedding_grid(const Model& model, const ParameterSet& params, const RegionSpec& region,
                             double lat_step, double lon_step, const std::vector<int>& weeks,
                             const GridSpec* land_grid, const std::vector<std::uint8_t>* ocean) {
    if (params.find("pos_embed.mlp1.weight") < 0) {
        throw InputError("embedding_grid: checkpoint has no pos_embed parameter group");
    }
    if (lat_step <= 0.0 || lon_step <= 0.0) throw InputError("embedding_grid: steps must be positive");

    EmbeddingGrid grid;
    for (int week : weeks) {
        for (const auto& [lat_lo, lat_hi] : region.lat_ranges) {
            for (double lat = lat_lo + 0.5 * lat_step; lat < lat_hi; lat += lat_step) {
                for (double lon = region.lon_range.first + 0.5 * lon_step; lon < region.lon_range.second;
                     lon += lon_step) {
                    if (land_grid && ocean) {
                        const int i = land_grid->lat_index(lat);
                        const int j = land_grid->lon_index(lon);
                        if (i >= 0 && j >= 0 && !(*ocean)[static_cast<std::size_t>(i) * land_grid->n_lon + j]) {
                            continue;
                        }
                    }
                    grid.points.push_back({lat, lon, static_cast<double>(week)});
                }
            }
        }
    }
    grid.vectors.resize(grid.points.size() * static_cast<std::size_t>(grid.dim));
    const int n = static_cast<int>(grid.points.size());
#pragma omp parallel for schedule(static)
    for (int p = 0; p < n; ++p) {
        const auto vec = model.embedding_vector(params, grid.points[p][0], grid.points[p][1],
                                                static_cast<int>(grid.points[p][2]));
        std::copy(vec.begin(), vec.end(), grid.vectors.begin() + static_cast<std::size_t>(p) * grid.dim);
    }
    return grid;
}

void KMeansConfig::validate() const {
    if (k < 2) throw InputError("k-means requires k >= 2");
    if (batch_size < 1) throw InputError("k-means requires batch_size >= 1");
    if (max_iters < 0) throw InputError("k-means requires max_iters >= 0");
}

namespace {

int nearest_centroid(const double* x, const std::vector<double>& centroids, int k, int d) {
    int best = 0;
    double best_d = std::numeric_limits<double>::max();
    for (int c = 0; c < k; ++c) {
        double s = 0.0;
        const double* cc = centroids.data() + static_cast<std::size_t>(c) * d;
        for (int j = 0; j < d; ++j) {
            const double diff = x[j] - cc[j];
            s += diff * diff;
        }
        if (s < best_d) {
            best_d = s;
            best = c;
        }
    }
    return best;
}

}  // namespace

KMeansResult minibatch_kmeans(const std::vector<double>& points, int n, int d, const KMeansConfig& cfg) {
    cfg.validate();
    if (n < cfg.k) throw InputError("minibatch_kmeans: fewer points than clusters");
    if (points.size() != static_cast<std::size_t>(n) * d) {
        throw InputError("minibatch_kmeans: point matrix size mismatch");
    }

    Rng rng(cfg.seed);
    KMeansResult res;
    res.k = cfg.k;
    res.d = d;

    // Init: uniform sample without replacement (partial Fisher-Yates).
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < cfg.k; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(n - i));
        std::swap(order[i], order[j]);
    }
    res.centroids.resize(static_cast<std::size_t>(cfg.k) * d);
    for (int c = 0; c < cfg.k; ++c) {
        std::copy_n(points.data() + static_cast<std::size_t>(order[c]) * d, d,
                    res.centroids.begin() + static_cast<std::size_t>(c) * d);
    }

    // Sculley-style updates: per-centroid counts, 1/count learning rates.
    std::vector<long> counts(cfg.k, 0);
    std::vector<int> batch(cfg.batch_size), batch_assign(cfg.batch_size);
    for (int it = 0; it < cfg.max_iters; ++it) {
        for (int b = 0; b < cfg.batch_size; ++b) {
            batch[b] = static_cast<int>(rng.uniform_int(n));
            batch_assign[b] = nearest_centroid(points.data() + static_cast<std::size_t>(batch[b]) * d,
                                               res.centroids, cfg.k, d);
        }
        for (int b = 0; b < cfg.batch_size; ++b) {
            const int c = batch_assign[b];
            counts[c]++;
            const double lr = 1.0 / static_cast<double>(counts[c]);
            double* cc = res.centroids.data() + static_cast<std::size_t>(c) * d;
            const double* x = points.data() + static_cast<std::size_t>(batch[b]) * d;
            for (int j = 0; j < d; ++j) cc[j] += lr * (x[j] - cc[j]);
        }
    }

    auto assign_all = [&]() {
        res.assignments.resize(n);
        for (int i = 0; i < n; ++i) {
            res.assignments[i] =
                nearest_centroid(points.data() + static_cast<std::size_t>(i) * d, res.centroids, cfg.k, d);
        }
    };
    assign_all();

    // Reseed empty clusters from the point farthest from its centroid.
    for (int guard = 0; guard < cfg.k; ++guard) {
        std::vector<long> sizes(cfg.k, 0);
        for (int a : res.assignments) sizes[a]++;
        int empty = -1;
        for (int c = 0; c < cfg.k; ++c) {
            if (sizes[c] == 0) {
                empty = c;
                break;
            }
        }
        if (empty < 0) break;
        int far_i = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
            const double* x = points.data() + static_cast<std::size_t>(i) * d;
            const double* cc = res.centroids.data() + static_cast<std::size_t>(res.assignments[i]) * d;
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                const double diff = x[j] - cc[j];
                s += diff * diff;
            }
            if (s > far_d) {
                far_d = s;
                far_i = i;
            }
        }
        std::copy_n(points.data() + static_cast<std::size_t>(far_i) * d, d,
                    res.centroids.begin() + static_cast<std::size_t>(empty) * d);
        assign_all();
    }
    return res;
}

double kmeans_inertia(const std::vector<double>& points, int n, int d, const std::vector<double>& centroids,
                      const std::vector<int>& assignments) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* x = points.data() + static_cast<std::size_t>(i) * d;
        const double* c = centroids.data() + static_cast<std::size_t>(assignments[i]) * d;
        for (int j = 0; j < d; ++j) {
            const double diff = x[j] - c[j];
            s += diff * diff;
        }
    }
    return s;
}

KMeansResult reorder_clusters(const KMeansResult& result, const std::vector<std::array<double, 3>>& points_meta) {
    const int k = result.k;
    std::vector<double> mean_lat(k, std::numeric_limits<double>::infinity());
    std::vector<double> mean_lon(k, std::numeric_limits<double>::infinity());
    std::vector<long> sizes(k, 0);
    std::vector<double> sum_lat(k, 0.0), sum_lon(k, 0.0);
    for (std::size_t i = 0; i < result.assignments.size(); ++i) {
        const int c = result.assignments[i];
        sizes[c]++;
        sum_lat[c] += points_meta[i][0];
        sum_lon[c] += points_meta[i][1];
    }
    for (int c = 0; c < k; ++c) {
        if (sizes[c] > 0) {
            mean_lat[c] = sum_lat[c] / sizes[c];
            mean_lon[c] = sum_lon[c] / sizes[c];
        }
    }
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (mean_lat[a] != mean_lat[b]) return mean_lat[a] < mean_lat[b];
        if (mean_lon[a] != mean_lon[b]) return mean_lon[a] < mean_lon[b];
        return a < b;
    });
    std::vector<int> new_label(k);
    for (int i = 0; i < k; ++i) new_label[order[i]] = i;

    KMeansResult out;
    out.k = k;
    out.d = result.d;
    out.centroids.resize(result.centroids.size());
    for (int c = 0; c < k; ++c) {
        std::copy_n(result.centroids.data() + static_cast<std::size_t>(c) * result.d, result.d,
                    out.centroids.begin() + static_cast<std::size_t>(new_label[c]) * result.d);
    }
    out.assignments.resize(result.assignments.size());
    for (std::size_t i = 0; i < result.assignments.size(); ++i) {
        out.assignments[i] = new_label[result.assignments[i]];
    }
    return out;
}

ClusterMatrices cluster_matrices(const std::vector<double>& centroids, int k, int d) {
    if (k < 2) throw InputError("cluster_matrices: k must be >= 2");
    ClusterMatrices m;
    m.k = k;
    m.correlation.assign(static_cast<std::size_t>(k) * k, 0.0);
    m.distance.assign(static_cast<std::size_t>(k) * k, 0.0);

    std::vector<double> mean(k, 0.0), var(k, 0.0);
    for (int c = 0; c < k; ++c) {
        const double* cc = centroids.data() + static_cast<std::size_t>(c) * d;
        double s = 0.0;
        for (int j = 0; j < d; ++j) s += cc[j];
        mean[c] = s / d;
        double v = 0.0;
        for (int j = 0; j < d; ++j) {
            const double diff = cc[j] - mean[c];
            v += diff * diff;
        }
        var[c] = v / d;
        if (var[c] == 0.0) m.zero_variance_warning = true;
    }

    for (int a = 0; a < k; ++a) {
        const double* ca = centroids.data() + static_cast<std::size_t>(a) * d;
        for (int b = 0; b < k; ++b) {
            const double* cb = centroids.data() + static_cast<std::size_t>(b) * d;
            double dist = 0.0, cov = 0.0;
            for (int j = 0; j < d; ++j) {
                const double diff = ca[j] - cb[j];
                dist += diff * diff;
                cov += (ca[j] - mean[a]) * (cb[j] - mean[b]);
            }
            m.distance[static_cast<std::size_t>(a) * k + b] = std::sqrt(dist);
            double corr;
            if (a == b) {
                corr = 1.0;
            } else if (var[a] == 0.0 || var[b] == 0.0) {
                corr = 0.0;
            } else {
                corr = (cov / d) / std::sqrt(var[a] * var[b]);
            }
            m.correlation[static_cast<std::size_t>(a) * k + b] = corr;
        }
    }
    return m;
}

CrossoverStats crossover_bias(const Dataset& swot, const Dataset& nadir) {
    if (!swot.grid.same_as(nadir.grid)) throw InputError("crossover_bias: inputs on different grids");
    const int lo = std::max(swot.day_start, nadir.day_start);
    const int hi = std::min(swot.day_start + swot.n_days, nadir.day_start + nadir.n_days) - 1;
    CrossoverStats st;
    double sum = 0.0, sumsq = 0.0;
    for (int day = lo; day <= hi; ++day) {
        const GriddedField& s = swot.field(Variable::SSH, day);
        const GriddedField& n = nadir.field(Variable::SSH, day);
        for (std::size_t i = 0; i < s.values.size(); ++i) {
            if (!s.mask[i] || !n.mask[i]) continue;
            const double dv = s.values[i] - n.values[i];
            st.n_points++;
            sum += dv;
            sumsq += dv * dv;
        }
    }
    if (st.n_points == 0) throw InputError("crossover_bias: no same-day intersections between the inputs");
    st.mean_bias = sum / st.n_points;
    if (st.n_points > 1) {
        const double ss = sumsq - st.n_points * st.mean_bias * st.mean_bias;
        st.std = std::sqrt(std::max(0.0, ss / (st.n_points - 1)));
    }
    return st;
}

MetricsReport evaluate_params(const Model& model, const ParameterSet& params, const TrainingData& data,
                              const std::vector<int>& issue_days,
                              const std::vector<DrifterTrack>& drifters, const ForecastOptions& fopts) {
    std::vector<MatchedPair> all_pairs;
    for (int issue : issue_days) {
        const ForecastProduct product =
            forecast(model, params, data, issue, fopts, checkpoint_content_hash(params));
        auto pairs = match_drifters(product, drifters);
        all_pairs.insert(all_pairs.end(), pairs.begin(), pairs.end());
    }
    MetricsReport report = evaluate(all_pairs, model.config().t_out);
    report.checkpoint_hash = checkpoint_content_hash(params);
    return report;
}

std::vector<AblationRow> ablation_run(const Model& model, const TrainingData& data,
                                      std::vector<StageConfig> stages,
                                      const std::vector<DrifterTrack>& eval_drifters,
                                      const std::vector<int>& issue_days, std::uint64_t seed,
                                      const TrainingOptions& opts) {
    std::vector<AblationRow> rows;
    for (Stage1Target variant : {Stage1Target::L4_ANALOG, Stage1Target::NEUROST_ANALOG}) {
        for (auto& sc : stages) {
            if (sc.stage == Stage::S1) sc.target_source = variant;
        }
        ParameterSet params = model.init_parameters(seed);
        auto results = run_curriculum(model, std::move(params), stages, data, seed, "", opts);
        for (const auto& r : results) {
            AblationRow row;
            row.variant = variant;
            row.stage = r.stage;
            row.report = evaluate_params(model, r.params, data, issue_days, eval_drifters);
            row.report.label = std::string(variant == Stage1Target::L4_ANALOG ? "L4-analog " : "NeurOST-analog ") +
                               stage_name(r.stage);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string ablation_to_json(const std::vector<AblationRow>& rows) {
    json j = json::array();
    for (const auto& r : rows) {
        json row;
        row["variant"] = (r.variant == Stage1Target::L4_ANALOG) ? "L4_ANALOG" : "NEUROST_ANALOG";
        row["stage"] = stage_name(r.stage);
        row["report"] = json::parse(report_to_json(r.report));
        j.push_back(row);
    }
    return j.dump(2);
}

std::string ablation_to_markdown(const std::vector<AblationRow>& rows) {
    std::vector<MetricsReport> reports;
    reports.reserve(rows.size());
    for (const auto& r : rows) reports.push_back(r.report);
    return render_markdown_table(reports);
}

void save_cluster_map_csv(const EmbeddingGrid& grid, const std::vector<int>& assignments,
                          const std::string& path) {
    if (assignments.size() != grid.size()) throw InputError("cluster map: assignment size mismatch");
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot write " + path);
    f << "lat,lon,week,cluster\n";
    char buf[128];
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d,%d\n", grid.points[i][0], grid.points[i][1],
                      static_cast<int>(grid.points[i][2]), assignments[i]);
        f << buf;
    }
}

void save_matrix_csv(const std::vector<double>& m, int k, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot write " + path);
    char buf[64];
    for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
            std::snprintf(buf, sizeof(buf), "%.9g", m[static_cast<std::size_t>(a) * k + b]);
            f << buf << (b + 1 < k ? "," : "\n");
        }
    }
}

}  // namespace surfcast
