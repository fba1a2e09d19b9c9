#include "surfcast/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "surfcast/analysis.hpp"
#include "surfcast/config.hpp"
#include "surfcast/forecast.hpp"
#include "surfcast/metrics.hpp"
#include "surfcast/model.hpp"
#include "surfcast/png.hpp"
#include "surfcast/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace surfcast {

namespace {

void emit_error(const char* type, const std::string& message) {
    json e;
    e["error"] = json{{"type", type}, {"message", message}};
    std::cerr << e.dump() << "\n";
}

std::vector<int> parse_stage_list(const std::string& s) {
    std::vector<int> stages;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        stages.push_back(std::stoi(tok));
    }
    if (stages.empty()) throw ConfigError("--stages parsed to an empty list");
    for (std::size_t i = 1; i < stages.size(); ++i) {
        if (stages[i] <= stages[i - 1]) throw ConfigError("--stages must be strictly ascending");
    }
    return stages;
}

// ---------------------------------------------------------------------------
// PNG snapshot rendering (optional output path only)
// ---------------------------------------------------------------------------

void draw_line(std::vector<std::uint8_t>& rgb, int w, int h, int x0, int y0, int x1, int y1) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        if (x0 >= 0 && x0 < w && y0 >= 0 && y0 < h) {
            const std::size_t i = (static_cast<std::size_t>(y0) * w + x0) * 3;
            rgb[i] = rgb[i + 1] = rgb[i + 2] = 0;
        }
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

void render_forecast_png(const ForecastProduct& product, int lead, const std::string& path,
                         int arrow_stride) {
    const GriddedField& ssh = product.lead_field(Variable::SSH, lead);
    const GriddedField& uf = product.lead_field(Variable::U, lead);
    const GriddedField& vf = product.lead_field(Variable::V, lead);
    const int h = ssh.n_lat, w = ssh.n_lon;

    double lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < ssh.values.size(); ++i) {
        if (!ssh.mask[i]) continue;
        lo = std::min(lo, ssh.values[i]);
        hi = std::max(hi, ssh.values[i]);
    }
    if (!(hi > lo)) {
        lo = -1.0;
        hi = 1.0;
    }

    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3, 128);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const std::size_t src = static_cast<std::size_t>(i) * w + j;
            const std::size_t dst = (static_cast<std::size_t>(h - 1 - i) * w + j) * 3;  // north up
            if (!ssh.mask[src]) continue;
            const double t = (ssh.values[src] - lo) / (hi - lo);
            double r, g, b;
            if (t < 0.5) {  // blue -> white
                const double s = t * 2.0;
                r = 60 + s * 195;
                g = 90 + s * 165;
                b = 200 + s * 55;
            } else {  // white -> red
                const double s = (t - 0.5) * 2.0;
                r = 255;
                g = 255 - s * 180;
                b = 255 - s * 195;
            }
            rgb[dst] = static_cast<std::uint8_t>(r);
            rgb[dst + 1] = static_cast<std::uint8_t>(g);
            rgb[dst + 2] = static_cast<std::uint8_t>(b);
        }
    }

    double max_speed = 0.0;
    for (std::size_t i = 0; i < uf.values.size(); ++i) {
        if (uf.mask[i]) max_speed = std::max(max_speed, std::hypot(uf.values[i], vf.values[i]));
    }
    const double scale = max_speed > 0.0 ? (arrow_stride * 0.9) / max_speed : 0.0;
    for (int i = arrow_stride / 2; i < h; i += arrow_stride) {
        for (int j = arrow_stride / 2; j < w; j += arrow_stride) {
            const std::size_t src = static_cast<std::size_t>(i) * w + j;
            if (!uf.mask[src]) continue;
            const int x0 = j, y0 = h - 1 - i;
            const int x1 = j + static_cast<int>(std::lround(uf.values[src] * scale));
            const int y1 = (h - 1 - i) - static_cast<int>(std::lround(vf.values[src] * scale));
            draw_line(rgb, w, h, x0, y0, x1, y1);
        }
    }
    write_png_rgb(path, w, h, rgb);
}

// ---------------------------------------------------------------------------
// Command bodies
// ---------------------------------------------------------------------------

struct CommonOpts {
    std::string config_path;
    std::string output_dir;  // overrides config
    std::int64_t seed = -1;  // overrides config when >= 0
    bool force = false;
};

RunConfig load_config_with_overrides(const CommonOpts& c, bool config_required = true) {
    RunConfig cfg;
    if (!c.config_path.empty()) {
        cfg = load_run_config(c.config_path);
    } else if (config_required) {
        throw ConfigError("--config is required for this command");
    }
    if (c.seed >= 0) {
        cfg.seed = static_cast<std::uint64_t>(c.seed);
        cfg.world.seed = cfg.seed;
    }
    if (!c.output_dir.empty()) cfg.output_dir = c.output_dir;
    return cfg;
}

int cmd_generate(const CommonOpts& common) {
    RunConfig cfg = load_config_with_overrides(common);
    const fs::path data_dir = fs::path(cfg.output_dir) / "data";
    if (fs::exists(data_dir) && !fs::is_empty(data_dir) && !common.force) {
        throw InputError("output directory " + data_dir.string() +
                         " is not empty; pass --force to overwrite");
    }
    OceanWorld world = simulate_world(cfg.world);
    GeneratedData data = generate_data(world, cfg.observations, cfg.seed);
    save_generated(data, data_dir.string());
    std::cout << "wrote dataset bundle to " << data_dir.string() << "\n";
    return 0;
}

int cmd_train(const CommonOpts& common, const std::string& stages_arg, std::string dataset_dir) {
    RunConfig cfg = load_config_with_overrides(common);
    if (dataset_dir.empty()) dataset_dir = (fs::path(cfg.output_dir) / "data").string();
    const std::vector<int> wanted = parse_stage_list(stages_arg);

    std::vector<StageConfig> stages;
    for (int s : wanted) {
        const auto it = std::find_if(cfg.stages.begin(), cfg.stages.end(), [&](const StageConfig& sc) {
            return static_cast<int>(sc.stage) == s;
        });
        if (it == cfg.stages.end()) {
            throw ConfigError("config has no stage " + std::to_string(s) + " entry");
        }
        stages.push_back(*it);
    }

    TrainingData data = TrainingData::load(dataset_dir);
    Model model(cfg.model);
    const fs::path ckpt_root = fs::path(cfg.output_dir) / "checkpoints";

    ParameterSet params;
    if (wanted.front() == 1) {
        params = model.init_parameters(cfg.seed);
    } else {
        bool found = false;
        for (int prev = wanted.front() - 1; prev >= 1 && !found; --prev) {
            const fs::path prev_dir = ckpt_root / stage_name(static_cast<Stage>(prev));
            if (fs::exists(prev_dir / "manifest.json")) {
                Checkpoint ck = load_checkpoint(prev_dir.string());
                params = std::move(ck.params);
                found = true;
            }
        }
        if (!found) {
            throw InputError("stage " + std::to_string(wanted.front()) +
                             " requires a prior checkpoint under " + ckpt_root.string());
        }
    }

    auto results = run_curriculum(model, std::move(params), stages, data, cfg.seed, ckpt_root.string(),
                                  cfg.training);
    for (const auto& r : results) {
        std::cout << "stage " << static_cast<int>(r.stage) << " final mean loss "
                  << (r.history.empty() ? 0.0 : r.history.back().mean_loss) << "; checkpoint "
                  << (ckpt_root / stage_name(r.stage)).string() << "\n";
    }
    return 0;
}

int cmd_forecast(const CommonOpts& common, const std::string& checkpoint_dir, std::string dataset_dir,
                 int issue_day, bool png, int arrow_stride) {
    RunConfig cfg = load_config_with_overrides(common, /*config_required=*/false);
    if (dataset_dir.empty()) dataset_dir = (fs::path(cfg.output_dir) / "data").string();
    Checkpoint ck = load_checkpoint(checkpoint_dir);
    Model model(ck.config);
    TrainingData data = TrainingData::load(dataset_dir);
    ForecastProduct product = forecast(model, ck.params, data, issue_day, cfg.tile, ck.content_hash);
    const fs::path out = fs::path(cfg.output_dir) / "forecasts" / ("issue_" + std::to_string(issue_day));
    save_product(product, out.string());
    if (png) {
        for (int lead = 1; lead <= product.t_out; ++lead) {
            render_forecast_png(product, lead,
                                (out / ("ssh_lead" + std::to_string(lead) + ".png")).string(),
                                arrow_stride);
        }
    }
    std::cout << "wrote forecast product to " << out.string() << "\n";
    return 0;
}

ForecastProduct truth_product(const Dataset& world, int issue_day, int t_out) {
    ForecastProduct p;
    p.grid = world.grid;
    p.issue_day = issue_day;
    p.t_out = t_out;
    p.checkpoint_hash = "truth-analysis";
    for (int t = 0; t < t_out; ++t) {
        const int day = issue_day + 1 + t;
        p.ssh.push_back(world.field(Variable::SSH, day));
        p.u.push_back(world.field(Variable::U, day));
        p.v.push_back(world.field(Variable::V, day));
    }
    return p;
}

int cmd_evaluate(const CommonOpts& common, const std::vector<std::string>& product_dirs,
                 bool persistence, bool truth, std::string dataset_dir, const std::string& drifters_csv,
                 std::string region_name) {
    RunConfig cfg = load_config_with_overrides(common, /*config_required=*/false);
    if (dataset_dir.empty()) dataset_dir = (fs::path(cfg.output_dir) / "data").string();
    if (region_name.empty()) region_name = cfg.eval_region;
    if (product_dirs.empty()) throw InputError("evaluate needs at least one --product directory");

    const auto tracks = load_drifters_csv(drifters_csv);
    const RegionSpec* region = nullptr;
    for (const auto& r : region_registry()) {
        if (r.name == region_name) region = &r;
    }

    auto evaluate_product = [&](const ForecastProduct& p, const std::string& label) {
        auto pairs = match_drifters(p, tracks);
        if (region) {
            pairs.erase(std::remove_if(pairs.begin(), pairs.end(),
                                       [&](const MatchedPair& mp) {
                                           return !region_contains(*region, mp.lat, mp.lon);
                                       }),
                        pairs.end());
        }
        MetricsReport rep = evaluate(pairs, p.t_out);
        rep.label = label;
        rep.region = region_name;
        rep.checkpoint_hash = p.checkpoint_hash;
        return rep;
    };

    std::vector<MetricsReport> reports;
    std::vector<ForecastProduct> products;
    for (const auto& dir : product_dirs) {
        products.push_back(load_product(dir));
        reports.push_back(evaluate_product(products.back(), fs::path(dir).filename().string()));
    }
    if (persistence || truth) {
        const int issue = products.front().issue_day;
        const int t_out = products.front().t_out;
        if (persistence) {
            Dataset l4 = Dataset::load((fs::path(dataset_dir) / "obs" / "l4").string());
            ForecastProduct pp =
                persistence_forecast(l4.field(Variable::SSH, issue), l4.field(Variable::U, issue),
                                     l4.field(Variable::V, issue), l4.grid, issue, t_out);
            reports.push_back(evaluate_product(pp, "persistence"));
        }
        if (truth) {
            Dataset world = Dataset::load((fs::path(dataset_dir) / "world").string());
            reports.push_back(evaluate_product(truth_product(world, issue, t_out), "truth-analysis"));
        }
    }

    const std::string table = render_markdown_table(reports);
    std::cout << table;
    const fs::path report_dir = fs::path(cfg.output_dir) / "reports";
    fs::create_directories(report_dir);
    for (const auto& rep : reports) {
        std::ofstream f(report_dir / (rep.label + ".json"), std::ios::trunc);
        f << report_to_json(rep) << "\n";
    }
    std::ofstream mf(report_dir / "comparison.md", std::ios::trunc);
    mf << table;
    return 0;
}

int cmd_analyze_embeddings(const CommonOpts& common, const std::string& checkpoint_dir,
                           std::string dataset_dir, const std::string& region_name, double lat_step,
                           double lon_step, const std::string& weeks_arg, int k, int batch, int iters,
                           bool png) {
    RunConfig cfg = load_config_with_overrides(common, /*config_required=*/false);
    if (dataset_dir.empty()) dataset_dir = (fs::path(cfg.output_dir) / "data").string();
    Checkpoint ck = load_checkpoint(checkpoint_dir);
    Model model(ck.config);

    Dataset world = Dataset::load((fs::path(dataset_dir) / "world").string());
    RegionSpec region;
    if (!region_name.empty()) {
        region = region_by_name(region_name);
    } else {
        region.name = "dataset";
        region.lat_ranges = {{world.grid.lat_min, world.grid.lat_max}};
        region.lon_range = {world.grid.lon_min, world.grid.lon_max};
    }
    std::vector<int> weeks;
    {
        std::stringstream ss(weeks_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            if (!tok.empty()) weeks.push_back(std::stoi(tok));
        }
        if (weeks.empty()) weeks.push_back(0);
    }

    EmbeddingGrid grid = embedding_grid(model, ck.params, region, lat_step, lon_step, weeks,
                                        &world.grid, &world.ocean);
    KMeansConfig kc;
    kc.k = k;
    kc.batch_size = batch;
    kc.max_iters = iters;
    kc.seed = ck.seed;
    KMeansResult km = minibatch_kmeans(grid.vectors, static_cast<int>(grid.size()), grid.dim, kc);
    km = reorder_clusters(km, grid.points);
    ClusterMatrices mats = cluster_matrices(km.centroids, km.k, km.d);
    if (mats.zero_variance_warning) {
        std::cerr << "warning: at least one centroid has zero variance; its correlations read 0\n";
    }

    const fs::path out = fs::path(cfg.output_dir) / "analysis" / "embeddings";
    fs::create_directories(out);
    save_cluster_map_csv(grid, km.assignments, (out / "clusters.csv").string());
    save_matrix_csv(mats.correlation, mats.k, (out / "correlation.csv").string());
    save_matrix_csv(mats.distance, mats.k, (out / "distance.csv").string());

    if (png && !weeks.empty()) {
        // Label map for the first requested week.
        const int week0 = weeks.front();
        double lat_lo = 1e300, lat_hi = -1e300, lon_lo = 1e300, lon_hi = -1e300;
        for (const auto& p : grid.points) {
            lat_lo = std::min(lat_lo, p[0]);
            lat_hi = std::max(lat_hi, p[0]);
            lon_lo = std::min(lon_lo, p[1]);
            lon_hi = std::max(lon_hi, p[1]);
        }
        const int w = std::max(1, static_cast<int>(std::lround((lon_hi - lon_lo) / lon_step)) + 1);
        const int h = std::max(1, static_cast<int>(std::lround((lat_hi - lat_lo) / lat_step)) + 1);
        std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3, 90);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            if (static_cast<int>(grid.points[i][2]) != week0) continue;
            const int x = static_cast<int>(std::lround((grid.points[i][1] - lon_lo) / lon_step));
            const int y = h - 1 - static_cast<int>(std::lround((grid.points[i][0] - lat_lo) / lat_step));
            if (x < 0 || x >= w || y < 0 || y >= h) continue;
            const int c = km.assignments[i];
            const std::size_t d = (static_cast<std::size_t>(y) * w + x) * 3;
            rgb[d] = static_cast<std::uint8_t>(40 + (c * 53) % 215);
            rgb[d + 1] = static_cast<std::uint8_t>(40 + (c * 97) % 215);
            rgb[d + 2] = static_cast<std::uint8_t>(40 + (c * 151) % 215);
        }
        write_png_rgb((out / "clusters.png").string(), w, h, rgb);
    }
    std::cout << "wrote embedding analysis to " << out.string() << "\n";
    return 0;
}

int cmd_analyze_crossover(const CommonOpts& common, std::string dataset_dir) {
    RunConfig cfg = load_config_with_overrides(common, /*config_required=*/false);
    if (dataset_dir.empty()) dataset_dir = (fs::path(cfg.output_dir) / "data").string();
    Dataset swot = Dataset::load((fs::path(dataset_dir) / "obs" / "swot").string());
    Dataset nadir = Dataset::load((fs::path(dataset_dir) / "obs" / "nadir").string());
    CrossoverStats st = crossover_bias(swot, nadir);
    json j;
    j["n_points"] = st.n_points;
    j["mean_bias_m"] = st.mean_bias;
    j["std_m"] = st.std;
    std::cout << j.dump(2) << "\n";
    const fs::path out = fs::path(cfg.output_dir) / "analysis";
    fs::create_directories(out);
    std::ofstream f(out / "crossover.json", std::ios::trunc);
    f << j.dump(2) << "\n";
    return 0;
}

int cmd_analyze_ablate(const CommonOpts& common, std::string dataset_dir) {
    RunConfig cfg = load_config_with_overrides(common);
    if (dataset_dir.empty()) dataset_dir = (fs::path(cfg.output_dir) / "data").string();
    TrainingData data = TrainingData::load(dataset_dir);
    Model model(cfg.model);

    std::vector<int> issue_days = cfg.issue_days;
    if (issue_days.empty()) {
        issue_days.push_back(data.day_hi - cfg.model.t_out);
    }
    const auto eval_tracks =
        load_drifters_csv((fs::path(dataset_dir) / "drifters_eval.csv").string());
    auto rows = ablation_run(model, data, cfg.stages, eval_tracks, issue_days, cfg.seed, cfg.training);

    std::cout << ablation_to_markdown(rows);
    const fs::path out = fs::path(cfg.output_dir) / "analysis";
    fs::create_directories(out);
    std::ofstream f(out / "ablation.json", std::ios::trunc);
    f << ablation_to_json(rows) << "\n";
    std::ofstream mf(out / "ablation.md", std::ios::trunc);
    mf << ablation_to_markdown(rows);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"surfcast: synthetic ocean surface current forecasting testbed"};
    app.require_subcommand(1);

    CommonOpts common;
    app.add_option("--config", common.config_path, "JSON run configuration")->envname("");
    app.add_option("--seed", common.seed, "override the config seed");
    app.add_option("--output-dir", common.output_dir, "override the config output directory");
    app.add_flag("--force", common.force, "overwrite existing outputs");

    auto* gen = app.add_subcommand("generate", "simulate a world and its observations");

    auto* train = app.add_subcommand("train", "run the training curriculum");
    std::string stages_arg = "1,2,3";
    std::string dataset_dir;
    train->add_option("--stages", stages_arg, "comma-separated stage subset, e.g. 1,2,3");
    train->add_option("--dataset", dataset_dir, "dataset directory (default <output-dir>/data)");

    auto* fc = app.add_subcommand("forecast", "produce a forecast from a checkpoint");
    std::string checkpoint_dir;
    int issue_day = -1;
    bool png = false;
    int arrow_stride = 8;
    fc->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    fc->add_option("--dataset", dataset_dir, "dataset directory (default <output-dir>/data)");
    fc->add_option("--issue-day", issue_day, "issue day T (forecast covers T+1..T+tau)")->required();
    fc->add_flag("--png", png, "also render SSH heatmap snapshots");
    fc->add_option("--arrow-stride", arrow_stride, "current-arrow subsampling in cells");

    auto* ev = app.add_subcommand("evaluate", "score products against drifters");
    std::vector<std::string> product_dirs;
    bool with_persistence = false, with_truth = false;
    std::string drifters_csv, region_name;
    ev->add_option("--product", product_dirs, "forecast product directory (repeatable)");
    ev->add_flag("--persistence", with_persistence, "add a persistence baseline row");
    ev->add_flag("--truth", with_truth, "add a truth-analysis row");
    ev->add_option("--dataset", dataset_dir, "dataset directory (default <output-dir>/data)");
    ev->add_option("--drifters", drifters_csv, "drifter CSV")->required();
    ev->add_option("--region", region_name, "region filter (registry name)");

    auto* an = app.add_subcommand("analyze", "appendix analyses");
    an->require_subcommand(1);
    auto* emb = an->add_subcommand("embeddings", "cluster the positional embeddings");
    double lat_step = 0.5, lon_step = 0.5;
    std::string weeks_arg = "0";
    int kmeans_k = 30, kmeans_batch = 8, kmeans_iters = 10000;
    emb->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
    emb->add_option("--dataset", dataset_dir, "dataset directory (default <output-dir>/data)");
    emb->add_option("--region", region_name, "registry region (default: dataset bounds)");
    emb->add_option("--lat-step", lat_step, "grid step in degrees");
    emb->add_option("--lon-step", lon_step, "grid step in degrees");
    emb->add_option("--weeks", weeks_arg, "comma-separated week indices");
    emb->add_option("--k", kmeans_k, "number of clusters");
    emb->add_option("--batch", kmeans_batch, "mini-batch size");
    emb->add_option("--iters", kmeans_iters, "mini-batch iterations");
    emb->add_flag("--png", png, "render a cluster label map");
    auto* cross = an->add_subcommand("crossover", "SWOT x nadir same-day bias");
    cross->add_option("--dataset", dataset_dir, "dataset directory (default <output-dir>/data)");
    auto* abl = an->add_subcommand("ablate", "stage-1 target source ablation");
    abl->add_option("--dataset", dataset_dir, "dataset directory (default <output-dir>/data)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        emit_error("config", e.what());
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(common);
        if (train->parsed()) return cmd_train(common, stages_arg, dataset_dir);
        if (fc->parsed()) {
            return cmd_forecast(common, checkpoint_dir, dataset_dir, issue_day, png, arrow_stride);
        }
        if (ev->parsed()) {
            return cmd_evaluate(common, product_dirs, with_persistence, with_truth, dataset_dir,
                                drifters_csv, region_name);
        }
        if (an->parsed()) {
            if (emb->parsed()) {
                return cmd_analyze_embeddings(common, checkpoint_dir, dataset_dir, region_name, lat_step,
                                              lon_step, weeks_arg, kmeans_k, kmeans_batch, kmeans_iters,
                                              png);
            }
            if (cross->parsed()) return cmd_analyze_crossover(common, dataset_dir);
            if (abl->parsed()) return cmd_analyze_ablate(common, dataset_dir);
        }
        emit_error("config", "no subcommand given");
        return 2;
    } catch (const ConfigError& e) {
        emit_error("config", e.what());
        return 2;
    } catch (const InputError& e) {
        emit_error("input", e.what());
        return 3;
    } catch (const NumericalError& e) {
        emit_error("numerical", e.what());
        return 4;
    } catch (const std::exception& e) {
        emit_error("input", e.what());
        return 3;
    }
}

}  // namespace surfcast
