#include "surfcast/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace surfcast {

const char* variable_name(Variable v) {
    switch (v) {
        case Variable::SSH: return "SSH";
        case Variable::U: return "U";
        case Variable::V: return "V";
        case Variable::SST: return "SST";
        case Variable::CHL: return "CHL";
    }
    return "?";
}

Variable variable_from_name(const std::string& name) {
    if (name == "SSH") return Variable::SSH;
    if (name == "U") return Variable::U;
    if (name == "V") return Variable::V;
    if (name == "SST") return Variable::SST;
    if (name == "CHL") return Variable::CHL;
    throw InputError("unknown variable: " + name);
}

GridSpec GridSpec::make(double lat_min, double lat_max, double lon_min, double lon_max, double resolution) {
    GridSpec s;
    s.lat_min = lat_min;
    s.lat_max = lat_max;
    s.lon_min = lon_min;
    s.lon_max = lon_max;
    s.resolution = resolution;
    if (resolution > 0.0 && lat_max > lat_min && lon_max > lon_min) {
        s.n_lat = static_cast<int>(std::llround((lat_max - lat_min) / resolution));
        s.n_lon = static_cast<int>(std::llround((lon_max - lon_min) / resolution));
    }
    s.validate();
    return s;
}

void GridSpec::validate() const {
    if (!(resolution > 0.0)) throw ConfigError("grid resolution must be > 0");
    if (!(lat_min < lat_max)) throw ConfigError("grid requires lat_min < lat_max");
    if (!(lon_min < lon_max)) throw ConfigError("grid requires lon_min < lon_max");
    if (n_lat < 1 || n_lon < 1) throw ConfigError("grid has no cells");
    if (n_lat != static_cast<int>(std::llround((lat_max - lat_min) / resolution)) ||
        n_lon != static_cast<int>(std::llround((lon_max - lon_min) / resolution))) {
        throw ConfigError("grid cell counts inconsistent with bounds and resolution");
    }
}

int GridSpec::lat_index(double lat) const {
    const int i = static_cast<int>(std::floor((lat - lat_min) / resolution));
    return (i >= 0 && i < n_lat) ? i : -1;
}

int GridSpec::lon_index(double lon) const {
    const int j = static_cast<int>(std::floor((lon - lon_min) / resolution));
    return (j >= 0 && j < n_lon) ? j : -1;
}

bool GridSpec::same_as(const GridSpec& o) const {
    return n_lat == o.n_lat && n_lon == o.n_lon && std::fabs(lat_min - o.lat_min) < 1e-9 &&
           std::fabs(lon_min - o.lon_min) < 1e-9 && std::fabs(resolution - o.resolution) < 1e-12;
}

std::pair<std::vector<double>, std::vector<double>> make_grid(const GridSpec& spec) {
    spec.validate();
    std::vector<double> lats(spec.n_lat), lons(spec.n_lon);
    for (int i = 0; i < spec.n_lat; ++i) lats[i] = spec.lat_center(i);
    for (int j = 0; j < spec.n_lon; ++j) lons[j] = spec.lon_center(j);
    return {std::move(lats), std::move(lons)};
}

GriddedField GriddedField::zeros(Variable v, int day, int n_lat, int n_lon) {
    GriddedField f;
    f.variable = v;
    f.day = day;
    f.n_lat = n_lat;
    f.n_lon = n_lon;
    f.values.assign(static_cast<std::size_t>(n_lat) * n_lon, 0.0);
    f.mask.assign(static_cast<std::size_t>(n_lat) * n_lon, 0);
    return f;
}

const std::vector<RegionSpec>& region_registry() {
    static const std::vector<RegionSpec> regions = {
        {"Global", {{-60.0, -20.0}, {20.0, 60.0}}, {-180.0, 180.0}},
        {"Mediterranean", {{30.0, 46.0}}, {-6.0, 36.0}},
        {"GulfStream", {{20.0, 45.0}}, {-99.0, -34.0}},
        {"Agulhas", {{-55.0, -30.0}}, {14.0, 74.0}},
    };
    return regions;
}

const RegionSpec& region_by_name(const std::string& name) {
    for (const auto& r : region_registry()) {
        if (r.name == name) return r;
    }
    throw InputError("unknown region: " + name);
}

bool region_contains(const RegionSpec& region, double lat, double lon) {
    if (lon < region.lon_range.first || lon > region.lon_range.second) return false;
    for (const auto& [lo, hi] : region.lat_ranges) {
        if (lat >= lo && lat <= hi) return true;
    }
    return false;
}

int Climatology::period_index(int day) const {
    int doy = day % 365;
    if (doy < 0) doy += 365;
    return std::min(doy / period, n_weeks - 1);
}

void Climatology::lookup(int day, double lat, double lon, double& mean, double& std) const {
    const int week = period_index(day);
    int ci = static_cast<int>(std::floor((lat - lat_min) / cell_size));
    int cj = static_cast<int>(std::floor((lon - lon_min) / cell_size));
    ci = std::clamp(ci, 0, coarse_lat - 1);
    cj = std::clamp(cj, 0, coarse_lon - 1);
    const std::size_t k = cell_index(week, ci, cj);
    mean = means[k];
    std = stds[k];
}

Climatology compute_climatology(const std::vector<const GriddedField*>& series, const GridSpec& grid,
                                double cell_size, int period) {
    if (series.empty()) throw InputError("compute_climatology: empty series");
    const Variable var = series.front()->variable;
    int day_lo = series.front()->day, day_hi = series.front()->day;
    for (const auto* f : series) {
        if (f->variable != var) throw InputError("compute_climatology: mixed variables in series");
        if (f->n_lat != grid.n_lat || f->n_lon != grid.n_lon) {
            throw InputError("compute_climatology: field does not match grid");
        }
        day_lo = std::min(day_lo, f->day);
        day_hi = std::max(day_hi, f->day);
    }
    if (day_hi - day_lo + 1 < period) throw InputError("compute_climatology: series shorter than one period");

    Climatology clim;
    clim.variable = var;
    clim.cell_size = cell_size;
    clim.period = period;
    clim.n_weeks = (365 + period - 1) / period;
    clim.lat_min = grid.lat_min;
    clim.lon_min = grid.lon_min;
    clim.coarse_lat = static_cast<int>(std::ceil(grid.n_lat * grid.resolution / cell_size));
    clim.coarse_lon = static_cast<int>(std::ceil(grid.n_lon * grid.resolution / cell_size));

    const std::size_t n = static_cast<std::size_t>(clim.n_weeks) * clim.coarse_lat * clim.coarse_lon;
    std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
    std::vector<long> count(n, 0);
    double gsum = 0.0, gsumsq = 0.0;
    long gcount = 0;

    // Accumulate in day order so the result is independent of series ordering.
    std::vector<const GriddedField*> ordered(series);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const GriddedField* a, const GriddedField* b) { return a->day < b->day; });

    for (const auto* f : ordered) {
        const int week = clim.period_index(f->day);
        for (int i = 0; i < grid.n_lat; ++i) {
            const int ci = std::clamp(static_cast<int>(std::floor((grid.lat_center(i) - clim.lat_min) / cell_size)),
                                      0, clim.coarse_lat - 1);
            for (int j = 0; j < grid.n_lon; ++j) {
                const std::size_t idx = static_cast<std::size_t>(i) * grid.n_lon + j;
                if (!f->mask[idx]) continue;
                const int cj = std::clamp(
                    static_cast<int>(std::floor((grid.lon_center(j) - clim.lon_min) / cell_size)), 0,
                    clim.coarse_lon - 1);
                const double v = f->values[idx];
                const std::size_t k = clim.cell_index(week, ci, cj);
                sum[k] += v;
                sumsq[k] += v * v;
                count[k]++;
                gsum += v;
                gsumsq += v * v;
                gcount++;
            }
        }
    }

    if (gcount > 0) {
        clim.global_mean = gsum / gcount;
        clim.global_std =
            std::max(std::sqrt(std::max(0.0, gsumsq / gcount - clim.global_mean * clim.global_mean)),
                     Climatology::kStdFloor);
    }
    clim.means.assign(n, clim.global_mean);
    clim.stds.assign(n, clim.global_std);
    for (std::size_t k = 0; k < n; ++k) {
        if (count[k] >= 2) {
            const double m = sum[k] / count[k];
            clim.means[k] = m;
            clim.stds[k] = std::max(std::sqrt(std::max(0.0, sumsq[k] / count[k] - m * m)),
                                    Climatology::kStdFloor);
        }
    }
    return clim;
}

namespace {

GriddedField transform(const GriddedField& field, const GridSpec& grid, const Climatology& clim, bool forward) {
    if (field.variable != clim.variable) {
        throw InputError(std::string("climatology variable mismatch: field is ") + variable_name(field.variable) +
                         ", climatology is " + variable_name(clim.variable));
    }
    GriddedField out = field;
    for (int i = 0; i < field.n_lat; ++i) {
        const double lat = grid.lat_center(i);
        for (int j = 0; j < field.n_lon; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * field.n_lon + j;
            if (!field.mask[idx]) {
                out.values[idx] = 0.0;
                continue;
            }
            double mean, std;
            clim.lookup(field.day, lat, grid.lon_center(j), mean, std);
            out.values[idx] = forward ? (field.values[idx] - mean) / std : field.values[idx] * std + mean;
        }
    }
    return out;
}

}  // namespace

GriddedField normalize(const GriddedField& field, const GridSpec& grid, const Climatology& clim) {
    return transform(field, grid, clim, true);
}

GriddedField denormalize(const GriddedField& field, const GridSpec& grid, const Climatology& clim) {
    return transform(field, grid, clim, false);
}

Patch crop_patch(const GriddedField& field, const GridSpec& grid, int row, int col, int h, int w) {
    if (row < 0 || col < 0 || h < 1 || w < 1 || row + h > field.n_lat || col + w > field.n_lon) {
        throw InputError("crop_patch: crop outside grid bounds");
    }
    Patch p;
    p.row = row;
    p.col = col;
    p.h = h;
    p.w = w;
    p.center_lat = grid.lat_min + (row + 0.5 * h) * grid.resolution;
    p.center_lon = grid.lon_min + (col + 0.5 * w) * grid.resolution;
    p.values.resize(static_cast<std::size_t>(h) * w);
    p.mask.resize(static_cast<std::size_t>(h) * w);
    for (int i = 0; i < h; ++i) {
        const std::size_t src = static_cast<std::size_t>(row + i) * field.n_lon + col;
        std::memcpy(&p.values[static_cast<std::size_t>(i) * w], &field.values[src], sizeof(double) * w);
        std::memcpy(&p.mask[static_cast<std::size_t>(i) * w], &field.mask[src], sizeof(std::uint8_t) * w);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Dataset I/O
// ---------------------------------------------------------------------------

int Dataset::var_slot(Variable v) const {
    for (std::size_t k = 0; k < variables.size(); ++k) {
        if (variables[k] == v) return static_cast<int>(k);
    }
    return -1;
}

bool Dataset::has(Variable v) const { return var_slot(v) >= 0; }

void Dataset::add_variable(Variable v) {
    if (has(v)) return;
    variables.push_back(v);
    store_.emplace_back();
    store_.back().resize(n_days);
    for (int d = 0; d < n_days; ++d) {
        store_.back()[d] = GriddedField::zeros(v, day_start + d, grid.n_lat, grid.n_lon);
    }
}

const GriddedField& Dataset::field(Variable v, int day) const {
    const int slot = var_slot(v);
    if (slot < 0) throw InputError(std::string("dataset is missing variable ") + variable_name(v));
    const int d = day - day_start;
    if (d < 0 || d >= n_days) {
        throw InputError("dataset day " + std::to_string(day) + " outside stored range [" +
                         std::to_string(day_start) + ", " + std::to_string(day_start + n_days - 1) + "]");
    }
    return store_[slot][d];
}

GriddedField& Dataset::field(Variable v, int day) {
    return const_cast<GriddedField&>(static_cast<const Dataset*>(this)->field(v, day));
}

void Dataset::set_field(GriddedField f) {
    const int slot = var_slot(f.variable);
    if (slot < 0) throw InputError("set_field: variable not registered");
    const int d = f.day - day_start;
    if (d < 0 || d >= n_days) throw InputError("set_field: day outside range");
    store_[slot][d] = std::move(f);
}

namespace {

json grid_to_json(const GridSpec& g) {
    return json{{"lat_min", g.lat_min}, {"lat_max", g.lat_max}, {"lon_min", g.lon_min},
                {"lon_max", g.lon_max}, {"resolution", g.resolution}, {"n_lat", g.n_lat},
                {"n_lon", g.n_lon}};
}

GridSpec grid_from_json(const json& j) {
    GridSpec g;
    g.lat_min = j.at("lat_min").get<double>();
    g.lat_max = j.at("lat_max").get<double>();
    g.lon_min = j.at("lon_min").get<double>();
    g.lon_max = j.at("lon_max").get<double>();
    g.resolution = j.at("resolution").get<double>();
    g.n_lat = j.at("n_lat").get<int>();
    g.n_lon = j.at("n_lon").get<int>();
    g.validate();
    return g;
}

void write_bytes(const fs::path& p, const void* data, std::size_t n) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot open for writing: " + p.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!f) throw InputError("short write: " + p.string());
}

std::vector<char> read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    if (!f) throw InputError("cannot open: " + p.string());
    const auto size = f.tellg();
    f.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(size));
    f.read(buf.data(), size);
    if (!f) throw InputError("short read: " + p.string());
    return buf;
}

}  // namespace

void Dataset::save(const std::string& dir) const {
    fs::create_directories(dir);
    json meta;
    meta["format"] = "surfcast-dataset-v1";
    meta["grid"] = grid_to_json(grid);
    meta["day_start"] = day_start;
    meta["n_days"] = n_days;
    meta["fill_value"] = fill_value;
    json vars = json::array();
    for (Variable v : variables) vars.push_back(variable_name(v));
    meta["variables"] = vars;
    if (!ocean.empty()) meta["land_file"] = "land.bin";
    if (!extra_json.empty()) meta["extra"] = json::parse(extra_json);

    const std::size_t plane = grid.n_cells();
    for (std::size_t k = 0; k < variables.size(); ++k) {
        std::vector<float> vals(plane * n_days);
        std::vector<std::uint8_t> msk(plane * n_days);
        for (int d = 0; d < n_days; ++d) {
            const GriddedField& f = store_[k][d];
            for (std::size_t i = 0; i < plane; ++i) {
                msk[d * plane + i] = f.mask[i];
                vals[d * plane + i] = f.mask[i] ? static_cast<float>(f.values[i]) : fill_value;
            }
        }
        const std::string base = variable_name(variables[k]);
        write_bytes(fs::path(dir) / (base + ".values.bin"), vals.data(), vals.size() * sizeof(float));
        write_bytes(fs::path(dir) / (base + ".mask.bin"), msk.data(), msk.size());
    }
    if (!ocean.empty()) write_bytes(fs::path(dir) / "land.bin", ocean.data(), ocean.size());

    std::ofstream mf(fs::path(dir) / "meta.json", std::ios::trunc);
    mf << meta.dump(2) << "\n";
}

Dataset Dataset::load(const std::string& dir) {
    return load_window(dir, INT32_MIN, INT32_MAX);
}

Dataset Dataset::load_window(const std::string& dir, int day_lo, int day_hi) {
    const fs::path meta_path = fs::path(dir) / "meta.json";
    if (!fs::exists(meta_path)) throw InputError("not a dataset directory (no meta.json): " + dir);
    json meta = json::parse(std::ifstream(meta_path));

    Dataset ds;
    ds.grid = grid_from_json(meta.at("grid"));
    const int file_day_start = meta.at("day_start").get<int>();
    const int file_n_days = meta.at("n_days").get<int>();
    ds.fill_value = meta.at("fill_value").get<float>();
    if (meta.contains("extra")) ds.extra_json = meta["extra"].dump();

    const int lo = std::max(file_day_start, day_lo);
    const int hi = std::min(file_day_start + file_n_days - 1, day_hi);
    if (lo > hi) throw InputError("requested day window has no overlap with dataset: " + dir);
    ds.day_start = lo;
    ds.n_days = hi - lo + 1;

    const std::size_t plane = ds.grid.n_cells();
    for (const auto& vn : meta.at("variables")) {
        const Variable v = variable_from_name(vn.get<std::string>());
        ds.add_variable(v);
        const std::string base = variable_name(v);
        const auto vals = read_bytes(fs::path(dir) / (base + ".values.bin"));
        const auto msk = read_bytes(fs::path(dir) / (base + ".mask.bin"));
        if (vals.size() != plane * file_n_days * sizeof(float) || msk.size() != plane * file_n_days) {
            throw InputError("dataset binary size mismatch for variable " + base + " in " + dir);
        }
        const float* fv = reinterpret_cast<const float*>(vals.data());
        const auto* fm = reinterpret_cast<const std::uint8_t*>(msk.data());
        for (int day = lo; day <= hi; ++day) {
            const std::size_t off = static_cast<std::size_t>(day - file_day_start) * plane;
            GriddedField f = GriddedField::zeros(v, day, ds.grid.n_lat, ds.grid.n_lon);
            for (std::size_t i = 0; i < plane; ++i) {
                f.mask[i] = fm[off + i];
                f.values[i] = f.mask[i] ? static_cast<double>(fv[off + i]) : 0.0;
            }
            ds.set_field(std::move(f));
        }
    }
    if (meta.contains("land_file")) {
        const auto land = read_bytes(fs::path(dir) / meta["land_file"].get<std::string>());
        if (land.size() != plane) throw InputError("land map size mismatch in " + dir);
        ds.ocean.assign(land.begin(), land.end());
    }
    return ds;
}

}  // namespace surfcast
