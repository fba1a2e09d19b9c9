#include "surfcast/ocean.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "surfcast/kernels.hpp"

namespace surfcast {

namespace {

constexpr double kMpdKm = geo::kMetersPerDegree / 1000.0;  // km per degree

struct Eddy {
    double lat0, lon0;      // initial center, degrees
    double amp;             // m, signed (positive = anticyclone)
    double radius_km;
    double dlat_per_day;    // degrees/day
    double dlon_per_day;
};

kern::GeostrophyParams to_kernel_params(const GeophysParams& p, bool one_sided) {
    kern::GeostrophyParams kp;
    kp.g = p.g;
    kp.omega = p.omega;
    kp.lat_clamp = p.lat_clamp;
    kp.meters_per_degree = geo::kMetersPerDegree;
    kp.one_sided_edges = one_sided;
    return kp;
}

// Bilinear interpolation of a masked field at a fractional position; all four
// stencil cells must be valid.
bool bilinear(const GriddedField& f, const GridSpec& grid, double lat, double lon, double& out) {
    const double fi = (lat - grid.lat_min) / grid.resolution - 0.5;
    const double fj = (lon - grid.lon_min) / grid.resolution - 0.5;
    const int i0 = static_cast<int>(std::floor(fi));
    const int j0 = static_cast<int>(std::floor(fj));
    if (i0 < 0 || j0 < 0 || i0 + 1 >= grid.n_lat || j0 + 1 >= grid.n_lon) return false;
    if (!f.m(i0, j0) || !f.m(i0, j0 + 1) || !f.m(i0 + 1, j0) || !f.m(i0 + 1, j0 + 1)) return false;
    const double a = fi - i0, b = fj - j0;
    out = f.at(i0, j0) * (1 - a) * (1 - b) + f.at(i0, j0 + 1) * (1 - a) * b +
          f.at(i0 + 1, j0) * a * (1 - b) + f.at(i0 + 1, j0 + 1) * a * b;
    return true;
}

std::vector<std::uint8_t> make_land_map(const GridSpec& grid, double land_fraction, Rng& rng) {
    std::vector<std::uint8_t> ocean(grid.n_cells(), 1);
    if (land_fraction <= 0.0) return ocean;
    const std::size_t target = static_cast<std::size_t>(std::llround(land_fraction * grid.n_cells()));
    std::size_t land = 0;
    int guard = 0;
    while (land < target && guard++ < 1000) {
        const int bh = 3 + static_cast<int>(rng.uniform_int(std::max(2, grid.n_lat / 6)));
        const int bw = 3 + static_cast<int>(rng.uniform_int(std::max(2, grid.n_lon / 6)));
        const int r0 = static_cast<int>(rng.uniform_int(grid.n_lat));
        const int c0 = static_cast<int>(rng.uniform_int(grid.n_lon));
        for (int i = r0; i < std::min(grid.n_lat, r0 + bh); ++i) {
            for (int j = c0; j < std::min(grid.n_lon, c0 + bw); ++j) {
                auto& cell = ocean[static_cast<std::size_t>(i) * grid.n_lon + j];
                if (cell) {
                    cell = 0;
                    ++land;
                }
            }
        }
    }
    return ocean;
}

}  // namespace

std::uint64_t sub_seed(std::uint64_t seed, const std::string& tag) {
    return fnv1a64(tag.data(), tag.size(), seed ^ 0x9e3779b97f4a7c15ULL);
}

void WorldConfig::validate() const {
    grid.validate();
    if (n_days < 1) throw ConfigError("world needs n_days >= 1");
    if (n_eddies < 0) throw ConfigError("n_eddies must be >= 0");
    if (land_fraction < 0.0 || land_fraction > 1.0) throw ConfigError("land_fraction must be in [0, 1]");
    // Geostrophy is meaningless near the equator; reject grids that touch it.
    if (grid.lat_min < geo::kLatClampDeg && grid.lat_max > -geo::kLatClampDeg) {
        throw ConfigError("world grid must not touch the band |lat| < 20 degrees");
    }
}

std::vector<double> smooth_noise_field(int n_lat, int n_lon, double sigma_cells, Rng& rng) {
    const std::size_t n = static_cast<std::size_t>(n_lat) * n_lon;
    std::vector<double> noise(n);
    for (auto& x : noise) x = rng.normal();
    std::vector<double> out(n);
    std::vector<std::uint8_t> ones(n, 1), mask_out(n);
    kern::masked_gaussian_smooth(noise.data(), ones.data(), n_lat, n_lon, sigma_cells, out.data(),
                                 mask_out.data());
    // Rescale to unit RMS.
    double ss = 0.0;
    for (double x : out) ss += x * x;
    const double rms = std::sqrt(ss / static_cast<double>(n));
    if (rms > 0.0) {
        for (auto& x : out) x /= rms;
    }
    return out;
}

std::pair<GriddedField, GriddedField> geostrophic_currents(const GriddedField& ssh, const GridSpec& grid,
                                                           const GeophysParams& params) {
    auto [lats, lons] = make_grid(grid);
    (void)lons;
    GriddedField u = GriddedField::zeros(Variable::U, ssh.day, ssh.n_lat, ssh.n_lon);
    GriddedField v = GriddedField::zeros(Variable::V, ssh.day, ssh.n_lat, ssh.n_lon);
    std::vector<std::uint8_t> out_mask(grid.n_cells());
    kern::geostrophy_uv(ssh.values.data(), ssh.mask.data(), lats.data(), grid.n_lat, grid.n_lon,
                        grid.resolution, to_kernel_params(params, true), u.values.data(), v.values.data(),
                        out_mask.data());
    u.mask = out_mask;
    v.mask = std::move(out_mask);
    return {std::move(u), std::move(v)};
}

std::pair<GriddedField, GriddedField> swath_geostrophy(const GriddedField& swot_ssh, const GridSpec& grid,
                                                       const GeophysParams& params) {
    auto [lats, lons] = make_grid(grid);
    (void)lons;
    GriddedField u = GriddedField::zeros(Variable::U, swot_ssh.day, swot_ssh.n_lat, swot_ssh.n_lon);
    GriddedField v = GriddedField::zeros(Variable::V, swot_ssh.day, swot_ssh.n_lat, swot_ssh.n_lon);
    std::vector<std::uint8_t> out_mask(grid.n_cells());
    kern::geostrophy_uv(swot_ssh.values.data(), swot_ssh.mask.data(), lats.data(), grid.n_lat, grid.n_lon,
                        grid.resolution, to_kernel_params(params, false), u.values.data(), v.values.data(),
                        out_mask.data());
    u.mask = out_mask;
    v.mask = std::move(out_mask);
    return {std::move(u), std::move(v)};
}

OceanWorld simulate_world(const WorldConfig& config) {
    config.validate();
    const GridSpec& grid = config.grid;
    OceanWorld world;
    world.grid = grid;

    Rng land_rng(sub_seed(config.seed, "land"));
    world.ocean = make_land_map(grid, config.land_fraction, land_rng);

    Rng eddy_rng(sub_seed(config.seed, "eddies"));
    std::vector<Eddy> eddies;
    eddies.reserve(config.n_eddies);
    for (int e = 0; e < config.n_eddies; ++e) {
        Eddy ed;
        ed.lat0 = eddy_rng.uniform(grid.lat_min, grid.lat_max);
        ed.lon0 = eddy_rng.uniform(grid.lon_min, grid.lon_max);
        ed.amp = eddy_rng.uniform(config.eddy_amplitude_range.first, config.eddy_amplitude_range.second);
        if (eddy_rng.uniform() < 0.5) ed.amp = -ed.amp;
        ed.radius_km = eddy_rng.uniform(config.eddy_radius_range.first, config.eddy_radius_range.second);
        const double speed =
            eddy_rng.uniform(config.eddy_drift_speed_range.first, config.eddy_drift_speed_range.second);
        const double dir = eddy_rng.uniform(0.0, 2.0 * M_PI);
        const double coslat = std::cos(ed.lat0 * M_PI / 180.0);
        ed.dlat_per_day = speed * std::cos(dir) / kMpdKm;
        ed.dlon_per_day = speed * std::sin(dir) / (kMpdKm * std::max(coslat, 0.2));
        eddies.push_back(ed);
    }

    // Steady ageostrophic component, if requested.
    std::vector<double> ageo_u, ageo_v;
    if (config.ageo_amplitude > 0.0) {
        Rng ageo_rng(sub_seed(config.seed, "ageo"));
        ageo_u = smooth_noise_field(grid.n_lat, grid.n_lon, config.ageo_length_scale_cells / 3.0, ageo_rng);
        ageo_v = smooth_noise_field(grid.n_lat, grid.n_lon, config.ageo_length_scale_cells / 3.0, ageo_rng);
        for (auto& x : ageo_u) x *= config.ageo_amplitude;
        for (auto& x : ageo_v) x *= config.ageo_amplitude;
    }

    const double lat_mid = 0.5 * (grid.lat_min + grid.lat_max);
    world.ssh.reserve(config.n_days);
    world.u.reserve(config.n_days);
    world.v.reserve(config.n_days);
    world.sst.reserve(config.n_days);
    world.chl.reserve(config.n_days);

    for (int day = 0; day < config.n_days; ++day) {
        GriddedField ssh = GriddedField::zeros(Variable::SSH, day, grid.n_lat, grid.n_lon);
        for (int i = 0; i < grid.n_lat; ++i) {
            const double lat = grid.lat_center(i);
            const double coslat = std::cos(lat * M_PI / 180.0);
            for (int j = 0; j < grid.n_lon; ++j) {
                const std::size_t idx = static_cast<std::size_t>(i) * grid.n_lon + j;
                if (!world.ocean[idx]) continue;
                const double lon = grid.lon_center(j);
                double h = config.background_ssh_gradient * (lat - lat_mid);
                for (const Eddy& ed : eddies) {
                    const double clat = ed.lat0 + ed.dlat_per_day * day;
                    const double clon = ed.lon0 + ed.dlon_per_day * day;
                    const double dx = (lon - clon) * kMpdKm * coslat;
                    const double dy = (lat - clat) * kMpdKm;
                    const double r2 = dx * dx + dy * dy;
                    h += ed.amp * std::exp(-r2 / (2.0 * ed.radius_km * ed.radius_km));
                }
                ssh.values[idx] = h;
                ssh.mask[idx] = 1;
            }
        }

        auto [u, v] = geostrophic_currents(ssh, grid, world.geo);
        if (!ageo_u.empty()) {
            for (std::size_t idx = 0; idx < grid.n_cells(); ++idx) {
                if (u.mask[idx]) {
                    u.values[idx] += ageo_u[idx];
                    v.values[idx] += ageo_v[idx];
                }
            }
        }

        world.ssh.push_back(std::move(ssh));
        world.u.push_back(std::move(u));
        world.v.push_back(std::move(v));
    }

    // Passive tracers: smooth initial fields advected by the truth currents
    // (semi-Lagrangian, one step per day).
    Rng tracer_rng(sub_seed(config.seed, "tracers"));
    auto sst_noise = smooth_noise_field(grid.n_lat, grid.n_lon, 8.0, tracer_rng);
    auto chl_noise = smooth_noise_field(grid.n_lat, grid.n_lon, 5.0, tracer_rng);

    GriddedField sst0 = GriddedField::zeros(Variable::SST, 0, grid.n_lat, grid.n_lon);
    GriddedField chl0 = GriddedField::zeros(Variable::CHL, 0, grid.n_lat, grid.n_lon);
    for (int i = 0; i < grid.n_lat; ++i) {
        const double lat = grid.lat_center(i);
        for (int j = 0; j < grid.n_lon; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * grid.n_lon + j;
            if (!world.ocean[idx]) continue;
            sst0.values[idx] = 22.0 - 0.3 * std::fabs(lat - grid.lat_min) + 1.5 * sst_noise[idx];
            chl0.values[idx] = -0.5 + 0.4 * chl_noise[idx];  // log10(mg/m^3)
            sst0.mask[idx] = 1;
            chl0.mask[idx] = 1;
        }
    }
    world.sst.push_back(std::move(sst0));
    world.chl.push_back(std::move(chl0));

    const double dt = 86400.0;
    for (int day = 1; day < config.n_days; ++day) {
        for (Variable var : {Variable::SST, Variable::CHL}) {
            const GriddedField& prev = (var == Variable::SST) ? world.sst[day - 1] : world.chl[day - 1];
            GriddedField next = prev;
            next.day = day;
            const GriddedField& uf = world.u[day - 1];
            const GriddedField& vf = world.v[day - 1];
            for (int i = 0; i < grid.n_lat; ++i) {
                const double lat = grid.lat_center(i);
                const double coslat = std::cos(lat * M_PI / 180.0);
                for (int j = 0; j < grid.n_lon; ++j) {
                    const std::size_t idx = static_cast<std::size_t>(i) * grid.n_lon + j;
                    if (!prev.mask[idx] || !uf.mask[idx]) continue;
                    const double dep_lat = lat - vf.values[idx] * dt / geo::kMetersPerDegree;
                    const double dep_lon =
                        grid.lon_center(j) - uf.values[idx] * dt / (geo::kMetersPerDegree * coslat);
                    double val;
                    if (bilinear(prev, grid, dep_lat, dep_lon, val)) next.values[idx] = val;
                }
            }
            if (var == Variable::SST) {
                world.sst.push_back(std::move(next));
            } else {
                world.chl.push_back(std::move(next));
            }
        }
    }
    return world;
}

GriddedField observe_nadir(const OceanWorld& world, int day, int n_tracks, double along_track_spacing_km,
                           double noise_std, std::uint64_t seed) {
    if (day < 0 || day >= world.n_days()) throw InputError("observe_nadir: day out of range");
    const GridSpec& grid = world.grid;
    const GriddedField& truth = world.ssh[day];
    GriddedField obs = GriddedField::zeros(Variable::SSH, day, grid.n_lat, grid.n_lon);
    Rng rng(seed);

    const double lat_span_km = (grid.lat_max - grid.lat_min) * kMpdKm;
    const double lon_span_km =
        (grid.lon_max - grid.lon_min) * kMpdKm * std::cos(0.5 * (grid.lat_min + grid.lat_max) * M_PI / 180.0);
    const double half_len = std::hypot(lat_span_km, lon_span_km);

    for (int t = 0; t < n_tracks; ++t) {
        const double angle = rng.uniform(0.0, M_PI);  // inclination of the ground track
        const double lat_a = rng.uniform(grid.lat_min, grid.lat_max);
        const double lon_a = rng.uniform(grid.lon_min, grid.lon_max);
        const double ex = std::sin(angle), ey = std::cos(angle);
        const double coslat = std::cos(lat_a * M_PI / 180.0);
        for (double s = -half_len; s <= half_len; s += along_track_spacing_km) {
            const double lat = lat_a + s * ey / kMpdKm;
            const double lon = lon_a + s * ex / (kMpdKm * coslat);
            const int i = grid.lat_index(lat);
            const int j = grid.lon_index(lon);
            if (i < 0 || j < 0) continue;
            const std::size_t idx = static_cast<std::size_t>(i) * grid.n_lon + j;
            if (!truth.mask[idx]) continue;
            obs.values[idx] = truth.values[idx] + (noise_std > 0.0 ? rng.normal(0.0, noise_std) : 0.0);
            obs.mask[idx] = 1;
        }
    }
    return obs;
}

GriddedField observe_swot(const OceanWorld& world, int day, const SwotConfig& cfg, std::uint64_t seed) {
    if (day < 0 || day >= world.n_days()) throw InputError("observe_swot: day out of range");
    const GridSpec& grid = world.grid;
    const GriddedField& truth = world.ssh[day];
    GriddedField obs = GriddedField::zeros(Variable::SSH, day, grid.n_lat, grid.n_lon);

    Rng rng(sub_seed(seed, "pass" + std::to_string(day)));
    const double pass_bias = (cfg.bias_std > 0.0 || cfg.bias_mean != 0.0)
                                 ? rng.normal(cfg.bias_mean, cfg.bias_std)
                                 : 0.0;

    const double a = cfg.inclination_deg * M_PI / 180.0;
    // Perpendicular (across-swath) unit vector in local (east, north) km.
    const double px = std::cos(a), py = -std::sin(a);
    const double lat_c = 0.5 * (grid.lat_min + grid.lat_max);
    const double lon_c = 0.5 * (grid.lon_min + grid.lon_max);

    auto perp = [&](double lat, double lon) {
        const double x = (lon - lon_c) * kMpdKm * std::cos(lat * M_PI / 180.0);
        const double y = (lat - lat_c) * kMpdKm;
        return x * px + y * py;
    };

    double qmin = 1e300, qmax = -1e300;
    for (double lat : {grid.lat_min, grid.lat_max}) {
        for (double lon : {grid.lon_min, grid.lon_max}) {
            const double q = perp(lat, lon);
            qmin = std::min(qmin, q);
            qmax = std::max(qmax, q);
        }
    }
    const int phase = day % cfg.revisit_days;
    const double offset = qmin + (phase + 0.5) * (qmax - qmin) / cfg.revisit_days;
    const double gap_half = 0.5 * cfg.gap_width_km;
    const double outer = gap_half + cfg.swath_half_width_km;

    for (int i = 0; i < grid.n_lat; ++i) {
        const double lat = grid.lat_center(i);
        for (int j = 0; j < grid.n_lon; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * grid.n_lon + j;
            if (!truth.mask[idx]) continue;
            const double dq = std::fabs(perp(lat, grid.lon_center(j)) - offset);
            if (dq <= gap_half || dq > outer) continue;
            obs.values[idx] =
                truth.values[idx] + pass_bias + (cfg.noise_std > 0.0 ? rng.normal(0.0, cfg.noise_std) : 0.0);
            obs.mask[idx] = 1;
        }
    }
    return obs;
}

GriddedField observe_imagery(const OceanWorld& world, int day, Variable variable, double cloud_cover,
                             std::uint64_t seed) {
    if (day < 0 || day >= world.n_days()) throw InputError("observe_imagery: day out of range");
    if (variable != Variable::SST && variable != Variable::CHL) {
        throw InputError("observe_imagery: variable must be SST or CHL");
    }
    const GridSpec& grid = world.grid;
    const GriddedField& truth = (variable == Variable::SST) ? world.sst[day] : world.chl[day];
    GriddedField obs = truth;
    obs.day = day;

    if (cloud_cover <= 0.0) return obs;
    if (cloud_cover >= 1.0) {
        std::fill(obs.mask.begin(), obs.mask.end(), 0);
        std::fill(obs.values.begin(), obs.values.end(), 0.0);
        return obs;
    }

    Rng rng(sub_seed(seed, "clouds" + std::to_string(day)));
    const auto noise = smooth_noise_field(grid.n_lat, grid.n_lon, 6.0, rng);
    std::vector<double> ocean_vals;
    ocean_vals.reserve(grid.n_cells());
    for (std::size_t idx = 0; idx < grid.n_cells(); ++idx) {
        if (truth.mask[idx]) ocean_vals.push_back(noise[idx]);
    }
    if (ocean_vals.empty()) return obs;
    const std::size_t k = std::min(ocean_vals.size() - 1,
                                   static_cast<std::size_t>(cloud_cover * ocean_vals.size()));
    std::nth_element(ocean_vals.begin(), ocean_vals.begin() + k, ocean_vals.end());
    const double threshold = ocean_vals[k];
    for (std::size_t idx = 0; idx < grid.n_cells(); ++idx) {
        if (obs.mask[idx] && noise[idx] <= threshold) {
            obs.mask[idx] = 0;
            obs.values[idx] = 0.0;
        }
    }
    return obs;
}

std::vector<DrifterTrack> simulate_drifters(const OceanWorld& world, int n_drifters, std::uint64_t seed) {
    if (world.n_days() < 2) throw InputError("simulate_drifters: world must span at least 2 days");
    const GridSpec& grid = world.grid;
    Rng rng(sub_seed(seed, "drifters"));

    auto velocity_at = [&](int day, double lat, double lon, double& u, double& v) {
        return bilinear(world.u[day], grid, lat, lon, u) && bilinear(world.v[day], grid, lat, lon, v);
    };

    std::vector<DrifterTrack> tracks;
    tracks.reserve(n_drifters);
    for (int d = 0; d < n_drifters; ++d) {
        DrifterTrack track;
        char name[16];
        std::snprintf(name, sizeof(name), "D%04d", d);
        track.id = name;

        // Seed at a position with interpolable currents.
        double lat = 0.0, lon = 0.0;
        bool ok = false;
        for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
            lat = rng.uniform(grid.lat_min, grid.lat_max);
            lon = rng.uniform(grid.lon_min, grid.lon_max);
            double u0, v0;
            ok = velocity_at(0, lat, lon, u0, v0);
        }
        if (!ok) {
            tracks.push_back(std::move(track));
            continue;
        }

        const double dt = 3600.0;
        bool alive = true;
        for (int day = 0; day < world.n_days() && alive; ++day) {
            double sum_lat = 0.0, sum_lon = 0.0, sum_u = 0.0, sum_v = 0.0;
            int hours = 0;
            for (int h = 0; h < 24; ++h) {
                double u, v;
                if (!velocity_at(day, lat, lon, u, v)) {
                    alive = false;
                    break;
                }
                track.hourly.push_back({day * 24 + h, lat, lon, u, v});
                sum_lat += lat;
                sum_lon += lon;
                sum_u += u;
                sum_v += v;
                ++hours;

                // RK4 step in degree space with the local metric.
                auto deriv = [&](double la, double lo, double& dla, double& dlo) {
                    double uu, vv;
                    if (!velocity_at(day, la, lo, uu, vv)) return false;
                    dla = vv / geo::kMetersPerDegree;
                    dlo = uu / (geo::kMetersPerDegree * std::cos(la * M_PI / 180.0));
                    return true;
                };
                double k1a, k1o, k2a, k2o, k3a, k3o, k4a, k4o;
                if (!deriv(lat, lon, k1a, k1o) ||
                    !deriv(lat + 0.5 * dt * k1a, lon + 0.5 * dt * k1o, k2a, k2o) ||
                    !deriv(lat + 0.5 * dt * k2a, lon + 0.5 * dt * k2o, k3a, k3o) ||
                    !deriv(lat + dt * k3a, lon + dt * k3o, k4a, k4o)) {
                    alive = false;
                    break;
                }
                lat += dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
                lon += dt / 6.0 * (k1o + 2.0 * k2o + 2.0 * k3o + k4o);
            }
            if (hours == 24) {
                track.daily.push_back({day, sum_lat / 24.0, sum_lon / 24.0, sum_u / 24.0, sum_v / 24.0});
            }
        }
        tracks.push_back(std::move(track));
    }
    return tracks;
}

void rasterize_drifters(const std::vector<DrifterTrack>& tracks, const GridSpec& grid, int day,
                        GriddedField& u_target, GriddedField& v_target) {
    u_target = GriddedField::zeros(Variable::U, day, grid.n_lat, grid.n_lon);
    v_target = GriddedField::zeros(Variable::V, day, grid.n_lat, grid.n_lon);
    std::vector<int> count(grid.n_cells(), 0);
    for (const auto& track : tracks) {
        for (const auto& s : track.daily) {
            if (s.day != day) continue;
            const int i = grid.lat_index(s.lat);
            const int j = grid.lon_index(s.lon);
            if (i < 0 || j < 0) continue;
            const std::size_t idx = static_cast<std::size_t>(i) * grid.n_lon + j;
            u_target.values[idx] += s.u;
            v_target.values[idx] += s.v;
            count[idx]++;
        }
    }
    for (std::size_t idx = 0; idx < grid.n_cells(); ++idx) {
        if (count[idx] > 0) {
            u_target.values[idx] /= count[idx];
            v_target.values[idx] /= count[idx];
            u_target.mask[idx] = 1;
            v_target.mask[idx] = 1;
        }
    }
}

void save_drifters_csv(const std::vector<DrifterTrack>& tracks, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("cannot open for writing: " + path);
    f << "id,timestamp_iso8601,lat,lon,u,v\n";
    char buf[256];
    for (const auto& track : tracks) {
        for (const auto& s : track.daily) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%.17g,%.17g,%.17g,%.17g\n", track.id.c_str(),
                          day_to_iso8601(s.day).c_str(), s.lat, s.lon, s.u, s.v);
            f << buf;
        }
    }
}

std::vector<DrifterTrack> load_drifters_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open drifter CSV: " + path);
    std::string line;
    if (!std::getline(f, line)) throw InputError("empty drifter CSV: " + path);
    std::vector<DrifterTrack> tracks;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string id, ts, fields[4];
        if (!std::getline(ss, id, ',') || !std::getline(ss, ts, ',')) {
            throw InputError("malformed drifter CSV row: " + line);
        }
        for (auto& fld : fields) {
            if (!std::getline(ss, fld, ',')) throw InputError("malformed drifter CSV row: " + line);
        }
        DrifterDailySample s;
        s.day = iso8601_to_day(ts);
        s.lat = std::stod(fields[0]);
        s.lon = std::stod(fields[1]);
        s.u = std::stod(fields[2]);
        s.v = std::stod(fields[3]);
        if (tracks.empty() || tracks.back().id != id) {
            DrifterTrack t;
            t.id = id;
            tracks.push_back(std::move(t));
        }
        tracks.back().daily.push_back(s);
    }
    return tracks;
}

Dataset world_to_dataset(const OceanWorld& world) {
    Dataset ds;
    ds.grid = world.grid;
    ds.day_start = 0;
    ds.n_days = world.n_days();
    ds.ocean = world.ocean;
    for (Variable v : {Variable::SSH, Variable::U, Variable::V, Variable::SST, Variable::CHL}) {
        ds.add_variable(v);
    }
    for (int d = 0; d < world.n_days(); ++d) {
        ds.set_field(world.ssh[d]);
        ds.set_field(world.u[d]);
        ds.set_field(world.v[d]);
        ds.set_field(world.sst[d]);
        ds.set_field(world.chl[d]);
    }
    return ds;
}

}  // namespace surfcast
