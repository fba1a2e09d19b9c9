#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "surfcast/ocean.hpp"
#include "test_util.hpp"

using namespace surfcast;

namespace {

WorldConfig small_world_config() {
    WorldConfig w;
    w.grid = GridSpec::make(33.0, 37.0, 0.0, 5.0, 1.0 / 15.0);
    w.n_days = 4;
    w.n_eddies = 3;
    w.eddy_amplitude_range = {0.1, 0.2};
    w.eddy_radius_range = {40.0, 70.0};
    w.eddy_drift_speed_range = {2.0, 5.0};
    w.background_ssh_gradient = -0.003;
    w.land_fraction = 0.05;
    w.seed = 99;
    return w;
}

// A hand-built world with prescribed uniform currents everywhere.
OceanWorld uniform_current_world(const GridSpec& g, int n_days, double u, double v) {
    OceanWorld w;
    w.grid = g;
    w.ocean.assign(g.n_cells(), 1);
    for (int d = 0; d < n_days; ++d) {
        GriddedField ssh = GriddedField::zeros(Variable::SSH, d, g.n_lat, g.n_lon);
        GriddedField uf = GriddedField::zeros(Variable::U, d, g.n_lat, g.n_lon);
        GriddedField vf = GriddedField::zeros(Variable::V, d, g.n_lat, g.n_lon);
        std::fill(ssh.mask.begin(), ssh.mask.end(), 1);
        std::fill(uf.mask.begin(), uf.mask.end(), 1);
        std::fill(vf.mask.begin(), vf.mask.end(), 1);
        std::fill(uf.values.begin(), uf.values.end(), u);
        std::fill(vf.values.begin(), vf.values.end(), v);
        w.ssh.push_back(std::move(ssh));
        w.u.push_back(std::move(uf));
        w.v.push_back(std::move(vf));
        w.sst.push_back(GriddedField::zeros(Variable::SST, d, g.n_lat, g.n_lon));
        w.chl.push_back(GriddedField::zeros(Variable::CHL, d, g.n_lat, g.n_lon));
    }
    return w;
}

}  // namespace

TEST_CASE("simulate_world basics") {
    SUBCASE("empty ocean is flat and still") {
        WorldConfig w = small_world_config();
        w.n_eddies = 0;
        w.background_ssh_gradient = 0.0;
        w.land_fraction = 0.0;
        const OceanWorld world = simulate_world(w);
        for (double v : world.ssh[0].values) CHECK(v == 0.0);
        for (double v : world.u[0].values) CHECK(v == 0.0);
        for (double v : world.v[0].values) CHECK(v == 0.0);
    }

    SUBCASE("stationary eddies give a time-invariant world") {
        WorldConfig w = small_world_config();
        w.eddy_drift_speed_range = {0.0, 0.0};
        w.land_fraction = 0.0;
        const OceanWorld world = simulate_world(w);
        CHECK(testutil::bitwise_equal(world.ssh[0].values, world.ssh[3].values));
        CHECK(testutil::bitwise_equal(world.u[0].values, world.u[3].values));
        CHECK(testutil::bitwise_equal(world.v[0].values, world.v[3].values));
    }

    SUBCASE("same seed gives bitwise-identical worlds") {
        const WorldConfig w = small_world_config();
        const OceanWorld a = simulate_world(w);
        const OceanWorld b = simulate_world(w);
        for (int d = 0; d < w.n_days; ++d) {
            CHECK(testutil::bitwise_equal(a.ssh[d].values, b.ssh[d].values));
            CHECK(testutil::bitwise_equal(a.u[d].values, b.u[d].values));
            CHECK(testutil::bitwise_equal(a.sst[d].values, b.sst[d].values));
            CHECK(testutil::bitwise_equal(a.chl[d].values, b.chl[d].values));
        }
        CHECK(a.ocean == b.ocean);
    }

    SUBCASE("tropical grids are rejected") {
        WorldConfig w = small_world_config();
        w.grid = GridSpec::make(10.0, 30.0, 0.0, 5.0, 1.0 / 15.0);
        CHECK_THROWS_AS(simulate_world(w), ConfigError);
    }

    SUBCASE("truth currents equal the geostrophic balance of truth SSH") {
        const WorldConfig w = small_world_config();
        const OceanWorld world = simulate_world(w);
        auto [u, v] = geostrophic_currents(world.ssh[2], w.grid, world.geo);
        CHECK(testutil::bitwise_equal(u.values, world.u[2].values));
        CHECK(testutil::bitwise_equal(v.values, world.v[2].values));
        CHECK(u.mask == world.u[2].mask);
    }
}

TEST_CASE("geostrophic_currents against hand-evaluated balance") {
    const GridSpec g = GridSpec::make(34.0, 36.0, 10.0, 12.0, 1.0 / 30.0);
    GeophysParams geo;

    SUBCASE("flat SSH gives zero currents") {
        GriddedField ssh = GriddedField::zeros(Variable::SSH, 0, g.n_lat, g.n_lon);
        std::fill(ssh.mask.begin(), ssh.mask.end(), 1);
        std::fill(ssh.values.begin(), ssh.values.end(), 0.7);
        auto [u, v] = geostrophic_currents(ssh, g, geo);
        for (std::size_t i = 0; i < u.values.size(); ++i) {
            CHECK(u.values[i] == doctest::Approx(0.0).epsilon(1e-12));
            CHECK(v.values[i] == doctest::Approx(0.0).epsilon(1e-12));
            CHECK(u.mask[i] == 1);
        }
    }

    SUBCASE("meridional SSH slope gives the zonal jet u = -(g/f) a") {
        // ssh = a * (northward distance in meters), a = 1e-6
        const double a = 1e-6;
        GriddedField ssh = GriddedField::zeros(Variable::SSH, 0, g.n_lat, g.n_lon);
        for (int i = 0; i < g.n_lat; ++i) {
            for (int j = 0; j < g.n_lon; ++j) {
                ssh.at(i, j) = a * (g.lat_center(i) - 34.0) * surfcast::geo::kMetersPerDegree;
                ssh.m(i, j) = 1;
            }
        }
        auto [u, v] = geostrophic_currents(ssh, g, geo);
        // Mid-row sits almost exactly at 35 N.
        const int i35 = g.lat_index(35.0);
        const double f = geo.coriolis(g.lat_center(i35));
        const double expected = -(geo.g / f) * a;
        CHECK(expected == doctest::Approx(-0.1173).epsilon(2e-3));  // hand value at 35 N
        CHECK(u.at(i35, 10) == doctest::Approx(expected).epsilon(1e-9));
        CHECK(v.at(i35, 10) == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("an SSH high spins anticyclonically") {
        GriddedField ssh = GriddedField::zeros(Variable::SSH, 0, g.n_lat, g.n_lon);
        const double clat = 35.0, clon = 11.0, radius_m = 40000.0;
        for (int i = 0; i < g.n_lat; ++i) {
            for (int j = 0; j < g.n_lon; ++j) {
                const double dy = (g.lat_center(i) - clat) * surfcast::geo::kMetersPerDegree;
                const double dx = (g.lon_center(j) - clon) * surfcast::geo::kMetersPerDegree *
                                  std::cos(clat * M_PI / 180.0);
                ssh.at(i, j) = 0.2 * std::exp(-(dx * dx + dy * dy) / (2.0 * radius_m * radius_m));
                ssh.m(i, j) = 1;
            }
        }
        auto [u, v] = geostrophic_currents(ssh, g, geo);
        const int ic = g.lat_index(clat);
        const int je = g.lon_index(clon) + 10;  // due east of the high
        CHECK(v.at(ic, je) < 0.0);
        const int in = g.lat_index(clat) + 10;  // due north
        CHECK(u.at(in, g.lon_index(clon)) > 0.0);
    }

    SUBCASE("flow runs along SSH contours for an analytic eddy") {
        // Independent route: analytic gradient of the Gaussian vs the
        // discrete velocities.
        GriddedField ssh = GriddedField::zeros(Variable::SSH, 0, g.n_lat, g.n_lon);
        const double clat = 35.0, clon = 11.0, radius_m = 50000.0, amp = 0.15;
        auto eta = [&](double lat, double lon) {
            const double dy = (lat - clat) * surfcast::geo::kMetersPerDegree;
            const double dx = (lon - clon) * surfcast::geo::kMetersPerDegree *
                              std::cos(clat * M_PI / 180.0);
            return amp * std::exp(-(dx * dx + dy * dy) / (2.0 * radius_m * radius_m));
        };
        for (int i = 0; i < g.n_lat; ++i) {
            for (int j = 0; j < g.n_lon; ++j) {
                ssh.at(i, j) = eta(g.lat_center(i), g.lon_center(j));
                ssh.m(i, j) = 1;
            }
        }
        auto [u, v] = geostrophic_currents(ssh, g, geo);
        double dot2 = 0.0, ref2 = 0.0;
        for (int i = 1; i < g.n_lat - 1; ++i) {
            const double lat = g.lat_center(i);
            for (int j = 1; j < g.n_lon - 1; ++j) {
                const double lon = g.lon_center(j);
                const double dy = (lat - clat) * surfcast::geo::kMetersPerDegree;
                const double dx = (lon - clon) * surfcast::geo::kMetersPerDegree *
                                  std::cos(clat * M_PI / 180.0);
                const double e = eta(lat, lon);
                const double ex = -dx / (radius_m * radius_m) * e *
                                  (std::cos(clat * M_PI / 180.0) / std::cos(lat * M_PI / 180.0));
                const double ey = -dy / (radius_m * radius_m) * e;
                const double uu = u.at(i, j), vv = v.at(i, j);
                const double dot = uu * ex + vv * ey;
                dot2 += dot * dot;
                const double gm = std::hypot(ex, ey) * std::hypot(uu, vv);
                ref2 += gm * gm;
            }
        }
        CHECK(std::sqrt(dot2) < 0.01 * std::sqrt(ref2));
    }
}

TEST_CASE("observe_nadir") {
    const WorldConfig w = small_world_config();
    const OceanWorld world = simulate_world(w);

    SUBCASE("zero tracks observe nothing") {
        const GriddedField obs = observe_nadir(world, 0, 0, 7.0, 0.0, 1);
        for (auto m : obs.mask) CHECK(m == 0);
    }

    SUBCASE("noise-free tracks sample the truth exactly") {
        const GriddedField obs = observe_nadir(world, 1, 5, 7.0, 0.0, 2);
        std::size_t n = 0;
        for (std::size_t i = 0; i < obs.mask.size(); ++i) {
            if (!obs.mask[i]) continue;
            CHECK(obs.values[i] == world.ssh[1].values[i]);
            ++n;
        }
        CHECK(n > 0);
    }

    SUBCASE("coverage grows with track count on average") {
        double cov2 = 0.0, cov8 = 0.0;
        for (std::uint64_t s = 0; s < 100; ++s) {
            for (int tracks : {2, 8}) {
                const GriddedField obs = observe_nadir(world, 0, tracks, 7.0, 0.0, 1000 + s);
                std::size_t n = 0;
                for (auto m : obs.mask) n += m;
                (tracks == 2 ? cov2 : cov8) += static_cast<double>(n);
            }
        }
        CHECK(cov8 > cov2);
    }
}

TEST_CASE("observe_swot geometry and values") {
    WorldConfig w = small_world_config();
    w.grid = GridSpec::make(33.0, 38.0, 0.0, 6.0, 1.0 / 15.0);
    w.land_fraction = 0.0;
    w.n_days = 22;
    const OceanWorld world = simulate_world(w);
    SwotConfig cfg;
    cfg.bias_mean = 0.0;
    cfg.bias_std = 0.0;
    cfg.noise_std = 0.0;

    SUBCASE("mask matches the band geometry, gap cells excluded") {
        const GriddedField obs = observe_swot(world, 0, cfg, 7);
        // Re-derive the across-swath coordinate.
        const double a = cfg.inclination_deg * M_PI / 180.0;
        const double px = std::cos(a), py = -std::sin(a);
        const double lat_c = 0.5 * (w.grid.lat_min + w.grid.lat_max);
        const double lon_c = 0.5 * (w.grid.lon_min + w.grid.lon_max);
        const double mpd_km = surfcast::geo::kMetersPerDegree / 1000.0;
        auto perp = [&](double lat, double lon) {
            const double x = (lon - lon_c) * mpd_km * std::cos(lat * M_PI / 180.0);
            const double y = (lat - lat_c) * mpd_km;
            return x * px + y * py;
        };
        double qmin = 1e300, qmax = -1e300;
        for (double lat : {w.grid.lat_min, w.grid.lat_max}) {
            for (double lon : {w.grid.lon_min, w.grid.lon_max}) {
                qmin = std::min(qmin, perp(lat, lon));
                qmax = std::max(qmax, perp(lat, lon));
            }
        }
        const double offset = qmin + 0.5 * (qmax - qmin) / cfg.revisit_days;
        std::size_t n_mask = 0, n_gap = 0;
        for (int i = 0; i < w.grid.n_lat; ++i) {
            for (int j = 0; j < w.grid.n_lon; ++j) {
                const double dq = std::fabs(perp(w.grid.lat_center(i), w.grid.lon_center(j)) - offset);
                const bool in_band = dq > 0.5 * cfg.gap_width_km &&
                                     dq <= 0.5 * cfg.gap_width_km + cfg.swath_half_width_km;
                CHECK(static_cast<bool>(obs.m(i, j)) == in_band);
                n_mask += obs.m(i, j);
                n_gap += (dq <= 0.5 * cfg.gap_width_km) ? 1 : 0;
            }
        }
        CHECK(n_mask > 0);
        CHECK(n_gap > 0);  // the gap actually intersects the domain
    }

    SUBCASE("bias- and noise-free swaths equal the truth") {
        const GriddedField obs = observe_swot(world, 3, cfg, 7);
        for (std::size_t i = 0; i < obs.mask.size(); ++i) {
            if (obs.mask[i]) CHECK(obs.values[i] == world.ssh[3].values[i]);
        }
    }

    SUBCASE("21 consecutive days cover the whole swept strip") {
        std::vector<std::uint8_t> covered(w.grid.n_cells(), 0);
        for (int d = 0; d < cfg.revisit_days; ++d) {
            const GriddedField obs = observe_swot(world, d, cfg, 7);
            for (std::size_t i = 0; i < covered.size(); ++i) covered[i] |= obs.mask[i];
        }
        // Domain chosen so that the pass spacing is below one band width:
        // the union covers every ocean cell.
        for (std::size_t i = 0; i < covered.size(); ++i) {
            if (world.ocean[i]) CHECK(covered[i] == 1);
        }
    }
}

TEST_CASE("swath_geostrophy masks incomplete stencils") {
    const GridSpec g = GridSpec::make(34.0, 36.0, 10.0, 12.0, 1.0 / 15.0);
    GeophysParams geo;

    SUBCASE("fully masked input gives fully masked output") {
        GriddedField swot = GriddedField::zeros(Variable::SSH, 0, g.n_lat, g.n_lon);
        auto [u, v] = swath_geostrophy(swot, g, geo);
        for (auto m : u.mask) CHECK(m == 0);
    }

    SUBCASE("flat interior band: zero currents, gap-adjacent cells masked") {
        GriddedField swot = GriddedField::zeros(Variable::SSH, 0, g.n_lat, g.n_lon);
        // Vertical band over columns [5, 15]; column 16 starts a gap.
        for (int i = 0; i < g.n_lat; ++i) {
            for (int j = 5; j <= 15; ++j) {
                swot.at(i, j) = 0.42;
                swot.m(i, j) = 1;
            }
        }
        auto [u, v] = swath_geostrophy(swot, g, geo);
        const int mid = g.n_lat / 2;
        CHECK(u.m(mid, 10) == 1);
        CHECK(u.at(mid, 10) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(v.at(mid, 10) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(u.m(mid, 15) == 0);  // neighbor 16 unobserved
        CHECK(u.m(mid, 5) == 0);   // neighbor 4 unobserved
        CHECK(u.m(0, 10) == 0);    // domain edge: no one-sided fallback
    }
}

TEST_CASE("observe_imagery cloud masking") {
    WorldConfig w = small_world_config();
    const OceanWorld world = simulate_world(w);
    std::size_t n_ocean = 0;
    for (auto o : world.ocean) n_ocean += o;

    SUBCASE("cloud-free and fully-clouded extremes") {
        const GriddedField clear = observe_imagery(world, 0, Variable::SST, 0.0, 1);
        std::size_t n = 0;
        for (auto m : clear.mask) n += m;
        CHECK(n == n_ocean);
        const GriddedField opaque = observe_imagery(world, 0, Variable::CHL, 1.0, 1);
        for (auto m : opaque.mask) CHECK(m == 0);
    }

    SUBCASE("requested cloud fraction is realized within 5 points") {
        const double requested = 0.35;
        for (std::uint64_t s = 0; s < 100; ++s) {
            const GriddedField obs = observe_imagery(world, 1, Variable::SST, requested, 100 + s);
            std::size_t clear = 0;
            for (auto m : obs.mask) clear += m;
            const double realized_cloud = 1.0 - static_cast<double>(clear) / n_ocean;
            CHECK(std::fabs(realized_cloud - requested) < 0.05);
        }
    }

    SUBCASE("CHL values carry the log scale of the truth tracer") {
        const GriddedField obs = observe_imagery(world, 2, Variable::CHL, 0.2, 5);
        for (std::size_t i = 0; i < obs.mask.size(); ++i) {
            if (obs.mask[i]) CHECK(obs.values[i] == world.chl[2].values[i]);
        }
    }
}

TEST_CASE("simulate_drifters") {
    const GridSpec g = GridSpec::make(34.0, 36.0, 10.0, 13.0, 1.0 / 15.0);

    SUBCASE("zero currents keep drifters still") {
        const OceanWorld world = uniform_current_world(g, 3, 0.0, 0.0);
        const auto tracks = simulate_drifters(world, 5, 42);
        REQUIRE(tracks.size() == 5);
        for (const auto& t : tracks) {
            REQUIRE(t.daily.size() == 3);
            for (const auto& d : t.daily) {
                CHECK(d.u == 0.0);
                CHECK(d.v == 0.0);
                CHECK(d.lat == doctest::Approx(t.daily[0].lat));
            }
        }
    }

    SUBCASE("uniform current advects at the analytic rate") {
        const OceanWorld world = uniform_current_world(g, 2, 0.1, 0.0);
        const auto tracks = simulate_drifters(world, 8, 7);
        int checked = 0;
        for (const auto& t : tracks) {
            if (t.hourly.size() < 25) continue;
            const auto& a = t.hourly[0];
            const auto& b = t.hourly[24];
            const double dx_m = (b.lon - a.lon) * surfcast::geo::kMetersPerDegree *
                                std::cos(a.lat * M_PI / 180.0);
            CHECK(dx_m == doctest::Approx(0.1 * 86400.0).epsilon(1e-3));
            CHECK(b.lat == doctest::Approx(a.lat).epsilon(1e-12));
            ++checked;
        }
        CHECK(checked > 0);
    }

    SUBCASE("same seed reproduces identical tracks") {
        WorldConfig w = small_world_config();
        const OceanWorld world = simulate_world(w);
        const auto a = simulate_drifters(world, 6, 77);
        const auto b = simulate_drifters(world, 6, 77);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].hourly.size() == b[i].hourly.size());
            for (std::size_t k = 0; k < a[i].hourly.size(); ++k) {
                CHECK(a[i].hourly[k].lat == b[i].hourly[k].lat);
                CHECK(a[i].hourly[k].u == b[i].hourly[k].u);
            }
        }
    }

    SUBCASE("daily samples are the arithmetic mean of the 24 hourly samples") {
        WorldConfig w = small_world_config();
        const OceanWorld world = simulate_world(w);
        const auto tracks = simulate_drifters(world, 4, 13);
        for (const auto& t : tracks) {
            std::size_t h = 0;
            for (const auto& d : t.daily) {
                double su = 0.0, sv = 0.0, slat = 0.0, slon = 0.0;
                for (int k = 0; k < 24; ++k) {
                    su += t.hourly[h + k].u;
                    sv += t.hourly[h + k].v;
                    slat += t.hourly[h + k].lat;
                    slon += t.hourly[h + k].lon;
                }
                CHECK(d.u == su / 24.0);
                CHECK(d.v == sv / 24.0);
                CHECK(d.lat == slat / 24.0);
                CHECK(d.lon == slon / 24.0);
                h += 24;
            }
        }
    }
}

TEST_CASE("rasterize_drifters") {
    const GridSpec g = GridSpec::make(34.0, 36.0, 10.0, 12.0, 0.5);

    SUBCASE("no drifters leaves everything unmasked") {
        GriddedField u, v;
        rasterize_drifters({}, g, 0, u, v);
        for (auto m : u.mask) CHECK(m == 0);
    }

    SUBCASE("single drifter claims exactly its cell") {
        DrifterTrack t;
        t.id = "T1";
        t.daily.push_back({0, g.lat_center(1), g.lon_center(2), 0.3, -0.2});
        GriddedField u, v;
        rasterize_drifters({t}, g, 0, u, v);
        CHECK(u.at(1, 2) == doctest::Approx(0.3));
        CHECK(v.at(1, 2) == doctest::Approx(-0.2));
        std::size_t n = 0;
        for (auto m : u.mask) n += m;
        CHECK(n == 1);
    }

    SUBCASE("collisions average") {
        DrifterTrack a, b;
        a.id = "A";
        b.id = "B";
        a.daily.push_back({0, g.lat_center(1) + 0.01, g.lon_center(2), 0.2, 0.0});
        b.daily.push_back({0, g.lat_center(1) - 0.01, g.lon_center(2), 0.4, 0.0});
        GriddedField u, v;
        rasterize_drifters({a, b}, g, 0, u, v);
        CHECK(u.at(1, 2) == doctest::Approx(0.3));
    }
}

TEST_CASE("drifter CSV round trip") {
    namespace fs = std::filesystem;
    WorldConfig w = small_world_config();
    const OceanWorld world = simulate_world(w);
    const auto tracks = simulate_drifters(world, 5, 3);
    const std::string path = (fs::temp_directory_path() / "surfcast_drifters.csv").string();
    save_drifters_csv(tracks, path);
    const auto back = load_drifters_csv(path);

    std::size_t n_rows = 0;
    for (const auto& t : tracks) n_rows += t.daily.size();
    std::size_t n_back = 0;
    for (const auto& t : back) n_back += t.daily.size();
    CHECK(n_rows == n_back);
    for (std::size_t i = 0; i < back.size(); ++i) {
        for (std::size_t k = 0; k < back[i].daily.size(); ++k) {
            CHECK(back[i].daily[k].day == tracks[i].daily[k].day);
            CHECK(back[i].daily[k].lat == tracks[i].daily[k].lat);
            CHECK(back[i].daily[k].u == tracks[i].daily[k].u);
            CHECK(back[i].daily[k].v == tracks[i].daily[k].v);
        }
    }
    fs::remove(path);
}

TEST_CASE("zero-noise SWOT and nadir agree at crossover cells") {
    WorldConfig w = small_world_config();
    w.n_days = 6;
    const OceanWorld world = simulate_world(w);
    SwotConfig cfg;
    cfg.bias_mean = 0.0;
    cfg.bias_std = 0.0;
    cfg.noise_std = 0.0;
    for (int d = 0; d < 6; ++d) {
        const GriddedField swot = observe_swot(world, d, cfg, 11);
        const GriddedField nadir = observe_nadir(world, d, 6, 7.0, 0.0, 12 + d);
        for (std::size_t i = 0; i < swot.mask.size(); ++i) {
            if (swot.mask[i] && nadir.mask[i]) {
                CHECK(swot.values[i] == nadir.values[i]);
            }
        }
    }
}
