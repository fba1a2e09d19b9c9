#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "surfcast/grid.hpp"
#include "test_util.hpp"

using namespace surfcast;

TEST_CASE("make_grid returns cell centers") {
    const GridSpec g = GridSpec::make(0.0, 1.0, 0.0, 1.0, 0.5);
    auto [lats, lons] = make_grid(g);
    REQUIRE(lats.size() == 2);
    CHECK(lats[0] == doctest::Approx(0.25));
    CHECK(lats[1] == doctest::Approx(0.75));
    CHECK(lons[0] == doctest::Approx(0.25));

    const GridSpec med = GridSpec::make(30.0, 46.0, -6.0, 36.0, 1.0 / 30.0);
    CHECK(med.n_lat == 480);
    CHECK(med.n_lon == 1260);
    auto centers = make_grid(med);
    CHECK(centers.first.size() == 480);
    for (std::size_t i = 1; i < centers.first.size(); ++i) {
        CHECK(centers.first[i] > centers.first[i - 1]);
    }

    CHECK_THROWS_AS(GridSpec::make(46.0, 30.0, 0.0, 1.0, 0.5), ConfigError);
    CHECK_THROWS_AS(GridSpec::make(0.0, 1.0, 0.0, 1.0, -0.5), ConfigError);
}

TEST_CASE("region registry holds the four regions with exact bounds") {
    const auto& regions = region_registry();
    REQUIRE(regions.size() == 4);

    const RegionSpec& global = region_by_name("Global");
    REQUIRE(global.lat_ranges.size() == 2);
    CHECK(global.lat_ranges[0] == std::pair<double, double>{-60.0, -20.0});
    CHECK(global.lat_ranges[1] == std::pair<double, double>{20.0, 60.0});
    CHECK(global.lon_range == std::pair<double, double>{-180.0, 180.0});

    const RegionSpec& med = region_by_name("Mediterranean");
    CHECK(med.lat_ranges == std::vector<std::pair<double, double>>{{30.0, 46.0}});
    CHECK(med.lon_range == std::pair<double, double>{-6.0, 36.0});

    const RegionSpec& gs = region_by_name("GulfStream");
    CHECK(gs.lat_ranges == std::vector<std::pair<double, double>>{{20.0, 45.0}});
    CHECK(gs.lon_range == std::pair<double, double>{-99.0, -34.0});

    const RegionSpec& ag = region_by_name("Agulhas");
    CHECK(ag.lat_ranges == std::vector<std::pair<double, double>>{{-55.0, -30.0}});
    CHECK(ag.lon_range == std::pair<double, double>{14.0, 74.0});

    CHECK(region_contains(global, -30.0, 10.0));
    CHECK_FALSE(region_contains(global, 0.0, 10.0));
    CHECK_THROWS_AS(region_by_name("Baltic"), InputError);
}

namespace {

GriddedField constant_field(Variable v, int day, const GridSpec& g, double value) {
    GriddedField f = GriddedField::zeros(v, day, g.n_lat, g.n_lon);
    std::fill(f.values.begin(), f.values.end(), value);
    std::fill(f.mask.begin(), f.mask.end(), 1);
    return f;
}

}  // namespace

TEST_CASE("climatology statistics and fallbacks") {
    const GridSpec g = GridSpec::make(30.0, 34.0, 0.0, 4.0, 1.0);

    SUBCASE("constant series clamps std to the floor") {
        std::vector<GriddedField> fields;
        for (int d = 0; d < 8; ++d) fields.push_back(constant_field(Variable::SSH, d, g, 3.0));
        std::vector<const GriddedField*> series;
        for (auto& f : fields) series.push_back(&f);
        const Climatology c = compute_climatology(series, g);
        CHECK(c.n_weeks == 53);
        double mean, std;
        c.lookup(0, 31.0, 1.0, mean, std);
        CHECK(mean == doctest::Approx(3.0));
        CHECK(std == doctest::Approx(Climatology::kStdFloor));
    }

    SUBCASE("two samples in one cell give mean 2 and std 1") {
        std::vector<GriddedField> fields = {constant_field(Variable::SSH, 0, g, 1.0),
                                            constant_field(Variable::SSH, 1, g, 3.0)};
        // Only two days, but that spans less than one period; extend with
        // masked-out fields so the series covers a week without adding data.
        for (int d = 2; d < 7; ++d) {
            fields.push_back(GriddedField::zeros(Variable::SSH, d, g.n_lat, g.n_lon));
        }
        std::vector<const GriddedField*> series;
        for (auto& f : fields) series.push_back(&f);
        const Climatology c = compute_climatology(series, g);
        double mean, std;
        c.lookup(0, 31.0, 1.0, mean, std);
        CHECK(mean == doctest::Approx(2.0));
        CHECK(std == doctest::Approx(1.0));
    }

    SUBCASE("cells without data fall back to global statistics") {
        std::vector<GriddedField> fields;
        for (int d = 0; d < 7; ++d) {
            GriddedField f = constant_field(Variable::SSH, d, g, 5.0);
            // Mask out one coarse cell entirely (cells [0..2) x [0..2)).
            for (int i = 0; i < 2; ++i) {
                for (int j = 0; j < 2; ++j) {
                    f.m(i, j) = 0;
                }
            }
            fields.push_back(std::move(f));
        }
        std::vector<const GriddedField*> series;
        for (auto& f : fields) series.push_back(&f);
        const Climatology c = compute_climatology(series, g);
        double mean, std;
        c.lookup(0, 30.5, 0.5, mean, std);  // the all-masked coarse cell
        CHECK(mean == doctest::Approx(5.0));  // global fallback
    }

    SUBCASE("permutation invariance and input validation") {
        Rng rng(3);
        std::vector<GriddedField> fields;
        for (int d = 0; d < 9; ++d) {
            GriddedField f = constant_field(Variable::SSH, d, g, 0.0);
            for (auto& v : f.values) v = rng.normal();
            fields.push_back(std::move(f));
        }
        std::vector<const GriddedField*> fwd, rev;
        for (auto& f : fields) fwd.push_back(&f);
        rev.assign(fwd.rbegin(), fwd.rend());
        const Climatology a = compute_climatology(fwd, g);
        const Climatology b = compute_climatology(rev, g);
        CHECK(testutil::bitwise_equal(a.means, b.means));
        CHECK(testutil::bitwise_equal(a.stds, b.stds));

        CHECK_THROWS_AS(compute_climatology({}, g), InputError);
        CHECK_THROWS_AS(compute_climatology({fwd[0]}, g), InputError);  // spans < 1 period
    }
}

TEST_CASE("normalize and denormalize") {
    const GridSpec g = GridSpec::make(30.0, 34.0, 0.0, 4.0, 1.0);
    std::vector<GriddedField> fields;
    Rng rng(17);
    for (int d = 0; d < 14; ++d) {
        GriddedField f = constant_field(Variable::SSH, d, g, 0.0);
        for (auto& v : f.values) v = 1.5 + 0.5 * rng.normal();
        fields.push_back(std::move(f));
    }
    std::vector<const GriddedField*> series;
    for (auto& f : fields) series.push_back(&f);
    const Climatology c = compute_climatology(series, g);

    SUBCASE("definition cases") {
        double mean, std;
        c.lookup(0, 30.5, 0.5, mean, std);
        GriddedField f = constant_field(Variable::SSH, 0, g, mean);
        const GriddedField n = normalize(f, g, c);
        CHECK(n.at(0, 0) == doctest::Approx(0.0));
        GriddedField f2 = constant_field(Variable::SSH, 0, g, mean + 2.0 * std);
        const GriddedField n2 = normalize(f2, g, c);
        CHECK(n2.at(0, 0) == doctest::Approx(2.0));
    }

    SUBCASE("round trip is an identity to 1e-6 relative") {
        const GriddedField& f = fields[3];
        const GriddedField rt = denormalize(normalize(f, g, c), g, c);
        for (std::size_t i = 0; i < f.values.size(); ++i) {
            if (!f.mask[i]) continue;
            CHECK(std::fabs(rt.values[i] - f.values[i]) <=
                  1e-6 * std::max(1.0, std::fabs(f.values[i])));
        }
        const GriddedField nr = normalize(denormalize(f, g, c), g, c);
        for (std::size_t i = 0; i < f.values.size(); ++i) {
            if (!f.mask[i]) continue;
            CHECK(std::fabs(nr.values[i] - f.values[i]) <=
                  1e-6 * std::max(1.0, std::fabs(f.values[i])));
        }
    }

    SUBCASE("variable mismatch is an input error") {
        GriddedField f = constant_field(Variable::SST, 0, g, 1.0);
        CHECK_THROWS_AS(normalize(f, g, c), InputError);
    }
}

TEST_CASE("crop_patch geometry and errors") {
    const GridSpec g = GridSpec::make(30.0, 46.0, -6.0, 36.0, 1.0 / 30.0);
    GriddedField f = GriddedField::zeros(Variable::SSH, 0, g.n_lat, g.n_lon);
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        f.values[i] = static_cast<double>(i % 1000);
        f.mask[i] = 1;
    }

    SUBCASE("full-size crop is the identity") {
        const Patch p = crop_patch(f, g, 0, 0, g.n_lat, g.n_lon);
        CHECK(p.values == f.values);
        CHECK(p.mask == f.mask);
        CHECK(p.center_lat == doctest::Approx(38.0));
        CHECK(p.center_lon == doctest::Approx(15.0));
    }

    SUBCASE("128x128 crop from the Mediterranean grid") {
        const Patch p = crop_patch(f, g, 100, 500, 128, 128);
        CHECK(p.values.size() == 128u * 128u);
        CHECK(p.center_lat == doctest::Approx(30.0 + (100 + 64) / 30.0));
        CHECK(p.center_lon == doctest::Approx(-6.0 + (500 + 64) / 30.0));
        CHECK(p.center_lat > 30.0);
        CHECK(p.center_lat < 46.0);
        CHECK(p.values[0] == f.at(100, 500));
    }

    SUBCASE("out-of-bounds crop throws") {
        CHECK_THROWS_AS(crop_patch(f, g, g.n_lat - 10, 0, 128, 128), InputError);
        CHECK_THROWS_AS(crop_patch(f, g, -1, 0, 8, 8), InputError);
    }
}

TEST_CASE("dataset save/load round trip is stable") {
    namespace fs = std::filesystem;
    const GridSpec g = GridSpec::make(30.0, 31.0, 0.0, 1.0, 0.25);
    Dataset ds;
    ds.grid = g;
    ds.day_start = 5;
    ds.n_days = 3;
    ds.ocean.assign(g.n_cells(), 1);
    ds.ocean[3] = 0;
    ds.add_variable(Variable::SSH);
    Rng rng(5);
    for (int d = 5; d < 8; ++d) {
        GriddedField f = GriddedField::zeros(Variable::SSH, d, g.n_lat, g.n_lon);
        for (std::size_t i = 0; i < f.values.size(); ++i) {
            f.mask[i] = rng.uniform() < 0.7 ? 1 : 0;
            f.values[i] = f.mask[i] ? static_cast<float>(rng.normal()) : 0.0;
        }
        ds.set_field(std::move(f));
    }

    const std::string dir = (fs::temp_directory_path() / "surfcast_ds_test").string();
    fs::remove_all(dir);
    ds.save(dir);
    const Dataset back = Dataset::load(dir);
    CHECK(back.grid.same_as(g));
    CHECK(back.day_start == 5);
    CHECK(back.n_days == 3);
    CHECK(back.ocean == ds.ocean);
    for (int d = 5; d < 8; ++d) {
        CHECK(back.field(Variable::SSH, d).values == ds.field(Variable::SSH, d).values);
        CHECK(back.field(Variable::SSH, d).mask == ds.field(Variable::SSH, d).mask);
    }

    // Windowed load: only day 6.
    const Dataset win = Dataset::load_window(dir, 6, 6);
    CHECK(win.n_days == 1);
    CHECK(win.field(Variable::SSH, 6).values == ds.field(Variable::SSH, 6).values);
    CHECK_THROWS_AS(win.field(Variable::SSH, 5), InputError);

    // Re-saving produces byte-identical files.
    const std::string dir2 = (fs::temp_directory_path() / "surfcast_ds_test2").string();
    fs::remove_all(dir2);
    back.save(dir2);
    for (const char* name : {"meta.json", "SSH.values.bin", "SSH.mask.bin", "land.bin"}) {
        std::ifstream a(fs::path(dir) / name, std::ios::binary);
        std::ifstream b(fs::path(dir2) / name, std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
    }
    fs::remove_all(dir);
    fs::remove_all(dir2);
}
