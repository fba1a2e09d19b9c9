#include "surfcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

using nlohmann::json;

namespace surfcast {

double angle_error(double pred_u, double pred_v, double obs_u, double obs_v) {
    const double np = std::hypot(pred_u, pred_v);
    const double no = std::hypot(obs_u, obs_v);
    if (np == 0.0 || no == 0.0) throw InputError("angle_error: undefined for a zero vector");
    double c = (pred_u * obs_u + pred_v * obs_v) / (np * no);
    c = std::clamp(c, -1.0, 1.0);
    return std::acos(c) * 180.0 / M_PI;
}

double magnitude_error(double pred_u, double pred_v, double obs_u, double obs_v) {
    return std::fabs(std::hypot(pred_u, pred_v) - std::hypot(obs_u, obs_v));
}

double vector_error(double pred_u, double pred_v, double obs_u, double obs_v) {
    return std::hypot(pred_u - obs_u, pred_v - obs_v);
}

bool angle_correct(double theta_deg) { return theta_deg <= kAngleThresholdDeg + 1e-9; }
bool magnitude_correct(double delta_m) { return delta_m <= kMagnitudeThreshold + 1e-12; }

namespace {

bool bilinear_masked(const GriddedField& f, const GridSpec& grid, double lat, double lon, double& out) {
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

bool nearest_masked(const GriddedField& f, const GridSpec& grid, double lat, double lon, double& out) {
    const int i = grid.lat_index(lat);
    const int j = grid.lon_index(lon);
    if (i < 0 || j < 0 || !f.m(i, j)) return false;
    out = f.at(i, j);
    return true;
}

}  // namespace

std::vector<MatchedPair> match_drifters(const ForecastProduct& product,
                                        const std::vector<DrifterTrack>& tracks,
                                        const MatchOptions& opts) {
    std::vector<MatchedPair> pairs;
    for (const auto& track : tracks) {
        for (const auto& s : track.daily) {
            const int lead = s.day - product.issue_day;
            if (lead < 1 || lead > product.t_out) continue;
            if (std::hypot(s.u, s.v) <= kDrifterSpeedFloor) continue;
            const GriddedField& fu = product.lead_field(Variable::U, lead);
            const GriddedField& fv = product.lead_field(Variable::V, lead);
            double pu, v;
            const bool ok = opts.nearest_cell
                                ? (nearest_masked(fu, product.grid, s.lat, s.lon, pu) &&
                                   nearest_masked(fv, product.grid, s.lat, s.lon, v))
                                : (bilinear_masked(fu, product.grid, s.lat, s.lon, pu) &&
                                   bilinear_masked(fv, product.grid, s.lat, s.lon, v));
            if (!ok) continue;
            MatchedPair p;
            p.pred_u = pu;
            p.pred_v = v;
            p.obs_u = s.u;
            p.obs_v = s.v;
            p.lat = s.lat;
            p.lon = s.lon;
            p.valid_day = s.day;
            p.lead = lead;
            pairs.push_back(p);
        }
    }
    return pairs;
}

const LeadMetrics* MetricsReport::lead(int l) const {
    for (const auto& m : leads) {
        if (m.lead == l) return &m;
    }
    return nullptr;
}

MetricsReport evaluate(const std::vector<MatchedPair>& pairs, int t_out) {
    MetricsReport report;
    std::vector<long> n(t_out + 1, 0), n_angle(t_out + 1, 0), n_mag(t_out + 1, 0);
    std::vector<double> sum_ev(t_out + 1, 0.0);
    for (const auto& p : pairs) {
        if (p.lead < 1 || p.lead > t_out) continue;
        n[p.lead]++;
        if (angle_correct(angle_error(p.pred_u, p.pred_v, p.obs_u, p.obs_v))) n_angle[p.lead]++;
        if (magnitude_correct(magnitude_error(p.pred_u, p.pred_v, p.obs_u, p.obs_v))) n_mag[p.lead]++;
        sum_ev[p.lead] += vector_error(p.pred_u, p.pred_v, p.obs_u, p.obs_v);
    }
    for (int l = 1; l <= t_out; ++l) {
        LeadMetrics m;
        m.lead = l;
        m.n_pairs = n[l];
        if (n[l] > 0) {
            m.pct_correct_angle = 100.0 * n_angle[l] / n[l];
            m.pct_correct_magnitude = 100.0 * n_mag[l] / n[l];
            m.meva = sum_ev[l] / n[l];
        }
        report.leads.push_back(m);
    }
    return report;
}

std::string report_to_json(const MetricsReport& report) {
    json j;
    j["label"] = report.label;
    j["region"] = report.region;
    j["checkpoint_hash"] = report.checkpoint_hash;
    json leads = json::array();
    for (const auto& m : report.leads) {
        json lm;
        lm["lead"] = m.lead;
        lm["n_pairs"] = m.n_pairs;
        if (m.n_pairs > 0) {
            lm["pct_correct_angle"] = m.pct_correct_angle;
            lm["pct_correct_magnitude"] = m.pct_correct_magnitude;
            lm["meva"] = m.meva;
        } else {
            lm["pct_correct_angle"] = nullptr;
            lm["pct_correct_magnitude"] = nullptr;
            lm["meva"] = nullptr;
        }
        leads.push_back(lm);
    }
    j["leads"] = leads;
    return j.dump(2);
}

MetricsReport report_from_json(const std::string& s) {
    json j = json::parse(s);
    MetricsReport report;
    report.label = j.value("label", "");
    report.region = j.value("region", "");
    report.checkpoint_hash = j.value("checkpoint_hash", "");
    for (const auto& lm : j.at("leads")) {
        LeadMetrics m;
        m.lead = lm.at("lead").get<int>();
        m.n_pairs = lm.at("n_pairs").get<long>();
        if (m.n_pairs > 0) {
            m.pct_correct_angle = lm.at("pct_correct_angle").get<double>();
            m.pct_correct_magnitude = lm.at("pct_correct_magnitude").get<double>();
            m.meva = lm.at("meva").get<double>();
        }
        report.leads.push_back(m);
    }
    return report;
}

std::string render_markdown_table(const std::vector<MetricsReport>& reports) {
    int t_out = 1;
    for (const auto& r : reports) {
        for (const auto& m : r.leads) t_out = std::max(t_out, m.lead);
    }
    std::ostringstream out;
    out << "| model | %angle T+1 | %angle T+" << t_out << " | %magnitude T+1 | %magnitude T+" << t_out
        << " | MEVA T+1 (cm/s) | MEVA T+" << t_out << " (cm/s) |\n";
    out << "|---|---|---|---|---|---|---|\n";
    char buf[64];
    for (const auto& r : reports) {
        const LeadMetrics* a = r.lead(1);
        const LeadMetrics* b = r.lead(t_out);
        auto fmt = [&](const LeadMetrics* m, int what) -> std::string {
            if (!m || m->n_pairs == 0) return "-";
            const double v = (what == 0) ? m->pct_correct_angle
                                         : (what == 1 ? m->pct_correct_magnitude : m->meva * 100.0);
            std::snprintf(buf, sizeof(buf), "%.1f", v);
            return buf;
        };
        out << "| " << r.label << " | " << fmt(a, 0) << " | " << fmt(b, 0) << " | " << fmt(a, 1) << " | "
            << fmt(b, 1) << " | " << fmt(a, 2) << " | " << fmt(b, 2) << " |\n";
    }
    return out.str();
}

std::vector<RoutePoint> load_route_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("cannot open route CSV: " + path);
    std::string line;
    if (!std::getline(f, line)) throw InputError("empty route CSV: " + path);
    std::vector<RoutePoint> route;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string ts, lat, lon, heading;
        if (!std::getline(ss, ts, ',') || !std::getline(ss, lat, ',') || !std::getline(ss, lon, ',') ||
            !std::getline(ss, heading, ',')) {
            throw InputError("malformed route CSV row: " + line);
        }
        RoutePoint p;
        p.day = iso8601_to_day(ts);
        p.lat = std::stod(lat);
        p.lon = std::stod(lon);
        p.heading_deg = std::stod(heading);
        route.push_back(p);
    }
    return route;
}

std::vector<std::optional<double>> route_projection(const std::vector<RoutePoint>& route,
                                                    const ForecastProduct& product) {
    std::vector<std::optional<double>> out;
    out.reserve(route.size());
    for (const auto& p : route) {
        const int lead = p.day - product.issue_day;
        if (lead < 1 || lead > product.t_out) {
            out.push_back(std::nullopt);
            continue;
        }
        double u, v;
        if (!bilinear_masked(product.lead_field(Variable::U, lead), product.grid, p.lat, p.lon, u) ||
            !bilinear_masked(product.lead_field(Variable::V, lead), product.grid, p.lat, p.lon, v)) {
            out.push_back(std::nullopt);
            continue;
        }
        const double h = p.heading_deg * M_PI / 180.0;
        out.push_back(u * std::sin(h) + v * std::cos(h));
    }
    return out;
}

}  // namespace surfcast
