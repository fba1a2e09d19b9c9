#pragma once

#include <optional>
#include <string>
#include <vector>

#include "surfcast/forecast.hpp"
#include "surfcast/ocean.hpp"

namespace surfcast {

// Evaluation thresholds.
inline constexpr double kDrifterSpeedFloor = 0.25;    // m/s, evaluation-set filter
inline constexpr double kAngleThresholdDeg = 45.0;    // correct-angle bound, inclusive
inline constexpr double kMagnitudeThreshold = 0.025;  // m/s, correct-magnitude bound, inclusive

struct MatchedPair {
    double pred_u = 0.0, pred_v = 0.0;
    double obs_u = 0.0, obs_v = 0.0;
    double lat = 0.0, lon = 0.0;
    int valid_day = 0;
    int lead = 0;
};

// Angle between the two vectors in [0, 180] degrees; throws on a zero vector.
double angle_error(double pred_u, double pred_v, double obs_u, double obs_v);
double magnitude_error(double pred_u, double pred_v, double obs_u, double obs_v);
double vector_error(double pred_u, double pred_v, double obs_u, double obs_v);

// Threshold predicates shared by the report and its test oracle; inclusive
// bounds with a guard far below metric precision so exact-boundary pairs
// classify as correct under floating point.
bool angle_correct(double theta_deg);
bool magnitude_correct(double delta_m);

struct MatchOptions {
    bool nearest_cell = false;  // default bilinear interpolation
};

std::vector<MatchedPair> match_drifters(const ForecastProduct& product,
                                        const std::vector<DrifterTrack>& tracks,
                                        const MatchOptions& opts = {});

struct LeadMetrics {
    int lead = 0;
    long n_pairs = 0;
    double pct_correct_angle = 0.0;     // [0, 100]
    double pct_correct_magnitude = 0.0;
    double meva = 0.0;                  // m/s
};

struct MetricsReport {
    std::string label;
    std::string region;
    std::string checkpoint_hash;
    std::vector<LeadMetrics> leads;  // one entry per lead 1..t_out

    const LeadMetrics* lead(int l) const;
};

MetricsReport evaluate(const std::vector<MatchedPair>& pairs, int t_out);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& s);
// Paper-style comparison table (MEVA printed in cm/s).
std::string render_markdown_table(const std::vector<MetricsReport>& reports);

// Ship-route projection: signed along-heading current component.
struct RoutePoint {
    int day = 0;
    double lat = 0.0, lon = 0.0;
    double heading_deg = 0.0;  // clockwise from north
};

std::vector<RoutePoint> load_route_csv(const std::string& path);
// One entry per route point; nullopt when outside the grid, the forecast
// horizon, or unmasked cells.
std::vector<std::optional<double>> route_projection(const std::vector<RoutePoint>& route,
                                                    const ForecastProduct& product);

}  // namespace surfcast
