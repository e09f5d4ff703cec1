#pragma once

#include "mortab/grid.hpp"

#include <map>
#include <optional>
#include <vector>

namespace mortab {

/// Coale-Kisker closure settings. The defaults reproduce the classic 65/80/110 scheme.
struct ClosureParams {
    int pivot_age = 80;
    int base_age = 65;
    int omega = 110;
    double target_mu_omega = 1.0;

    void validate() const;
};

/// Hazards by single year of age from `age_min`; nullopt marks a missing age.
struct HazardCurve {
    int age_min = 0;
    std::vector<std::optional<double>> values;

    int age_max() const noexcept { return age_min + static_cast<int>(values.size()) - 1; }
    std::optional<double> at(int age) const;
};

/// Growth schedule of a closed curve.
///
/// For ages at or beyond the pivot, the annual log-increment of the hazard is
/// g80 + s (x - pivot). `average_growth` holds ln(mu_x / mu_base) / (x - base)
/// for every age in (base, omega], recomputed from the closed curve.
struct GrowthSchedule {
    double g80 = 0.0;
    double s = 0.0;
    int base_age = 65;
    int pivot_age = 80;
    int omega = 110;
    std::map<int, double> average_growth;

    double increment(int age) const noexcept { return g80 + s * (age - pivot_age); }
};

/// ln(mu_pivot / mu_base) / span, span = pivot - base (15 for 65/80).
double growth_rate_g80(double mu_base, double mu_pivot, int span = 15);

/// Slope that lands the recursion on `target_mu_omega` after `steps` increments
/// (steps = omega - pivot + 1, i.e. 31 for 80..110):
///   s = (ln(target / mu_before_pivot) - steps * g80) / (steps (steps - 1) / 2).
double slope_s(double mu_before_pivot, double g80, double target_mu_omega, int steps = 31);

struct ClosedCurve {
    HazardCurve curve; // ages [age_min, omega], every age from pivot on is filled
    GrowthSchedule schedule;
};

/// Replaces hazards from the pivot age up to omega by
/// mu(x) = mu(x-1) exp(g80 + s (x - pivot)). Ages below the pivot are copied as is.
ClosedCurve close_curve(const HazardCurve &curve, const ClosureParams &params);

/// Same with the growth anchors mu_base and mu_pivot supplied explicitly. The
/// recursion still starts from the curve's own hazard at pivot - 1, so the
/// tail joins the body and the endpoint lands on the target.
ClosedCurve close_curve(const HazardCurve &curve, const ClosureParams &params, double mu_base,
                        double mu_pivot);

/// Year-by-year closure of a hazard grid. The output spans ages
/// [age_min, omega] with the same years.
CellGrid close_grid(const CellGrid &hazards, const ClosureParams &params);

/// Closure of `hazards` with g80 computed from `anchors` (e.g. raw hazards).
/// Years of `hazards` beyond the anchor grid reuse its last year's anchors.
CellGrid close_grid(const CellGrid &hazards, const CellGrid &anchors, const ClosureParams &params);

/// Pulls a single year column out of a hazard grid.
HazardCurve column_curve(const CellGrid &hazards, int year);

} // namespace mortab
