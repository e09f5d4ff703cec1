#pragma once

#include "mortab/projection.hpp"

#include <optional>

namespace mortab {

struct ValuationConfig {
    double rate = 0.0225;   // annual technical rate i
    bool immediate = false; // drop the k = 0 payment

    void validate() const;
    double discount() const noexcept { return 1.0 / (1.0 + rate); }
};

/// k_p_x along the cohort diagonal starting at (x, t):
///   prod_{j<k} (1 - q(x+j, t+j)), the factor at omega being 0.
double cohort_survival(const ProspectiveTable &table, int x, int t, int k);

/// sum_{k=0}^{omega-x} v^k k_p_x (from k = 1 when `immediate`).
double annuity(const ProspectiveTable &table, int x, int t, const ValuationConfig &config = {});

/// sum_{k=1}^{omega-x} k_p_x + 1/2.
double residual_life_expectancy(const ProspectiveTable &table, int x, int t);

/// int_0^H exp(-int_0^h mu(x+u, t+u) du - r h) dh with r = ln(1 + i).
/// H is the age at which survival is cut to zero minus x when
/// `terminal_age` is set; otherwise the integral runs until the integrand
/// drops below 1e-18 (at most 10000 years).
double continuous_annuity(const ContinuousHazard &mu, double x, double t, const ValuationConfig &config = {},
                          std::optional<double> terminal_age = std::nullopt);

/// Continuous annuity on the table's parametric hazard, cut at omega + 1.
/// Throws UnsupportedProvenanceError when the table has no closed-form hazard.
double continuous_annuity(const ProspectiveTable &table, double x, double t, const ValuationConfig &config = {});

} // namespace mortab
