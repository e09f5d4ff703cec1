#pragma once

#include "mortab/grid.hpp"

#include <Eigen/Core>

#include <optional>
#include <vector>

namespace mortab {

/// (D_obs - D_fit)^2 / D_fit; nullopt when D_fit <= 0 (the cell is excluded).
std::optional<double> chi2_cell(double observed, double fitted);

/// D* = L (1 - exp(-mu)) on the exposure's index. `hazard` must cover it.
CellGrid fitted_deaths(const CellGrid &exposure, const CellGrid &hazard);

struct AgeClass {
    int lo = 0;
    int hi = 0; // inclusive
};

/// Six five-year classes 60-64, ..., 85-89.
std::vector<AgeClass> default_age_classes();

struct DevianceReport {
    AgeYearIndex index;
    std::vector<AgeClass> classes;
    bool grouped = true;
    Eigen::MatrixXd per_cell;  // ungrouped chi2 per (age, year); NaN when excluded
    Eigen::MatrixXd per_class; // class x year; NaN when excluded
    Eigen::VectorXd per_year;  // chi_t
    int excluded_cells = 0;
};

/// Grouped mode sums observed and fitted deaths within each age class
/// before applying chi2_cell; ungrouped mode sums the cell values.
/// Only usable cells with an age inside a class enter.
DevianceReport chi2_by_year(const Dataset &dataset, const CellGrid &fitted_deaths,
                            const std::vector<AgeClass> &classes = default_age_classes(), bool grouped = true);

/// q (1 - q) / L.
double rate_variance(double q, double exposure);

struct VariancePoint {
    int age = 0;
    double exposure = 0.0;
    double variance = 0.0;
};

/// Walks a cohort of `initial_exposure` lives through the rates
/// (L_{x+1} = L_x (1 - q_x)) and reports q (1 - q) / L at each age.
std::vector<VariancePoint> variance_curve(const std::vector<double> &rates, int age_min, double initial_exposure);

struct ResidualReport {
    CellGrid residuals; // ln mu_raw - ln mu_fit, LogHazard kind
    std::vector<int> ages;
    std::vector<double> mean;
    std::vector<double> variance; // population variance per age; NaN with no cell
    std::vector<int> count;
};

/// Residuals on the raw grid's index; the model surface must cover it.
/// Cells with a zero or missing raw hazard are skipped.
ResidualReport residual_grid(const CellGrid &model_surface, const CellGrid &raw_hazard);

} // namespace mortab
