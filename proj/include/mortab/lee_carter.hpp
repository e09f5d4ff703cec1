#pragma once

#include "mortab/grid.hpp"

#include <Eigen/Core>

namespace mortab {

/// ln mu(x,t) = alpha_x + beta_x kappa_t, with sum(beta) = 1 and sum(kappa) = 0
/// once normalized. `age_min`/`year_min` anchor the vectors on the Lexis grid;
/// kappa may run past the fitted years once projected.
struct LeeCarterParams {
    int age_min = 0;
    int year_min = 0;
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;
    Eigen::VectorXd kappa;
    double sigma2 = 0.0;

    int n_ages() const noexcept { return static_cast<int>(alpha.size()); }
    int n_years() const noexcept { return static_cast<int>(kappa.size()); }
    int age_max() const noexcept { return age_min + n_ages() - 1; }
    int year_max() const noexcept { return year_min + n_years() - 1; }
    AgeYearIndex index() const { return {age_min, age_max(), year_min, year_max()}; }

    double log_hazard(int age, int year) const;
};

/// Rescales beta to sum 1 and centres kappa; alpha absorbs the shift so the
/// fitted surface alpha + beta kappa is unchanged.
LeeCarterParams normalize(LeeCarterParams params);

struct LeeCarterOptions {
    int max_iter = 10000;
    double rel_tol = 1e-10;
};

struct LeeCarterFit {
    LeeCarterParams params;
    double objective = 0.0;    // sum of squared residuals over used cells
    int iterations = 0;        // 0 when the closed-form SVD route was taken
    std::size_t used_cells = 0;
    std::size_t excluded_cells = 0;
    bool svd_route = false;
};

/// Least-squares fit of the log-bilinear model to a log-hazard grid.
///
/// With a complete grid the solution is closed form: alpha is the row mean
/// and beta kappa^T the leading singular triplet of the centred matrix. With
/// missing cells, alternating row/column least-squares updates are iterated
/// until the relative objective change drops below `rel_tol`.
LeeCarterFit fit_lee_carter(const CellGrid &log_hazard, const LeeCarterOptions &options = {});

/// Sum over present cells of (y - alpha - beta kappa)^2.
double lee_carter_objective(const LeeCarterParams &params, const CellGrid &log_hazard);

/// Gradient of the objective, stacked as (alpha, beta, kappa).
Eigen::VectorXd lee_carter_gradient(const LeeCarterParams &params, const CellGrid &log_hazard);

/// mu(x,t) = exp(alpha_x + beta_x kappa_t) on `index`.
CellGrid surface(const LeeCarterParams &params, const AgeYearIndex &index);

/// Re-estimates each kappa_t so that fitted deaths sum(L mu) match observed
/// deaths in year t, then renormalizes. Optional second stage of the
/// classic method; off by default in the pipeline.
LeeCarterParams recalibrate_kappa(const LeeCarterParams &params, const Dataset &dataset);

} // namespace mortab
