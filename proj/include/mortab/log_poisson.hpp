#pragma once

#include "mortab/grid.hpp"
#include "mortab/lee_carter.hpp"

#include <Eigen/Core>

#include <vector>

namespace mortab {

struct PoissonFitConfig {
    int max_iter = 20000;
    double score_tol = 1e-8;
    bool constrained = false;
    int alpha_degree = 3;
    int beta_degree = 3;
    int kappa_degree = 1;
    double mu_floor = 1e-12;

    void validate() const;
};

/// Chebyshev polynomials T_0..T_degree of a variable mapped affinely from
/// [lo, hi] onto [-1, 1]. Raw powers of ages near 100 are far too
/// ill-conditioned for a cubic fit.
struct ScaledChebyshev {
    double lo = 0.0;
    double hi = 1.0;
    int degree = 0;

    double scaled(double x) const noexcept;
    Eigen::VectorXd eval(double x) const;
    /// Rows = points lo..hi in unit steps, columns = T_0..T_degree.
    Eigen::MatrixXd design(int first, int last) const;
};

/// Polynomial reduction of the log-bilinear surface:
///   alpha_x = sum_j a_j T_j(u(x)), beta_x = sum_j b_j T_j(u(x)), kappa_t = sum_j c_j T_j(v(t))
/// with u, v the affine maps of the fitted age and year ranges onto [-1, 1].
struct ConstrainedParams {
    int age_min = 0;
    int age_max = 0;
    int year_min = 0;
    int year_max = 0;
    Eigen::VectorXd alpha_coeffs;
    Eigen::VectorXd beta_coeffs;
    Eigen::VectorXd kappa_coeffs;
    double loglik = 0.0;

    ScaledChebyshev age_basis(int degree) const;
    ScaledChebyshev year_basis(int degree) const;

    double alpha(double age) const;
    double beta(double age) const;
    double kappa(double year) const;
    double log_hazard(double age, double year) const { return alpha(age) + beta(age) * kappa(year); }

    /// Number of polynomial coefficients before the two identifiability constraints.
    int parameter_count() const noexcept;

    /// Expanded alpha/beta/kappa on the fitted ages and years year_min..last_year.
    LeeCarterParams expand(int last_year) const;
    LeeCarterParams expand() const { return expand(year_max); }
};

/// Poisson log-likelihood (without the constant):
///   sum over usable cells of D (alpha + beta kappa) - L exp(alpha + beta kappa).
/// Vectors are indexed on the dataset's ages and years.
double log_likelihood(const Eigen::VectorXd &alpha, const Eigen::VectorXd &beta,
                      const Eigen::VectorXd &kappa, const Dataset &dataset, double mu_floor = 1e-12);
double log_likelihood(const LeeCarterParams &params, const Dataset &dataset, double mu_floor = 1e-12);
double log_likelihood(const ConstrainedParams &params, const Dataset &dataset, double mu_floor = 1e-12);

/// Analytic score stacked as (d/d alpha, d/d beta, d/d kappa).
Eigen::VectorXd score(const Eigen::VectorXd &alpha, const Eigen::VectorXd &beta,
                      const Eigen::VectorXd &kappa, const Dataset &dataset);

/// Score with respect to the polynomial coefficients (a, b, c).
Eigen::VectorXd constrained_score(const ConstrainedParams &params, const Dataset &dataset);

struct PoissonFit {
    LeeCarterParams params;
    double loglik = 0.0;
    int iterations = 0;
    int cyclic_iterations = 0;
    double score_norm = 0.0;
    bool boundary = false;
    std::vector<int> boundary_ages; // ages with no observed death, pinned at mu_floor
    std::vector<double> loglik_trace;
};

/// Maximum likelihood fit of the free log-bilinear Poisson model on raw
/// exposures. Block Newton-Raphson sweeps over alpha, kappa and beta with
/// step halving; a damped joint Newton step finishes off the last digits.
PoissonFit fit_free(const Dataset &dataset, const PoissonFitConfig &config = {});

struct ConstrainedFit {
    ConstrainedParams params;
    int iterations = 0;
    double score_norm = 0.0;
    bool two_stage = false;
    bool boundary = false;
    std::vector<double> loglik_trace;
};

/// Direct maximum likelihood on the polynomial coefficients.
ConstrainedFit fit_constrained(const Dataset &dataset, const PoissonFitConfig &config = {});

/// Least-squares polynomials fitted to the free MLE curves, renormalized.
ConstrainedFit fit_two_stage(const Dataset &dataset, const PoissonFitConfig &config = {});

} // namespace mortab
