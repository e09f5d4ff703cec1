#include "mortab/log_poisson.hpp"

#include "mortab/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <algorithm>
#include <limits>
#include <cmath>
#include <string>

namespace mortab {

namespace {

const char *kModule = "log-poisson";

constexpr double kLoglikRelTol = 1e-12;

/// Dense deaths/exposure with unusable cells zeroed so they drop out of every sum.
struct Observations {
    Eigen::MatrixXd deaths;
    Eigen::MatrixXd exposure;

    explicit Observations(const Dataset &dataset) {
        const auto &idx = dataset.index();
        deaths = Eigen::MatrixXd::Zero(idx.n_ages(), idx.n_years());
        exposure = Eigen::MatrixXd::Zero(idx.n_ages(), idx.n_years());
        for (int j = 0; j < idx.n_years(); ++j) {
            for (int i = 0; i < idx.n_ages(); ++i) {
                if (dataset.usable(i, j)) {
                    deaths(i, j) = dataset.deaths().value(i, j);
                    exposure(i, j) = dataset.exposure().value(i, j);
                }
            }
        }
    }
};

void check_finite(const Eigen::VectorXd &v, const char *name) {
    if (!v.allFinite()) {
        throw DomainError(kModule, std::string("non-finite ") + name + " parameter");
    }
}

double loglik_of(const Eigen::MatrixXd &eta, const Observations &obs, double mu_floor) {
    const double log_floor = std::log(mu_floor);
    double ll = 0.0;
    for (int j = 0; j < eta.cols(); ++j) {
        for (int i = 0; i < eta.rows(); ++i) {
            const double l = obs.exposure(i, j);
            if (l <= 0.0) {
                continue;
            }
            const double d = obs.deaths(i, j);
            ll += d * std::max(eta(i, j), log_floor) - l * std::exp(eta(i, j));
        }
    }
    return ll;
}

Eigen::MatrixXd linear_predictor(const Eigen::VectorXd &alpha, const Eigen::VectorXd &beta,
                                 const Eigen::VectorXd &kappa) {
    return (alpha * Eigen::RowVectorXd::Ones(kappa.size())) + beta * kappa.transpose();
}

struct Residuals {
    Eigen::MatrixXd fitted; // L mu
    Eigen::MatrixXd resid;  // D - L mu
};

Residuals residuals_of(const Eigen::MatrixXd &eta, const Observations &obs) {
    Residuals r;
    r.fitted = obs.exposure.cwiseProduct(eta.array().exp().matrix());
    r.resid = obs.deaths - r.fitted;
    return r;
}

Eigen::VectorXd stacked_score(const Eigen::VectorXd &beta, const Eigen::VectorXd &kappa,
                              const Eigen::MatrixXd &resid) {
    const auto a = beta.size();
    const auto t = kappa.size();
    Eigen::VectorXd g(2 * a + t);
    g.head(a) = resid.rowwise().sum();
    g.segment(a, a) = resid * kappa;
    g.tail(t) = resid.transpose() * beta;
    return g;
}

void check_dims(const Eigen::VectorXd &alpha, const Eigen::VectorXd &beta, const Eigen::VectorXd &kappa,
                const Dataset &dataset) {
    if (alpha.size() != dataset.index().n_ages() || beta.size() != dataset.index().n_ages() ||
        kappa.size() != dataset.index().n_years()) {
        throw ShapeError(kModule, "parameter lengths do not match the dataset grid");
    }
}

// ---------------------------------------------------------------------------
// Generic damped Newton on a basis-expanded bilinear predictor
//   alpha = Ba a + alpha_offset, beta = Bb b, kappa = Bk c.
// Used for the polynomial model and to polish the free model.

struct BilinearBases {
    Eigen::MatrixXd alpha;        // A x pa
    Eigen::VectorXd alpha_offset; // A
    Eigen::MatrixXd beta;         // A x pb
    Eigen::MatrixXd kappa;        // T x pk
    Eigen::VectorXd kappa_constant; // pk, with kappa * kappa_constant = 1
    Eigen::MatrixXd beta_to_alpha;  // pa x pb, with alpha * beta_to_alpha = beta
};

struct Theta {
    Eigen::VectorXd a, b, c;
};

struct Expanded {
    Eigen::VectorXd alpha, beta, kappa;
};

Expanded expand(const BilinearBases &B, const Theta &th) {
    return {B.alpha * th.a + B.alpha_offset, B.beta * th.b, B.kappa * th.c};
}

/// Rescales so that the expanded beta sums to one and the expanded kappa to
/// zero, leaving the surface unchanged.
Theta normalize_theta(const BilinearBases &B, Theta th) {
    const double sb = (B.beta * th.b).sum();
    if (sb == 0.0 || !std::isfinite(sb)) {
        throw NormalizationError(kModule, "sum of beta is zero; cannot impose sum(beta) = 1");
    }
    th.b /= sb;
    th.c *= sb;
    const double kbar = (B.kappa * th.c).mean();
    th.c -= kbar * B.kappa_constant;
    th.a += kbar * (B.beta_to_alpha * th.b);
    return th;
}

Eigen::VectorXd theta_score(const BilinearBases &B, const Expanded &e, const Eigen::MatrixXd &resid) {
    const auto pa = B.alpha.cols();
    const auto pb = B.beta.cols();
    const auto pk = B.kappa.cols();
    Eigen::VectorXd g(pa + pb + pk);
    g.head(pa) = B.alpha.transpose() * resid.rowwise().sum();
    g.segment(pa, pb) = B.beta.transpose() * (resid * e.kappa);
    g.tail(pk) = B.kappa.transpose() * (resid.transpose() * e.beta);
    return g;
}

/// Negative observed Hessian of the log-likelihood in theta.
Eigen::MatrixXd theta_information(const BilinearBases &B, const Expanded &e, const Residuals &r) {
    const auto pa = B.alpha.cols();
    const auto pb = B.beta.cols();
    const auto pk = B.kappa.cols();
    const Eigen::MatrixXd &w = r.fitted;
    const Eigen::VectorXd w_row = w.rowwise().sum();
    const Eigen::VectorXd wk = w * e.kappa;
    const Eigen::VectorXd wkk = w * e.kappa.cwiseProduct(e.kappa);
    const Eigen::VectorXd wbb = w.transpose() * e.beta.cwiseProduct(e.beta);
    const Eigen::MatrixXd w_beta = e.beta.asDiagonal() * w;
    const Eigen::MatrixXd cross = e.beta.asDiagonal() * w * e.kappa.asDiagonal() - r.resid;

    Eigen::MatrixXd n(pa + pb + pk, pa + pb + pk);
    n.block(0, 0, pa, pa) = B.alpha.transpose() * w_row.asDiagonal() * B.alpha;
    n.block(0, pa, pa, pb) = B.alpha.transpose() * wk.asDiagonal() * B.beta;
    n.block(0, pa + pb, pa, pk) = B.alpha.transpose() * w_beta * B.kappa;
    n.block(pa, pa, pb, pb) = B.beta.transpose() * wkk.asDiagonal() * B.beta;
    n.block(pa, pa + pb, pb, pk) = B.beta.transpose() * cross * B.kappa;
    n.block(pa + pb, pa + pb, pk, pk) = B.kappa.transpose() * wbb.asDiagonal() * B.kappa;
    n.block(pa, 0, pb, pa) = n.block(0, pa, pa, pb).transpose();
    n.block(pa + pb, 0, pk, pa) = n.block(0, pa + pb, pa, pk).transpose();
    n.block(pa + pb, pa, pk, pb) = n.block(pa, pa + pb, pb, pk).transpose();
    return n;
}

Eigen::VectorXd pack(const Theta &th) {
    Eigen::VectorXd v(th.a.size() + th.b.size() + th.c.size());
    v << th.a, th.b, th.c;
    return v;
}

Theta unpack(const Eigen::VectorXd &v, const Theta &shape) {
    Theta th;
    th.a = v.head(shape.a.size());
    th.b = v.segment(shape.a.size(), shape.b.size());
    th.c = v.tail(shape.c.size());
    return th;
}

struct NewtonResult {
    Theta theta;
    double loglik = 0.0;
    double score_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

NewtonResult damped_newton(const BilinearBases &B, Theta theta, const Observations &obs,
                           const PoissonFitConfig &cfg, int max_iter, std::vector<double> &trace) {
    theta = normalize_theta(B, theta);
    auto evaluate = [&](const Theta &th, Expanded &e, Residuals &r) {
        e = expand(B, th);
        const Eigen::MatrixXd eta = linear_predictor(e.alpha, e.beta, e.kappa);
        r = residuals_of(eta, obs);
        return loglik_of(eta, obs, cfg.mu_floor);
    };

    Expanded e;
    Residuals r;
    double ll = evaluate(theta, e, r);
    NewtonResult out;
    double lambda = 1e-3;
    double last_change = std::numeric_limits<double>::infinity();
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd g = theta_score(B, e, r.resid);
        out.score_norm = g.cwiseAbs().maxCoeff();
        if (out.score_norm < cfg.score_tol && last_change <= kLoglikRelTol * std::abs(ll)) {
            out.converged = true;
            break;
        }
        const Eigen::MatrixXd info = theta_information(B, e, r);
        const Eigen::VectorXd diag = info.diagonal().cwiseAbs();
        const double ridge = std::max(1e-300, 1e-12 * diag.maxCoeff());
        bool accepted = false;
        while (lambda < 1e20) {
            Eigen::MatrixXd m = info;
            m.diagonal() += lambda * (diag.array() + ridge).matrix();
            Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
            if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
                const Eigen::VectorXd step = ldlt.solve(g);
                if (step.allFinite()) {
                    Theta cand = normalize_theta(B, unpack(pack(theta) + step, theta));
                    Expanded ce;
                    Residuals cr;
                    const double cll = evaluate(cand, ce, cr);
                    if (std::isfinite(cll) && cll >= ll - 1e-14 * std::abs(ll)) {
                        last_change = std::abs(cll - ll);
                        theta = std::move(cand);
                        e = std::move(ce);
                        r = std::move(cr);
                        ll = cll;
                        accepted = true;
                        lambda = std::max(lambda / 10.0, 1e-12);
                        break;
                    }
                }
            }
            lambda *= 8.0;
        }
        out.iterations = it + 1;
        trace.push_back(ll);
        if (!accepted) {
            // no damping level improves the likelihood: stationary up to rounding
            last_change = 0.0;
            const Eigen::VectorXd g2 = theta_score(B, e, r.resid);
            out.score_norm = g2.cwiseAbs().maxCoeff();
            out.converged = out.score_norm < cfg.score_tol;
            break;
        }
    }
    out.theta = std::move(theta);
    out.loglik = ll;
    return out;
}

} // namespace

// ---------------------------------------------------------------------------

void PoissonFitConfig::validate() const {
    if (alpha_degree < 0 || beta_degree < 0 || kappa_degree < 0) {
        throw DomainError(kModule, "polynomial degrees must be non-negative");
    }
    if (!(score_tol > 0.0)) {
        throw DomainError(kModule, "score_tol must be positive");
    }
    if (max_iter <= 0) {
        throw DomainError(kModule, "max_iter must be positive");
    }
    if (!(mu_floor > 0.0)) {
        throw DomainError(kModule, "mu_floor must be positive");
    }
}

double ScaledChebyshev::scaled(double x) const noexcept {
    if (hi == lo) {
        return 0.0;
    }
    return (2.0 * x - lo - hi) / (hi - lo);
}

Eigen::VectorXd ScaledChebyshev::eval(double x) const {
    const double u = scaled(x);
    Eigen::VectorXd t(degree + 1);
    t(0) = 1.0;
    if (degree >= 1) {
        t(1) = u;
    }
    for (int k = 2; k <= degree; ++k) {
        t(k) = 2.0 * u * t(k - 1) - t(k - 2);
    }
    return t;
}

Eigen::MatrixXd ScaledChebyshev::design(int first, int last) const {
    Eigen::MatrixXd m(last - first + 1, degree + 1);
    for (int x = first; x <= last; ++x) {
        m.row(x - first) = eval(x).transpose();
    }
    return m;
}

ScaledChebyshev ConstrainedParams::age_basis(int degree) const {
    return {static_cast<double>(age_min), static_cast<double>(age_max), degree};
}

ScaledChebyshev ConstrainedParams::year_basis(int degree) const {
    return {static_cast<double>(year_min), static_cast<double>(year_max), degree};
}

double ConstrainedParams::alpha(double age) const {
    return age_basis(static_cast<int>(alpha_coeffs.size()) - 1).eval(age).dot(alpha_coeffs);
}

double ConstrainedParams::beta(double age) const {
    return age_basis(static_cast<int>(beta_coeffs.size()) - 1).eval(age).dot(beta_coeffs);
}

double ConstrainedParams::kappa(double year) const {
    return year_basis(static_cast<int>(kappa_coeffs.size()) - 1).eval(year).dot(kappa_coeffs);
}

int ConstrainedParams::parameter_count() const noexcept {
    return static_cast<int>(alpha_coeffs.size() + beta_coeffs.size() + kappa_coeffs.size());
}

LeeCarterParams ConstrainedParams::expand(int last_year) const {
    if (last_year < year_min) {
        throw DomainError(kModule, "expansion must end at or after the first fitted year");
    }
    LeeCarterParams p;
    p.age_min = age_min;
    p.year_min = year_min;
    const int a = age_max - age_min + 1;
    p.alpha.resize(a);
    p.beta.resize(a);
    for (int i = 0; i < a; ++i) {
        p.alpha(i) = alpha(age_min + i);
        p.beta(i) = beta(age_min + i);
    }
    p.kappa.resize(last_year - year_min + 1);
    for (int t = year_min; t <= last_year; ++t) {
        p.kappa(t - year_min) = kappa(t);
    }
    return p;
}

double log_likelihood(const Eigen::VectorXd &alpha, const Eigen::VectorXd &beta, const Eigen::VectorXd &kappa,
                      const Dataset &dataset, double mu_floor) {
    check_dims(alpha, beta, kappa, dataset);
    check_finite(alpha, "alpha");
    check_finite(beta, "beta");
    check_finite(kappa, "kappa");
    return loglik_of(linear_predictor(alpha, beta, kappa), Observations(dataset), mu_floor);
}

double log_likelihood(const LeeCarterParams &params, const Dataset &dataset, double mu_floor) {
    const auto &idx = dataset.index();
    if (params.age_min != idx.age_min || params.n_ages() != idx.n_ages() || idx.year_min < params.year_min ||
        idx.year_max > params.year_max()) {
        throw ShapeError(kModule, "parameters do not cover the dataset grid");
    }
    return log_likelihood(params.alpha, params.beta,
                          params.kappa.segment(idx.year_min - params.year_min, idx.n_years()), dataset,
                          mu_floor);
}

double log_likelihood(const ConstrainedParams &params, const Dataset &dataset, double mu_floor) {
    const auto &idx = dataset.index();
    if (params.age_min != idx.age_min || params.age_max != idx.age_max) {
        throw ShapeError(kModule, "parameters do not match the dataset ages");
    }
    const LeeCarterParams p = params.expand(std::max(params.year_max, idx.year_max));
    return log_likelihood(p.alpha, p.beta, p.kappa.segment(idx.year_min - p.year_min, idx.n_years()), dataset,
                          mu_floor);
}

Eigen::VectorXd score(const Eigen::VectorXd &alpha, const Eigen::VectorXd &beta, const Eigen::VectorXd &kappa,
                      const Dataset &dataset) {
    check_dims(alpha, beta, kappa, dataset);
    check_finite(alpha, "alpha");
    check_finite(beta, "beta");
    check_finite(kappa, "kappa");
    const Observations obs(dataset);
    const Residuals r = residuals_of(linear_predictor(alpha, beta, kappa), obs);
    return stacked_score(beta, kappa, r.resid);
}

namespace {

BilinearBases polynomial_bases(const ConstrainedParams &shape, int pa, int pb, int pk) {
    BilinearBases B;
    const ScaledChebyshev ab = shape.age_basis(std::max(pa, pb) - 1);
    const Eigen::MatrixXd age_design = ab.design(shape.age_min, shape.age_max);
    B.alpha = age_design.leftCols(pa);
    B.alpha_offset = Eigen::VectorXd::Zero(age_design.rows());
    B.beta = age_design.leftCols(pb);
    B.kappa = shape.year_basis(pk - 1).design(shape.year_min, shape.year_max);
    B.kappa_constant = Eigen::VectorXd::Zero(pk);
    B.kappa_constant(0) = 1.0;
    B.beta_to_alpha = Eigen::MatrixXd::Zero(pa, pb);
    B.beta_to_alpha.topLeftCorner(pb, pb).setIdentity();
    return B;
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd &design, const Eigen::VectorXd &y) {
    return design.colPivHouseholderQr().solve(y);
}

void require_grid(const Dataset &dataset) {
    const auto &idx = dataset.index();
    if (idx.n_years() < 2) {
        throw FitError(kModule, "need at least 2 years, got " + std::to_string(idx.n_years()));
    }
    for (int j = 0; j < idx.n_years(); ++j) {
        bool any = false;
        for (int i = 0; i < idx.n_ages() && !any; ++i) {
            any = dataset.usable(i, j);
        }
        if (!any) {
            throw FitError(kModule, "year " + std::to_string(idx.year_min + j) + " has no exposure");
        }
    }
    for (int i = 0; i < idx.n_ages(); ++i) {
        bool any = false;
        for (int j = 0; j < idx.n_years() && !any; ++j) {
            any = dataset.usable(i, j);
        }
        if (!any) {
            throw FitError(kModule, "age " + std::to_string(idx.age_min + i) + " has no exposure");
        }
    }
}

/// Per-age mean of ln(D/L) over cells with deaths; nullopt-like NaN when none.
Eigen::VectorXd initial_alpha(const Observations &obs) {
    Eigen::VectorXd alpha(obs.deaths.rows());
    for (int i = 0; i < obs.deaths.rows(); ++i) {
        double acc = 0.0;
        int n = 0;
        for (int j = 0; j < obs.deaths.cols(); ++j) {
            if (obs.exposure(i, j) > 0.0 && obs.deaths(i, j) > 0.0) {
                acc += std::log(obs.deaths(i, j) / obs.exposure(i, j));
                ++n;
            }
        }
        alpha(i) = n > 0 ? acc / n : std::numeric_limits<double>::quiet_NaN();
    }
    return alpha;
}

} // namespace

Eigen::VectorXd constrained_score(const ConstrainedParams &params, const Dataset &dataset) {
    const auto &idx = dataset.index();
    if (params.age_min != idx.age_min || params.age_max != idx.age_max || params.year_min != idx.year_min ||
        params.year_max != idx.year_max) {
        throw ShapeError(kModule, "constrained score needs the fitted grid");
    }
    const int pa = static_cast<int>(params.alpha_coeffs.size());
    const int pb = static_cast<int>(params.beta_coeffs.size());
    const int pk = static_cast<int>(params.kappa_coeffs.size());
    const BilinearBases B = polynomial_bases(params, pa, pb, pk);
    const Expanded e = expand(B, {params.alpha_coeffs, params.beta_coeffs, params.kappa_coeffs});
    const Observations obs(dataset);
    const Residuals r = residuals_of(linear_predictor(e.alpha, e.beta, e.kappa), obs);
    return theta_score(B, e, r.resid);
}

PoissonFit fit_free(const Dataset &dataset, const PoissonFitConfig &config) {
    config.validate();
    require_grid(dataset);
    const auto &idx = dataset.index();
    const int n_ages = idx.n_ages();
    const int n_years = idx.n_years();
    const Observations obs(dataset);
    const double log_floor = std::log(config.mu_floor);

    PoissonFit fit;
    fit.params.age_min = idx.age_min;
    fit.params.year_min = idx.year_min;

    Eigen::VectorXd alpha = initial_alpha(obs);
    std::vector<int> active;
    for (int i = 0; i < n_ages; ++i) {
        if (std::isnan(alpha(i))) {
            fit.boundary_ages.push_back(idx.age_min + i);
            alpha(i) = log_floor;
        } else {
            active.push_back(i);
        }
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(n_ages);
    Eigen::VectorXd kappa = Eigen::VectorXd::Zero(n_years);

    if (active.empty()) {
        // no deaths anywhere: the likelihood increases without bound as mu -> 0
        fit.boundary = true;
        fit.params.alpha = alpha;
        fit.params.beta = Eigen::VectorXd::Constant(n_ages, 1.0 / n_ages);
        fit.params.kappa = kappa;
        fit.loglik = log_likelihood(fit.params.alpha, fit.params.beta, kappa, dataset, config.mu_floor);
        fit.score_norm = 0.0;
        return fit;
    }
    fit.boundary = !fit.boundary_ages.empty();
    for (int i : active) {
        beta(i) = 1.0 / static_cast<double>(active.size());
    }

    auto loglik = [&](const Eigen::VectorXd &a, const Eigen::VectorXd &b, const Eigen::VectorXd &k) {
        return loglik_of(linear_predictor(a, b, k), obs, config.mu_floor);
    };
    auto renormalize = [&]() {
        LeeCarterParams p{idx.age_min, idx.year_min, alpha, beta, kappa, 0.0};
        p = normalize(std::move(p));
        alpha = std::move(p.alpha);
        beta = std::move(p.beta);
        kappa = std::move(p.kappa);
    };

    double ll = loglik(alpha, beta, kappa);
    fit.loglik_trace.push_back(ll);

    // One block Newton update with step halving; `which` selects the block.
    enum class Block { Alpha, Kappa, Beta };
    auto block_update = [&](Block which) {
        const Residuals r = residuals_of(linear_predictor(alpha, beta, kappa), obs);
        Eigen::VectorXd *target = nullptr;
        Eigen::VectorXd step;
        switch (which) {
        case Block::Alpha: {
            target = &alpha;
            const Eigen::VectorXd num = r.resid.rowwise().sum();
            const Eigen::VectorXd den = r.fitted.rowwise().sum();
            step = Eigen::VectorXd::Zero(n_ages);
            for (int i : active) {
                if (den(i) > 0.0) {
                    step(i) = num(i) / den(i);
                }
            }
            break;
        }
        case Block::Kappa: {
            target = &kappa;
            const Eigen::VectorXd num = r.resid.transpose() * beta;
            const Eigen::VectorXd den = r.fitted.transpose() * beta.cwiseProduct(beta);
            step = Eigen::VectorXd::Zero(n_years);
            for (int j = 0; j < n_years; ++j) {
                if (den(j) > 0.0) {
                    step(j) = num(j) / den(j);
                }
            }
            break;
        }
        case Block::Beta: {
            target = &beta;
            const Eigen::VectorXd num = r.resid * kappa;
            const Eigen::VectorXd den = r.fitted * kappa.cwiseProduct(kappa);
            step = Eigen::VectorXd::Zero(n_ages);
            for (int i : active) {
                if (den(i) > 0.0) {
                    step(i) = num(i) / den(i);
                }
            }
            break;
        }
        }
        const Eigen::VectorXd saved = *target;
        for (int halving = 0; halving < 40; ++halving) {
            *target = saved + step;
            const double cand = loglik(alpha, beta, kappa);
            if (std::isfinite(cand) && cand >= ll) {
                ll = cand;
                return;
            }
            step *= 0.5;
        }
        *target = saved;
    };

    const int cyclic_budget = std::min(config.max_iter, 2000);
    bool converged = false;
    for (int it = 1; it <= cyclic_budget; ++it) {
        const double before = ll;
        block_update(Block::Alpha);
        block_update(Block::Kappa);
        block_update(Block::Beta);
        renormalize();
        ll = loglik(alpha, beta, kappa);
        fit.loglik_trace.push_back(ll);
        fit.cyclic_iterations = it;
        const Residuals r = residuals_of(linear_predictor(alpha, beta, kappa), obs);
        Eigen::VectorXd g = stacked_score(beta, kappa, r.resid);
        for (int age : fit.boundary_ages) {
            g(age - idx.age_min) = 0.0;
            g(n_ages + age - idx.age_min) = 0.0;
        }
        fit.score_norm = g.cwiseAbs().maxCoeff();
        const double change = std::abs(ll - before);
        if (fit.score_norm < config.score_tol && change <= kLoglikRelTol * std::abs(ll)) {
            converged = true;
            break;
        }
        // hand over to the joint Newton step once the sweeps are in the basin
        if (it >= 50 && change <= 1e-6 * std::abs(ll)) {
            break;
        }
    }
    fit.iterations = fit.cyclic_iterations;

    if (!converged) {
        BilinearBases B;
        const int na = static_cast<int>(active.size());
        B.alpha = Eigen::MatrixXd::Zero(n_ages, na);
        B.beta = Eigen::MatrixXd::Zero(n_ages, na);
        B.alpha_offset = Eigen::VectorXd::Zero(n_ages);
        Theta th;
        th.a.resize(na);
        th.b.resize(na);
        for (int k = 0; k < na; ++k) {
            B.alpha(active[k], k) = 1.0;
            B.beta(active[k], k) = 1.0;
            th.a(k) = alpha(active[k]);
            th.b(k) = beta(active[k]);
        }
        for (int age : fit.boundary_ages) {
            B.alpha_offset(age - idx.age_min) = log_floor;
        }
        B.kappa = Eigen::MatrixXd::Identity(n_years, n_years);
        B.kappa_constant = Eigen::VectorXd::Ones(n_years);
        B.beta_to_alpha = Eigen::MatrixXd::Identity(na, na);
        th.c = kappa;
        const int budget = std::max(1, config.max_iter - fit.cyclic_iterations);
        NewtonResult nr = damped_newton(B, th, obs, config, budget, fit.loglik_trace);
        const Expanded e = expand(B, nr.theta);
        alpha = e.alpha;
        beta = e.beta;
        kappa = e.kappa;
        ll = nr.loglik;
        fit.score_norm = nr.score_norm;
        fit.iterations += nr.iterations;
        if (!nr.converged) {
            throw ConvergenceError(kModule, "free fit did not converge in " + std::to_string(config.max_iter) +
                                                " iterations (score norm " + std::to_string(nr.score_norm) + ")",
                                   nr.score_norm);
        }
    }

    fit.params.alpha = alpha;
    fit.params.beta = beta;
    fit.params.kappa = kappa;
    fit.loglik = ll;
    return fit;
}

ConstrainedFit fit_constrained(const Dataset &dataset, const PoissonFitConfig &config) {
    config.validate();
    require_grid(dataset);
    if (config.alpha_degree < config.beta_degree) {
        throw DomainError(kModule, "alpha_degree must be at least beta_degree so that centring kappa "
                                   "can be absorbed by alpha");
    }
    const auto &idx = dataset.index();
    const int n_ages = idx.n_ages();
    const Observations obs(dataset);
    const int pa = config.alpha_degree + 1;
    const int pb = config.beta_degree + 1;
    const int pk = config.kappa_degree + 1;

    ConstrainedFit fit;
    ConstrainedParams &p = fit.params;
    p.age_min = idx.age_min;
    p.age_max = idx.age_max;
    p.year_min = idx.year_min;
    p.year_max = idx.year_max;
    const BilinearBases B = polynomial_bases(p, pa, pb, pk);

    Theta th;
    th.b = least_squares(B.beta, Eigen::VectorXd::Constant(n_ages, 1.0 / n_ages));
    th.c = Eigen::VectorXd::Zero(pk);

    const Eigen::VectorXd alpha0 = initial_alpha(obs);
    std::vector<int> rows;
    for (int i = 0; i < n_ages; ++i) {
        if (!std::isnan(alpha0(i))) {
            rows.push_back(i);
        }
    }
    if (rows.empty()) {
        fit.boundary = true;
        th.a = Eigen::VectorXd::Zero(pa);
        th.a(0) = std::log(config.mu_floor);
        p.alpha_coeffs = th.a;
        p.beta_coeffs = th.b;
        p.kappa_coeffs = th.c;
        p.loglik = log_likelihood(p, dataset, config.mu_floor);
        return fit;
    }
    {
        Eigen::MatrixXd design(rows.size(), pa);
        Eigen::VectorXd y(rows.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            design.row(static_cast<Eigen::Index>(k)) = B.alpha.row(rows[k]);
            y(static_cast<Eigen::Index>(k)) = alpha0(rows[k]);
        }
        th.a = least_squares(design, y);
        if (!th.a.allFinite()) {
            th.a = Eigen::VectorXd::Zero(pa);
            th.a(0) = y.mean();
        }
    }

    NewtonResult nr = damped_newton(B, th, obs, config, config.max_iter, fit.loglik_trace);
    fit.iterations = nr.iterations;
    fit.score_norm = nr.score_norm;
    p.alpha_coeffs = nr.theta.a;
    p.beta_coeffs = nr.theta.b;
    p.kappa_coeffs = nr.theta.c;
    p.loglik = nr.loglik;
    if (!nr.converged) {
        throw ConvergenceError(kModule, "constrained fit did not converge (score norm " +
                                            std::to_string(nr.score_norm) + ", " +
                                            std::to_string(nr.iterations) + " iterations)",
                               nr.score_norm);
    }
    return fit;
}

ConstrainedFit fit_two_stage(const Dataset &dataset, const PoissonFitConfig &config) {
    config.validate();
    if (config.alpha_degree < config.beta_degree) {
        throw DomainError(kModule, "alpha_degree must be at least beta_degree");
    }
    const PoissonFit free = fit_free(dataset, config);
    const auto &idx = dataset.index();
    const int pa = config.alpha_degree + 1;
    const int pb = config.beta_degree + 1;
    const int pk = config.kappa_degree + 1;

    ConstrainedFit fit;
    fit.two_stage = true;
    fit.boundary = free.boundary;
    ConstrainedParams &p = fit.params;
    p.age_min = idx.age_min;
    p.age_max = idx.age_max;
    p.year_min = idx.year_min;
    p.year_max = idx.year_max;
    const BilinearBases B = polynomial_bases(p, pa, pb, pk);

    // ages pinned at the floor carry no curve information
    std::vector<int> rows;
    for (int i = 0; i < idx.n_ages(); ++i) {
        if (std::find(free.boundary_ages.begin(), free.boundary_ages.end(), idx.age_min + i) ==
            free.boundary_ages.end()) {
            rows.push_back(i);
        }
    }
    Eigen::MatrixXd da(rows.size(), pa);
    Eigen::MatrixXd db(rows.size(), pb);
    Eigen::VectorXd ya(rows.size());
    Eigen::VectorXd yb(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto r = static_cast<Eigen::Index>(k);
        da.row(r) = B.alpha.row(rows[k]);
        db.row(r) = B.beta.row(rows[k]);
        ya(r) = free.params.alpha(rows[k]);
        yb(r) = free.params.beta(rows[k]);
    }
    Theta th{least_squares(da, ya), least_squares(db, yb), least_squares(B.kappa, free.params.kappa)};
    th = normalize_theta(B, th);
    p.alpha_coeffs = th.a;
    p.beta_coeffs = th.b;
    p.kappa_coeffs = th.c;
    p.loglik = log_likelihood(p, dataset, config.mu_floor);
    fit.iterations = free.iterations;
    fit.score_norm = constrained_score(p, dataset).cwiseAbs().maxCoeff();
    return fit;
}

} // namespace mortab
