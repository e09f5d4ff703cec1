#include "mortab/lee_carter.hpp"

#include "mortab/error.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

namespace mortab {

namespace {

const char *kModule = "lee-carter";

void check_shape(const LeeCarterParams &p) {
    if (p.beta.size() != p.alpha.size()) {
        throw ShapeError(kModule, "alpha and beta lengths differ");
    }
}

double residual_variance(double ssr, std::size_t cells, int n_ages, int n_years) {
    // 2A + T - 2 free parameters once both constraints are imposed
    const long dof = static_cast<long>(cells) - (2L * n_ages + n_years - 2);
    return dof > 0 ? ssr / static_cast<double>(dof) : (cells > 0 ? ssr / static_cast<double>(cells) : 0.0);
}

} // namespace

double LeeCarterParams::log_hazard(int age, int year) const {
    if (age < age_min || age > age_max()) {
        throw CoverageError(kModule, "age " + std::to_string(age) + " outside fitted ages");
    }
    if (year < year_min || year > year_max()) {
        throw ProjectionRequiredError(kModule, "year " + std::to_string(year) +
                                                   " outside kappa range; project kappa first");
    }
    const int i = age - age_min;
    return alpha(i) + beta(i) * kappa(year - year_min);
}

LeeCarterParams normalize(LeeCarterParams params) {
    check_shape(params);
    const double sum_beta = params.beta.sum();
    const double scale = params.beta.cwiseAbs().sum();
    if (!(std::abs(sum_beta) > 1e-14 * scale) || sum_beta == 0.0) {
        throw NormalizationError(kModule, "sum of beta is zero; cannot impose sum(beta) = 1");
    }
    const double kappa_mean = params.kappa.size() > 0 ? params.kappa.mean() : 0.0;
    params.alpha += params.beta * kappa_mean;
    params.kappa = (params.kappa.array() - kappa_mean).matrix() * sum_beta;
    params.beta /= sum_beta;
    return params;
}

double lee_carter_objective(const LeeCarterParams &params, const CellGrid &log_hazard) {
    double ssr = 0.0;
    const auto &idx = log_hazard.index();
    for (int j = 0; j < log_hazard.cols(); ++j) {
        for (int i = 0; i < log_hazard.rows(); ++i) {
            if (log_hazard.present(i, j)) {
                const double r = log_hazard.value(i, j) - params.log_hazard(idx.age_min + i, idx.year_min + j);
                ssr += r * r;
            }
        }
    }
    return ssr;
}

Eigen::VectorXd lee_carter_gradient(const LeeCarterParams &params, const CellGrid &log_hazard) {
    const int a = params.n_ages();
    const int t = params.n_years();
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * a + t);
    const auto &idx = log_hazard.index();
    for (int j = 0; j < log_hazard.cols(); ++j) {
        for (int i = 0; i < log_hazard.rows(); ++i) {
            if (!log_hazard.present(i, j)) {
                continue;
            }
            const int pi = idx.age_min + i - params.age_min;
            const int pj = idx.year_min + j - params.year_min;
            const double r = log_hazard.value(i, j) - params.log_hazard(idx.age_min + i, idx.year_min + j);
            g(pi) += -2.0 * r;
            g(a + pi) += -2.0 * r * params.kappa(pj);
            g(2 * a + pj) += -2.0 * r * params.beta(pi);
        }
    }
    return g;
}

LeeCarterFit fit_lee_carter(const CellGrid &log_hazard, const LeeCarterOptions &options) {
    if (log_hazard.kind() != GridKind::LogHazard) {
        throw ValidationError(kModule, "fit expects a log-hazard grid");
    }
    const auto &idx = log_hazard.index();
    const int n_ages = idx.n_ages();
    const int n_years = idx.n_years();
    if (n_ages < 2) {
        throw FitError(kModule, "need at least 2 ages, got " + std::to_string(n_ages));
    }
    if (n_years < 2) {
        throw FitError(kModule, "need at least 2 years, got " + std::to_string(n_years));
    }
    const Mask &mask = log_hazard.mask();
    for (int i = 0; i < n_ages; ++i) {
        if (!mask.row(i).any()) {
            throw FitError(kModule, "age " + std::to_string(idx.age_min + i) + " has no usable cell");
        }
    }
    for (int j = 0; j < n_years; ++j) {
        if (!mask.col(j).any()) {
            throw FitError(kModule, "year " + std::to_string(idx.year_min + j) + " has no usable cell");
        }
    }

    const Eigen::MatrixXd &y = log_hazard.values();
    const Eigen::MatrixXd w = mask.cast<double>().matrix();

    LeeCarterParams p;
    p.age_min = idx.age_min;
    p.year_min = idx.year_min;
    p.alpha = (y.cwiseProduct(w)).rowwise().sum().cwiseQuotient(w.rowwise().sum());

    Eigen::MatrixXd centred = y.colwise() - p.alpha;
    centred = centred.cwiseProduct(w);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double s1 = svd.singularValues()(0);
    if (s1 > 1e-12 * std::max(1.0, y.cwiseProduct(w).norm())) {
        p.beta = svd.matrixU().col(0);
        p.kappa = svd.matrixV().col(0) * s1;
    } else {
        p.beta = Eigen::VectorXd::Constant(n_ages, 1.0 / n_ages);
        p.kappa = Eigen::VectorXd::Zero(n_years);
    }
    LeeCarterFit fit;
    fit.used_cells = static_cast<std::size_t>(mask.count());
    fit.excluded_cells = static_cast<std::size_t>(mask.size()) - fit.used_cells;

    if (fit.excluded_cells == 0) {
        fit.svd_route = true;
    } else {
        const double floor = 1e-30 * static_cast<double>(fit.used_cells);
        double previous = lee_carter_objective(p, log_hazard);
        for (int it = 1; it <= options.max_iter; ++it) {
            fit.iterations = it;
            for (int i = 0; i < n_ages; ++i) {
                double acc = 0.0;
                for (int j = 0; j < n_years; ++j) {
                    if (mask(i, j)) {
                        acc += y(i, j) - p.beta(i) * p.kappa(j);
                    }
                }
                p.alpha(i) = acc / w.row(i).sum();
            }
            for (int j = 0; j < n_years; ++j) {
                double num = 0.0;
                double den = 0.0;
                for (int i = 0; i < n_ages; ++i) {
                    if (mask(i, j)) {
                        num += p.beta(i) * (y(i, j) - p.alpha(i));
                        den += p.beta(i) * p.beta(i);
                    }
                }
                if (den > 0.0) {
                    p.kappa(j) = num / den;
                }
            }
            for (int i = 0; i < n_ages; ++i) {
                double num = 0.0;
                double den = 0.0;
                for (int j = 0; j < n_years; ++j) {
                    if (mask(i, j)) {
                        num += p.kappa(j) * (y(i, j) - p.alpha(i));
                        den += p.kappa(j) * p.kappa(j);
                    }
                }
                if (den > 0.0) {
                    p.beta(i) = num / den;
                }
            }
            const double current = lee_carter_objective(p, log_hazard);
            if (current <= floor || std::abs(previous - current) <= options.rel_tol * std::max(current, floor)) {
                break;
            }
            previous = current;
        }
    }

    fit.params = normalize(std::move(p));
    fit.objective = lee_carter_objective(fit.params, log_hazard);
    fit.params.sigma2 = residual_variance(fit.objective, fit.used_cells, n_ages, n_years);
    return fit;
}

CellGrid surface(const LeeCarterParams &params, const AgeYearIndex &index) {
    check_shape(params);
    if (index.age_min < params.age_min || index.age_max > params.age_max()) {
        throw CoverageError(kModule, "requested ages outside fitted ages");
    }
    if (index.year_min < params.year_min || index.year_max > params.year_max()) {
        throw ProjectionRequiredError(kModule, "requested years " + std::to_string(index.year_min) + "-" +
                                                   std::to_string(index.year_max) +
                                                   " outside kappa range; project kappa first");
    }
    Eigen::MatrixXd mu(index.n_ages(), index.n_years());
    for (int j = 0; j < index.n_years(); ++j) {
        for (int i = 0; i < index.n_ages(); ++i) {
            mu(i, j) = std::exp(params.log_hazard(index.age_min + i, index.year_min + j));
        }
    }
    return CellGrid(index, GridKind::Hazard, std::move(mu));
}

LeeCarterParams recalibrate_kappa(const LeeCarterParams &params, const Dataset &dataset) {
    check_shape(params);
    const auto &idx = dataset.index();
    if (idx.age_min != params.age_min || idx.n_ages() != params.n_ages()) {
        throw ShapeError(kModule, "dataset ages differ from fitted ages");
    }
    LeeCarterParams out = params;
    for (int j = 0; j < idx.n_years(); ++j) {
        const int year = idx.year_min + j;
        if (year < params.year_min || year > params.year_max()) {
            throw ProjectionRequiredError(kModule, "year " + std::to_string(year) + " outside kappa range");
        }
        double observed = 0.0;
        bool any = false;
        for (int i = 0; i < idx.n_ages(); ++i) {
            if (dataset.usable(i, j)) {
                observed += dataset.deaths().value(i, j);
                any = true;
            }
        }
        if (!any || observed <= 0.0) {
            continue;
        }
        auto expected = [&](double k, double &slope) {
            double e = 0.0;
            slope = 0.0;
            for (int i = 0; i < idx.n_ages(); ++i) {
                if (dataset.usable(i, j)) {
                    const double m = dataset.exposure().value(i, j) * std::exp(out.alpha(i) + out.beta(i) * k);
                    e += m;
                    slope += m * out.beta(i);
                }
            }
            return e;
        };
        const int col = year - params.year_min;
        double k = out.kappa(col);
        for (int it = 0; it < 200; ++it) {
            double slope = 0.0;
            const double f = expected(k, slope) - observed;
            if (std::abs(f) <= 1e-12 * observed || slope == 0.0) {
                break;
            }
            double step = f / slope;
            // keep the Newton step bounded; expected deaths are convex in k
            step = std::clamp(step, -1.0 / (std::abs(out.beta.maxCoeff()) + 1e-12),
                              1.0 / (std::abs(out.beta.maxCoeff()) + 1e-12));
            k -= step;
        }
        out.kappa(col) = k;
    }
    return normalize(std::move(out));
}

} // namespace mortab
