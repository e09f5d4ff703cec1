#include "mortab/diagnostics.hpp"

#include "mortab/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mortab {

namespace {

const char *kModule = "diagnostics";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

} // namespace

std::optional<double> chi2_cell(double observed, double fitted) {
    if (!(fitted > 0.0)) {
        return std::nullopt;
    }
    const double d = observed - fitted;
    return d * d / fitted;
}

CellGrid fitted_deaths(const CellGrid &exposure, const CellGrid &hazard) {
    if (exposure.kind() != GridKind::Exposure || hazard.kind() != GridKind::Hazard) {
        throw ValidationError(kModule, "fitted deaths need an exposure grid and a hazard grid");
    }
    const auto &idx = exposure.index();
    if (!hazard.index().covers(idx)) {
        throw ShapeError(kModule, "hazard grid does not cover the exposure grid");
    }
    const CellGrid mu = hazard.slice(idx);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(idx.n_ages(), idx.n_years());
    Mask present = exposure.mask() && mu.mask();
    for (int j = 0; j < idx.n_years(); ++j) {
        for (int i = 0; i < idx.n_ages(); ++i) {
            if (present(i, j)) {
                d(i, j) = exposure.value(i, j) * rate_from_hazard(mu.value(i, j));
            }
        }
    }
    return CellGrid(idx, GridKind::Deaths, std::move(d), std::move(present));
}

std::vector<AgeClass> default_age_classes() {
    std::vector<AgeClass> out;
    for (int lo = 60; lo < 90; lo += 5) {
        out.push_back({lo, lo + 4});
    }
    return out;
}

DevianceReport chi2_by_year(const Dataset &dataset, const CellGrid &fitted, const std::vector<AgeClass> &classes,
                            bool grouped) {
    const auto &idx = dataset.index();
    if (!(fitted.index() == idx)) {
        throw ShapeError(kModule, "fitted deaths and observed deaths are not on the same ages/years");
    }
    if (classes.empty()) {
        throw DomainError(kModule, "no age classes");
    }
    for (const auto &c : classes) {
        if (c.lo > c.hi) {
            throw DomainError(kModule, "age class " + std::to_string(c.lo) + "-" + std::to_string(c.hi) +
                                           " is empty");
        }
    }
    DevianceReport r;
    r.index = idx;
    r.classes = classes;
    r.grouped = grouped;
    r.per_cell = Eigen::MatrixXd::Constant(idx.n_ages(), idx.n_years(), kNaN);
    r.per_class = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(classes.size()), idx.n_years(), kNaN);
    r.per_year = Eigen::VectorXd::Zero(idx.n_years());

    const auto &deaths = dataset.deaths();
    for (int j = 0; j < idx.n_years(); ++j) {
        for (std::size_t c = 0; c < classes.size(); ++c) {
            double obs = 0.0;
            double fit = 0.0;
            double cells = 0.0;
            int used = 0;
            for (int age = std::max(classes[c].lo, idx.age_min); age <= std::min(classes[c].hi, idx.age_max);
                 ++age) {
                const int i = idx.row(age);
                if (!dataset.usable(i, j) || !fitted.present(i, j)) {
                    continue;
                }
                const auto x2 = chi2_cell(deaths.value(i, j), fitted.value(i, j));
                if (x2) {
                    r.per_cell(i, j) = *x2;
                    cells += *x2;
                } else {
                    ++r.excluded_cells;
                }
                obs += deaths.value(i, j);
                fit += fitted.value(i, j);
                ++used;
            }
            if (used == 0) {
                continue;
            }
            if (grouped) {
                if (const auto x2 = chi2_cell(obs, fit)) {
                    r.per_class(static_cast<Eigen::Index>(c), j) = *x2;
                }
            } else {
                r.per_class(static_cast<Eigen::Index>(c), j) = cells;
            }
        }
        for (Eigen::Index c = 0; c < r.per_class.rows(); ++c) {
            if (!std::isnan(r.per_class(c, j))) {
                r.per_year(j) += r.per_class(c, j);
            }
        }
    }
    return r;
}

double rate_variance(double q, double exposure) {
    if (!(exposure > 0.0)) {
        throw DomainError(kModule, "exposure must be positive, got " + std::to_string(exposure));
    }
    if (!(q >= 0.0 && q <= 1.0)) {
        throw DomainError(kModule, "rate " + std::to_string(q) + " outside [0,1]");
    }
    return q * (1.0 - q) / exposure;
}

std::vector<VariancePoint> variance_curve(const std::vector<double> &rates, int age_min, double initial_exposure) {
    std::vector<VariancePoint> out;
    double l = initial_exposure;
    for (std::size_t k = 0; k < rates.size() && l > 0.0; ++k) {
        out.push_back({age_min + static_cast<int>(k), l, rate_variance(rates[k], l)});
        l *= 1.0 - rates[k];
    }
    return out;
}

ResidualReport residual_grid(const CellGrid &model_surface, const CellGrid &raw_hazard) {
    if (model_surface.kind() != GridKind::Hazard || raw_hazard.kind() != GridKind::Hazard) {
        throw ValidationError(kModule, "residuals need two hazard grids");
    }
    const auto &idx = raw_hazard.index();
    if (!model_surface.index().covers(idx)) {
        throw ShapeError(kModule, "model surface does not cover the raw hazard grid");
    }
    const CellGrid fit = model_surface.slice(idx);
    Eigen::MatrixXd res = Eigen::MatrixXd::Zero(idx.n_ages(), idx.n_years());
    Mask present = Mask::Constant(idx.n_ages(), idx.n_years(), false);
    ResidualReport r{CellGrid::filled(idx, GridKind::LogHazard, 0.0), {}, {}, {}, {}};
    for (int i = 0; i < idx.n_ages(); ++i) {
        double sum = 0.0;
        double sq = 0.0;
        int n = 0;
        for (int j = 0; j < idx.n_years(); ++j) {
            if (!raw_hazard.present(i, j) || !fit.present(i, j) || !(raw_hazard.value(i, j) > 0.0) ||
                !(fit.value(i, j) > 0.0)) {
                continue;
            }
            const double e = std::log(raw_hazard.value(i, j)) - std::log(fit.value(i, j));
            res(i, j) = e;
            present(i, j) = true;
            sum += e;
            ++n;
        }
        const double mean = n > 0 ? sum / n : kNaN;
        for (int j = 0; j < idx.n_years(); ++j) {
            if (present(i, j)) {
                sq += (res(i, j) - mean) * (res(i, j) - mean);
            }
        }
        r.ages.push_back(idx.age_min + i);
        r.mean.push_back(mean);
        r.variance.push_back(n > 0 ? sq / n : kNaN);
        r.count.push_back(n);
    }
    r.residuals = CellGrid(idx, GridKind::LogHazard, std::move(res), std::move(present));
    return r;
}

} // namespace mortab
