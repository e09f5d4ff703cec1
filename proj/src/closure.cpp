#include "mortab/closure.hpp"

#include "mortab/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace mortab {

namespace {

const char *kModule = "closure";

double anchor(const HazardCurve &curve, int age) {
    const auto v = curve.at(age);
    if (!v) {
        throw ClosureError(kModule, "missing hazard at anchor age " + std::to_string(age));
    }
    if (!(*v > 0.0)) {
        throw ClosureError(kModule, "non-positive hazard " + std::to_string(*v) + " at anchor age " +
                                        std::to_string(age));
    }
    return *v;
}

} // namespace

void ClosureParams::validate() const {
    if (!(base_age < pivot_age && pivot_age < omega)) {
        throw DomainError(kModule, "need base_age < pivot_age < omega, got " + std::to_string(base_age) +
                                       ", " + std::to_string(pivot_age) + ", " + std::to_string(omega));
    }
    if (!(target_mu_omega > 0.0) || !std::isfinite(target_mu_omega)) {
        throw DomainError(kModule, "target_mu_omega must be positive");
    }
}

std::optional<double> HazardCurve::at(int age) const {
    if (age < age_min || age > age_max()) {
        return std::nullopt;
    }
    return values[static_cast<std::size_t>(age - age_min)];
}

double growth_rate_g80(double mu_base, double mu_pivot, int span) {
    if (!(mu_base > 0.0) || !(mu_pivot > 0.0)) {
        throw DomainError(kModule, "g80 needs positive hazards at the base and pivot ages");
    }
    if (span <= 0) {
        throw DomainError(kModule, "g80 span must be positive");
    }
    return std::log(mu_pivot / mu_base) / span;
}

double slope_s(double mu_before_pivot, double g80, double target_mu_omega, int steps) {
    if (!(mu_before_pivot > 0.0) || !(target_mu_omega > 0.0)) {
        throw DomainError(kModule, "slope needs positive hazard before the pivot and positive target");
    }
    if (steps < 2) {
        throw DomainError(kModule, "slope needs at least two closure steps");
    }
    const double triangle = 0.5 * steps * (steps - 1);
    return (std::log(target_mu_omega / mu_before_pivot) - steps * g80) / triangle;
}

ClosedCurve close_curve(const HazardCurve &curve, const ClosureParams &params) {
    params.validate();
    return close_curve(curve, params, anchor(curve, params.base_age), anchor(curve, params.pivot_age));
}

ClosedCurve close_curve(const HazardCurve &curve, const ClosureParams &params, double mu_base,
                        double mu_pivot) {
    params.validate();
    if (curve.age_min > params.base_age) {
        throw ClosureError(kModule, "curve starts at age " + std::to_string(curve.age_min) +
                                        ", after base age " + std::to_string(params.base_age));
    }
    const double mu_before_pivot = anchor(curve, params.pivot_age - 1);
    const double g80 = growth_rate_g80(mu_base, mu_pivot, params.pivot_age - params.base_age);
    const int steps = params.omega - params.pivot_age + 1;
    const double s = slope_s(mu_before_pivot, g80, params.target_mu_omega, steps);

    ClosedCurve out;
    out.schedule.g80 = g80;
    out.schedule.s = s;
    out.schedule.base_age = params.base_age;
    out.schedule.pivot_age = params.pivot_age;
    out.schedule.omega = params.omega;
    out.curve.age_min = curve.age_min;
    out.curve.values.assign(static_cast<std::size_t>(params.omega - curve.age_min + 1), std::nullopt);

    for (int age = curve.age_min; age < params.pivot_age; ++age) {
        out.curve.values[static_cast<std::size_t>(age - curve.age_min)] = curve.at(age);
    }
    double log_mu = std::log(mu_before_pivot);
    for (int age = params.pivot_age; age <= params.omega; ++age) {
        log_mu += out.schedule.increment(age);
        out.curve.values[static_cast<std::size_t>(age - curve.age_min)] = std::exp(log_mu);
    }

    const auto base = out.curve.at(params.base_age);
    for (int age = params.base_age + 1; age <= params.omega; ++age) {
        const auto v = out.curve.at(age);
        if (base && v && *base > 0.0 && *v > 0.0) {
            out.schedule.average_growth[age] = std::log(*v / *base) / (age - params.base_age);
        }
    }
    return out;
}

HazardCurve column_curve(const CellGrid &hazards, int year) {
    if (!hazards.index().has_year(year)) {
        throw CoverageError(kModule, "year " + std::to_string(year) + " outside hazard grid");
    }
    HazardCurve curve;
    curve.age_min = hazards.index().age_min;
    const int j = hazards.index().col(year);
    for (int i = 0; i < hazards.rows(); ++i) {
        curve.values.push_back(hazards.present(i, j) ? std::optional<double>(hazards.value(i, j))
                                                     : std::nullopt);
    }
    return curve;
}

namespace {

CellGrid assemble(const CellGrid &hazards, const ClosureParams &params,
                  const std::function<ClosedCurve(int year, const HazardCurve &)> &close_year) {
    if (hazards.kind() != GridKind::Hazard) {
        throw ValidationError(kModule, "closure expects a hazard grid");
    }
    params.validate();
    const auto &idx = hazards.index();
    if (idx.age_max > params.omega) {
        throw ClosureError(kModule, "grid extends to age " + std::to_string(idx.age_max) +
                                        ", beyond omega " + std::to_string(params.omega));
    }
    const AgeYearIndex out_idx(idx.age_min, params.omega, idx.year_min, idx.year_max);
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(out_idx.n_ages(), out_idx.n_years());
    Mask present = Mask::Constant(out_idx.n_ages(), out_idx.n_years(), false);
    for (int year = idx.year_min; year <= idx.year_max; ++year) {
        const ClosedCurve closed = close_year(year, column_curve(hazards, year));
        const int j = out_idx.col(year);
        for (int i = 0; i < out_idx.n_ages(); ++i) {
            if (const auto &v = closed.curve.values[static_cast<std::size_t>(i)]) {
                values(i, j) = *v;
                present(i, j) = true;
            }
        }
    }
    return CellGrid(out_idx, GridKind::Hazard, std::move(values), std::move(present));
}

} // namespace

CellGrid close_grid(const CellGrid &hazards, const ClosureParams &params) {
    return assemble(hazards, params, [&](int year, const HazardCurve &curve) {
        try {
            return close_curve(curve, params);
        } catch (const ClosureError &e) {
            throw ClosureError(kModule, e.detail() + " (year " + std::to_string(year) + ")");
        }
    });
}

CellGrid close_grid(const CellGrid &hazards, const CellGrid &anchors, const ClosureParams &params) {
    if (anchors.kind() != GridKind::Hazard) {
        throw ValidationError(kModule, "closure anchors must be a hazard grid");
    }
    const auto &aidx = anchors.index();
    return assemble(hazards, params, [&](int year, const HazardCurve &curve) {
        const int anchor_year = std::clamp(year, aidx.year_min, aidx.year_max);
        const HazardCurve source = column_curve(anchors, anchor_year);
        try {
            return close_curve(curve, params, anchor(source, params.base_age),
                               anchor(source, params.pivot_age));
        } catch (const ClosureError &e) {
            throw ClosureError(kModule, e.detail() + " (anchor year " +
                                            std::to_string(anchor_year) + ")");
        }
    });
}

} // namespace mortab
