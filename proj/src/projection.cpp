#include "mortab/projection.hpp"

#include "mortab/error.hpp"

#include <cmath>
#include <string>

namespace mortab {

namespace {

const char *kModule = "projection-valuation";

} // namespace

std::string_view to_string(Provenance p) noexcept {
    switch (p) {
    case Provenance::LeeCarter:
        return "lee-carter";
    case Provenance::LogPoissonFree:
        return "log-poisson";
    case Provenance::LogPoissonConstrained:
        return "log-poisson-constrained";
    case Provenance::LogitReference:
        return "logit";
    case Provenance::Raw:
        return "raw";
    }
    return "unknown";
}

Provenance provenance_from_string(std::string_view name) {
    for (auto p : {Provenance::LeeCarter, Provenance::LogPoissonFree, Provenance::LogPoissonConstrained,
                   Provenance::LogitReference, Provenance::Raw}) {
        if (to_string(p) == name) {
            return p;
        }
    }
    throw ValidationError(kModule, "unknown model '" + std::string(name) + "'");
}

ProspectiveTable::ProspectiveTable(CellGrid q, Provenance provenance, ContinuousHazard hazard)
    : q_(std::move(q)), provenance_(provenance), hazard_(std::move(hazard)) {
    if (q_.kind() != GridKind::Rate) {
        throw ValidationError(kModule, "prospective table needs a rate grid");
    }
    const auto &idx = q_.index();
    for (int j = 0; j < q_.cols(); ++j) {
        for (int i = 0; i < q_.rows(); ++i) {
            if (!q_.present(i, j)) {
                throw CoverageError(kModule, "prospective table has a missing cell at age " +
                                                 std::to_string(idx.age_min + i) + ", year " +
                                                 std::to_string(idx.year_min + j));
            }
            if (!(q_.value(i, j) < 1.0)) {
                throw ValidationError(kModule, "prospective table rate of 1 at age " +
                                                   std::to_string(idx.age_min + i) + ", year " +
                                                   std::to_string(idx.year_min + j));
            }
        }
    }
}

Eigen::VectorXd extrapolate_kappa(const Eigen::VectorXd &kappa, int horizon_years) {
    if (horizon_years < 0) {
        throw DomainError(kModule, "horizon must be non-negative");
    }
    const auto n = kappa.size();
    if (n < 2) {
        throw DomainError(kModule, "need at least 2 kappa values to extrapolate");
    }
    const double tbar = 0.5 * static_cast<double>(n - 1);
    const double kbar = kappa.mean();
    double sxy = 0.0;
    double sxx = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        const double dt = static_cast<double>(t) - tbar;
        sxy += dt * (kappa(t) - kbar);
        sxx += dt * dt;
    }
    const double slope = sxy / sxx;
    Eigen::VectorXd out(n + horizon_years);
    out.head(n) = kappa;
    for (int h = 0; h < horizon_years; ++h) {
        out(n + h) = kbar + slope * (static_cast<double>(n + h) - tbar);
    }
    return out;
}

LeeCarterParams project(const LeeCarterParams &params, int last_year) {
    const int extra = last_year - params.year_max();
    if (extra <= 0) {
        return params;
    }
    LeeCarterParams out = params;
    out.kappa = extrapolate_kappa(params.kappa, extra);
    return out;
}

int default_last_year(const AgeYearIndex &data, const ClosureParams &closure) {
    return data.year_max + (closure.omega - data.age_min);
}

namespace {

ProspectiveTable close_and_convert(const CellGrid &mu, Provenance provenance, const TableOptions &options,
                                   const CellGrid *raw_hazard, ContinuousHazard hazard = {}) {
    CellGrid closed = [&] {
        if (options.source == ClosureSource::Raw) {
            if (raw_hazard == nullptr) {
                throw ValidationError(kModule, "raw closure source needs the raw hazard grid");
            }
            return close_grid(mu, *raw_hazard, options.closure);
        }
        return close_grid(mu, options.closure);
    }();
    return ProspectiveTable(rate_grid(closed), provenance, std::move(hazard));
}

} // namespace

ProspectiveTable build_table(const LeeCarterParams &params, Provenance provenance, const TableOptions &options,
                             const CellGrid *raw_hazard) {
    const int last_year = options.last_year > 0 ? options.last_year
                                                : default_last_year(params.index(), options.closure);
    const LeeCarterParams projected = project(params, last_year);
    const CellGrid mu =
        surface(projected, AgeYearIndex(params.age_min, params.age_max(), params.year_min, last_year));
    return close_and_convert(mu, provenance, options, raw_hazard);
}

ContinuousHazard closed_parametric_hazard(const ConstrainedParams &params, const ClosureParams &closure) {
    closure.validate();
    return [params, closure](double age, double year) {
        const double p1 = closure.pivot_age - 1.0;
        if (age <= p1) {
            return std::exp(params.log_hazard(age, year));
        }
        const double log_base = params.log_hazard(closure.base_age, year);
        const double log_pivot = params.log_hazard(closure.pivot_age, year);
        const double log_p1 = params.log_hazard(p1, year);
        const double g80 = (log_pivot - log_base) / (closure.pivot_age - closure.base_age);
        const int steps = closure.omega - closure.pivot_age + 1;
        const double s = (std::log(closure.target_mu_omega) - log_p1 - steps * g80) / (0.5 * steps * (steps - 1));
        const double n = age - p1;
        return std::exp(log_p1 + n * g80 + 0.5 * s * n * (n - 1.0));
    };
}

ProspectiveTable build_table(const ConstrainedParams &params, const TableOptions &options,
                             const CellGrid *raw_hazard) {
    const AgeYearIndex fitted(params.age_min, params.age_max, params.year_min, params.year_max);
    const int last_year = options.last_year > 0 ? options.last_year : default_last_year(fitted, options.closure);
    const LeeCarterParams expanded = params.expand(last_year);
    const CellGrid mu = surface(expanded, AgeYearIndex(params.age_min, params.age_max, params.year_min, last_year));
    ContinuousHazard hazard;
    if (options.source == ClosureSource::Fitted) {
        hazard = closed_parametric_hazard(params, options.closure);
    }
    return close_and_convert(mu, Provenance::LogPoissonConstrained, options, raw_hazard, std::move(hazard));
}

ProspectiveTable build_raw_table(const Dataset &dataset, const ClosureParams &closure, int last_year) {
    const CellGrid rates = raw_rates(dataset);
    const CellGrid mu = hazard_grid(rates);
    const CellGrid closed = close_grid(mu, closure);
    const auto &out_idx = closed.index();
    Eigen::MatrixXd q(out_idx.n_ages(), out_idx.n_years());
    for (int j = 0; j < out_idx.n_years(); ++j) {
        for (int i = 0; i < out_idx.n_ages(); ++i) {
            const int age = out_idx.age_min + i;
            const int year = out_idx.year_min + j;
            if (const auto raw = rates.get(age, year); raw && *raw < 1.0) {
                q(i, j) = *raw;
            } else if (closed.present(i, j)) {
                q(i, j) = rate_from_hazard(closed.value(i, j));
            } else {
                throw CoverageError(kModule, "raw table: no rate at age " + std::to_string(age) + ", year " +
                                                 std::to_string(year) + " below the closure pivot");
            }
        }
    }
    ProspectiveTable table(CellGrid(out_idx, GridKind::Rate, std::move(q)), Provenance::Raw);
    return extend_flat(table, last_year);
}

ProspectiveTable extend_flat(const ProspectiveTable &table, int last_year) {
    const auto &idx = table.index();
    if (last_year <= idx.year_max) {
        return table;
    }
    const AgeYearIndex out_idx(idx.age_min, idx.age_max, idx.year_min, last_year);
    Eigen::MatrixXd q(out_idx.n_ages(), out_idx.n_years());
    q.leftCols(idx.n_years()) = table.q().values();
    for (int j = idx.n_years(); j < out_idx.n_years(); ++j) {
        q.col(j) = table.q().values().col(idx.n_years() - 1);
    }
    return ProspectiveTable(CellGrid(out_idx, GridKind::Rate, std::move(q)), table.provenance(), table.hazard());
}

ProspectiveTable truncate_years(const ProspectiveTable &table, int last_year) {
    const auto &idx = table.index();
    if (last_year >= idx.year_max) {
        return table;
    }
    return ProspectiveTable(table.q().slice(AgeYearIndex(idx.age_min, idx.age_max, idx.year_min, last_year)),
                            table.provenance(), table.hazard());
}

} // namespace mortab
