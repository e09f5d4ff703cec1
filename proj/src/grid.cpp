#include "mortab/grid.hpp"

#include "mortab/error.hpp"

#include <cmath>
#include <string>

namespace mortab {

namespace {

const char *kModule = "data-model";

std::string cell_name(const AgeYearIndex &index, int row, int col) {
    return "cell (age " + std::to_string(index.age_min + row) + ", year " +
           std::to_string(index.year_min + col) + ")";
}

void check_value(const AgeYearIndex &index, GridKind kind, int row, int col, double v) {
    if (!std::isfinite(v)) {
        throw ValidationError(kModule, std::string(to_string(kind)) + " grid: non-finite value at " +
                                           cell_name(index, row, col));
    }
    switch (kind) {
    case GridKind::Deaths:
    case GridKind::Exposure:
    case GridKind::Hazard:
        if (v < 0.0) {
            throw ValidationError(kModule, std::string(to_string(kind)) + " grid: negative value " +
                                               std::to_string(v) + " at " + cell_name(index, row, col));
        }
        break;
    case GridKind::Rate:
        if (v < 0.0 || v > 1.0) {
            throw ValidationError(kModule, "rate grid: value " + std::to_string(v) + " outside [0,1] at " +
                                               cell_name(index, row, col));
        }
        break;
    case GridKind::LogHazard:
        break;
    }
}

} // namespace

AgeYearIndex::AgeYearIndex(int age_lo, int age_hi, int year_lo, int year_hi)
    : age_min(age_lo), age_max(age_hi), year_min(year_lo), year_max(year_hi) {
    if (age_min > age_max) {
        throw ValidationError(kModule, "age_min " + std::to_string(age_min) + " > age_max " +
                                           std::to_string(age_max));
    }
    if (year_min > year_max) {
        throw ValidationError(kModule, "year_min " + std::to_string(year_min) + " > year_max " +
                                           std::to_string(year_max));
    }
}

bool AgeYearIndex::covers(const AgeYearIndex &other) const noexcept {
    return other.age_min >= age_min && other.age_max <= age_max && other.year_min >= year_min &&
           other.year_max <= year_max;
}

std::string_view to_string(GridKind kind) noexcept {
    switch (kind) {
    case GridKind::Deaths:
        return "deaths";
    case GridKind::Exposure:
        return "exposure";
    case GridKind::Rate:
        return "rate";
    case GridKind::Hazard:
        return "hazard";
    case GridKind::LogHazard:
        return "log-hazard";
    }
    return "unknown";
}

CellGrid::CellGrid(AgeYearIndex index, GridKind kind, Eigen::MatrixXd values)
    : CellGrid(index, kind, values, Mask::Constant(values.rows(), values.cols(), true)) {}

CellGrid::CellGrid(AgeYearIndex index, GridKind kind, Eigen::MatrixXd values, Mask present)
    : index_(index), kind_(kind), values_(std::move(values)), present_(std::move(present)) {
    if (values_.rows() != index_.n_ages() || values_.cols() != index_.n_years()) {
        throw ShapeError(kModule, "grid values are " + std::to_string(values_.rows()) + "x" +
                                      std::to_string(values_.cols()) + " but index is " +
                                      std::to_string(index_.n_ages()) + "x" +
                                      std::to_string(index_.n_years()));
    }
    if (present_.rows() != values_.rows() || present_.cols() != values_.cols()) {
        throw ShapeError(kModule, "mask shape differs from value shape");
    }
    for (int j = 0; j < cols(); ++j) {
        for (int i = 0; i < rows(); ++i) {
            if (present_(i, j)) {
                check_value(index_, kind_, i, j, values_(i, j));
            } else {
                values_(i, j) = 0.0;
            }
        }
    }
}

CellGrid CellGrid::filled(const AgeYearIndex &index, GridKind kind, double value) {
    return CellGrid(index, kind, Eigen::MatrixXd::Constant(index.n_ages(), index.n_years(), value));
}

std::optional<double> CellGrid::get(int age, int year) const {
    if (!index_.contains(age, year)) {
        return std::nullopt;
    }
    const int i = index_.row(age);
    const int j = index_.col(year);
    if (!present_(i, j)) {
        return std::nullopt;
    }
    return values_(i, j);
}

double CellGrid::at(int age, int year) const {
    if (auto v = get(age, year)) {
        return *v;
    }
    if (!index_.contains(age, year)) {
        throw CoverageError(kModule, "age " + std::to_string(age) + ", year " + std::to_string(year) +
                                         " outside grid");
    }
    throw CoverageError(kModule, "missing " + cell_name(index_, index_.row(age), index_.col(year)));
}

std::size_t CellGrid::missing_count() const noexcept {
    return static_cast<std::size_t>(present_.size() - present_.count());
}

CellGrid CellGrid::slice(const AgeYearIndex &sub) const {
    if (!index_.covers(sub)) {
        throw CoverageError(kModule, "requested slice not covered by grid");
    }
    const int r0 = index_.row(sub.age_min);
    const int c0 = index_.col(sub.year_min);
    return CellGrid(sub, kind_, values_.block(r0, c0, sub.n_ages(), sub.n_years()),
                    present_.block(r0, c0, sub.n_ages(), sub.n_years()));
}

Dataset::Dataset(CellGrid deaths, CellGrid exposure)
    : deaths_(std::move(deaths)), exposure_(std::move(exposure)) {
    if (deaths_.kind() != GridKind::Deaths || exposure_.kind() != GridKind::Exposure) {
        throw ValidationError(kModule, "dataset needs a deaths grid and an exposure grid");
    }
    if (!(deaths_.index() == exposure_.index())) {
        throw ShapeError(kModule, "deaths and exposure grids have different indices");
    }
    for (int j = 0; j < deaths_.cols(); ++j) {
        for (int i = 0; i < deaths_.rows(); ++i) {
            if (!deaths_.present(i, j) || !exposure_.present(i, j)) {
                continue;
            }
            const double d = deaths_.value(i, j);
            const double l = exposure_.value(i, j);
            if (l > 0.0 && d > l) {
                throw ValidationError(kModule, "deaths " + std::to_string(d) + " exceed exposure " +
                                                   std::to_string(l) + " at " +
                                                   cell_name(index(), i, j));
            }
        }
    }
}

bool Dataset::usable(int row, int col) const {
    return deaths_.present(row, col) && exposure_.present(row, col) && exposure_.value(row, col) > 0.0;
}

Dataset Dataset::slice(const AgeYearIndex &sub) const {
    return Dataset(deaths_.slice(sub), exposure_.slice(sub));
}

double hazard_from_rate(double q) {
    if (std::isnan(q) || q < 0.0 || q > 1.0) {
        throw DomainError(kModule, "rate " + std::to_string(q) + " outside [0,1)");
    }
    if (q == 1.0) {
        throw InfiniteHazardError(kModule, "rate of 1 has infinite hazard");
    }
    return -std::log1p(-q);
}

double rate_from_hazard(double mu) {
    if (std::isnan(mu) || mu < 0.0) {
        throw DomainError(kModule, "hazard " + std::to_string(mu) + " is negative");
    }
    return -std::expm1(-mu);
}

CellGrid raw_rates(const Dataset &dataset) {
    const auto &idx = dataset.index();
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(idx.n_ages(), idx.n_years());
    Mask present = Mask::Constant(idx.n_ages(), idx.n_years(), false);
    for (int j = 0; j < idx.n_years(); ++j) {
        for (int i = 0; i < idx.n_ages(); ++i) {
            if (dataset.usable(i, j)) {
                q(i, j) = dataset.deaths().value(i, j) / dataset.exposure().value(i, j);
                present(i, j) = true;
            }
        }
    }
    return CellGrid(idx, GridKind::Rate, std::move(q), std::move(present));
}

CellGrid hazard_grid(const CellGrid &rates, double hazard_cap) {
    if (rates.kind() != GridKind::Rate) {
        throw ValidationError(kModule, "hazard_grid expects a rate grid");
    }
    if (!(hazard_cap > 0.0)) {
        throw DomainError(kModule, "hazard cap must be positive");
    }
    Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(rates.rows(), rates.cols());
    for (int j = 0; j < rates.cols(); ++j) {
        for (int i = 0; i < rates.rows(); ++i) {
            if (!rates.present(i, j)) {
                continue;
            }
            const double q = rates.value(i, j);
            mu(i, j) = q >= 1.0 ? hazard_cap : std::min(hazard_from_rate(q), hazard_cap);
        }
    }
    return CellGrid(rates.index(), GridKind::Hazard, std::move(mu), rates.mask());
}

CellGrid rate_grid(const CellGrid &hazards) {
    if (hazards.kind() != GridKind::Hazard) {
        throw ValidationError(kModule, "rate_grid expects a hazard grid");
    }
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(hazards.rows(), hazards.cols());
    for (int j = 0; j < hazards.cols(); ++j) {
        for (int i = 0; i < hazards.rows(); ++i) {
            if (hazards.present(i, j)) {
                q(i, j) = rate_from_hazard(hazards.value(i, j));
            }
        }
    }
    return CellGrid(hazards.index(), GridKind::Rate, std::move(q), hazards.mask());
}

CellGrid log_hazard_grid(const CellGrid &hazards) {
    if (hazards.kind() != GridKind::Hazard) {
        throw ValidationError(kModule, "log_hazard_grid expects a hazard grid");
    }
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(hazards.rows(), hazards.cols());
    Mask present = hazards.mask();
    for (int j = 0; j < hazards.cols(); ++j) {
        for (int i = 0; i < hazards.rows(); ++i) {
            if (!present(i, j)) {
                continue;
            }
            const double mu = hazards.value(i, j);
            if (mu > 0.0) {
                y(i, j) = std::log(mu);
            } else {
                present(i, j) = false;
            }
        }
    }
    return CellGrid(hazards.index(), GridKind::LogHazard, std::move(y), std::move(present));
}

} // namespace mortab
