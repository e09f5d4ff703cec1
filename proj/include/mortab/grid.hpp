#pragma once

#include <Eigen/Core>

#include <optional>
#include <string_view>
#include <vector>

namespace mortab {

/// Inclusive age and calendar-year ranges of a Lexis grid.
struct AgeYearIndex {
    int age_min = 0;
    int age_max = 0;
    int year_min = 0;
    int year_max = 0;

    AgeYearIndex() = default;
    AgeYearIndex(int age_lo, int age_hi, int year_lo, int year_hi);

    int n_ages() const noexcept { return age_max - age_min + 1; }
    int n_years() const noexcept { return year_max - year_min + 1; }

    bool has_age(int age) const noexcept { return age >= age_min && age <= age_max; }
    bool has_year(int year) const noexcept { return year >= year_min && year <= year_max; }
    bool contains(int age, int year) const noexcept { return has_age(age) && has_year(year); }
    bool covers(const AgeYearIndex &other) const noexcept;

    int row(int age) const noexcept { return age - age_min; }
    int col(int year) const noexcept { return year - year_min; }

    friend bool operator==(const AgeYearIndex &, const AgeYearIndex &) = default;
};

enum class GridKind { Deaths, Exposure, Rate, Hazard, LogHazard };

std::string_view to_string(GridKind kind) noexcept;

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Dense age x year grid, row = age and column = year. Missing cells are
/// flagged by the mask; their stored value is zero and never read.
///
/// Values are checked against the kind at construction and the grid is
/// immutable afterwards.
class CellGrid {
public:
    CellGrid(AgeYearIndex index, GridKind kind, Eigen::MatrixXd values);
    CellGrid(AgeYearIndex index, GridKind kind, Eigen::MatrixXd values, Mask present);

    static CellGrid filled(const AgeYearIndex &index, GridKind kind, double value);

    const AgeYearIndex &index() const noexcept { return index_; }
    GridKind kind() const noexcept { return kind_; }
    int rows() const noexcept { return static_cast<int>(values_.rows()); }
    int cols() const noexcept { return static_cast<int>(values_.cols()); }

    const Eigen::MatrixXd &values() const noexcept { return values_; }
    const Mask &mask() const noexcept { return present_; }

    bool present(int row, int col) const { return present_(row, col); }
    double value(int row, int col) const { return values_(row, col); }

    /// Lookup by (age, year). Out-of-range or missing cells give nullopt.
    std::optional<double> get(int age, int year) const;
    /// Lookup by (age, year); throws CoverageError for a missing cell.
    double at(int age, int year) const;

    std::size_t missing_count() const noexcept;

    /// Restrict to a sub-index; throws CoverageError if not covered.
    CellGrid slice(const AgeYearIndex &sub) const;

private:
    AgeYearIndex index_;
    GridKind kind_;
    Eigen::MatrixXd values_;
    Mask present_;
};

/// Observed deaths and exposures on a shared index. Cells with zero
/// exposure carry no information and are treated as missing downstream.
class Dataset {
public:
    Dataset(CellGrid deaths, CellGrid exposure);

    const CellGrid &deaths() const noexcept { return deaths_; }
    const CellGrid &exposure() const noexcept { return exposure_; }
    const AgeYearIndex &index() const noexcept { return deaths_.index(); }

    /// True when both deaths and a positive exposure are available.
    bool usable(int row, int col) const;

    Dataset slice(const AgeYearIndex &sub) const;

private:
    CellGrid deaths_;
    CellGrid exposure_;
};

/// mu = -ln(1 - q) under a constant force of mortality within each Lexis square.
double hazard_from_rate(double q);

/// q = 1 - exp(-mu).
double rate_from_hazard(double mu);

inline constexpr double default_hazard_cap = 12.0;

/// q_hat = D / L cell-wise; zero-exposure cells become missing.
CellGrid raw_rates(const Dataset &dataset);

/// Rate grid to hazard grid. Rates of exactly one map to `hazard_cap`.
CellGrid hazard_grid(const CellGrid &rates, double hazard_cap = default_hazard_cap);

/// Hazard grid to rate grid.
CellGrid rate_grid(const CellGrid &hazards);

/// ln(mu) cell-wise; zero hazards carry no log and become missing.
CellGrid log_hazard_grid(const CellGrid &hazards);

} // namespace mortab
