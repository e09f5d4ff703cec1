#pragma once

#include "mortab/closure.hpp"
#include "mortab/grid.hpp"
#include "mortab/lee_carter.hpp"
#include "mortab/log_poisson.hpp"

#include <Eigen/Core>

#include <functional>
#include <string_view>

namespace mortab {

enum class Provenance { LeeCarter, LogPoissonFree, LogPoissonConstrained, LogitReference, Raw };

std::string_view to_string(Provenance p) noexcept;
Provenance provenance_from_string(std::string_view name);

/// Force of mortality as a function of real-valued age and calendar time.
using ContinuousHazard = std::function<double(double age, double year)>;

/// Closed age x year table of death rates. The last age is omega; nobody
/// survives past it. A parametric hazard is attached when the table comes
/// from a model with a closed form in (age, year).
class ProspectiveTable {
public:
    ProspectiveTable(CellGrid q, Provenance provenance, ContinuousHazard hazard = {});

    const AgeYearIndex &index() const noexcept { return q_.index(); }
    const CellGrid &q() const noexcept { return q_; }
    int omega() const noexcept { return q_.index().age_max; }
    Provenance provenance() const noexcept { return provenance_; }
    const ContinuousHazard &hazard() const noexcept { return hazard_; }
    bool parametric() const noexcept { return static_cast<bool>(hazard_); }

    double rate(int age, int year) const { return q_.at(age, year); }

private:
    CellGrid q_;
    Provenance provenance_;
    ContinuousHazard hazard_;
};

/// Extends a fitted kappa series by `horizon_years` along its least-squares line.
/// The fitted values are returned unchanged in front.
Eigen::VectorXd extrapolate_kappa(const Eigen::VectorXd &kappa, int horizon_years);

/// Lee-Carter style parameters with kappa extended linearly up to `last_year`.
LeeCarterParams project(const LeeCarterParams &params, int last_year);

enum class ClosureSource { Raw, Fitted };

struct TableOptions {
    ClosureParams closure;
    ClosureSource source = ClosureSource::Fitted;
    int last_year = 0; // 0 = data year_max + (omega - age_min)
};

int default_last_year(const AgeYearIndex &data, const ClosureParams &closure);

/// Exponentiates a (projected) bilinear surface, closes each year at the old
/// ages and converts to rates. `raw_hazard` supplies the closure growth
/// anchors when `options.source` is Raw.
ProspectiveTable build_table(const LeeCarterParams &params, Provenance provenance, const TableOptions &options,
                             const CellGrid *raw_hazard = nullptr);

/// Same for the polynomial model; the resulting table carries the closed
/// parametric hazard for continuous valuation.
ProspectiveTable build_table(const ConstrainedParams &params, const TableOptions &options,
                             const CellGrid *raw_hazard = nullptr);

/// Parametric hazard below the pivot age; above it, the continuous version of
/// the closure recursion, ln mu(p-1+n) = ln mu(p-1) + n g80 + s n(n-1)/2,
/// with anchors read from the parametric surface in the same year.
ContinuousHazard closed_parametric_hazard(const ConstrainedParams &params, const ClosureParams &closure);

/// Raw rates with missing cells and ages past the data filled from the
/// closed raw curve; years after the data repeat the last observed year.
ProspectiveTable build_raw_table(const Dataset &dataset, const ClosureParams &closure, int last_year);

/// Repeats the last year of `table` up to `last_year`.
ProspectiveTable extend_flat(const ProspectiveTable &table, int last_year);

/// Restricts `table` to years up to `last_year` (inclusive).
ProspectiveTable truncate_years(const ProspectiveTable &table, int last_year);

} // namespace mortab
