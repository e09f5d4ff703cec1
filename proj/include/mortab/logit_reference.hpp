#pragma once

#include "mortab/closure.hpp"
#include "mortab/grid.hpp"
#include "mortab/projection.hpp"

#include <vector>

namespace mortab {

double logit(double q);
double inverse_logit(double y);

/// External period tables, one rate column per calendar year, historical and projected.
class ReferenceTableSet {
public:
    explicit ReferenceTableSet(CellGrid q_ref);

    const AgeYearIndex &index() const noexcept { return q_.index(); }
    const CellGrid &q() const noexcept { return q_; }

private:
    CellGrid q_;
};

enum class LogitFitMode { OLS, E60Constrained };

struct LogitModel {
    double a = 1.0;
    double b = 0.0;
    LogitFitMode mode = LogitFitMode::OLS;
    int age_floor = 60;
    double r2 = 0.0;
    int n_points = 0;
    // Filled by the constrained fit only.
    double margin = 0.0;
    double e_raw = 0.0;
    double e_smoothed = 0.0;
    int valuation_year = 0;
};

/// Pooled least squares of logit(q_hat) on logit(q_ref) over cells with
/// age >= age_floor and both rates strictly inside (0, 1).
LogitModel fit_ols(const CellGrid &experience, const ReferenceTableSet &reference, int age_floor = 60);

struct YearlyLogitFit {
    int year = 0;
    double a = 0.0;
    double b = 0.0;
    int n_points = 0;
};

/// One (a_t, b_t) per experience year. Years with fewer than 3 usable cells are skipped.
std::vector<YearlyLogitFit> fit_ols_by_year(const CellGrid &experience, const ReferenceTableSet &reference,
                                            int age_floor = 60);

struct E60Options {
    double a_lo = 0.5;
    double a_hi = 1.5;
    double b_lo = -2.0;
    double b_hi = 2.0;
    int a_nodes = 61;
    int b_nodes = 81;
    int age = 60;
    ClosureParams closure;

    void validate() const;
};

/// Life expectancies at `options.age` for a cohort entering in the valuation
/// year. Both tables use the experience years only and repeat the last one.
struct E60Evaluator {
    E60Evaluator(const Dataset &experience, const ReferenceTableSet &reference, int valuation_year,
                 const E60Options &options);

    double e_raw() const noexcept { return e_raw_; }
    double e_smoothed(double a, double b) const;
    double margin(double a, double b) const { return e_smoothed(a, b) - e_raw_; }

private:
    std::vector<double> ref_logits_; // reference logits on the cohort diagonal, ages age..omega
    double e_raw_ = 0.0;
};

/// (a, b) with the smallest strictly positive margin e_smoothed - e_raw in
/// the search box. The margin falls as b grows, so along the OLS slope (or
/// the nearest grid slope with a sign change) the boundary is found by
/// bisection on b. Without a sign change inside the box, Nelder-Mead with an
/// infeasibility penalty refines the best grid node.
/// valuation_year = 0 means the last experience year.
LogitModel fit_e60(const Dataset &experience, const ReferenceTableSet &reference, int valuation_year = 0,
                   const E60Options &options = {});

/// inverse_logit(a logit(q_ref) + b) on every present reference cell.
CellGrid apply(const LogitModel &model, const ReferenceTableSet &reference);
/// Same on a sub-index; throws CoverageError if the reference does not cover it.
CellGrid apply(const LogitModel &model, const ReferenceTableSet &reference, const AgeYearIndex &index);

/// Prospective table from the model on the whole reference index.
ProspectiveTable build_logit_table(const LogitModel &model, const ReferenceTableSet &reference);

} // namespace mortab
