#include "mortab/logit_reference.hpp"

#include "mortab/error.hpp"
#include "mortab/valuation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

namespace mortab {

namespace {

const char *kModule = "logit-reference";

struct Sums {
    double n = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;

    void add(double x, double y) {
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
};

template <typename Visit>
void for_each_pair(const CellGrid &experience, const ReferenceTableSet &reference, int age_floor, Visit visit) {
    if (experience.kind() != GridKind::Rate) {
        throw ValidationError(kModule, "experience must be a rate grid");
    }
    const auto &idx = experience.index();
    for (int j = 0; j < idx.n_years(); ++j) {
        for (int i = 0; i < idx.n_ages(); ++i) {
            const int age = idx.age_min + i;
            const int year = idx.year_min + j;
            if (age < age_floor || !experience.present(i, j)) {
                continue;
            }
            const double q = experience.value(i, j);
            const auto q_ref = reference.q().get(age, year);
            if (q <= 0.0 || q >= 1.0 || !q_ref) {
                continue;
            }
            visit(year, logit(*q_ref), logit(q));
        }
    }
}

// Closed-form least squares; centred sums keep the variance honest.
void solve(const Sums &s, double &a, double &b, double &r2) {
    if (s.n < 3.0) {
        throw FitError(kModule, "need at least 3 usable cells, got " + std::to_string(static_cast<int>(s.n)));
    }
    const double mx = s.sx / s.n;
    const double my = s.sy / s.n;
    const double vxx = s.sxx - s.n * mx * mx;
    const double vxy = s.sxy - s.n * mx * my;
    const double vyy = s.syy - s.n * my * my;
    if (!(vxx > 1e-12 * std::max(1.0, s.sxx))) {
        throw FitError(kModule, "reference logits have no variance over the usable cells");
    }
    a = vxy / vxx;
    b = my - a * mx;
    r2 = vyy > 0.0 ? (vxy * vxy) / (vxx * vyy) : 1.0;
}

} // namespace

double logit(double q) {
    if (!(q > 0.0 && q < 1.0)) {
        throw DomainError(kModule, "logit needs 0 < q < 1, got " + std::to_string(q));
    }
    return std::log(q) - std::log1p(-q);
}

double inverse_logit(double y) {
    if (y >= 0.0) {
        return 1.0 / (1.0 + std::exp(-y));
    }
    const double e = std::exp(y);
    return e / (1.0 + e);
}

ReferenceTableSet::ReferenceTableSet(CellGrid q_ref) : q_(std::move(q_ref)) {
    if (q_.kind() != GridKind::Rate) {
        throw ValidationError(kModule, "reference must be a rate grid");
    }
    const auto &idx = q_.index();
    for (int j = 0; j < q_.cols(); ++j) {
        for (int i = 0; i < q_.rows(); ++i) {
            if (q_.present(i, j) && !(q_.value(i, j) > 0.0 && q_.value(i, j) < 1.0)) {
                throw ValidationError(kModule, "reference rate outside (0,1) at age " +
                                                   std::to_string(idx.age_min + i) + ", year " +
                                                   std::to_string(idx.year_min + j));
            }
        }
    }
}

LogitModel fit_ols(const CellGrid &experience, const ReferenceTableSet &reference, int age_floor) {
    Sums s;
    for_each_pair(experience, reference, age_floor, [&](int, double x, double y) { s.add(x, y); });
    LogitModel m;
    m.mode = LogitFitMode::OLS;
    m.age_floor = age_floor;
    m.n_points = static_cast<int>(s.n);
    solve(s, m.a, m.b, m.r2);
    return m;
}

std::vector<YearlyLogitFit> fit_ols_by_year(const CellGrid &experience, const ReferenceTableSet &reference,
                                            int age_floor) {
    const auto &idx = experience.index();
    std::vector<Sums> sums(static_cast<std::size_t>(idx.n_years()));
    for_each_pair(experience, reference, age_floor,
                  [&](int year, double x, double y) { sums[static_cast<std::size_t>(idx.col(year))].add(x, y); });
    std::vector<YearlyLogitFit> out;
    for (int j = 0; j < idx.n_years(); ++j) {
        const auto &s = sums[static_cast<std::size_t>(j)];
        if (s.n < 3.0) {
            continue;
        }
        YearlyLogitFit f;
        f.year = idx.year_min + j;
        f.n_points = static_cast<int>(s.n);
        double r2 = 0.0;
        solve(s, f.a, f.b, r2);
        out.push_back(f);
    }
    return out;
}

void E60Options::validate() const {
    if (!(a_lo < a_hi) || !(b_lo < b_hi) || a_nodes < 2 || b_nodes < 2) {
        throw DomainError(kModule, "invalid e60 search region");
    }
    closure.validate();
    if (age >= closure.omega) {
        throw DomainError(kModule, "valuation age must be below omega");
    }
}

E60Evaluator::E60Evaluator(const Dataset &experience, const ReferenceTableSet &reference, int valuation_year,
                           const E60Options &options) {
    options.validate();
    const auto &idx = experience.index();
    if (valuation_year < idx.year_min) {
        throw DomainError(kModule, "valuation year " + std::to_string(valuation_year) +
                                       " precedes the experience period");
    }
    const int omega = options.closure.omega;
    const int span = omega - options.age;
    const ProspectiveTable raw =
        extend_flat(build_raw_table(experience, options.closure, idx.year_max), valuation_year + span);
    e_raw_ = residual_life_expectancy(raw, options.age, valuation_year);

    ref_logits_.reserve(static_cast<std::size_t>(span));
    for (int j = 0; j < span; ++j) {
        const int age = options.age + j;
        const int year = std::min(valuation_year + j, idx.year_max);
        const auto q = reference.q().get(age, year);
        if (!q) {
            throw CoverageError(kModule, "reference has no rate at age " + std::to_string(age) + ", year " +
                                             std::to_string(year));
        }
        ref_logits_.push_back(logit(*q));
    }
}

double E60Evaluator::e_smoothed(double a, double b) const {
    double p = 1.0;
    double total = 0.5;
    for (double l : ref_logits_) {
        p *= 1.0 - inverse_logit(a * l + b);
        total += p;
    }
    return total;
}

namespace {

using Point = std::array<double, 2>;

Point clamp_to(const Point &p, const E60Options &o) {
    return {std::clamp(p[0], o.a_lo, o.a_hi), std::clamp(p[1], o.b_lo, o.b_hi)};
}

// Bisection on b at fixed a; lo is feasible, hi is not.
double boundary_b(const E60Evaluator &ev, double a, double lo, double hi) {
    for (int it = 0; it < 200 && hi - lo > 1e-13; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ev.margin(a, mid) > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return lo;
}

Point nelder_mead(const E60Evaluator &ev, Point start, const E60Options &o) {
    auto objective = [&](const Point &p) {
        const double m = ev.margin(p[0], p[1]);
        return m > 0.0 ? m : 1e6 - m;
    };
    const double da = 0.05 * (o.a_hi - o.a_lo);
    const double db = 0.05 * (o.b_hi - o.b_lo);
    std::array<Point, 3> s{start, clamp_to({start[0] + da, start[1]}, o), clamp_to({start[0], start[1] + db}, o)};
    std::array<double, 3> f{};
    for (int k = 0; k < 3; ++k) {
        f[static_cast<std::size_t>(k)] = objective(s[static_cast<std::size_t>(k)]);
    }
    for (int it = 0; it < 2000; ++it) {
        std::array<int, 3> order{0, 1, 2};
        std::sort(order.begin(), order.end(), [&](int l, int r) { return f[l] < f[r]; });
        const auto best = static_cast<std::size_t>(order[0]);
        const auto mid = static_cast<std::size_t>(order[1]);
        const auto worst = static_cast<std::size_t>(order[2]);
        if (std::abs(f[worst] - f[best]) <= 1e-12 * std::max(1e-12, std::abs(f[best])) ||
            std::max(std::abs(s[worst][0] - s[best][0]), std::abs(s[worst][1] - s[best][1])) < 1e-12) {
            break;
        }
        const Point c{0.5 * (s[best][0] + s[mid][0]), 0.5 * (s[best][1] + s[mid][1])};
        auto along = [&](double t) { return clamp_to({c[0] + t * (s[worst][0] - c[0]), c[1] + t * (s[worst][1] - c[1])}, o); };
        const Point xr = along(-1.0);
        const double fr = objective(xr);
        if (fr < f[best]) {
            const Point xe = along(-2.0);
            const double fe = objective(xe);
            s[worst] = fe < fr ? xe : xr;
            f[worst] = std::min(fe, fr);
        } else if (fr < f[mid]) {
            s[worst] = xr;
            f[worst] = fr;
        } else {
            const Point xc = fr < f[worst] ? along(-0.5) : along(0.5);
            const double fc = objective(xc);
            if (fc < std::min(fr, f[worst])) {
                s[worst] = xc;
                f[worst] = fc;
            } else {
                for (auto k : {mid, worst}) {
                    s[k] = {0.5 * (s[k][0] + s[best][0]), 0.5 * (s[k][1] + s[best][1])};
                    f[k] = objective(s[k]);
                }
            }
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(f.begin(), f.end()) - f.begin());
    return ev.margin(s[best][0], s[best][1]) > 0.0 ? s[best] : start;
}

} // namespace

LogitModel fit_e60(const Dataset &experience, const ReferenceTableSet &reference, int valuation_year,
                   const E60Options &options) {
    options.validate();
    const int vy = valuation_year == 0 ? experience.index().year_max : valuation_year;
    const E60Evaluator ev(experience, reference, vy, options);

    // Starting slope from the unconstrained regression when it is available.
    double a0 = 0.5 * (options.a_lo + options.a_hi);
    try {
        a0 = std::clamp(fit_ols(raw_rates(experience), reference, options.age).a, options.a_lo, options.a_hi);
    } catch (const FitError &) {
    }

    const auto a_at = [&](int k) { return options.a_lo + (options.a_hi - options.a_lo) * k / (options.a_nodes - 1); };
    const auto b_at = [&](int k) { return options.b_lo + (options.b_hi - options.b_lo) * k / (options.b_nodes - 1); };

    bool any_feasible = false;
    Point best_node{};
    double best_margin = std::numeric_limits<double>::infinity();
    std::vector<int> crossing_columns;
    for (int ia = 0; ia < options.a_nodes; ++ia) {
        bool pos = false;
        bool neg = false;
        for (int ib = 0; ib < options.b_nodes; ++ib) {
            const double m = ev.margin(a_at(ia), b_at(ib));
            if (m > 0.0) {
                pos = true;
                any_feasible = true;
                if (m < best_margin) {
                    best_margin = m;
                    best_node = {a_at(ia), b_at(ib)};
                }
            } else {
                neg = true;
            }
        }
        if (pos && neg) {
            crossing_columns.push_back(ia);
        }
    }
    if (!any_feasible) {
        throw InfeasibleError(kModule, "no (a,b) in a in [" + std::to_string(options.a_lo) + ", " +
                                           std::to_string(options.a_hi) + "], b in [" + std::to_string(options.b_lo) +
                                           ", " + std::to_string(options.b_hi) +
                                           "] makes the smoothed e60 exceed the raw e60 (" +
                                           std::to_string(ev.e_raw()) + ")");
    }

    Point chosen{};
    const bool crosses_at_a0 = ev.margin(a0, options.b_lo) > 0.0 && ev.margin(a0, options.b_hi) <= 0.0;
    if (crosses_at_a0) {
        chosen = {a0, boundary_b(ev, a0, options.b_lo, options.b_hi)};
    } else if (!crossing_columns.empty()) {
        const int col = *std::min_element(crossing_columns.begin(), crossing_columns.end(), [&](int l, int r) {
            return std::abs(a_at(l) - a0) < std::abs(a_at(r) - a0);
        });
        const double a = a_at(col);
        chosen = {a, boundary_b(ev, a, options.b_lo, options.b_hi)};
    } else {
        chosen = nelder_mead(ev, best_node, options);
    }

    LogitModel m;
    m.mode = LogitFitMode::E60Constrained;
    m.age_floor = options.age;
    m.a = chosen[0];
    m.b = chosen[1];
    m.e_raw = ev.e_raw();
    m.e_smoothed = ev.e_smoothed(m.a, m.b);
    m.margin = m.e_smoothed - m.e_raw;
    m.valuation_year = vy;
    return m;
}

CellGrid apply(const LogitModel &model, const ReferenceTableSet &reference) {
    const CellGrid &q = reference.q();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(q.rows(), q.cols());
    for (int j = 0; j < q.cols(); ++j) {
        for (int i = 0; i < q.rows(); ++i) {
            if (q.present(i, j)) {
                out(i, j) = inverse_logit(model.a * logit(q.value(i, j)) + model.b);
            }
        }
    }
    return CellGrid(q.index(), GridKind::Rate, std::move(out), q.mask());
}

CellGrid apply(const LogitModel &model, const ReferenceTableSet &reference, const AgeYearIndex &index) {
    if (!reference.index().covers(index)) {
        throw CoverageError(kModule, "reference does not cover the requested ages/years");
    }
    return apply(model, reference).slice(index);
}

ProspectiveTable build_logit_table(const LogitModel &model, const ReferenceTableSet &reference) {
    return ProspectiveTable(apply(model, reference), Provenance::LogitReference);
}

} // namespace mortab
