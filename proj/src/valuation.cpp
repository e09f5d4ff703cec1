#include "mortab/valuation.hpp"

#include "mortab/error.hpp"

#include <cmath>
#include <string>

namespace mortab {

namespace {

const char *kModule = "projection-valuation";

void check_start(const ProspectiveTable &table, int x, int t) {
    const auto &idx = table.index();
    if (!idx.contains(x, t)) {
        throw CoverageError(kModule, "start cell (age " + std::to_string(x) + ", year " + std::to_string(t) +
                                         ") is outside the table");
    }
}

// 1 - q on the diagonal cell j steps after (x, t); zero at omega.
double survival_factor(const ProspectiveTable &table, int x, int t, int j) {
    const int age = x + j;
    if (age >= table.omega()) {
        return 0.0;
    }
    const int year = t + j;
    if (!table.index().has_year(year)) {
        throw CoverageError(kModule, "cohort diagonal from age " + std::to_string(x) + " in " + std::to_string(t) +
                                         " leaves the table at year " + std::to_string(year) +
                                         "; extend the projection horizon");
    }
    return 1.0 - table.rate(age, year);
}

} // namespace

void ValuationConfig::validate() const {
    if (!(rate > -1.0) || !std::isfinite(rate)) {
        throw DomainError(kModule, "technical rate must be finite and > -1");
    }
}

double cohort_survival(const ProspectiveTable &table, int x, int t, int k) {
    check_start(table, x, t);
    if (k < 0 || x + k > table.omega() + 1) {
        throw DomainError(kModule, "survival horizon k=" + std::to_string(k) + " out of range at age " +
                                       std::to_string(x));
    }
    double p = 1.0;
    for (int j = 0; j < k; ++j) {
        p *= survival_factor(table, x, t, j);
    }
    return p;
}

double annuity(const ProspectiveTable &table, int x, int t, const ValuationConfig &config) {
    config.validate();
    check_start(table, x, t);
    const double v = config.discount();
    double p = 1.0;
    double vk = 1.0;
    double total = config.immediate ? 0.0 : 1.0;
    for (int k = 1; k <= table.omega() - x; ++k) {
        p *= survival_factor(table, x, t, k - 1);
        vk *= v;
        total += vk * p;
    }
    return total;
}

double residual_life_expectancy(const ProspectiveTable &table, int x, int t) {
    check_start(table, x, t);
    double p = 1.0;
    double total = 0.5;
    for (int k = 1; k <= table.omega() - x; ++k) {
        p *= survival_factor(table, x, t, k - 1);
        total += p;
    }
    return total;
}

namespace {

constexpr double kTail = 1e-18;
constexpr double kMaxHorizon = 10000.0;

double hazard_at(const ContinuousHazard &mu, double x, double t, double h) {
    const double m = mu(x + h, t + h);
    if (!(m >= 0.0) || !std::isfinite(m)) {
        throw DomainError(kModule, "hazard is negative or not finite at age " + std::to_string(x + h));
    }
    return m;
}

double find_horizon(const ContinuousHazard &mu, double x, double t, double r) {
    double cum = 0.0;
    double h = 0.0;
    double m0 = hazard_at(mu, x, t, 0.0);
    while (h < kMaxHorizon) {
        const double m_mid = hazard_at(mu, x, t, h + 0.5);
        const double m1 = hazard_at(mu, x, t, h + 1.0);
        cum += (m0 + 4.0 * m_mid + m1) / 6.0;
        h += 1.0;
        m0 = m1;
        if (std::exp(-cum - r * h) < kTail) {
            return h;
        }
    }
    throw DomainError(kModule, "annuity integrand does not vanish within 10000 years");
}

// Panel-wise Simpson for both the outer integral and the cumulative hazard.
double simpson_annuity(const ContinuousHazard &mu, double x, double t, double r, double horizon, int panels) {
    const double d = horizon / panels;
    double cum = 0.0;
    double total = 0.0;
    double m0 = hazard_at(mu, x, t, 0.0);
    double f0 = 1.0;
    for (int k = 0; k < panels; ++k) {
        const double h0 = k * d;
        const double m_q = hazard_at(mu, x, t, h0 + 0.25 * d);
        const double m_mid = hazard_at(mu, x, t, h0 + 0.5 * d);
        const double m_3q = hazard_at(mu, x, t, h0 + 0.75 * d);
        const double m1 = hazard_at(mu, x, t, h0 + d);
        const double cum_mid = cum + 0.5 * d * (m0 + 4.0 * m_q + m_mid) / 6.0;
        const double cum_end = cum_mid + 0.5 * d * (m_mid + 4.0 * m_3q + m1) / 6.0;
        const double f_mid = std::exp(-cum_mid - r * (h0 + 0.5 * d));
        const double f1 = std::exp(-cum_end - r * (h0 + d));
        total += d * (f0 + 4.0 * f_mid + f1) / 6.0;
        cum = cum_end;
        m0 = m1;
        f0 = f1;
    }
    return total;
}

} // namespace

double continuous_annuity(const ContinuousHazard &mu, double x, double t, const ValuationConfig &config,
                          std::optional<double> terminal_age) {
    config.validate();
    if (!mu) {
        throw UnsupportedProvenanceError(kModule, "no continuous hazard available");
    }
    const double r = std::log1p(config.rate);
    double horizon = 0.0;
    if (terminal_age) {
        if (*terminal_age <= x) {
            throw DomainError(kModule, "age " + std::to_string(x) + " is at or past the terminal age");
        }
        horizon = *terminal_age - x;
        // A shorter horizon is enough when survival dies out early.
        try {
            horizon = std::min(horizon, find_horizon(mu, x, t, r));
        } catch (const DomainError &) {
        }
    } else {
        horizon = find_horizon(mu, x, t, r);
    }
    int panels = std::max(1, static_cast<int>(std::ceil(horizon * 4.0)));
    double previous = simpson_annuity(mu, x, t, r, horizon, panels);
    for (int round = 0; round < 20; ++round) {
        panels *= 2;
        const double current = simpson_annuity(mu, x, t, r, horizon, panels);
        if (std::abs(current - previous) <= 1e-8 * std::abs(current)) {
            return current;
        }
        previous = current;
    }
    throw ConvergenceError(kModule, "continuous annuity quadrature did not stabilise", 0.0);
}

double continuous_annuity(const ProspectiveTable &table, double x, double t, const ValuationConfig &config) {
    if (!table.parametric()) {
        throw UnsupportedProvenanceError(kModule, "continuous valuation needs a parametric hazard; the " +
                                                      std::string(to_string(table.provenance())) +
                                                      " table has none");
    }
    return continuous_annuity(table.hazard(), x, t, config, table.omega() + 1.0);
}

} // namespace mortab
