#include "mortab/error.hpp"
#include "mortab/simulate.hpp"
#include "mortab/valuation.hpp"
#include "support/world.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mortab;
namespace mt = mortab::testing;

namespace {

ProspectiveTable constant_table(double q, int age_lo, int omega, int year_lo, int year_hi) {
    const AgeYearIndex idx(age_lo, omega, year_lo, year_hi);
    return ProspectiveTable(CellGrid::filled(idx, GridKind::Rate, q), Provenance::Raw);
}

ProspectiveTable random_table(std::uint64_t seed, double lo = 0.001, double hi = 0.4) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    const AgeYearIndex idx(60, 110, 2000, 2060);
    Eigen::MatrixXd q(idx.n_ages(), idx.n_years());
    for (Eigen::Index k = 0; k < q.size(); ++k) {
        q.data()[k] = u(rng);
    }
    return ProspectiveTable(CellGrid(idx, GridKind::Rate, q), Provenance::Raw);
}

ValuationConfig at_rate(double i, bool immediate = false) {
    ValuationConfig c;
    c.rate = i;
    c.immediate = immediate;
    return c;
}

ProspectiveTable constrained_table() {
    const AgeYearIndex idx(60, 89, 1989, 2003);
    const CellGrid mu = surface(mt::gompertz_params(idx), idx);
    const Dataset d = simulate_deaths(mu, mt::population_exposure(idx, 1e6), 8);
    PoissonFitConfig c;
    c.constrained = true;
    return build_table(fit_constrained(d, c).params, TableOptions{});
}

} // namespace

TEST(Valuation, SurvivalExamples) {
    const ProspectiveTable half = constant_table(0.5, 60, 110, 2000, 2060);
    EXPECT_EQ(cohort_survival(half, 70, 2000, 0), 1.0);
    EXPECT_DOUBLE_EQ(cohort_survival(half, 70, 2000, 3), 0.125);
    // The factor at omega is 0.
    EXPECT_EQ(cohort_survival(half, 100, 2000, 11), 0.0);
    EXPECT_THROW((void)cohort_survival(half, 100, 2000, 12), DomainError);
    EXPECT_THROW((void)cohort_survival(half, 59, 2000, 1), CoverageError);
}

TEST(Valuation, SurvivalMatchesDiagonalProduct) {
    const ProspectiveTable t = random_table(1);
    for (int x : {60, 75, 99}) {
        double p = 1.0;
        for (int k = 0; k <= 110 - x; ++k) {
            EXPECT_NEAR(cohort_survival(t, x, 2001, k), p, 1e-14);
            p *= 1.0 - t.q().at(x + k, 2001 + k);
        }
    }
}

TEST(Valuation, SurvivalTelescopesAndDecreases) {
    const ProspectiveTable t = random_table(2);
    for (int k = 0; k <= 20; ++k) {
        for (int m = 0; m <= 20; ++m) {
            EXPECT_NEAR(cohort_survival(t, 65, 2000, k + m),
                        cohort_survival(t, 65, 2000, k) * cohort_survival(t, 65 + k, 2000 + k, m), 1e-14);
        }
        EXPECT_LE(cohort_survival(t, 65, 2000, k + 1), cohort_survival(t, 65, 2000, k));
    }
}

TEST(Valuation, CountingYears) {
    const ProspectiveTable zero = constant_table(0.0, 60, 110, 2000, 2060);
    EXPECT_DOUBLE_EQ(annuity(zero, 60, 2000, at_rate(0.0)), 51.0);
    EXPECT_DOUBLE_EQ(annuity(zero, 60, 2000, at_rate(0.0, true)), 50.0);
    EXPECT_DOUBLE_EQ(residual_life_expectancy(zero, 60, 2000), 50.5);
    EXPECT_DOUBLE_EQ(annuity(zero, 110, 2000, at_rate(0.0)), 1.0);
}

TEST(Valuation, GeometricClosedForm) {
    const ProspectiveTable t = constant_table(0.1, 0, 1000, 2000, 3001);
    const double a = annuity(t, 0, 2000, at_rate(0.0225));
    EXPECT_NEAR(a, 8.34693877551020408163, 1e-10);
    const ProspectiveTable half = constant_table(0.5, 0, 200, 2000, 2201);
    EXPECT_NEAR(residual_life_expectancy(half, 0, 2000), 1.5, 1e-14);
}

TEST(Valuation, Bounds) {
    const ProspectiveTable t = random_table(3);
    const ValuationConfig c;
    for (int x = 60; x <= 110; x += 5) {
        const double a = annuity(t, x, 2000, c);
        EXPECT_GE(a, 1.0);
        double cap = 0.0;
        for (int k = 0; k <= 110 - x; ++k) {
            cap += std::pow(c.discount(), k);
        }
        EXPECT_LE(a, cap);
    }
}

TEST(Valuation, ExpectationIsUndiscountedAnnuityLessHalf) {
    for (std::uint64_t seed = 10; seed < 15; ++seed) {
        const ProspectiveTable t = random_table(seed);
        for (int x = 60; x <= 110; ++x) {
            EXPECT_NEAR(residual_life_expectancy(t, x, 2000), annuity(t, x, 2000, at_rate(0.0)) - 0.5, 1e-12);
        }
    }
}

TEST(Valuation, NonIncreasingInRate) {
    const ProspectiveTable t = random_table(4);
    for (int x = 60; x <= 110; x += 10) {
        const double a0 = annuity(t, x, 2000, at_rate(0.0));
        const double a1 = annuity(t, x, 2000, at_rate(0.0225));
        const double a2 = annuity(t, x, 2000, at_rate(0.05));
        EXPECT_GE(a0, a1);
        EXPECT_GE(a1, a2);
    }
}

TEST(Valuation, NonIncreasingInAgeOnDiagonal) {
    // q increasing in age, constant in time.
    const AgeYearIndex idx(60, 110, 2000, 2060);
    Eigen::MatrixXd q(idx.n_ages(), idx.n_years());
    for (int i = 0; i < idx.n_ages(); ++i) {
        q.row(i).setConstant(std::min(0.9, 0.005 * std::exp(0.1 * i)));
    }
    const ProspectiveTable t(CellGrid(idx, GridKind::Rate, q), Provenance::Raw);
    for (int k = 0; k < 50; ++k) {
        EXPECT_GE(annuity(t, 60 + k, 2000 + k), annuity(t, 61 + k, 2001 + k));
    }
}

TEST(Valuation, CoverageAndDomainErrors) {
    const ProspectiveTable short_table = constant_table(0.01, 60, 110, 2000, 2010);
    EXPECT_THROW((void)annuity(short_table, 60, 2000), CoverageError);
    EXPECT_THROW((void)residual_life_expectancy(short_table, 60, 2000), CoverageError);
    EXPECT_THROW((void)annuity(short_table, 60, 1999), CoverageError);
    EXPECT_THROW((void)annuity(constant_table(0.01, 60, 110, 2000, 2060), 60, 2000, at_rate(-1.0)), DomainError);
}

TEST(ContinuousAnnuity, ConstantHazardClosedForm) {
    const ValuationConfig c;
    const double v = continuous_annuity([](double, double) { return 0.05; }, 60.0, 2003.0, c);
    EXPECT_NEAR(v, 13.8407137980268244263, 1e-8 * 13.84);
    const double w = continuous_annuity([](double, double) { return 0.04; }, 60.5, 2003.25, at_rate(0.0));
    EXPECT_NEAR(w, 25.0, 1e-8 * 25.0);
}

TEST(ContinuousAnnuity, TerminalAgeCutsSurvival) {
    // Zero hazard and zero interest: the value is the time to the terminal age.
    const double v = continuous_annuity([](double, double) { return 0.0; }, 60.25, 2000.0, at_rate(0.0), 111.0);
    EXPECT_NEAR(v, 50.75, 1e-8 * 50.75);
    EXPECT_THROW((void)continuous_annuity([](double, double) { return 0.0; }, 60.0, 2000.0, at_rate(0.0)),
                 DomainError);
    EXPECT_THROW((void)continuous_annuity([](double, double) { return -1.0; }, 60.0, 2000.0), DomainError);
}

TEST(ContinuousAnnuity, AgreesWithDiscreteAnnuity) {
    // a_cont is close to the midpoint of the due and immediate annuities. The
    // discrete table holds mu(x) over [x, x+1) while the continuous hazard keeps
    // rising within the year, so the gap widens with age.
    const ProspectiveTable t = constrained_table();
    for (int x = 60; x <= 95; ++x) {
        const double ratio = continuous_annuity(t, x, 2003) / (annuity(t, x, 2003) - 0.5);
        EXPECT_NEAR(ratio, 1.0, x <= 70 ? 0.02 : 0.05) << "age " << x;
        EXPECT_LT(ratio, 1.0) << "age " << x;
    }
    EXPECT_GT(continuous_annuity(t, 60.5, 2003.5), continuous_annuity(t, 61.0, 2004.0));
}

TEST(ContinuousAnnuity, NeedsParametricHazard) {
    EXPECT_THROW((void)continuous_annuity(constant_table(0.01, 60, 110, 2000, 2060), 60, 2000),
                 UnsupportedProvenanceError);
}
