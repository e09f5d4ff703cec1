#include "mortab/closure.hpp"
#include "mortab/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mortab;

namespace {

HazardCurve gompertz_curve(int age_min, int age_max, double a = -9.6, double b = 0.09) {
    HazardCurve c{age_min, {}};
    for (int x = age_min; x <= age_max; ++x) {
        c.values.push_back(std::exp(a + b * x));
    }
    return c;
}

} // namespace

TEST(Closure, GrowthRateOracle) {
    // ln 6 / 15, 30-digit evaluation.
    EXPECT_NEAR(growth_rate_g80(0.01, 0.06), 0.119450631281870333387, 1e-15);
    EXPECT_NEAR(growth_rate_g80(0.02, 0.02), 0.0, 0.0);
    EXPECT_THROW((void)growth_rate_g80(0.0, 0.1), DomainError);
}

TEST(Closure, SlopeOracle) {
    // (ln(1/0.1) - 31 * 0.08) / 465, 30-digit evaluation.
    EXPECT_NEAR(slope_s(0.1, 0.08, 1.0), -0.000381537434421407131, 1e-15);
    EXPECT_THROW((void)slope_s(0.0, 0.08, 1.0), DomainError);
}

TEST(Closure, EndpointAndIncrements) {
    const ClosureParams p;
    const ClosedCurve closed = close_curve(gompertz_curve(60, 95), p);
    ASSERT_EQ(closed.curve.age_min, 60);
    ASSERT_EQ(closed.curve.age_max(), 110);
    EXPECT_NEAR(*closed.curve.at(110), 1.0, 1e-12);
    for (int x = 80; x <= 110; ++x) {
        const double inc = std::log(*closed.curve.at(x) / *closed.curve.at(x - 1));
        EXPECT_NEAR(inc, closed.schedule.g80 + closed.schedule.s * (x - 80), 1e-12) << x;
    }
    // Ages below the pivot are untouched.
    for (int x = 60; x < 80; ++x) {
        EXPECT_DOUBLE_EQ(*closed.curve.at(x), std::exp(-9.6 + 0.09 * x));
    }
}

TEST(Closure, ExactGompertzHitsTargetWithZeroSlope) {
    // Choose the hazard so that pure Gompertz growth lands exactly on the target at 110.
    const double b = 0.1;
    const double a = -b * 110.0;
    const ClosedCurve closed = close_curve(gompertz_curve(60, 85, a, b), ClosureParams{});
    EXPECT_NEAR(closed.schedule.g80, b, 1e-12);
    EXPECT_NEAR(closed.schedule.s, 0.0, 1e-13);
}

TEST(Closure, AverageGrowthScheduleIsConsistent) {
    const ClosedCurve closed = close_curve(gompertz_curve(60, 89), ClosureParams{});
    const double base = *closed.curve.at(65);
    for (const auto &[age, k] : closed.schedule.average_growth) {
        EXPECT_NEAR(k, std::log(*closed.curve.at(age) / base) / (age - 65), 1e-12);
    }
    EXPECT_NEAR(closed.schedule.average_growth.at(80), closed.schedule.g80, 1e-12);
}

TEST(Closure, CustomTarget) {
    ClosureParams p;
    p.target_mu_omega = 0.7;
    p.omega = 105;
    const ClosedCurve closed = close_curve(gompertz_curve(60, 82), p);
    EXPECT_EQ(closed.curve.age_max(), 105);
    EXPECT_NEAR(*closed.curve.at(105), 0.7, 1e-12);
}

TEST(Closure, RawAnchorsOnlyChangeGrowth) {
    const HazardCurve c = gompertz_curve(60, 89);
    const ClosedCurve closed = close_curve(c, ClosureParams{}, 0.02, 0.09);
    EXPECT_NEAR(closed.schedule.g80, std::log(0.09 / 0.02) / 15.0, 1e-15);
    EXPECT_DOUBLE_EQ(*closed.curve.at(79), *c.at(79));
    EXPECT_NEAR(*closed.curve.at(110), 1.0, 1e-12);
}

TEST(Closure, MissingOrZeroAnchorsFail) {
    HazardCurve c = gompertz_curve(60, 89);
    c.values[5] = std::nullopt; // age 65
    EXPECT_THROW((void)close_curve(c, ClosureParams{}), ClosureError);
    c = gompertz_curve(60, 89);
    c.values[20] = 0.0; // age 80
    EXPECT_THROW((void)close_curve(c, ClosureParams{}), ClosureError);
    EXPECT_THROW((void)close_curve(gompertz_curve(70, 89), ClosureParams{}), ClosureError);
}

TEST(Closure, InvalidParameters) {
    ClosureParams p;
    p.base_age = 85;
    EXPECT_THROW(p.validate(), DomainError);
    p = ClosureParams{};
    p.target_mu_omega = 0.0;
    EXPECT_THROW(p.validate(), DomainError);
}

TEST(Closure, GridYearByYear) {
    const AgeYearIndex idx(60, 89, 2000, 2002);
    Eigen::MatrixXd mu(idx.n_ages(), idx.n_years());
    for (int j = 0; j < idx.n_years(); ++j) {
        for (int i = 0; i < idx.n_ages(); ++i) {
            mu(i, j) = std::exp(-9.6 - 0.02 * j + 0.09 * (60 + i));
        }
    }
    const CellGrid closed = close_grid(CellGrid(idx, GridKind::Hazard, mu), ClosureParams{});
    EXPECT_EQ(closed.index(), AgeYearIndex(60, 110, 2000, 2002));
    EXPECT_EQ(closed.missing_count(), 0u);
    for (int j = 0; j < 3; ++j) {
        EXPECT_NEAR(closed.value(50, j), 1.0, 1e-12);
        EXPECT_DOUBLE_EQ(closed.value(10, j), mu(10, j));
    }
    const CellGrid too_old = CellGrid::filled(AgeYearIndex(60, 111, 2000, 2000), GridKind::Hazard, 0.1);
    EXPECT_THROW((void)close_grid(too_old, ClosureParams{}), ClosureError);
    EXPECT_THROW((void)close_grid(CellGrid::filled(idx, GridKind::Rate, 0.1), ClosureParams{}), ValidationError);
}

TEST(Closure, GridErrorNamesYearOnce) {
    const AgeYearIndex idx(60, 89, 2000, 2001);
    Mask m = Mask::Constant(idx.n_ages(), idx.n_years(), true);
    m(5, 1) = false;
    const CellGrid g(idx, GridKind::Hazard, Eigen::MatrixXd::Constant(idx.n_ages(), idx.n_years(), 0.05), m);
    try {
        (void)close_grid(g, ClosureParams{});
        FAIL();
    } catch (const ClosureError &e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2001"), std::string::npos) << msg;
        EXPECT_EQ(msg.find("[closure] [closure]"), std::string::npos) << msg;
    }
}

TEST(Closure, RandomTriplesProperty) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> lu(std::log(1e-4), std::log(0.5));
    for (int k = 0; k < 200; ++k) {
        HazardCurve c{65, {}};
        for (int x = 65; x <= 80; ++x) {
            c.values.push_back(std::exp(lu(rng)));
        }
        const ClosedCurve closed = close_curve(c, ClosureParams{});
        ASSERT_NEAR(*closed.curve.at(110), 1.0, 1e-9);
    }
}
