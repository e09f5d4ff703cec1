#include "mortab/error.hpp"
#include "mortab/projection.hpp"
#include "mortab/simulate.hpp"
#include "support/world.hpp"

#include <Eigen/QR>
#include <gtest/gtest.h>

#include <random>

using namespace mortab;
namespace mt = mortab::testing;

TEST(Projection, ExactLineExtension) {
    Eigen::VectorXd k(5);
    k << 2, 1, 0, -1, -2;
    const Eigen::VectorXd e = extrapolate_kappa(k, 3);
    ASSERT_EQ(e.size(), 8);
    EXPECT_EQ(e.head(5), k);
    EXPECT_NEAR(e(5), -3, 1e-14);
    EXPECT_NEAR(e(6), -4, 1e-14);
    EXPECT_NEAR(e(7), -5, 1e-14);
    EXPECT_EQ(extrapolate_kappa(k, 0), k);
    EXPECT_THROW((void)extrapolate_kappa(k, -1), DomainError);
    EXPECT_THROW((void)extrapolate_kappa(Eigen::VectorXd::Zero(1), 2), DomainError);
}

TEST(Projection, NoisyExtensionFollowsOlsSlope) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd k(15);
    for (int t = 0; t < 15; ++t) {
        k(t) = 3.0 - 0.7 * t + n(rng);
    }
    // Normal equations solved with a QR factorisation.
    Eigen::MatrixXd x(15, 2);
    for (int t = 0; t < 15; ++t) {
        x(t, 0) = 1.0;
        x(t, 1) = t;
    }
    const Eigen::Vector2d coef = x.colPivHouseholderQr().solve(k);
    const Eigen::VectorXd e = extrapolate_kappa(k, 10);
    for (int h = 0; h < 10; ++h) {
        EXPECT_NEAR(e(15 + h), coef(0) + coef(1) * (15 + h), 1e-10);
    }
    EXPECT_NEAR(e(16) - e(15), coef(1), 1e-10);
}

TEST(Projection, ProjectedSurfaceIsPrudent) {
    const AgeYearIndex idx(60, 89, 1989, 2003);
    const LeeCarterParams p = project(mt::gompertz_params(idx), 2060);
    EXPECT_EQ(p.year_max(), 2060);
    const CellGrid mu = surface(p, AgeYearIndex(60, 89, 2003, 2060));
    for (int i = 0; i < mu.rows(); ++i) {
        for (int j = 1; j < mu.cols(); ++j) {
            EXPECT_LE(mu.value(i, j), mu.value(i, j - 1));
        }
    }
}

TEST(Projection, TableFromLeeCarterParams) {
    const AgeYearIndex idx(60, 89, 1989, 2003);
    const TableOptions opt;
    const ProspectiveTable t = build_table(mt::gompertz_params(idx), Provenance::LeeCarter, opt);
    EXPECT_EQ(t.index(), AgeYearIndex(60, 110, 1989, default_last_year(idx, opt.closure)));
    EXPECT_EQ(t.index().year_max, 2003 + 50);
    EXPECT_EQ(t.omega(), 110);
    EXPECT_FALSE(t.parametric());
    EXPECT_EQ(t.q().missing_count(), 0u);
    EXPECT_NEAR(t.rate(110, 2030), rate_from_hazard(1.0), 1e-12);
    EXPECT_LT(t.q().values().maxCoeff(), 1.0);
}

TEST(Projection, RawClosureSourceNeedsAnchors) {
    const AgeYearIndex idx(60, 89, 1989, 2003);
    TableOptions opt;
    opt.source = ClosureSource::Raw;
    opt.last_year = 2010;
    EXPECT_THROW((void)build_table(mt::gompertz_params(idx), Provenance::LeeCarter, opt), ValidationError);
    const CellGrid raw = surface(mt::gompertz_params(idx), idx);
    const ProspectiveTable t = build_table(mt::gompertz_params(idx), Provenance::LeeCarter, opt, &raw);
    EXPECT_EQ(t.index().year_max, 2010);
}

TEST(Projection, ConstrainedTableCarriesParametricHazard) {
    const AgeYearIndex idx(60, 89, 1989, 2003);
    const CellGrid mu = surface(mt::gompertz_params(idx), idx);
    const Dataset d = simulate_deaths(mu, mt::population_exposure(idx, 1e5), 4);
    PoissonFitConfig c;
    c.constrained = true;
    const ConstrainedParams p = fit_constrained(d, c).params;
    TableOptions opt;
    const ProspectiveTable t = build_table(p, opt);
    ASSERT_TRUE(t.parametric());
    EXPECT_EQ(t.provenance(), Provenance::LogPoissonConstrained);
    // The continuous hazard agrees with the table at integer points.
    for (int x : {60, 70, 79, 85, 100, 110}) {
        for (int year : {1995, 2003, 2030}) {
            EXPECT_NEAR(rate_from_hazard(t.hazard()(x, year)), t.rate(x, year), 1e-10) << x << " " << year;
        }
    }
    EXPECT_NEAR(t.hazard()(110.0, 2003.0), 1.0, 1e-12);
}

TEST(Projection, RawTableFillsGapsAndRepeatsLastYear) {
    const AgeYearIndex idx(60, 95, 2000, 2004);
    const CellGrid mu = surface(mt::gompertz_params(idx), idx);
    const Dataset full = simulate_deaths(mu, mt::population_exposure(idx, 1e6), 5);
    Eigen::MatrixXd l = full.exposure().values();
    l(35, 4) = 0.0; // age 95 in 2004 becomes missing
    Eigen::MatrixXd dv = full.deaths().values();
    dv(35, 4) = 0.0;
    const Dataset d(CellGrid(idx, GridKind::Deaths, dv), CellGrid(idx, GridKind::Exposure, l));
    const ProspectiveTable t = build_raw_table(d, ClosureParams{}, 2020);
    EXPECT_EQ(t.index(), AgeYearIndex(60, 110, 2000, 2020));
    EXPECT_EQ(t.provenance(), Provenance::Raw);
    EXPECT_DOUBLE_EQ(t.rate(70, 2002), dv(10, 2) / l(10, 2));
    EXPECT_GT(t.rate(95, 2004), 0.0);
    EXPECT_DOUBLE_EQ(t.rate(70, 2015), t.rate(70, 2004));
    EXPECT_NEAR(t.rate(110, 2004), rate_from_hazard(1.0), 1e-12);

    Eigen::MatrixXd l2 = full.exposure().values();
    l2(5, 0) = 0.0; // no raw rate at age 65, below the pivot
    const Dataset hole(full.deaths(), CellGrid(idx, GridKind::Exposure, l2));
    EXPECT_THROW((void)build_raw_table(hole, ClosureParams{}, 2004), ClosureError);
}

TEST(Projection, TableValidation) {
    const AgeYearIndex idx(60, 62, 2000, 2001);
    EXPECT_THROW(ProspectiveTable(CellGrid::filled(idx, GridKind::Rate, 1.0), Provenance::Raw), ValidationError);
    EXPECT_THROW(ProspectiveTable(CellGrid::filled(idx, GridKind::Hazard, 0.1), Provenance::Raw), ValidationError);
    Mask m = Mask::Constant(3, 2, true);
    m(0, 0) = false;
    EXPECT_THROW(ProspectiveTable(CellGrid(idx, GridKind::Rate, Eigen::MatrixXd::Constant(3, 2, 0.1), m), Provenance::Raw),
                 CoverageError);
    const ProspectiveTable t(CellGrid::filled(idx, GridKind::Rate, 0.1), Provenance::Raw);
    EXPECT_EQ(extend_flat(t, 2005).index().year_max, 2005);
    EXPECT_EQ(truncate_years(extend_flat(t, 2005), 2000).index().year_max, 2000);
}

TEST(Projection, ProvenanceNames) {
    for (auto p : {Provenance::LeeCarter, Provenance::LogPoissonFree, Provenance::LogPoissonConstrained,
                   Provenance::LogitReference, Provenance::Raw}) {
        EXPECT_EQ(provenance_from_string(to_string(p)), p);
    }
    EXPECT_THROW((void)provenance_from_string("cox"), ValidationError);
}
