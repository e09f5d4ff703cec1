#include "mortab/error.hpp"
#include "mortab/log_poisson.hpp"
#include "mortab/simulate.hpp"
#include "support/world.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace mortab;
namespace mt = mortab::testing;

namespace {

const AgeYearIndex kIdx(60, 79, 1990, 1999);

PoissonFitConfig constrained_config() {
    PoissonFitConfig c;
    c.constrained = true;
    return c;
}

void expect_deaths_balance(const Dataset &d, const CellGrid &mu) {
    const auto &idx = d.index();
    for (int i = 0; i < idx.n_ages(); ++i) {
        double dead = 0, expected = 0;
        for (int j = 0; j < idx.n_years(); ++j) {
            if (d.usable(i, j)) {
                dead += d.deaths().value(i, j);
                expected += d.exposure().value(i, j) * mu.value(i, j);
            }
        }
        EXPECT_NEAR(expected, dead, 1e-6 * std::max(dead, 1.0)) << "age " << idx.age_min + i;
    }
}

} // namespace

TEST(LogPoisson, SingleCellLikelihoodOracle) {
    // D=5, L=100, mu=0.05: 5 ln 0.05 - 5, 30-digit evaluation.
    const AgeYearIndex idx(60, 60, 2000, 2000);
    const Dataset d(CellGrid::filled(idx, GridKind::Deaths, 5), CellGrid::filled(idx, GridKind::Exposure, 100));
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, std::log(0.05));
    const Eigen::VectorXd b = Eigen::VectorXd::Constant(1, 1.0);
    const Eigen::VectorXd k = Eigen::VectorXd::Zero(1);
    EXPECT_NEAR(log_likelihood(a, b, k, d), -19.9786613677699549672, 1e-12);
}

TEST(LogPoisson, ScoreMatchesFiniteDifferences) {
    const Dataset d = mt::random_dataset(kIdx, 21);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.1);
    const LeeCarterParams p0 = mt::gompertz_params(kIdx);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd a = p0.alpha, b = p0.beta, k = p0.kappa;
        for (auto *v : {&a, &b, &k}) {
            for (Eigen::Index i = 0; i < v->size(); ++i) {
                (*v)(i) += n(rng);
            }
        }
        const Eigen::VectorXd s = score(a, b, k, d);
        const double scale = std::max(1.0, s.lpNorm<Eigen::Infinity>());
        const double h = 1e-6;
        Eigen::Index pos = 0;
        for (auto *v : {&a, &b, &k}) {
            for (Eigen::Index i = 0; i < v->size(); ++i, ++pos) {
                const double keep = (*v)(i);
                (*v)(i) = keep + h;
                const double up = log_likelihood(a, b, k, d);
                (*v)(i) = keep - h;
                const double down = log_likelihood(a, b, k, d);
                (*v)(i) = keep;
                ASSERT_NEAR(s(pos), (up - down) / (2 * h), 1e-5 * scale);
            }
        }
    }
}

TEST(LogPoisson, FreeFitScoreConditions) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dataset d = mt::random_dataset(kIdx, seed);
        const PoissonFit f = fit_free(d);
        EXPECT_LT(f.score_norm, 1e-8);
        EXPECT_LT(score(f.params.alpha, f.params.beta, f.params.kappa, d).lpNorm<Eigen::Infinity>(), 1e-8);
        EXPECT_NEAR(f.params.beta.sum(), 1.0, 1e-10);
        EXPECT_NEAR(f.params.kappa.sum(), 0.0, 1e-10);
        EXPECT_NEAR(f.loglik, log_likelihood(f.params, d), 1e-8 * std::abs(f.loglik));
        expect_deaths_balance(d, surface(f.params, kIdx));
        // The likelihood never decreases along the iterations.
        for (std::size_t k = 1; k < f.loglik_trace.size(); ++k) {
            EXPECT_GE(f.loglik_trace[k], f.loglik_trace[k - 1] - 1e-9 * std::abs(f.loglik_trace[k]));
        }
    }
}

TEST(LogPoisson, RecoversExpectedDeathsSurface) {
    const CellGrid mu = surface(mt::gompertz_params(kIdx), kIdx);
    const Dataset d = mt::expected_dataset(mu, mt::population_exposure(kIdx, 1e6));
    const PoissonFit f = fit_free(d);
    const CellGrid fitted = surface(f.params, kIdx);
    EXPECT_LE(((fitted.values().array() / mu.values().array()) - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(LogPoisson, MissingAndZeroExposureCellsAreSkipped) {
    Dataset full = mt::random_dataset(kIdx, 30);
    Eigen::MatrixXd l = full.exposure().values();
    l(4, 3) = 0.0;
    Mask m = full.deaths().mask();
    m(7, 1) = false;
    Eigen::MatrixXd dv = full.deaths().values();
    dv(4, 3) = 0.0;
    const Dataset d(CellGrid(kIdx, GridKind::Deaths, dv, m), CellGrid(kIdx, GridKind::Exposure, l));
    const PoissonFit f = fit_free(d);
    EXPECT_LT(f.score_norm, 1e-8);
    expect_deaths_balance(d, surface(f.params, kIdx));
}

TEST(LogPoisson, AgeWithoutDeathsIsBoundary) {
    const Dataset base = mt::random_dataset(kIdx, 31);
    Eigen::MatrixXd dv = base.deaths().values();
    dv.row(0).setZero();
    const Dataset d(CellGrid(kIdx, GridKind::Deaths, dv), base.exposure());
    const PoissonFit f = fit_free(d);
    EXPECT_TRUE(f.boundary);
    ASSERT_EQ(f.boundary_ages.size(), 1u);
    EXPECT_EQ(f.boundary_ages.front(), 60);
    EXPECT_LE(std::exp(f.params.alpha(0)), 1e-11);
    EXPECT_LT(f.score_norm, 1e-8);
}

TEST(LogPoisson, AllZeroDeaths) {
    const Dataset d(CellGrid::filled(kIdx, GridKind::Deaths, 0), CellGrid::filled(kIdx, GridKind::Exposure, 100));
    const PoissonFit f = fit_free(d);
    EXPECT_TRUE(f.boundary);
    EXPECT_EQ(static_cast<int>(f.boundary_ages.size()), kIdx.n_ages());
}

TEST(LogPoisson, InputErrors) {
    const AgeYearIndex one_year(60, 79, 1990, 1990);
    const Dataset d(CellGrid::filled(one_year, GridKind::Deaths, 1), CellGrid::filled(one_year, GridKind::Exposure, 100));
    EXPECT_THROW((void)fit_free(d), FitError);
    PoissonFitConfig bad;
    bad.score_tol = 0.0;
    EXPECT_THROW((void)fit_free(mt::random_dataset(kIdx, 1), bad), DomainError);
    PoissonFitConfig deg = constrained_config();
    deg.alpha_degree = 1;
    EXPECT_THROW((void)fit_constrained(mt::random_dataset(kIdx, 1), deg), DomainError);
}

TEST(LogPoisson, TightIterationBudgetRaisesConvergenceError) {
    PoissonFitConfig c;
    c.max_iter = 2;
    try {
        (void)fit_free(mt::random_dataset(kIdx, 2), c);
        FAIL();
    } catch (const ConvergenceError &e) {
        EXPECT_GT(e.last_score_norm(), 0.0);
        EXPECT_EQ(e.exit_code(), 1);
    }
}

TEST(LogPoisson, ChebyshevBasis) {
    const ScaledChebyshev b{60, 89, 3};
    EXPECT_DOUBLE_EQ(b.scaled(60), -1.0);
    EXPECT_DOUBLE_EQ(b.scaled(89), 1.0);
    const Eigen::VectorXd v = b.eval(74.5);
    EXPECT_NEAR(v(0), 1.0, 0);
    EXPECT_NEAR(v(1), 0.0, 1e-15);
    EXPECT_NEAR(v(2), -1.0, 1e-15);
    EXPECT_NEAR(v(3), 0.0, 1e-15);
    const Eigen::MatrixXd m = b.design(60, 89);
    EXPECT_EQ(m.rows(), 30);
    EXPECT_NEAR(m(29, 3), 1.0, 1e-15);
}

TEST(LogPoisson, ConstrainedFitIsNestedAndStationary) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dataset d = mt::random_dataset(kIdx, seed);
        const PoissonFit free = fit_free(d);
        const ConstrainedFit con = fit_constrained(d, constrained_config());
        EXPECT_LT(con.score_norm, 1e-8);
        EXPECT_LT(constrained_score(con.params, d).lpNorm<Eigen::Infinity>(), 1e-6);
        EXPECT_LT(con.params.loglik, free.loglik);
        EXPECT_NEAR(con.params.loglik, log_likelihood(con.params, d), 1e-8 * std::abs(con.params.loglik));
        const LeeCarterParams e = con.params.expand();
        EXPECT_NEAR(e.beta.sum(), 1.0, 1e-10);
        EXPECT_NEAR(e.kappa.sum(), 0.0, 1e-10);
        // Only the constant term of the age polynomial is free, so deaths balance in total.
        const CellGrid mu = surface(e, kIdx);
        double dead = 0, expected = 0;
        for (int j = 0; j < kIdx.n_years(); ++j) {
            for (int i = 0; i < kIdx.n_ages(); ++i) {
                dead += d.deaths().value(i, j);
                expected += d.exposure().value(i, j) * mu.value(i, j);
            }
        }
        EXPECT_NEAR(expected, dead, 1e-6 * dead);
    }
}

TEST(LogPoisson, ConstrainedShapeAndParameterCount) {
    const ConstrainedFit con = fit_constrained(mt::random_dataset(kIdx, 3), constrained_config());
    EXPECT_EQ(con.params.alpha_coeffs.size(), 4);
    EXPECT_EQ(con.params.beta_coeffs.size(), 4);
    EXPECT_EQ(con.params.kappa_coeffs.size(), 2);
    EXPECT_EQ(con.params.parameter_count(), 10);
    // kappa is linear in the year.
    const LeeCarterParams e = con.params.expand(2010);
    const double step = e.kappa(1) - e.kappa(0);
    for (Eigen::Index t = 1; t < e.kappa.size(); ++t) {
        EXPECT_NEAR(e.kappa(t) - e.kappa(t - 1), step, 1e-12);
    }
    EXPECT_NEAR(e.kappa(20), con.params.kappa(2010), 1e-12);
}

TEST(LogPoisson, ExactPolynomialSurfaceIsRecovered) {
    // Gompertz alpha/beta are polynomials of low degree and kappa is linear here.
    LeeCarterParams p = mt::gompertz_params(kIdx);
    for (int j = 0; j < kIdx.n_years(); ++j) {
        p.kappa(j) = -0.2 * (j - 4.5);
    }
    const CellGrid mu = surface(p, kIdx);
    const Dataset d = mt::expected_dataset(mu, mt::population_exposure(kIdx, 1e6));
    const ConstrainedFit con = fit_constrained(d, constrained_config());
    const CellGrid fitted = surface(con.params.expand(), kIdx);
    EXPECT_LE(((fitted.values().array() / mu.values().array()) - 1.0).abs().maxCoeff(), 1e-6);
}

TEST(LogPoisson, TwoStageIsASubmodelFitToo) {
    const Dataset d = mt::random_dataset(kIdx, 12);
    const ConstrainedFit direct = fit_constrained(d, constrained_config());
    const ConstrainedFit two = fit_two_stage(d, constrained_config());
    EXPECT_TRUE(two.two_stage);
    EXPECT_LE(two.params.loglik, direct.params.loglik + 1e-8 * std::abs(direct.params.loglik));
    const LeeCarterParams e = two.params.expand();
    EXPECT_NEAR(e.beta.sum(), 1.0, 1e-10);
    EXPECT_NEAR(e.kappa.sum(), 0.0, 1e-10);
}

TEST(LogPoisson, SmallerVarianceOnSmallPopulations) {
    const AgeYearIndex idx(60, 89, 1989, 2003);
    const CellGrid mu = surface(mt::gompertz_params(idx), idx);
    const CellGrid l = mt::population_exposure(idx, 2e4);
    Eigen::ArrayXXd sf = Eigen::ArrayXXd::Zero(30, 15), qf = sf, sc = sf, qc = sf;
    const int n = 20;
    for (int r = 0; r < n; ++r) {
        const Dataset d = simulate_deaths(mu, l, 500 + static_cast<std::uint64_t>(r));
        const Eigen::ArrayXXd f = surface(fit_free(d).params, idx).values().array();
        const Eigen::ArrayXXd c = surface(fit_constrained(d, constrained_config()).params.expand(), idx).values().array();
        sf += f;
        qf += f * f;
        sc += c;
        qc += c * c;
    }
    const Eigen::ArrayXXd vf = qf - sf * sf / n;
    const Eigen::ArrayXXd vc = qc - sc * sc / n;
    EXPECT_GE((vc < vf).count(), static_cast<Eigen::Index>(0.8 * 450));
}
