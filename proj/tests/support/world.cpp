#include "world.hpp"

#include "mortab/simulate.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace mortab::testing {

LeeCarterParams gompertz_params(const AgeYearIndex &index) {
    LeeCarterParams p;
    p.age_min = index.age_min;
    p.year_min = index.year_min;
    const int a = index.n_ages();
    const int t = index.n_years();
    p.alpha.resize(a);
    p.beta.resize(a);
    p.kappa.resize(t);
    for (int i = 0; i < a; ++i) {
        const double x = index.age_min + i;
        p.alpha(i) = -9.6 + 0.09 * x;
        p.beta(i) = 1.2 - 0.01 * (x - index.age_min);
    }
    for (int j = 0; j < t; ++j) {
        p.kappa(j) = -0.015 * j + 0.01 * std::sin(1.3 * j);
    }
    return normalize(p);
}

CellGrid population_exposure(const AgeYearIndex &index, double lives) {
    Eigen::VectorXd weight(index.n_ages());
    double survivors = 1.0;
    for (int i = 0; i < index.n_ages(); ++i) {
        const double x = index.age_min + i;
        weight(i) = survivors;
        survivors *= std::exp(-std::exp(-9.6 + 0.09 * x));
    }
    weight *= lives / weight.sum();
    Eigen::MatrixXd l(index.n_ages(), index.n_years());
    for (int j = 0; j < index.n_years(); ++j) {
        l.col(j) = weight;
    }
    return CellGrid(index, GridKind::Exposure, l);
}

ReferenceTableSet reference_tables(const AgeYearIndex &index, double shock) {
    Eigen::MatrixXd q(index.n_ages(), index.n_years());
    for (int j = 0; j < index.n_years(); ++j) {
        const double t = index.year_min + j - 2000.0;
        // Two independent year effects with different age profiles.
        const double s1 = shock * std::sin(2.1 * j + 0.4);
        const double s2 = shock * std::cos(3.7 * j + 1.1);
        for (int i = 0; i < index.n_ages(); ++i) {
            const double x = index.age_min + i;
            const double u = (x - 85.0) / 25.0;
            const double log_mu = -10.2 + 0.1 * x - 0.012 * t * (1.3 - 0.5 * (x - 50.0) / 60.0) + s1 * u * u +
                                  s2 * std::sin(3.0 * u);
            q(i, j) = -std::expm1(-std::exp(log_mu));
        }
    }
    return ReferenceTableSet(CellGrid(index, GridKind::Rate, q));
}

Dataset expected_dataset(const CellGrid &hazard, const CellGrid &exposure) {
    const CellGrid mu = hazard.slice(exposure.index());
    Eigen::MatrixXd d = exposure.values().cwiseProduct(mu.values());
    return Dataset(CellGrid(exposure.index(), GridKind::Deaths, d), exposure);
}

Dataset random_dataset(const AgeYearIndex &index, std::uint64_t seed, double exposure_lo, double exposure_hi) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(exposure_lo, exposure_hi);
    std::normal_distribution<double> noise(0.0, 0.05);
    Eigen::MatrixXd l(index.n_ages(), index.n_years());
    for (int j = 0; j < index.n_years(); ++j) {
        for (int i = 0; i < index.n_ages(); ++i) {
            l(i, j) = std::round(u(rng));
        }
    }
    const CellGrid base = surface(gompertz_params(index), index);
    Eigen::MatrixXd mu = base.values();
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
        mu.data()[k] *= std::exp(noise(rng));
    }
    return simulate_deaths(CellGrid(index, GridKind::Hazard, mu), CellGrid(index, GridKind::Exposure, l),
                           seed * 7919 + 1);
}

std::filesystem::path scratch_dir(const std::string &name) {
    const auto dir = std::filesystem::temp_directory_path() / ("mortab_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace mortab::testing
