#include "mortab/simulate.hpp"

#include "mortab/error.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace mortab {

Dataset simulate_deaths(const CellGrid &hazard, const CellGrid &exposure, std::uint64_t seed) {
    if (hazard.kind() != GridKind::Hazard || exposure.kind() != GridKind::Exposure) {
        throw ValidationError("simulate", "simulation needs a hazard grid and an exposure grid");
    }
    const auto &idx = exposure.index();
    if (!hazard.index().covers(idx)) {
        throw ShapeError("simulate", "hazard grid does not cover the exposure grid");
    }
    const CellGrid mu = hazard.slice(idx);
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(idx.n_ages(), idx.n_years());
    Mask present = exposure.mask() && mu.mask();
    // Column-major walk fixes the order in which the stream is consumed.
    for (int j = 0; j < idx.n_years(); ++j) {
        for (int i = 0; i < idx.n_ages(); ++i) {
            if (!present(i, j)) {
                continue;
            }
            const double mean = exposure.value(i, j) * mu.value(i, j);
            if (mean > 0.0) {
                std::poisson_distribution<long long> draw(mean);
                d(i, j) = std::min(static_cast<double>(draw(rng)), exposure.value(i, j));
            }
        }
    }
    return Dataset(CellGrid(idx, GridKind::Deaths, d, present), exposure.slice(idx));
}

} // namespace mortab
