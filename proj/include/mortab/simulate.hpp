#pragma once

#include "mortab/grid.hpp"

#include <cstdint>

namespace mortab {

/// Deaths drawn as Poisson(L mu) per cell with a seeded 64-bit Mersenne
/// Twister. A draw above the exposure is capped at L so that the result is
/// a valid Dataset. Missing exposure or hazard cells stay missing.
Dataset simulate_deaths(const CellGrid &hazard, const CellGrid &exposure, std::uint64_t seed);

} // namespace mortab
