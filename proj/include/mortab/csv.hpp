#pragma once

#include "mortab/grid.hpp"

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>

namespace mortab {

// Grid CSV layout:
//
//   age,1989,1990,...,2003
//   60,12,15,...,9
//   61,,14,...,11        <- empty field = missing cell
//
// Ages and years must be contiguous and increasing.

CellGrid parse_grid_csv(std::istream &in, GridKind kind, const std::string &source = "<stream>");
CellGrid read_grid_csv(const std::filesystem::path &path, GridKind kind);

/// Values are written in shortest round-trip form, so parse(write(g)) == g bit for bit.
void write_grid_csv(std::ostream &out, const CellGrid &grid);
std::string grid_to_csv(const CellGrid &grid);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path &path, const std::string &content);

} // namespace mortab
