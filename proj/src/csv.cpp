#include "mortab/csv.hpp"

#include "mortab/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace mortab {

namespace {

const char *kModule = "data-model";

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return fields;
}

int parse_int(std::string_view s, const std::string &where) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ValidationError(kModule, where + ": expected an integer, got '" + std::string(s) + "'");
    }
    return v;
}

double parse_double(std::string_view s, const std::string &where) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw ValidationError(kModule, where + ": expected a number, got '" + std::string(s) + "'");
    }
    return v;
}

} // namespace

CellGrid parse_grid_csv(std::istream &in, GridKind kind, const std::string &source) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ValidationError(kModule, source + ": empty file");
    }
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        line.erase(0, 3);
    }
    const auto header = split(line);
    if (header.size() < 2 || header[0] != "age") {
        throw ValidationError(kModule, source + ": header must be 'age,<year>,...'");
    }
    std::vector<int> years;
    for (std::size_t k = 1; k < header.size(); ++k) {
        years.push_back(parse_int(header[k], source + " header"));
        if (k > 1 && years.back() != years[k - 2] + 1) {
            throw ValidationError(kModule, source + ": header years must be contiguous and increasing");
        }
    }

    std::vector<int> ages;
    std::vector<std::vector<std::optional<double>>> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        const auto fields = split(line);
        const std::string where = source + ":" + std::to_string(line_no);
        if (fields.size() != header.size()) {
            throw ValidationError(kModule, where + ": expected " + std::to_string(header.size()) +
                                               " fields, got " + std::to_string(fields.size()));
        }
        ages.push_back(parse_int(fields[0], where));
        if (ages.size() > 1 && ages.back() != ages[ages.size() - 2] + 1) {
            throw ValidationError(kModule, where + ": ages must be contiguous and increasing");
        }
        std::vector<std::optional<double>> row;
        for (std::size_t k = 1; k < fields.size(); ++k) {
            if (fields[k].empty()) {
                row.emplace_back();
            } else {
                row.emplace_back(parse_double(fields[k], where));
            }
        }
        rows.push_back(std::move(row));
    }
    if (ages.empty()) {
        throw ValidationError(kModule, source + ": no data rows");
    }

    const AgeYearIndex index(ages.front(), ages.back(), years.front(), years.back());
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(index.n_ages(), index.n_years());
    Mask present = Mask::Constant(index.n_ages(), index.n_years(), false);
    for (int i = 0; i < index.n_ages(); ++i) {
        for (int j = 0; j < index.n_years(); ++j) {
            if (const auto &v = rows[i][j]) {
                values(i, j) = *v;
                present(i, j) = true;
            }
        }
    }
    return CellGrid(index, kind, std::move(values), std::move(present));
}

CellGrid read_grid_csv(const std::filesystem::path &path, GridKind kind) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(kModule, "cannot open " + path.string());
    }
    return parse_grid_csv(in, kind, path.string());
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

void write_grid_csv(std::ostream &out, const CellGrid &grid) {
    const auto &idx = grid.index();
    out << "age";
    for (int t = idx.year_min; t <= idx.year_max; ++t) {
        out << ',' << t;
    }
    out << '\n';
    for (int i = 0; i < grid.rows(); ++i) {
        out << idx.age_min + i;
        for (int j = 0; j < grid.cols(); ++j) {
            out << ',';
            if (grid.present(i, j)) {
                out << format_double(grid.value(i, j));
            }
        }
        out << '\n';
    }
}

std::string grid_to_csv(const CellGrid &grid) {
    std::ostringstream out;
    write_grid_csv(out, grid);
    return out.str();
}

void write_file_atomic(const std::filesystem::path &path, const std::string &content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError(kModule, "cannot write " + tmp.string());
        }
        out << content;
        if (!out) {
            throw IoError(kModule, "write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError(kModule, "cannot rename " + tmp.string() + " to " + path.string() + ": " +
                                   ec.message());
    }
}

} // namespace mortab
