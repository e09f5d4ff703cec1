#include "mortab/pipeline.hpp"

#include "mortab/csv.hpp"
#include "mortab/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mortab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char *kModule = "cli-io";

std::vector<double> to_vector(const Eigen::VectorXd &v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const json &j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const json &field(const json &j, const char *key) {
    if (!j.contains(key)) {
        throw ValidationError(kModule, std::string("params file lacks '") + key + "'");
    }
    return j.at(key);
}

CellGrid raw_hazard(const Dataset &data) { return hazard_grid(raw_rates(data)); }

const ReferenceTableSet &need_reference(const std::optional<ReferenceTableSet> &reference) {
    if (!reference) {
        throw ValidationError(kModule, "the logit model needs a reference table (--reference)");
    }
    return *reference;
}

} // namespace

void PipelineConfig::validate() const {
    if (models.empty()) {
        throw ValidationError(kModule, "no model selected");
    }
    if (value_age_min > value_age_max) {
        throw ValidationError(kModule, "valuation age range is empty");
    }
    closure.validate();
    valuation.validate();
    poisson.validate();
}

Inputs load_inputs(const fs::path &deaths, const fs::path &exposure, const fs::path &reference) {
    if (deaths.empty() || exposure.empty()) {
        throw ValidationError(kModule, "both --deaths and --exposure are required");
    }
    Inputs in{Dataset(read_grid_csv(deaths, GridKind::Deaths), read_grid_csv(exposure, GridKind::Exposure)),
              std::nullopt};
    if (!reference.empty()) {
        in.reference.emplace(read_grid_csv(reference, GridKind::Rate));
    }
    return in;
}

FittedModel fit_model(Provenance model, const Inputs &inputs, const PipelineConfig &config) {
    FittedModel out;
    out.provenance = model;
    const Dataset &data = inputs.data;
    switch (model) {
    case Provenance::LeeCarter: {
        const LeeCarterFit f = fit_lee_carter(log_hazard_grid(raw_hazard(data)), config.lee_carter);
        out.params = f.params;
        out.report = {{"objective", f.objective},       {"iterations", f.iterations},
                      {"used_cells", f.used_cells},     {"excluded_cells", f.excluded_cells},
                      {"svd_route", f.svd_route},       {"sigma2", f.params.sigma2}};
        break;
    }
    case Provenance::LogPoissonFree: {
        const PoissonFit f = fit_free(data, config.poisson);
        out.params = f.params;
        out.report = {{"loglik", f.loglik},
                      {"iterations", f.iterations},
                      {"cyclic_iterations", f.cyclic_iterations},
                      {"score_norm", f.score_norm},
                      {"boundary", f.boundary},
                      {"boundary_ages", f.boundary_ages}};
        break;
    }
    case Provenance::LogPoissonConstrained: {
        PoissonFitConfig cfg = config.poisson;
        cfg.constrained = true;
        const ConstrainedFit f = config.two_stage ? fit_two_stage(data, cfg) : fit_constrained(data, cfg);
        out.params = f.params;
        out.report = {{"loglik", f.params.loglik},
                      {"iterations", f.iterations},
                      {"score_norm", f.score_norm},
                      {"two_stage", f.two_stage},
                      {"boundary", f.boundary},
                      {"parameter_count", f.params.parameter_count()}};
        break;
    }
    case Provenance::LogitReference: {
        const auto &ref = need_reference(inputs.reference);
        LogitModel m;
        if (config.logit_mode == LogitFitMode::OLS) {
            m = fit_ols(raw_rates(data), ref, config.age_floor);
        } else {
            E60Options opt;
            opt.age = config.age_floor;
            opt.closure = config.closure;
            m = fit_e60(data, ref, config.valuation_year, opt);
        }
        out.params = m;
        out.report = {{"r2", m.r2}, {"n_points", m.n_points}};
        if (m.mode == LogitFitMode::E60Constrained) {
            out.report["margin"] = m.margin;
            out.report["e_raw"] = m.e_raw;
            out.report["e_smoothed"] = m.e_smoothed;
        }
        break;
    }
    case Provenance::Raw:
        throw ValidationError(kModule, "raw rates are not a fitted model");
    }
    return out;
}

json to_json(const FittedModel &model, const PipelineConfig &config) {
    json j;
    j["model"] = std::string(to_string(model.provenance));
    json p;
    if (const auto *lc = std::get_if<LeeCarterParams>(&model.params)) {
        p = {{"age_min", lc->age_min},           {"year_min", lc->year_min},
             {"alpha", to_vector(lc->alpha)},    {"beta", to_vector(lc->beta)},
             {"kappa", to_vector(lc->kappa)},    {"sigma2", lc->sigma2}};
    } else if (const auto *cp = std::get_if<ConstrainedParams>(&model.params)) {
        p = {{"age_min", cp->age_min},
             {"age_max", cp->age_max},
             {"year_min", cp->year_min},
             {"year_max", cp->year_max},
             {"alpha_coeffs", to_vector(cp->alpha_coeffs)},
             {"beta_coeffs", to_vector(cp->beta_coeffs)},
             {"kappa_coeffs", to_vector(cp->kappa_coeffs)},
             {"loglik", cp->loglik}};
    } else {
        const auto &lm = std::get<LogitModel>(model.params);
        p = {{"a", lm.a},
             {"b", lm.b},
             {"mode", lm.mode == LogitFitMode::OLS ? "ols" : "e60"},
             {"age_floor", lm.age_floor},
             {"r2", lm.r2},
             {"n_points", lm.n_points},
             {"margin", lm.margin},
             {"e_raw", lm.e_raw},
             {"e_smoothed", lm.e_smoothed},
             {"valuation_year", lm.valuation_year}};
    }
    j["params"] = p;
    j["closure"] = {{"pivot_age", config.closure.pivot_age},
                    {"base_age", config.closure.base_age},
                    {"omega", config.closure.omega},
                    {"target_mu_omega", config.closure.target_mu_omega},
                    {"source", config.closure_source == ClosureSource::Raw ? "raw" : "fitted"}};
    j["fit"] = model.report;
    return j;
}

FittedModel model_from_json(const json &j) {
    try {
        FittedModel m;
        m.provenance = provenance_from_string(field(j, "model").get<std::string>());
        const json &p = field(j, "params");
        switch (m.provenance) {
        case Provenance::LeeCarter:
        case Provenance::LogPoissonFree: {
            LeeCarterParams lc;
            lc.age_min = field(p, "age_min").get<int>();
            lc.year_min = field(p, "year_min").get<int>();
            lc.alpha = to_eigen(field(p, "alpha"));
            lc.beta = to_eigen(field(p, "beta"));
            lc.kappa = to_eigen(field(p, "kappa"));
            lc.sigma2 = p.value("sigma2", 0.0);
            if (lc.alpha.size() == 0 || lc.alpha.size() != lc.beta.size() || lc.kappa.size() == 0) {
                throw ValidationError(kModule, "params file: alpha/beta/kappa sizes disagree");
            }
            m.params = lc;
            break;
        }
        case Provenance::LogPoissonConstrained: {
            ConstrainedParams cp;
            cp.age_min = field(p, "age_min").get<int>();
            cp.age_max = field(p, "age_max").get<int>();
            cp.year_min = field(p, "year_min").get<int>();
            cp.year_max = field(p, "year_max").get<int>();
            cp.alpha_coeffs = to_eigen(field(p, "alpha_coeffs"));
            cp.beta_coeffs = to_eigen(field(p, "beta_coeffs"));
            cp.kappa_coeffs = to_eigen(field(p, "kappa_coeffs"));
            cp.loglik = p.value("loglik", 0.0);
            m.params = cp;
            break;
        }
        case Provenance::LogitReference: {
            LogitModel lm;
            lm.a = field(p, "a").get<double>();
            lm.b = field(p, "b").get<double>();
            lm.mode = p.value("mode", "e60") == "ols" ? LogitFitMode::OLS : LogitFitMode::E60Constrained;
            lm.age_floor = p.value("age_floor", 60);
            lm.r2 = p.value("r2", 0.0);
            lm.n_points = p.value("n_points", 0);
            lm.margin = p.value("margin", 0.0);
            lm.e_raw = p.value("e_raw", 0.0);
            lm.e_smoothed = p.value("e_smoothed", 0.0);
            lm.valuation_year = p.value("valuation_year", 0);
            m.params = lm;
            break;
        }
        case Provenance::Raw:
            throw ValidationError(kModule, "params file names the raw table, which has no parameters");
        }
        m.report = j.value("fit", json::object());
        return m;
    } catch (const json::exception &e) {
        throw ValidationError(kModule, std::string("malformed params file: ") + e.what());
    }
}

void closure_from_json(const json &j, PipelineConfig &config) {
    if (!j.contains("closure")) {
        return;
    }
    const json &c = j.at("closure");
    config.closure.pivot_age = c.value("pivot_age", config.closure.pivot_age);
    config.closure.base_age = c.value("base_age", config.closure.base_age);
    config.closure.omega = c.value("omega", config.closure.omega);
    config.closure.target_mu_omega = c.value("target_mu_omega", config.closure.target_mu_omega);
    config.closure_source = c.value("source", "fitted") == "raw" ? ClosureSource::Raw : ClosureSource::Fitted;
}

ProspectiveTable table_for(const FittedModel &model, const CellGrid *raw_hazard,
                           const std::optional<ReferenceTableSet> &reference, const PipelineConfig &config) {
    const TableOptions options{config.closure, config.closure_source, config.last_year};
    if (const auto *lc = std::get_if<LeeCarterParams>(&model.params)) {
        return build_table(*lc, model.provenance, options, raw_hazard);
    }
    if (const auto *cp = std::get_if<ConstrainedParams>(&model.params)) {
        return build_table(*cp, options, raw_hazard);
    }
    const ProspectiveTable t = build_logit_table(std::get<LogitModel>(model.params), need_reference(reference));
    return config.last_year > 0 ? truncate_years(t, config.last_year) : t;
}

CellGrid fitted_hazard(const FittedModel &model, const AgeYearIndex &index,
                       const std::optional<ReferenceTableSet> &reference) {
    if (const auto *lc = std::get_if<LeeCarterParams>(&model.params)) {
        return surface(*lc, index);
    }
    if (const auto *cp = std::get_if<ConstrainedParams>(&model.params)) {
        return surface(cp->expand(index.year_max), index);
    }
    return hazard_grid(apply(std::get<LogitModel>(model.params), need_reference(reference), index));
}

std::vector<ValuationRow> value_table(const ProspectiveTable &table, const std::string &label, int year, int age_min,
                                      int age_max, const ValuationConfig &config) {
    std::vector<ValuationRow> rows;
    for (int x = std::max(age_min, table.index().age_min); x <= std::min(age_max, table.omega()); ++x) {
        rows.push_back({x, label, annuity(table, x, year, config), residual_life_expectancy(table, x, year)});
    }
    return rows;
}

std::string valuation_csv(const std::vector<ValuationRow> &rows) {
    std::ostringstream out;
    out << "age,model,a_x,e_x\n";
    for (const auto &r : rows) {
        out << r.age << ',' << r.model << ',' << format_double(r.a_x) << ',' << format_double(r.e_x) << '\n';
    }
    return out.str();
}

json deviance_json(const DevianceReport &r) {
    json classes = json::array();
    for (const auto &c : r.classes) {
        classes.push_back({c.lo, c.hi});
    }
    auto rows = [](const Eigen::MatrixXd &m) {
        json a = json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                row.push_back(std::isnan(m(i, j)) ? json(nullptr) : json(m(i, j)));
            }
            a.push_back(row);
        }
        return a;
    };
    return {{"age_min", r.index.age_min},
            {"age_max", r.index.age_max},
            {"year_min", r.index.year_min},
            {"year_max", r.index.year_max},
            {"grouped", r.grouped},
            {"classes", classes},
            {"per_year", to_vector(r.per_year)},
            {"per_class", rows(r.per_class)},
            {"per_cell", rows(r.per_cell)},
            {"excluded_cells", r.excluded_cells}};
}

std::string deviance_csv(const DevianceReport &r) {
    std::ostringstream out;
    out << "year,chi\n";
    for (int j = 0; j < r.index.n_years(); ++j) {
        out << r.index.year_min + j << ',' << format_double(r.per_year(j)) << '\n';
    }
    return out.str();
}

std::string plot_data(const std::vector<std::string> &columns, const std::vector<std::vector<double>> &rows) {
    std::ostringstream out;
    out << '#';
    for (const auto &c : columns) {
        out << ' ' << c;
    }
    out << '\n';
    for (const auto &row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            out << (k ? " " : "") << format_double(row[k]);
        }
        out << '\n';
    }
    return out.str();
}

std::string dump(const json &j) { return j.dump(2) + "\n"; }

void run(const PipelineConfig &config) {
    config.validate();
    const Inputs inputs = load_inputs(config.deaths, config.exposure, config.reference);
    const auto &idx = inputs.data.index();
    const int year = config.valuation_year > 0 ? config.valuation_year : idx.year_max;
    fs::create_directories(config.out_dir);

    const CellGrid raw_mu = raw_hazard(inputs.data);
    std::vector<ValuationRow> all_rows;
    std::vector<std::string> names;
    std::vector<Eigen::VectorXd> chi;
    std::vector<std::vector<ValuationRow>> annuities;

    for (Provenance p : config.models) {
        const std::string name(to_string(p));
        const fs::path dir = config.out_dir / name;
        fs::create_directories(dir);

        const FittedModel model = fit_model(p, inputs, config);
        write_file_atomic(dir / "params.json", dump(to_json(model, config)));
        const ProspectiveTable table = table_for(model, &raw_mu, inputs.reference, config);
        write_file_atomic(dir / "table.csv", grid_to_csv(table.q()));

        const auto rows = value_table(table, name, year, config.value_age_min, config.value_age_max, config.valuation);
        write_file_atomic(dir / "valuation.csv", valuation_csv(rows));
        all_rows.insert(all_rows.end(), rows.begin(), rows.end());
        annuities.push_back(rows);

        const CellGrid mu = fitted_hazard(model, idx, inputs.reference);
        const DevianceReport dev =
            chi2_by_year(inputs.data, fitted_deaths(inputs.data.exposure(), mu), default_age_classes(), config.grouped);
        write_file_atomic(dir / "deviance.csv", deviance_csv(dev));
        write_file_atomic(dir / "deviance.json", dump(deviance_json(dev)));
        chi.push_back(dev.per_year);
        names.push_back(name);

        const ResidualReport res = residual_grid(mu, raw_mu);
        std::vector<std::vector<double>> res_rows;
        for (std::size_t k = 0; k < res.ages.size(); ++k) {
            res_rows.push_back({static_cast<double>(res.ages[k]), res.mean[k], res.variance[k],
                                static_cast<double>(res.count[k])});
        }
        write_file_atomic(dir / "residuals.dat", plot_data({"age", "mean", "variance", "cells"}, res_rows));
    }

    write_file_atomic(config.out_dir / "valuation.csv", valuation_csv(all_rows));

    std::vector<std::string> cols{"year"};
    cols.insert(cols.end(), names.begin(), names.end());
    std::vector<std::vector<double>> chi_rows;
    for (int j = 0; j < idx.n_years(); ++j) {
        std::vector<double> row{static_cast<double>(idx.year_min + j)};
        for (const auto &c : chi) {
            row.push_back(c(j));
        }
        chi_rows.push_back(row);
    }
    write_file_atomic(config.out_dir / "chi2.dat", plot_data(cols, chi_rows));

    // Ages common to every model's valuation.
    cols.front() = "age";
    std::vector<std::vector<double>> a_rows;
    for (int x = config.value_age_min; x <= config.value_age_max; ++x) {
        std::vector<double> row{static_cast<double>(x)};
        for (const auto &rows : annuities) {
            const auto it = std::find_if(rows.begin(), rows.end(), [x](const ValuationRow &r) { return r.age == x; });
            if (it == rows.end()) {
                break;
            }
            row.push_back(it->a_x);
        }
        if (row.size() == annuities.size() + 1) {
            a_rows.push_back(row);
        }
    }
    write_file_atomic(config.out_dir / "annuity.dat", plot_data(cols, a_rows));

    const auto &d = inputs.data;
    std::vector<std::vector<double>> v_rows;
    const int last = idx.n_years() - 1;
    for (int i = 0; i < idx.n_ages(); ++i) {
        if (d.usable(i, last)) {
            const double l = d.exposure().value(i, last);
            const double q = d.deaths().value(i, last) / l;
            v_rows.push_back({static_cast<double>(idx.age_min + i), q, l, rate_variance(q, l)});
        }
    }
    write_file_atomic(config.out_dir / "variance.dat", plot_data({"age", "q", "exposure", "variance"}, v_rows));
}

} // namespace mortab
