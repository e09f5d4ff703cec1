#include "mortab/cli.hpp"

#include "mortab/csv.hpp"
#include "mortab/error.hpp"
#include "mortab/pipeline.hpp"
#include "mortab/simulate.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <variant>

namespace mortab::cli {

namespace fs = std::filesystem;

namespace {

const char *kModule = "cli-io";

struct Options {
    std::string deaths, exposure, reference, params, table, input, anchors, hazard;
    std::string out;
    std::string model;
    std::vector<std::string> models;
    std::string kind = "hazard";
    std::string closure_source = "fitted";
    std::string logit_mode = "e60";
    std::string ages = "60-100";
    bool two_stage = false;
    bool immediate = false;
    bool continuous = false;
    bool ungrouped = false;
    int age_floor = 60;
    int alpha_degree = 3, beta_degree = 3, kappa_degree = 1;
    int pivot = 80, base = 65, omega = 110;
    double target_mu = 1.0;
    double rate = 0.0225;
    int year = 0;
    int last_year = 0;
    std::uint64_t seed = 1;
};

void add_data(CLI::App *cmd, Options &o, bool with_reference = true) {
    cmd->add_option("--deaths", o.deaths, "Deaths grid CSV");
    cmd->add_option("--exposure", o.exposure, "Exposure grid CSV");
    if (with_reference) {
        cmd->add_option("--reference", o.reference, "Reference rate grid CSV (logit model)");
    }
}

void add_closure(CLI::App *cmd, Options &o) {
    cmd->add_option("--pivot", o.pivot, "Closure pivot age")->capture_default_str();
    cmd->add_option("--base", o.base, "Closure base age")->capture_default_str();
    cmd->add_option("--omega", o.omega, "Terminal age")->capture_default_str();
    cmd->add_option("--target-mu", o.target_mu, "Hazard at omega")->capture_default_str();
    cmd->add_option("--closure-source", o.closure_source, "Growth anchors: fitted or raw")
        ->check(CLI::IsMember({"fitted", "raw"}))
        ->capture_default_str();
}

void add_fit(CLI::App *cmd, Options &o) {
    cmd->add_flag("--two-stage", o.two_stage, "Constrained model by least squares on the free curves");
    cmd->add_option("--logit-mode", o.logit_mode, "Logit criterion: ols or e60")
        ->check(CLI::IsMember({"ols", "e60"}))
        ->capture_default_str();
    cmd->add_option("--age-floor", o.age_floor, "Youngest age used by the logit fit")->capture_default_str();
    cmd->add_option("--alpha-degree", o.alpha_degree)->capture_default_str();
    cmd->add_option("--beta-degree", o.beta_degree)->capture_default_str();
    cmd->add_option("--kappa-degree", o.kappa_degree)->capture_default_str();
    cmd->add_option("--valuation-year", o.year, "Year of the e60 comparison (default: last data year)");
}

void add_valuation(CLI::App *cmd, Options &o) {
    cmd->add_option("--rate", o.rate, "Technical rate")->capture_default_str();
    cmd->add_option("--year", o.year, "Valuation year (default: last data year, else the table's first year)");
    cmd->add_option("--ages", o.ages, "Age range, e.g. 60-100")->capture_default_str();
    cmd->add_flag("--immediate", o.immediate, "Annuity-immediate (first payment after one year)");
}

void add_common(CLI::App *cmd, Options &o) {
    cmd->add_option("--seed", o.seed, "Random seed (MORTAB_SEED overrides)")->capture_default_str();
    cmd->add_option("--config", "Flat key=value file; command-line flags take precedence");
}

std::pair<int, int> parse_ages(const std::string &s) {
    try {
        const auto dash = s.find('-');
        if (dash == std::string::npos) {
            const int a = std::stoi(s);
            return {a, a};
        }
        return {std::stoi(s.substr(0, dash)), std::stoi(s.substr(dash + 1))};
    } catch (const std::exception &) {
        throw ValidationError(kModule, "bad age range '" + s + "'");
    }
}

PipelineConfig make_config(const Options &o) {
    PipelineConfig c;
    c.deaths = o.deaths;
    c.exposure = o.exposure;
    c.reference = o.reference;
    c.closure = {o.pivot, o.base, o.omega, o.target_mu};
    c.closure_source = o.closure_source == "raw" ? ClosureSource::Raw : ClosureSource::Fitted;
    c.poisson.alpha_degree = o.alpha_degree;
    c.poisson.beta_degree = o.beta_degree;
    c.poisson.kappa_degree = o.kappa_degree;
    c.two_stage = o.two_stage;
    c.logit_mode = o.logit_mode == "ols" ? LogitFitMode::OLS : LogitFitMode::E60Constrained;
    c.age_floor = o.age_floor;
    c.valuation.rate = o.rate;
    c.valuation.immediate = o.immediate;
    c.valuation_year = o.year;
    std::tie(c.value_age_min, c.value_age_max) = parse_ages(o.ages);
    c.last_year = o.last_year;
    c.grouped = !o.ungrouped;
    c.seed = o.seed;
    if (!o.out.empty()) {
        c.out_dir = o.out;
    }
    return c;
}

std::vector<Provenance> parse_models(const std::vector<std::string> &names) {
    std::vector<Provenance> out;
    for (const auto &n : names) {
        out.push_back(provenance_from_string(n));
    }
    return out;
}

FittedModel read_params(const std::string &path, PipelineConfig &config) {
    if (path.empty()) {
        throw ValidationError(kModule, "--params is required");
    }
    std::ifstream in(path);
    if (!in) {
        throw IoError(kModule, "cannot open " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw ValidationError(kModule, path + ": " + e.what());
    }
    closure_from_json(j, config);
    return model_from_json(j);
}

std::optional<ReferenceTableSet> maybe_reference(const std::string &path) {
    if (path.empty()) {
        return std::nullopt;
    }
    return ReferenceTableSet(read_grid_csv(path, GridKind::Rate));
}

std::optional<CellGrid> maybe_raw_hazard(const Options &o) {
    if (o.deaths.empty() || o.exposure.empty()) {
        return std::nullopt;
    }
    const Dataset d(read_grid_csv(o.deaths, GridKind::Deaths), read_grid_csv(o.exposure, GridKind::Exposure));
    return hazard_grid(raw_rates(d));
}

// Last year of the fitted data, 0 when the params do not record it.
int last_data_year(const FittedModel &model) {
    if (const auto *lc = std::get_if<LeeCarterParams>(&model.params)) {
        return lc->year_max();
    }
    if (const auto *cp = std::get_if<ConstrainedParams>(&model.params)) {
        return cp->year_max;
    }
    return std::get<LogitModel>(model.params).valuation_year;
}

ProspectiveTable rebuild_table(const Options &o, PipelineConfig &config, std::string &label, int *data_year = nullptr) {
    const FittedModel model = read_params(o.params, config);
    label = std::string(to_string(model.provenance));
    if (data_year != nullptr) {
        *data_year = last_data_year(model);
    }
    const auto raw = config.closure_source == ClosureSource::Raw ? maybe_raw_hazard(o) : std::nullopt;
    if (config.closure_source == ClosureSource::Raw && !raw) {
        throw ValidationError(kModule, "raw closure anchors need --deaths and --exposure");
    }
    return table_for(model, raw ? &*raw : nullptr, maybe_reference(o.reference), config);
}

fs::path out_file(const Options &o, const char *fallback) { return o.out.empty() ? fs::path(fallback) : fs::path(o.out); }

fs::path out_dir(const Options &o) {
    const fs::path dir = o.out.empty() ? fs::path(".") : fs::path(o.out);
    fs::create_directories(dir);
    return dir;
}

void cmd_fit(const Options &o, std::ostream &out) {
    PipelineConfig c = make_config(o);
    c.models = {provenance_from_string(o.model)};
    c.validate();
    const Inputs in = load_inputs(c.deaths, c.exposure, c.reference);
    const FittedModel model = fit_model(c.models.front(), in, c);
    const CellGrid raw = hazard_grid(raw_rates(in.data));
    const ProspectiveTable table = table_for(model, &raw, in.reference, c);
    const fs::path dir = out_dir(o);
    write_file_atomic(dir / "params.json", dump(to_json(model, c)));
    write_file_atomic(dir / "table.csv", grid_to_csv(table.q()));
    out << "fitted " << o.model << " -> " << (dir / "params.json").string() << ", " << (dir / "table.csv").string()
        << "\n";
}

void cmd_close(const Options &o, std::ostream &out) {
    if (o.input.empty()) {
        throw ValidationError(kModule, "--input is required");
    }
    const PipelineConfig c = make_config(o);
    c.closure.validate();
    const CellGrid mu = o.kind == "rate" ? hazard_grid(read_grid_csv(o.input, GridKind::Rate))
                                         : read_grid_csv(o.input, GridKind::Hazard);
    const CellGrid closed =
        o.anchors.empty() ? close_grid(mu, c.closure)
                          : close_grid(mu, read_grid_csv(o.anchors, GridKind::Hazard), c.closure);
    const fs::path path = out_file(o, "closed.csv");
    write_file_atomic(path, grid_to_csv(closed));
    out << "closed hazards -> " << path.string() << "\n";
}

void cmd_project(const Options &o, std::ostream &out) {
    PipelineConfig c = make_config(o);
    std::string label;
    const ProspectiveTable table = rebuild_table(o, c, label);
    const fs::path path = out_file(o, "table.csv");
    write_file_atomic(path, grid_to_csv(table.q()));
    out << "projected " << label << " to " << table.index().year_max << " -> " << path.string() << "\n";
}

void cmd_value(const Options &o, std::ostream &out) {
    PipelineConfig c = make_config(o);
    std::string label = o.model;
    std::optional<ProspectiveTable> table;
    int data_year = 0;
    if (!o.table.empty()) {
        const Provenance p = label.empty() ? Provenance::Raw : provenance_from_string(label);
        if (label.empty()) {
            label = "raw";
        }
        table.emplace(read_grid_csv(o.table, GridKind::Rate), p);
    } else {
        table.emplace(rebuild_table(o, c, label, &data_year));
    }
    if (data_year == 0 && !o.deaths.empty()) {
        data_year = read_grid_csv(o.deaths, GridKind::Deaths).index().year_max;
    }
    const int year = o.year > 0 ? o.year : data_year > 0 ? data_year : table->index().year_min;
    auto rows = value_table(*table, label, year, c.value_age_min, c.value_age_max, c.valuation);
    std::string csv = valuation_csv(rows);
    if (o.continuous) {
        std::ostringstream s;
        s << "age,model,a_x,e_x,a_continuous\n";
        for (const auto &r : rows) {
            s << r.age << ',' << r.model << ',' << format_double(r.a_x) << ',' << format_double(r.e_x) << ','
              << format_double(continuous_annuity(*table, r.age, year, c.valuation)) << '\n';
        }
        csv = s.str();
    }
    const fs::path path = out_file(o, "valuation.csv");
    write_file_atomic(path, csv);
    out << "valued " << rows.size() << " ages in " << year << " -> " << path.string() << "\n";
}

void cmd_diagnose(const Options &o, std::ostream &out) {
    PipelineConfig c = make_config(o);
    const FittedModel model = read_params(o.params, c);
    const Inputs in = load_inputs(c.deaths, c.exposure, c.reference);
    const auto &idx = in.data.index();
    const CellGrid mu = fitted_hazard(model, idx, in.reference);
    const DevianceReport dev =
        chi2_by_year(in.data, fitted_deaths(in.data.exposure(), mu), default_age_classes(), c.grouped);
    const ResidualReport res = residual_grid(mu, hazard_grid(raw_rates(in.data)));

    const fs::path dir = out_dir(o);
    write_file_atomic(dir / "deviance.csv", deviance_csv(dev));
    write_file_atomic(dir / "deviance.json", dump(deviance_json(dev)));
    std::vector<std::vector<double>> chi_rows;
    for (int j = 0; j < idx.n_years(); ++j) {
        chi_rows.push_back({static_cast<double>(idx.year_min + j), dev.per_year(j)});
    }
    write_file_atomic(dir / "chi2.dat", plot_data({"year", std::string(to_string(model.provenance))}, chi_rows));
    std::vector<std::vector<double>> res_rows;
    for (std::size_t k = 0; k < res.ages.size(); ++k) {
        res_rows.push_back(
            {static_cast<double>(res.ages[k]), res.mean[k], res.variance[k], static_cast<double>(res.count[k])});
    }
    write_file_atomic(dir / "residuals.dat", plot_data({"age", "mean", "variance", "cells"}, res_rows));
    out << "deviance over " << idx.n_years() << " years (" << dev.excluded_cells << " excluded cells) -> "
        << dir.string() << "\n";
}

void cmd_simulate(const Options &o, std::ostream &out) {
    if (o.hazard.empty() || o.exposure.empty()) {
        throw ValidationError(kModule, "--hazard and --exposure are required");
    }
    const Dataset d = simulate_deaths(read_grid_csv(o.hazard, GridKind::Hazard),
                                      read_grid_csv(o.exposure, GridKind::Exposure), o.seed);
    const fs::path path = out_file(o, "deaths.csv");
    write_file_atomic(path, grid_to_csv(d.deaths()));
    out << "simulated deaths (seed " << o.seed << ") -> " << path.string() << "\n";
}

void cmd_compare(const Options &o, std::ostream &out) {
    PipelineConfig c = make_config(o);
    std::vector<std::string> names = o.models;
    if (names.empty()) {
        names = {"lee-carter", "log-poisson", "log-poisson-constrained"};
        if (!o.reference.empty()) {
            names.push_back("logit");
        }
    }
    c.models = parse_models(names);
    run(c);
    out << "compared " << names.size() << " models -> " << c.out_dir.string() << "\n";
}

// Turns the items of a flat key=value file into leading --key=value
// arguments of the subcommand, so that explicit flags placed after them win.
std::vector<std::string> expand_config(const std::vector<std::string> &args) {
    std::vector<std::string> out;
    std::string path;
    for (std::size_t k = 0; k < args.size(); ++k) {
        if (args[k] == "--config" && k + 1 < args.size()) {
            path = args[++k];
        } else if (args[k].rfind("--config=", 0) == 0) {
            path = args[k].substr(9);
        } else {
            out.push_back(args[k]);
        }
    }
    if (path.empty() || out.empty()) {
        return out;
    }
    std::ifstream in(path);
    if (!in) {
        throw IoError(kModule, "cannot open config file " + path);
    }
    std::vector<std::string> injected;
    for (const auto &item : CLI::ConfigTOML().from_config(in)) {
        const std::string name = item.fullname();
        for (const auto &v : item.inputs) {
            injected.push_back("--" + name + "=" + v);
        }
    }
    out.insert(out.begin() + 1, injected.begin(), injected.end());
    return out;
}

} // namespace

int run(const std::vector<std::string> &raw_args, std::ostream &out, std::ostream &err) {
    Options o;
    CLI::App app{"Mortality tables: fit, close, project, value and diagnose", "mortab"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    auto *fit = app.add_subcommand("fit", "Fit one model and emit params.json and table.csv");
    fit->add_option("--model", o.model, "lee-carter, log-poisson, log-poisson-constrained or logit")->required();
    add_data(fit, o);
    add_fit(fit, o);
    add_closure(fit, o);
    fit->add_option("--last-year", o.last_year, "Last projected year");
    fit->add_option("--out", o.out, "Output directory");

    auto *close = app.add_subcommand("close", "Close a hazard or rate grid at the old ages");
    close->add_option("--input", o.input, "Grid CSV");
    close->add_option("--kind", o.kind, "hazard or rate")->check(CLI::IsMember({"hazard", "rate"}));
    close->add_option("--anchors", o.anchors, "Hazard grid supplying the growth anchors");
    add_closure(close, o);
    close->add_option("--out", o.out, "Output CSV");

    auto *project = app.add_subcommand("project", "Rebuild a closed prospective table from params.json");
    project->add_option("--params", o.params, "params.json from fit");
    add_data(project, o);
    project->add_option("--last-year", o.last_year, "Last projected year");
    project->add_option("--out", o.out, "Output CSV");

    auto *value = app.add_subcommand("value", "Annuities and life expectancies");
    value->add_option("--table", o.table, "Prospective rate table CSV");
    value->add_option("--params", o.params, "params.json (instead of --table)");
    value->add_option("--model", o.model, "Model label for --table");
    add_data(value, o);
    add_valuation(value, o);
    value->add_option("--last-year", o.last_year, "Last projected year when rebuilding from params");
    value->add_flag("--continuous", o.continuous, "Add the continuous annuity (parametric models)");
    value->add_option("--out", o.out, "Output CSV");

    auto *diagnose = app.add_subcommand("diagnose", "Chi-square deviations and residual summaries");
    diagnose->add_option("--params", o.params, "params.json from fit");
    add_data(diagnose, o);
    diagnose->add_flag("--ungrouped", o.ungrouped, "Per-age cells instead of five-year classes");
    diagnose->add_option("--out", o.out, "Output directory");

    auto *simulate = app.add_subcommand("simulate", "Poisson deaths from a hazard grid and exposures");
    simulate->add_option("--hazard", o.hazard, "Hazard grid CSV");
    simulate->add_option("--exposure", o.exposure, "Exposure grid CSV");
    simulate->add_option("--out", o.out, "Output deaths CSV");

    auto *compare = app.add_subcommand("compare", "Fit several models and emit side-by-side reports");
    compare->add_option("--models", o.models, "Comma-separated model list")->delimiter(',');
    add_data(compare, o);
    add_fit(compare, o);
    add_closure(compare, o);
    add_valuation(compare, o);
    compare->add_option("--last-year", o.last_year, "Last projected year");
    compare->add_flag("--ungrouped", o.ungrouped, "Per-age chi-square cells");
    compare->add_option("--out", o.out, "Output directory");

    for (auto *cmd : {fit, close, project, value, diagnose, simulate, compare}) {
        add_common(cmd, o);
    }

    try {
        std::vector<std::string> args = expand_config(raw_args);
        std::reverse(args.begin(), args.end());
        app.parse(args);
        if (const char *env = std::getenv("MORTAB_SEED"); env && *env) {
            try {
                o.seed = std::stoull(env);
            } catch (const std::exception &) {
                throw ValidationError(kModule, std::string("MORTAB_SEED is not an integer: ") + env);
            }
        }
        if (*fit) {
            cmd_fit(o, out);
        } else if (*close) {
            cmd_close(o, out);
        } else if (*project) {
            cmd_project(o, out);
        } else if (*value) {
            cmd_value(o, out);
        } else if (*diagnose) {
            cmd_diagnose(o, out);
        } else if (*simulate) {
            cmd_simulate(o, out);
        } else if (*compare) {
            cmd_compare(o, out);
        }
        return 0;
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError &e) {
        err << "mortab: " << e.what() << "\n";
        return 2;
    } catch (const Error &e) {
        err << "mortab: " << e.what() << "\n";
        return e.exit_code();
    } catch (const fs::filesystem_error &e) {
        err << "mortab: [" << kModule << "] " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        err << "mortab: " << e.what() << "\n";
        return 1;
    }
}

int main(int argc, char **argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace mortab::cli
