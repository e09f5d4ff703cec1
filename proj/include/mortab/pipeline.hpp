#pragma once

#include "mortab/closure.hpp"
#include "mortab/diagnostics.hpp"
#include "mortab/lee_carter.hpp"
#include "mortab/log_poisson.hpp"
#include "mortab/logit_reference.hpp"
#include "mortab/projection.hpp"
#include "mortab/valuation.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace mortab {

struct PipelineConfig {
    std::filesystem::path deaths;
    std::filesystem::path exposure;
    std::filesystem::path reference; // needed by the logit model only
    std::vector<Provenance> models;
    ClosureParams closure;
    ClosureSource closure_source = ClosureSource::Fitted;
    LeeCarterOptions lee_carter;
    PoissonFitConfig poisson;
    bool two_stage = false;
    LogitFitMode logit_mode = LogitFitMode::E60Constrained;
    int age_floor = 60;
    ValuationConfig valuation;
    int valuation_year = 0; // 0 = last data year
    int value_age_min = 60;
    int value_age_max = 100;
    int last_year = 0; // 0 = default horizon
    bool grouped = true;
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 1;

    void validate() const;
};

struct Inputs {
    Dataset data;
    std::optional<ReferenceTableSet> reference;
};

Inputs load_inputs(const std::filesystem::path &deaths, const std::filesystem::path &exposure,
                   const std::filesystem::path &reference = {});

using ModelParams = std::variant<LeeCarterParams, ConstrainedParams, LogitModel>;

struct FittedModel {
    Provenance provenance = Provenance::LeeCarter;
    ModelParams params;
    nlohmann::json report; // fit diagnostics
};

FittedModel fit_model(Provenance model, const Inputs &inputs, const PipelineConfig &config);

/// Parameters, closure settings and fit report; enough to rebuild the table.
nlohmann::json to_json(const FittedModel &model, const PipelineConfig &config);
FittedModel model_from_json(const nlohmann::json &j);
/// Applies the closure settings stored by to_json onto `config`.
void closure_from_json(const nlohmann::json &j, PipelineConfig &config);

/// Closed prospective table up to `config.last_year` (or the default horizon).
/// `raw_hazard` is required when the closure takes its anchors from raw data.
ProspectiveTable table_for(const FittedModel &model, const CellGrid *raw_hazard,
                           const std::optional<ReferenceTableSet> &reference, const PipelineConfig &config);

/// Fitted hazard on `index` from the model itself, before any closure.
CellGrid fitted_hazard(const FittedModel &model, const AgeYearIndex &index,
                       const std::optional<ReferenceTableSet> &reference);

struct ValuationRow {
    int age = 0;
    std::string model;
    double a_x = 0.0;
    double e_x = 0.0;
};

std::vector<ValuationRow> value_table(const ProspectiveTable &table, const std::string &label, int year, int age_min,
                                      int age_max, const ValuationConfig &config);
std::string valuation_csv(const std::vector<ValuationRow> &rows);

nlohmann::json deviance_json(const DevianceReport &report);
std::string deviance_csv(const DevianceReport &report);

/// Two or more numeric columns under a '#' header line.
std::string plot_data(const std::vector<std::string> &columns, const std::vector<std::vector<double>> &rows);

/// Fits every configured model and writes per-model artifacts under
/// out_dir/<model>/ plus side-by-side comparison files in out_dir.
void run(const PipelineConfig &config);

std::string dump(const nlohmann::json &j);

} // namespace mortab
