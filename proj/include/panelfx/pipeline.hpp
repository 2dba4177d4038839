#pragma once

// Run orchestration: configuration, stage composition and report emission.
//
// A run is described by one JSON config document (every key optional except
// the data source) plus a small set of command-line overrides; flags win
// over file values.  Stages compose the library modules:
//
//   load -> propensity -> match -> describe/balance -> att
//        -> frontier -> scores -> satt            (efficiency stages)
//
// and emit a deterministic bundle of CSV/JSON reports: identical config and
// seed produce byte-identical files for any thread count.  Failures write
// `error.json` (stage, kind, message) plus a FAILED marker file, keep any
// reports already written, and map the error kind onto the process exit
// code: 0 success, 2 config, 3 data, 4 estimation.
//
// Report schemas are stable, documented in the README; floating-point cells
// use shortest round-trip formatting and missing values are empty fields.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "panelfx/att.hpp"
#include "panelfx/descstats.hpp"
#include "panelfx/frontier.hpp"
#include "panelfx/matching.hpp"
#include "panelfx/panel.hpp"
#include "panelfx/propensity.hpp"
#include "panelfx/satt.hpp"
#include "panelfx/synthgen.hpp"

namespace panelfx {

inline constexpr const char* kVersion = "0.1.0";

struct SchemeSpec {
    enum class Kind { nn, reweight };
    Kind kind = Kind::nn;
    int neighbors = 1;  // nn only

    std::string label() const;     // estimator label, e.g. "nn(1:5)"
    std::string file_tag() const;  // filename-safe tag, e.g. "nn5"
};

// Mid-quantile trim applied after ingest; fraction 1 disables it.
struct TrimSpec {
    std::string variable = "co2";
    double fraction = 1.0;
};

struct RunConfig {
    // Data source: exactly one of input_csv (ingest) or preset_name
    // (synthetic generation).
    std::optional<std::string> input_csv;
    std::optional<std::string> preset_name;
    std::optional<int> n_firms;            // simulated firm count override
    std::optional<std::uint64_t> seed;     // overrides the preset seed
    int threads = 0;                       // 0 = hardware concurrency
    std::string out_dir = "out";

    TrimSpec trim;
    std::vector<std::string> describe_variables = {
        "co2",     "co2_intensity", "employees", "output",
        "exports", "export_share",  "avg_wage"};
    std::size_t disclosure_floor = 0;

    int level_year = 2003;                   // balance / propensity reference
    std::pair<int, int> trend_years = {2002, 2003};
    PropensitySpec propensity;               // level/trend vars + dummies
    SupportRule support = SupportRule::minmax();
    std::vector<SchemeSpec> schemes = {{SchemeSpec::Kind::nn, 1},
                                       {SchemeSpec::Kind::nn, 20},
                                       {SchemeSpec::Kind::reweight, 0}};

    std::vector<std::string> outcomes = {"co2", "co2_intensity", "output",
                                         "exports"};
    std::vector<std::string> windows = {"phase1", "phase2"};
    AttOptions att;  // ols_covariates defaults set in the constructor

    bool efficiency = true;  // frontier + satt stages
    FrontierOptions frontier;
    std::vector<std::string> indexed_variables = {"output", "co2",
                                                  "energy_total", "employees",
                                                  "capital"};
    SattOptions satt;
    int satt_neighbors = 1;
    std::vector<std::string> satt_windows = {"phase1", "phase2"};
    bool satt_by_industry = true;

    RunConfig();
};

// Command-line values that replace config-file values when present.
struct CliOverrides {
    std::optional<std::string> input_csv;
    std::optional<std::string> preset_name;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> n_firms;
    std::optional<int> threads;
};
void apply_overrides(RunConfig& config, const CliOverrides& overrides);

// Strict JSON parsing: unknown keys and wrong types throw ErrorKind::config
// naming the key.
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);

// The resolved configuration as a JSON document (the exact content embedded
// in run_manifest.json); parse_run_config on it reproduces the config.
// threads is omitted: it is an execution knob with no effect on outputs,
// and leaving it out keeps bundles byte-identical across thread counts.
std::string run_config_json(const RunConfig& config);

// Window labels accept the panel's phase names ("pretreatment", "phase1",
// "phase2", "phase2_extended") or an explicit "FIRST-LAST" year range.
PhaseWindow resolve_window(const PanelConfig& config, const std::string& name);

// Loads or simulates the panel per the config, derives columns and applies
// the trim.  truth is filled only when simulating.
PanelDataset pipeline_panel(const RunConfig& config, GroundTruth* truth,
                            IngestReport* report);

struct PropensityArtifacts {
    ProbitFit fit;
    std::vector<ScoredUnit> scored;   // after common-support enforcement
    std::vector<ScoredUnit> dropped;  // treated units off support
    std::size_t dropped_missing = 0;  // firms lacking covariates
};
PropensityArtifacts pipeline_propensity(const PanelDataset& panel,
                                        const PropensitySpec& spec,
                                        const SupportRule& rule);

MatchWeights pipeline_match(const std::vector<ScoredUnit>& scored,
                            const SchemeSpec& scheme);

// Per-firm weight vector (size n_firms) implied by the match weights, for
// weighted summaries and balance tests.
std::vector<double> firm_control_weights(const PanelDataset& panel,
                                         const MatchWeights& weights);

// --- report writers ---------------------------------------------------------
void write_table1_csv(std::ostream& out, const std::vector<SummaryRow>& rows);
void write_balance_csv(std::ostream& out, const std::vector<BalanceRow>& rows);
void write_att_grid_csv(std::ostream& out, const std::vector<AttEstimate>& rows);
void write_frontier_csv(std::ostream& out,
                        const std::vector<FrontierModel>& models);
void write_distance_series_csv(std::ostream& out,
                               const std::vector<DistanceSeriesRow>& rows);
void write_indexed_medians_csv(std::ostream& out,
                               const std::vector<IndexedMedianRow>& rows);
void write_satt_csv(std::ostream& out, const std::vector<SattEstimate>& rows);
void write_scores_csv(std::ostream& out, const std::vector<ScoredUnit>& units);
void write_probit_csv(std::ostream& out, const ProbitFit& fit);
void write_match_csv(std::ostream& out, const MatchWeights& weights);
void write_match_quality_json(std::ostream& out, const MatchQuality& quality);

// Runs one stage ("simulate", "describe", "propensity", "match", "balance",
// "att", "frontier", "satt") or the full bundle ("run"), writing reports
// into config.out_dir.  Returns the process exit code; all errors are
// captured into error.json + FAILED rather than thrown.
int run_stage(const RunConfig& config, const std::string& stage);
inline int run_pipeline(const RunConfig& config) {
    return run_stage(config, "run");
}

}  // namespace panelfx
