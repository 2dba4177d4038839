#pragma once

// Descriptive tables and pre-treatment balance tests.
//
// Summaries report mean, sd, skewness, kurtosis and type-7 percentiles per
// variable and group (full sample, treated, control, and optionally a
// weighted matched-control group).  Balance tests compare treated firms
// against (optionally weighted) control firms with a Welch two-sample test
// on log levels at a reference year and on log differences between two
// pre-treatment years.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "panelfx/panel.hpp"

namespace panelfx {

struct SummaryRow {
    std::string variable;
    std::string group;  // full | treated | control | matched-control
    double mean = 0.0;
    double sd = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;
    double p10 = 0.0;
    double p50 = 0.0;
    double p90 = 0.0;
    std::size_t n = 0;
    bool suppressed = false;  // n below the disclosure floor; stats are NaN
};

struct SummarizeOptions {
    std::optional<int> year;  // restrict to one calendar year; empty = all rows
    bool by_treatment = true;     // emit treated / control groups
    bool include_full = true;     // emit the pooled group
    // Per-firm control weights (size n_firms); when set, an additional
    // "matched-control" group is emitted with weighted statistics over
    // control firms carrying positive weight.
    std::optional<std::vector<double>> control_weights;
    // Suppress statistics when a group has fewer than this many values
    // (0 = never suppress).  Mirrors confidentiality floors in official
    // micro-data outputs.
    std::size_t disclosure_floor = 0;
};

std::vector<SummaryRow> summarize(const PanelDataset& panel,
                                  const std::vector<std::string>& variables,
                                  const SummarizeOptions& options);

struct TrimResult {
    PanelDataset panel;
    std::size_t dropped = 0;
    double lower = 0.0;  // inclusive bounds actually applied
    double upper = 0.0;
};

// Keeps observations inside the central `fraction` probability mass of
// `variable` (bounds from type-7 quantiles at (1-f)/2 and 1-(1-f)/2,
// inclusive).  Rows where the variable is missing are kept.  fraction = 1
// returns the dataset unchanged.
TrimResult trim_mid_quantile(const PanelDataset& panel,
                             const std::string& variable, double fraction);

struct BalanceRow {
    std::string outcome;
    // Equality of pre-treatment log levels at level_year.
    double level_t = 0.0;
    double level_p = 1.0;  // NaN when not computable (see note)
    std::size_t level_n_treated = 0;
    std::size_t level_n_control = 0;
    // Equality of pre-treatment trends: Delta-ln between trend_years.
    double trend_t = 0.0;
    double trend_p = 1.0;
    std::size_t trend_n_treated = 0;
    std::size_t trend_n_control = 0;
    std::string note;  // reason when a p-value is missing
};

struct BalanceOptions {
    int level_year = 2003;
    std::pair<int, int> trend_years = {2002, 2003};
    // Per-firm control weights (size n_firms); absent = unit weights.
    std::optional<std::vector<double>> control_weights;
};

std::vector<BalanceRow> balance_tests(const PanelDataset& panel,
                                      const std::vector<std::string>& outcomes,
                                      const BalanceOptions& options);

}  // namespace panelfx
