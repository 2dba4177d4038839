#pragma once

// Treatment effects on distance-to-frontier outcomes: matched contrasts of
// distance changes relative to a pre-treatment base year, estimated year by
// year or pooled over a phase window.
//
// For treated firm i with matched counterfactual weights W(i,k),
//
//   satt = (1/N1) * sum_i { ddist_i - sum_k W(i,k) * ddist_k }
//
// where ddist is the change in distance to the frontier between the target
// year (or the mean over a phase's years) and the base year.  A negative
// estimate means treated firms moved closer to the frontier (improved)
// relative to their matched controls.  Matching happens once on
// pre-treatment covariates and the same weights are reused across windows.

#include <optional>
#include <string>
#include <vector>

#include "panelfx/frontier.hpp"
#include "panelfx/matching.hpp"
#include "panelfx/panel.hpp"
#include "panelfx/propensity.hpp"

namespace panelfx {

struct SattEstimate {
    std::string window;   // year ("2008") or phase label
    int neighbors = 0;    // m for nn weights, 0 for the reweight scheme
    double satt = 0.0;    // log-output units
    double satt_pct = 0.0;  // satt * 100, the conventional reporting scale
    double se = 0.0;        // robust, intra-firm clustering respected
    std::size_t n_treated = 0;
    std::size_t n_controls = 0;
    std::size_t dropped_treated = 0;  // no usable distance change
    bool significant_5pct = false;
    std::optional<int> industry;  // set for industry-restricted estimates
};

struct SattOptions {
    int base_year = 2003;
    // Two-sided normal critical value used for the significance flag.
    double critical_value = 1.959963984540054;
};

// Distance change between one year and the base year, matched contrast.
SattEstimate satt_year(const std::vector<EfficiencyScore>& scores,
                       const PanelDataset& panel, const MatchWeights& weights,
                       int year, const SattOptions& options = {});

// Firm-level mean of yearly distance changes over the phase, then the same
// matched contrast; collapsing to one row per firm keeps the standard error
// robust to intra-firm correlation.  A one-year phase equals satt_year.
SattEstimate satt_phase(const std::vector<EfficiencyScore>& scores,
                        const PanelDataset& panel, const MatchWeights& weights,
                        const PhaseWindow& phase,
                        const SattOptions& options = {});

// satt_phase restricted to treated firms (and matched controls) of one
// industry; throws ErrorKind::data naming the industry when no treated firm
// matches.
SattEstimate industry_subset_satt(const std::vector<EfficiencyScore>& scores,
                                  const PanelDataset& panel,
                                  const MatchWeights& weights,
                                  const PhaseWindow& phase, int industry,
                                  const SattOptions& options = {});

// Default matching covariates for this stage: pre-treatment (2003) log
// output, log capital, log labor, log energy plus industry dummies, no
// trend terms.
PropensitySpec satt_matching_spec();

}  // namespace panelfx
