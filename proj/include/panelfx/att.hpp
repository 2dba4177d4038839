#pragma once

// Average-treatment-effect-on-the-treated estimators.
//
// did_matching_att implements the conditional difference-in-differences
// contrast per treated firm i with matched counterfactual weights W(i,k):
//
//   att = (1/N1) * sum_i { dln_i - sum_k W(i,k) * dln_k }
//
// where dln is the log change of the outcome between the post window
// (phase mean of yearly logs) and the pre-treatment reference year.
// reweighted_ols_att estimates the same contrast from the weighted
// regression dln_it = const + att * D_i + x_it'b + e_it with treated weight
// 1 and control weight p/(1-p).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "panelfx/matching.hpp"
#include "panelfx/panel.hpp"

namespace panelfx {

enum class StarPolicy {
    three_level,   // *** p<0.01, ** p<0.05, * p<0.1
    five_pct_only, // * p<0.05
};

struct AttEstimate {
    std::string outcome;
    std::string window;     // phase label or year
    std::string estimator;  // e.g. nn(1:5), ols-reweight
    double att = 0.0;       // log points
    double se = 0.0;
    double p_value = 1.0;   // two-sided, normal reference
    std::string stars;
    std::size_t n_treated = 0;       // contributing treated firms
    std::size_t n_controls = 0;      // distinct contributing controls
    std::size_t dropped_treated = 0; // no usable outcome change
    bool failed = false;             // att_table error containment
    std::string error;
};

struct AttOptions {
    int pre_year = 2004;  // reference year t'
    enum class SeMethod { regression, bootstrap };
    SeMethod se_method = SeMethod::regression;
    int bootstrap_reps = 499;
    std::uint64_t bootstrap_seed = 20120101;
    StarPolicy star_policy = StarPolicy::three_level;
    // Covariate columns for the reweighted OLS (entered as log levels in
    // year t); empty by default.
    std::vector<std::string> ols_covariates;
};

AttEstimate did_matching_att(const PanelDataset& panel,
                             const MatchWeights& weights,
                             const std::string& outcome,
                             const PhaseWindow& window,
                             const AttOptions& options = {});

AttEstimate reweighted_ols_att(const PanelDataset& panel,
                               const MatchWeights& weights,
                               const std::string& outcome,
                               const PhaseWindow& window,
                               const AttOptions& options = {});

// One cell per outcome x scheme x window.  A failing cell is returned with
// failed = true and the error message instead of aborting the grid.
struct AttScheme {
    std::string label;
    const MatchWeights* weights = nullptr;
};
std::vector<AttEstimate> att_table(const PanelDataset& panel,
                                   const std::vector<std::string>& outcomes,
                                   const std::vector<AttScheme>& schemes,
                                   const std::vector<PhaseWindow>& windows,
                                   const AttOptions& options = {});

// Stars for a two-sided p-value under the given policy.
std::string significance_stars(double p_value, StarPolicy policy);

}  // namespace panelfx
