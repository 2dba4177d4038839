#pragma once

// Probit treatment model, score prediction and common-support filtering.
//
// The probit is fit by Newton-Raphson with step-halving (monotone ascent)
// and a small ridge fallback when the information matrix is near singular.
// Standard errors come from the inverse observed information at the
// optimum.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "panelfx/panel.hpp"
#include "panelfx/wls.hpp"

namespace panelfx {

struct ProbitFit {
    std::vector<std::string> names;
    std::vector<double> beta;
    std::vector<double> se;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Maximum-likelihood probit of d on the design columns.  Convergence when
// the gradient max-norm drops below 1e-8 (at most 100 iterations).  Throws:
// rank-deficient design (naming dependent columns), perfect separation
// (coefficients past 1e3 with the likelihood still rising), and size
// mismatches.
ProbitFit fit_probit(const Design& design, const std::vector<std::uint8_t>& d);

// x'beta per row; column names must match the fit (same order).
std::vector<double> probit_index(const ProbitFit& fit, const Design& design);

struct ScoredUnit {
    std::string firm_id;
    double p = 0.5;      // strictly inside (0,1)
    double index = 0.0;  // x'beta, used for caliper distances
    bool treated = false;
};

// Phi(index), nudged off the representable endpoints so downstream odds
// ratios stay finite.
double index_to_probability(double index);

struct SupportRule {
    enum class Kind { none, minmax, caliper };
    Kind kind = Kind::minmax;
    double radius = 0.0;  // caliper radius on the index scale

    static SupportRule none() { return {Kind::none, 0.0}; }
    static SupportRule minmax() { return {Kind::minmax, 0.0}; }
    static SupportRule caliper(double radius) { return {Kind::caliper, radius}; }
};

struct SupportReport {
    std::vector<ScoredUnit> retained;  // input order preserved
    std::vector<ScoredUnit> dropped;   // treated units outside support
};

// Drops treated units without overlap: min-max keeps treated p inside the
// [min, max] of control scores; caliper keeps treated units with at least
// one control within `radius` on the index scale.  Controls are never
// dropped.  Errors when a group is empty or no treated unit survives.
SupportReport enforce_common_support(const std::vector<ScoredUnit>& scored,
                                     const SupportRule& rule);

// --- panel-facing assembly --------------------------------------------------

struct PropensitySpec {
    int level_year = 2003;
    std::pair<int, int> trend_years = {2002, 2003};
    // Log levels at level_year.
    std::vector<std::string> level_vars = {"output", "co2", "employees",
                                           "capital", "energy_total"};
    // Log differences between trend_years.
    std::vector<std::string> trend_vars = {"output", "co2"};
    bool industry_dummies = true;
};

struct PropensityData {
    Design design;                       // const column first
    std::vector<std::uint32_t> firms;    // panel firm index per design row
    std::vector<std::uint8_t> treated;   // response per design row
    std::size_t dropped_missing = 0;     // firms lacking a covariate
};

// One design row per firm with complete covariates.  Industry dummies use
// the lowest industry code as baseline.
PropensityData build_propensity_design(const PanelDataset& panel,
                                       const PropensitySpec& spec);

// Scores every design row with the fit.
std::vector<ScoredUnit> score_units(const PanelDataset& panel,
                                    const PropensityData& data,
                                    const ProbitFit& fit);

}  // namespace panelfx
