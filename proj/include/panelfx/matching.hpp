#pragma once

// Counterfactual weight construction: k-nearest-neighbour matching on the
// propensity score (with replacement) and propensity-odds reweighting.

#include <cstdint>
#include <string>
#include <vector>

#include "panelfx/propensity.hpp"

namespace panelfx {

struct MatchEntry {
    std::string control_id;
    double weight = 0.0;    // nonnegative; rows sum to 1
    double distance = 0.0;  // |p_i - p_k| (or index distance, see options)
};

struct MatchedUnit {
    std::string treated_id;
    std::vector<MatchEntry> entries;  // sorted by (distance, control_id)
};

struct MatchWeights {
    enum class Scheme { nn, reweight };
    Scheme scheme = Scheme::nn;
    int neighbors = 0;        // m for the nn scheme
    bool normalized = false;  // reweight: scaled so control weights sum to N1

    // nn scheme: one row per treated unit, sorted by treated_id.
    std::vector<MatchedUnit> rows;

    // reweight scheme: raw p/(1-p) weight per control, sorted by control_id;
    // every treated unit carries implicit weight 1.
    std::vector<std::pair<std::string, double>> control_weights;
    std::vector<std::string> treated_ids;  // sorted

    std::size_t n_treated() const {
        return scheme == Scheme::nn ? rows.size() : treated_ids.size();
    }
};

struct MatchOptions {
    // Distance on the probability scale by default; set to true to measure
    // on the probit index scale instead.
    bool index_scale = false;
};

// For each treated unit, the m controls with the smallest score distance,
// each weighted 1/m (1/|controls| when fewer controls exist).  Matching is
// with replacement.  Ties at the cutoff resolve by (distance, control_id
// lexicographic).  Throws when m < 1 or no controls exist.
MatchWeights nn_match(const std::vector<ScoredUnit>& scored, int m,
                      const MatchOptions& options = {});

// Controls receive weight p/(1-p), treated units weight 1.  With
// normalize_to_treated, control weights are rescaled to sum to the treated
// count (default raw).  Throws if any control score reaches 1.
MatchWeights reweight(const std::vector<ScoredUnit>& scored,
                      bool normalize_to_treated = false);

struct MatchQuality {
    double mean_distance = 0.0;  // across all (treated, neighbour) pairs
    double max_distance = 0.0;
    std::size_t distinct_controls = 0;
    // (control_id, number of treated units it serves), sorted by id.
    std::vector<std::pair<std::string, std::size_t>> reuse_counts;
};

// Diagnostics for nearest-neighbour weights (the reweight scheme has no
// match distances; passing it is a config error).
MatchQuality match_quality(const MatchWeights& weights);

// Total weight per control across treated rows, each row scaled by 1/N1:
// the implied counterfactual sample weights.  Sorted by control_id.
std::vector<std::pair<std::string, double>> control_total_weights(
    const MatchWeights& weights);

}  // namespace panelfx
