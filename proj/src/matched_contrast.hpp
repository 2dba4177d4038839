#pragma once

// Shared walker for the matched-contrast estimators: per treated unit i,
// delta_i minus the weighted control delta, with row weights renormalized
// over the controls whose delta is defined.  Used with log outcome changes
// (conditional difference-in-differences) and with distance-to-frontier
// changes (efficiency treatment effects).

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "panelfx/matching.hpp"

namespace panelfx::detail {

struct MatchedContrast {
    std::vector<double> values;      // one contrast per contributing treated
    std::set<std::string> controls;  // distinct contributing control ids
    std::size_t dropped = 0;         // treated without a usable contrast
    // Collapsed per-unit rows (treated weight 1, control rows carry their
    // accumulated match weight) for the two-group regression standard error.
    std::vector<double> delta;
    std::vector<double> weight;
    std::vector<double> is_treated;
};

// delta_of returns the unit's outcome change, NaN when undefined; it may
// throw for structurally invalid ids.
MatchedContrast matched_contrast(
    const MatchWeights& weights,
    const std::function<double(const std::string&)>& delta_of);

}  // namespace panelfx::detail
