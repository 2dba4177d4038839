#include "panelfx/satt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "matched_contrast.hpp"
#include "panelfx/error.hpp"
#include "panelfx/stats.hpp"
#include "panelfx/wls.hpp"

namespace panelfx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// (firm_id, year) -> distance lookup.
std::map<std::pair<std::string, int>, double> score_map(
    const std::vector<EfficiencyScore>& scores) {
    std::map<std::pair<std::string, int>, double> m;
    for (const auto& s : scores) m[{s.firm_id, s.year}] = s.distance;
    return m;
}

void require_known(const PanelDataset& panel, const MatchWeights& weights) {
    auto check = [&](const std::string& id) {
        if (!panel.find_firm(id))
            throw data_error("satt: match weights reference unknown firm '" +
                             id + "'");
    };
    if (weights.scheme == MatchWeights::Scheme::nn) {
        for (const auto& row : weights.rows) {
            check(row.treated_id);
            for (const auto& e : row.entries) check(e.control_id);
        }
    } else {
        for (const auto& id : weights.treated_ids) check(id);
        for (const auto& [id, w] : weights.control_weights) check(id);
    }
}

SattEstimate estimate_from_deltas(
    const MatchWeights& weights,
    const std::function<double(const std::string&)>& delta_of,
    const std::string& label, const SattOptions& options) {
    auto c = detail::matched_contrast(weights, delta_of);

    SattEstimate est;
    est.window = label;
    est.neighbors = weights.scheme == MatchWeights::Scheme::nn
                        ? weights.neighbors
                        : 0;
    est.dropped_treated = c.dropped;
    est.n_treated = c.values.size();
    est.n_controls = c.controls.size();
    if (c.values.empty())
        throw estimation_error(
            "satt: no treated unit has a usable distance change in " + label);

    est.satt = stats::moments(c.values).mean;
    est.satt_pct = est.satt * 100.0;

    if (c.delta.size() <= 2) {
        est.se = kNaN;
    } else {
        // Collapsed per-firm two-group weighted regression: one row per
        // contributing unit, so heteroskedasticity-robust errors are also
        // robust to intra-firm correlation across the pooled years.
        Design d;
        d.add_column("const", std::vector<double>(c.delta.size(), 1.0));
        d.add_column("treated", c.is_treated);
        d.y = c.delta;
        d.w = c.weight;
        auto fit = wls_fit(d, CovEstimator::hc1);
        est.se = fit.se[1];
    }
    est.significant_5pct =
        est.se > 0.0 && std::fabs(est.satt / est.se) > options.critical_value;
    return est;
}

MatchWeights restrict_to_industry(const MatchWeights& weights,
                                  const PanelDataset& panel, int industry) {
    auto in_industry = [&](const std::string& id) {
        auto f = panel.find_firm(id);
        return f && panel.firm_industry(*f) == industry;
    };
    MatchWeights out;
    out.scheme = weights.scheme;
    out.neighbors = weights.neighbors;
    out.normalized = weights.normalized;
    if (weights.scheme == MatchWeights::Scheme::nn) {
        for (const auto& row : weights.rows) {
            if (!in_industry(row.treated_id)) continue;
            MatchedUnit unit;
            unit.treated_id = row.treated_id;
            for (const auto& e : row.entries)
                if (in_industry(e.control_id)) unit.entries.push_back(e);
            out.rows.push_back(std::move(unit));
        }
    } else {
        for (const auto& id : weights.treated_ids)
            if (in_industry(id)) out.treated_ids.push_back(id);
        for (const auto& cw : weights.control_weights)
            if (in_industry(cw.first)) out.control_weights.push_back(cw);
    }
    if (out.n_treated() == 0)
        throw data_error("satt: no treated firm in industry " +
                         std::to_string(industry));
    return out;
}

}  // namespace

PropensitySpec satt_matching_spec() {
    PropensitySpec spec;
    spec.level_year = 2003;
    spec.level_vars = {"output", "capital", "employees", "energy_total"};
    spec.trend_vars = {};
    spec.industry_dummies = true;
    return spec;
}

SattEstimate satt_year(const std::vector<EfficiencyScore>& scores,
                       const PanelDataset& panel, const MatchWeights& weights,
                       int year, const SattOptions& options) {
    require_known(panel, weights);
    auto lookup = score_map(scores);
    auto delta_of = [&](const std::string& id) {
        auto now = lookup.find({id, year});
        auto base = lookup.find({id, options.base_year});
        if (now == lookup.end() || base == lookup.end()) return kNaN;
        return now->second - base->second;
    };
    return estimate_from_deltas(weights, delta_of, std::to_string(year),
                                options);
}

SattEstimate satt_phase(const std::vector<EfficiencyScore>& scores,
                        const PanelDataset& panel, const MatchWeights& weights,
                        const PhaseWindow& phase, const SattOptions& options) {
    require_known(panel, weights);
    auto lookup = score_map(scores);
    auto delta_of = [&](const std::string& id) {
        auto base = lookup.find({id, options.base_year});
        if (base == lookup.end()) return kNaN;
        double sum = 0.0;
        int n = 0;
        for (int year = phase.first; year <= phase.last; ++year) {
            auto now = lookup.find({id, year});
            if (now == lookup.end()) continue;
            sum += now->second - base->second;
            ++n;
        }
        return n > 0 ? sum / n : kNaN;
    };
    const std::string label =
        phase.label.empty() ? std::to_string(phase.first) + "-" +
                                  std::to_string(phase.last)
                            : phase.label;
    return estimate_from_deltas(weights, delta_of, label, options);
}

SattEstimate industry_subset_satt(const std::vector<EfficiencyScore>& scores,
                                  const PanelDataset& panel,
                                  const MatchWeights& weights,
                                  const PhaseWindow& phase, int industry,
                                  const SattOptions& options) {
    auto restricted = restrict_to_industry(weights, panel, industry);
    auto est = satt_phase(scores, panel, restricted, phase, options);
    est.industry = industry;
    return est;
}

}  // namespace panelfx
