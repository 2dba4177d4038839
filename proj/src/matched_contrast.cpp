#include "matched_contrast.hpp"

#include <cmath>
#include <map>

namespace panelfx::detail {

MatchedContrast matched_contrast(
    const MatchWeights& weights,
    const std::function<double(const std::string&)>& delta_of) {
    MatchedContrast out;

    if (weights.scheme == MatchWeights::Scheme::nn) {
        std::map<std::string, double> control_totals;
        for (const auto& row : weights.rows) {
            double dt = delta_of(row.treated_id);
            if (!std::isfinite(dt)) {
                ++out.dropped;
                continue;
            }
            double counter = 0.0, wsum = 0.0;
            std::vector<std::pair<const MatchEntry*, double>> usable;
            for (const auto& e : row.entries) {
                double dk = delta_of(e.control_id);
                if (!std::isfinite(dk)) continue;
                usable.emplace_back(&e, dk);
                wsum += e.weight;
            }
            if (usable.empty() || wsum <= 0.0) {
                ++out.dropped;
                continue;
            }
            for (const auto& [e, dk] : usable) {
                const double w = e->weight / wsum;
                counter += w * dk;
                out.controls.insert(e->control_id);
                control_totals[e->control_id] += w;
            }
            out.values.push_back(dt - counter);
            out.delta.push_back(dt);
            out.weight.push_back(1.0);
            out.is_treated.push_back(1.0);
        }
        const double n1 = static_cast<double>(out.values.size());
        for (const auto& [id, w] : control_totals) {
            out.delta.push_back(delta_of(id));
            out.weight.push_back(w / n1);  // row weights sum to 1 over controls
            out.is_treated.push_back(0.0);
        }
    } else {
        // Odds weights form one shared counterfactual.
        double wsum = 0.0, counter = 0.0;
        std::vector<std::pair<std::string, double>> usable;
        for (const auto& [id, w] : weights.control_weights) {
            double dk = delta_of(id);
            if (!std::isfinite(dk)) continue;
            usable.emplace_back(id, w);
            wsum += w;
        }
        if (!usable.empty() && wsum > 0.0) {
            for (const auto& [id, w] : usable) {
                double dk = delta_of(id);
                counter += (w / wsum) * dk;
                out.controls.insert(id);
                out.delta.push_back(dk);
                out.weight.push_back(w / wsum);
                out.is_treated.push_back(0.0);
            }
        }
        for (const auto& id : weights.treated_ids) {
            double dt = delta_of(id);
            if (!std::isfinite(dt) || usable.empty()) {
                ++out.dropped;
                continue;
            }
            out.values.push_back(dt - counter);
            out.delta.push_back(dt);
            out.weight.push_back(1.0);
            out.is_treated.push_back(1.0);
        }
    }
    return out;
}

}  // namespace panelfx::detail
