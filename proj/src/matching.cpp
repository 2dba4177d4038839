#include "panelfx/matching.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "panelfx/error.hpp"

namespace panelfx {

namespace {

struct Candidate {
    double distance;
    const ScoredUnit* unit;

    bool operator<(const Candidate& other) const {
        if (distance != other.distance) return distance < other.distance;
        return unit->firm_id < other.unit->firm_id;
    }
};

}  // namespace

MatchWeights nn_match(const std::vector<ScoredUnit>& scored, int m,
                      const MatchOptions& options) {
    if (m < 1) throw config_error("nn_match: neighbour count must be >= 1");

    auto score_of = [&](const ScoredUnit& u) {
        return options.index_scale ? u.index : u.p;
    };

    std::vector<const ScoredUnit*> controls;
    std::vector<const ScoredUnit*> treated;
    for (const auto& u : scored)
        (u.treated ? treated : controls).push_back(&u);
    if (controls.empty()) throw data_error("nn_match: empty control pool");
    if (treated.empty()) throw data_error("nn_match: no treated units");

    // Sorted control scores enable a two-pointer outward scan per treated
    // unit; id is the secondary key so equal scores have a fixed order.
    std::sort(controls.begin(), controls.end(),
              [&](const ScoredUnit* a, const ScoredUnit* b) {
                  if (score_of(*a) != score_of(*b)) return score_of(*a) < score_of(*b);
                  return a->firm_id < b->firm_id;
              });
    std::sort(treated.begin(), treated.end(),
              [](const ScoredUnit* a, const ScoredUnit* b) {
                  return a->firm_id < b->firm_id;
              });

    const std::size_t want =
        std::min<std::size_t>(static_cast<std::size_t>(m), controls.size());

    MatchWeights out;
    out.scheme = MatchWeights::Scheme::nn;
    out.neighbors = m;
    out.rows.reserve(treated.size());

    for (const ScoredUnit* t : treated) {
        const double s = score_of(*t);
        auto right = std::lower_bound(
            controls.begin(), controls.end(), s,
            [&](const ScoredUnit* c, double v) { return score_of(*c) < v; });
        auto left = right;

        // Collect the `want` nearest by score, then every control tied with
        // the current cutoff distance, so the (distance, id) sort below can
        // apply the deterministic tie-break.
        std::vector<Candidate> candidates;
        auto step = [&]() {
            const bool has_left = left != controls.begin();
            const bool has_right = right != controls.end();
            if (!has_left && !has_right) return false;
            double dl = has_left ? s - score_of(**(left - 1)) : 0.0;
            double dr = has_right ? score_of(**right) - s : 0.0;
            if (has_left && (!has_right || dl <= dr)) {
                --left;
                candidates.push_back({dl, *left});
            } else {
                candidates.push_back({dr, *right});
                ++right;
            }
            return true;
        };
        while (candidates.size() < want && step()) {
        }
        // Pull in remaining ties at the cutoff distance.
        if (!candidates.empty()) {
            const double cutoff = std::max_element(candidates.begin(), candidates.end())
                                      ->distance;
            while (true) {
                const bool has_left = left != controls.begin();
                const bool has_right = right != controls.end();
                double dl = has_left ? s - score_of(**(left - 1)) : 0.0;
                double dr = has_right ? score_of(**right) - s : 0.0;
                if (has_left && dl == cutoff) {
                    --left;
                    candidates.push_back({dl, *left});
                } else if (has_right && dr == cutoff) {
                    candidates.push_back({dr, *right});
                    ++right;
                } else {
                    break;
                }
            }
        }
        std::sort(candidates.begin(), candidates.end());
        candidates.resize(std::min(candidates.size(), want));

        MatchedUnit row;
        row.treated_id = t->firm_id;
        const double w = 1.0 / static_cast<double>(candidates.size());
        for (const auto& c : candidates)
            row.entries.push_back({c.unit->firm_id, w, c.distance});
        out.rows.push_back(std::move(row));
    }
    return out;
}

MatchWeights reweight(const std::vector<ScoredUnit>& scored,
                      bool normalize_to_treated) {
    MatchWeights out;
    out.scheme = MatchWeights::Scheme::reweight;
    out.normalized = normalize_to_treated;

    double total = 0.0;
    for (const auto& u : scored) {
        if (u.treated) {
            out.treated_ids.push_back(u.firm_id);
            continue;
        }
        if (!(u.p < 1.0))
            throw data_error("reweight: control score at 1 for firm " +
                             u.firm_id + " (odds weight overflows)");
        if (!(u.p > 0.0))
            throw data_error("reweight: control score at 0 for firm " + u.firm_id);
        double w = u.p / (1.0 - u.p);
        out.control_weights.emplace_back(u.firm_id, w);
        total += w;
    }
    if (out.control_weights.empty())
        throw data_error("reweight: empty control pool");
    if (out.treated_ids.empty()) throw data_error("reweight: no treated units");

    std::sort(out.control_weights.begin(), out.control_weights.end());
    std::sort(out.treated_ids.begin(), out.treated_ids.end());
    if (normalize_to_treated && total > 0.0) {
        const double scale = static_cast<double>(out.treated_ids.size()) / total;
        for (auto& [id, w] : out.control_weights) w *= scale;
    }
    return out;
}

MatchQuality match_quality(const MatchWeights& weights) {
    if (weights.scheme != MatchWeights::Scheme::nn)
        throw config_error(
            "match_quality: defined for nearest-neighbour weights only");
    if (weights.rows.empty()) throw data_error("match_quality: no matches");

    MatchQuality q;
    std::map<std::string, std::size_t> reuse;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& row : weights.rows) {
        for (const auto& e : row.entries) {
            sum += e.distance;
            q.max_distance = std::max(q.max_distance, e.distance);
            ++count;
            ++reuse[e.control_id];
        }
    }
    q.mean_distance = count ? sum / static_cast<double>(count) : 0.0;
    q.distinct_controls = reuse.size();
    q.reuse_counts.assign(reuse.begin(), reuse.end());
    return q;
}

std::vector<std::pair<std::string, double>> control_total_weights(
    const MatchWeights& weights) {
    std::map<std::string, double> totals;
    if (weights.scheme == MatchWeights::Scheme::nn) {
        const double n1 = static_cast<double>(weights.rows.size());
        for (const auto& row : weights.rows)
            for (const auto& e : row.entries) totals[e.control_id] += e.weight / n1;
    } else {
        double sum = 0.0;
        for (const auto& [id, w] : weights.control_weights) sum += w;
        for (const auto& [id, w] : weights.control_weights)
            totals[id] = sum > 0.0 ? w / sum : 0.0;
    }
    return {totals.begin(), totals.end()};
}

}  // namespace panelfx
