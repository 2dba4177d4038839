#include "panelfx/att.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "matched_contrast.hpp"
#include "panelfx/error.hpp"
#include "panelfx/rng.hpp"
#include "panelfx/stats.hpp"
#include "panelfx/wls.hpp"

namespace panelfx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint32_t require_firm(const PanelDataset& panel, const std::string& id) {
    auto f = panel.find_firm(id);
    if (!f)
        throw data_error("match weights reference unknown firm '" + id + "'");
    return *f;
}

void finish_estimate(AttEstimate& est, const AttOptions& options) {
    if (std::isnan(est.se)) {
        est.p_value = kNaN;
        est.stars.clear();
        return;
    }
    if (est.se > 0.0) {
        est.p_value = 2.0 * stats::norm_cdf(-std::fabs(est.att / est.se));
    } else {
        est.p_value = est.att == 0.0 ? 1.0 : 0.0;
    }
    est.stars = significance_stars(est.p_value, options.star_policy);
}

detail::MatchedContrast did_contributions(const PanelDataset& panel,
                                          const MatchWeights& weights,
                                          const std::string& outcome,
                                          const PhaseWindow& window,
                                          int pre_year) {
    return detail::matched_contrast(weights, [&](const std::string& id) {
        return phase_log_diff(panel, require_firm(panel, id), outcome, window,
                              pre_year);
    });
}

std::string window_label(const PhaseWindow& w) {
    if (!w.label.empty()) return w.label;
    if (w.first == w.last) return std::to_string(w.first);
    return std::to_string(w.first) + "-" + std::to_string(w.last);
}

}  // namespace

std::string significance_stars(double p, StarPolicy policy) {
    if (!std::isfinite(p)) return "";
    if (policy == StarPolicy::five_pct_only) return p < 0.05 ? "*" : "";
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    if (p < 0.1) return "*";
    return "";
}

AttEstimate did_matching_att(const PanelDataset& panel,
                             const MatchWeights& weights,
                             const std::string& outcome,
                             const PhaseWindow& window,
                             const AttOptions& options) {
    if (!panel.has_column(outcome))
        throw config_error("unknown outcome '" + outcome + "'");
    AttEstimate est;
    est.outcome = outcome;
    est.window = window_label(window);
    est.estimator = weights.scheme == MatchWeights::Scheme::nn
                        ? "nn(1:" + std::to_string(weights.neighbors) + ")"
                        : "did-reweight";

    auto c = did_contributions(panel, weights, outcome, window, options.pre_year);
    est.dropped_treated = c.dropped;
    est.n_treated = c.values.size();
    est.n_controls = c.controls.size();
    if (c.values.empty())
        throw estimation_error("did_matching_att: no treated unit has a usable "
                               "outcome change for '" + outcome + "' in " +
                               est.window);

    const double n1 = static_cast<double>(c.values.size());
    est.att = stats::moments(c.values).mean;

    if (options.se_method == AttOptions::SeMethod::bootstrap) {
        // Resample treated contributions (each already nets out its matched
        // counterfactual) and read the spread of the resampled means.
        Rng rng = Rng::seeded(options.bootstrap_seed);
        std::vector<double> boot(static_cast<std::size_t>(options.bootstrap_reps));
        for (auto& b : boot) {
            double sum = 0.0;
            for (std::size_t i = 0; i < c.values.size(); ++i)
                sum += c.values[rng.next_u64() % c.values.size()];
            b = sum / n1;
        }
        est.se = stats::moments(boot).sd;
    } else if (c.delta.size() <= 2) {
        est.se = kNaN;  // one row per group: no dispersion to estimate
    } else {
        // Collapsed two-group weighted regression: treated rows weight 1,
        // each control row carries its accumulated match weight.  The WLS
        // slope on the treatment dummy reproduces `att`; its sandwich SE is
        // the reported uncertainty.
        Design d;
        d.add_column("const", std::vector<double>(c.delta.size(), 1.0));
        d.add_column("treated", c.is_treated);
        d.y = c.delta;
        d.w = c.weight;
        auto fit = wls_fit(d, CovEstimator::hc1);
        est.se = fit.se[1];
    }
    finish_estimate(est, options);
    return est;
}

AttEstimate reweighted_ols_att(const PanelDataset& panel,
                               const MatchWeights& weights,
                               const std::string& outcome,
                               const PhaseWindow& window,
                               const AttOptions& options) {
    if (!panel.has_column(outcome))
        throw config_error("unknown outcome '" + outcome + "'");
    for (const auto& v : options.ols_covariates)
        if (!panel.has_column(v)) throw config_error("unknown covariate '" + v + "'");
    if (weights.scheme != MatchWeights::Scheme::reweight)
        throw config_error("reweighted_ols_att: expects reweight-scheme weights");

    AttEstimate est;
    est.outcome = outcome;
    est.window = window_label(window);
    est.estimator = "ols-reweight";

    // Stack firm-year rows over the window; a row contributes only when the
    // outcome change and every covariate log are defined.
    std::map<std::string, double> control_weight(weights.control_weights.begin(),
                                                 weights.control_weights.end());
    struct Row {
        double dln;
        double treated;
        double weight;
        std::uint32_t firm;
    };
    std::vector<Row> kept;
    std::vector<std::vector<double>> xcols(options.ols_covariates.size());
    std::set<std::uint32_t> treated_firms, control_firms;

    auto add_rows = [&](const std::string& id, bool treated) {
        auto f = require_firm(panel, id);
        const double w = treated ? 1.0 : control_weight[id];
        bool any = false;
        for (int year = window.first; year <= window.last; ++year) {
            auto r = panel.find_row(f, year);
            if (!r) continue;
            double d = log_diff(panel, f, outcome, year, options.pre_year);
            if (!std::isfinite(d)) continue;
            std::vector<double> xs(options.ols_covariates.size());
            bool ok = true;
            for (std::size_t j = 0; j < xs.size(); ++j) {
                xs[j] = log_value(panel, *r, options.ols_covariates[j]);
                if (!std::isfinite(xs[j])) ok = false;
            }
            if (!ok) continue;
            for (std::size_t j = 0; j < xs.size(); ++j)
                xcols[j].push_back(xs[j]);
            kept.push_back({d, treated ? 1.0 : 0.0, w, f});
            any = true;
        }
        if (any)
            (treated ? treated_firms : control_firms).insert(f);
        else if (treated)
            ++est.dropped_treated;
    };
    for (const auto& id : weights.treated_ids) add_rows(id, true);
    for (const auto& [id, w] : weights.control_weights) add_rows(id, false);

    est.n_treated = treated_firms.size();
    est.n_controls = control_firms.size();
    if (treated_firms.empty())
        throw estimation_error("reweighted_ols_att: no treated unit has a usable "
                               "outcome change for '" + outcome + "' in " +
                               est.window);
    if (control_firms.empty())
        throw estimation_error("reweighted_ols_att: no usable control rows");

    Design d;
    d.add_column("const", std::vector<double>(kept.size(), 1.0));
    {
        std::vector<double> treated(kept.size()), y(kept.size()), w(kept.size());
        std::vector<std::uint32_t> cluster(kept.size());
        for (std::size_t i = 0; i < kept.size(); ++i) {
            treated[i] = kept[i].treated;
            y[i] = kept[i].dln;
            w[i] = kept[i].weight;
            cluster[i] = kept[i].firm;
        }
        d.add_column("treated", std::move(treated));
        for (std::size_t j = 0; j < options.ols_covariates.size(); ++j)
            d.add_column("ln_" + options.ols_covariates[j], std::move(xcols[j]));
        d.y = std::move(y);
        d.w = std::move(w);
        d.cluster = std::move(cluster);
    }
    const bool pooled = window.n_years() > 1;
    auto fit = wls_fit(d, pooled ? CovEstimator::cr1 : CovEstimator::hc1);
    est.att = fit.beta[1];
    est.se = fit.se[1];
    finish_estimate(est, options);
    return est;
}

std::vector<AttEstimate> att_table(const PanelDataset& panel,
                                   const std::vector<std::string>& outcomes,
                                   const std::vector<AttScheme>& schemes,
                                   const std::vector<PhaseWindow>& windows,
                                   const AttOptions& options) {
    for (const auto& s : schemes)
        if (!s.weights) throw config_error("att_table: scheme '" + s.label +
                                           "' has no weights");
    std::vector<AttEstimate> grid;
    grid.reserve(outcomes.size() * schemes.size() * windows.size());
    for (const auto& outcome : outcomes) {
        for (const auto& window : windows) {
            for (const auto& scheme : schemes) {
                try {
                    AttEstimate est =
                        scheme.weights->scheme == MatchWeights::Scheme::reweight
                            ? reweighted_ols_att(panel, *scheme.weights, outcome,
                                                 window, options)
                            : did_matching_att(panel, *scheme.weights, outcome,
                                               window, options);
                    est.estimator = scheme.label;
                    grid.push_back(std::move(est));
                } catch (const Error& e) {
                    AttEstimate est;
                    est.outcome = outcome;
                    est.window = window_label(window);
                    est.estimator = scheme.label;
                    est.att = kNaN;
                    est.se = kNaN;
                    est.p_value = kNaN;
                    est.failed = true;
                    est.error = e.what();
                    grid.push_back(std::move(est));
                }
            }
        }
    }
    return grid;
}

}  // namespace panelfx
