#include "panelfx/descstats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "panelfx/error.hpp"
#include "panelfx/stats.hpp"

namespace panelfx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_column(const PanelDataset& panel, const std::string& name) {
    if (!panel.has_column(name))
        throw config_error("unknown variable '" + name + "'");
}

SummaryRow summary_of(const std::string& variable, const std::string& group,
                      std::vector<double> values, std::size_t floor) {
    SummaryRow row;
    row.variable = variable;
    row.group = group;
    row.n = values.size();
    if (floor > 0 && row.n < floor) {
        row.suppressed = true;
        row.mean = row.sd = row.skewness = row.kurtosis = kNaN;
        row.p10 = row.p50 = row.p90 = kNaN;
        return row;
    }
    if (values.empty()) {
        row.mean = row.sd = row.skewness = row.kurtosis = kNaN;
        row.p10 = row.p50 = row.p90 = kNaN;
        return row;
    }
    // Sorting first makes every statistic independent of row order and
    // firm labels (identical multisets give bit-identical sums).
    std::sort(values.begin(), values.end());
    auto m = stats::moments(values);
    row.mean = m.mean;
    row.sd = m.sd;
    row.skewness = m.degenerate ? kNaN : m.skewness;
    row.kurtosis = m.degenerate ? kNaN : m.kurtosis;
    row.p10 = stats::quantile_sorted(values, 0.10);
    row.p50 = stats::quantile_sorted(values, 0.50);
    row.p90 = stats::quantile_sorted(values, 0.90);
    return row;
}

SummaryRow weighted_summary_of(const std::string& variable,
                               const std::string& group,
                               std::vector<std::pair<double, double>> vw,
                               std::size_t floor) {
    SummaryRow row;
    row.variable = variable;
    row.group = group;
    row.n = vw.size();
    if ((floor > 0 && row.n < floor) || vw.empty()) {
        row.suppressed = floor > 0 && row.n < floor;
        row.mean = row.sd = row.skewness = row.kurtosis = kNaN;
        row.p10 = row.p50 = row.p90 = kNaN;
        return row;
    }
    std::sort(vw.begin(), vw.end());
    std::vector<double> values(vw.size()), weights(vw.size());
    for (std::size_t i = 0; i < vw.size(); ++i) {
        values[i] = vw[i].first;
        weights[i] = vw[i].second;
    }
    auto ws = stats::weighted_sample(values, weights);
    row.mean = ws.mean;
    row.sd = std::sqrt(ws.var);
    // Higher weighted moments are not reported for the matched group.
    row.skewness = kNaN;
    row.kurtosis = kNaN;
    row.p10 = stats::weighted_quantile_sorted(values, weights, 0.10);
    row.p50 = stats::weighted_quantile_sorted(values, weights, 0.50);
    row.p90 = stats::weighted_quantile_sorted(values, weights, 0.90);
    return row;
}

}  // namespace

std::vector<SummaryRow> summarize(const PanelDataset& panel,
                                  const std::vector<std::string>& variables,
                                  const SummarizeOptions& options) {
    for (const auto& v : variables) require_column(panel, v);
    if (options.control_weights &&
        options.control_weights->size() != panel.n_firms())
        throw config_error("control_weights must have one entry per firm");

    std::vector<SummaryRow> out;
    for (const auto& variable : variables) {
        auto col = panel.column(variable);
        std::vector<double> full, treated, control;
        std::vector<std::pair<double, double>> matched;
        for (std::size_t r = 0; r < panel.n_rows(); ++r) {
            if (options.year && panel.row_year(r) != *options.year) continue;
            double v = col[r];
            if (!std::isfinite(v)) continue;
            full.push_back(v);
            bool is_treated = panel.row_treated(r);
            (is_treated ? treated : control).push_back(v);
            if (options.control_weights && !is_treated) {
                double w = (*options.control_weights)[panel.row_firm(r)];
                if (w > 0.0) matched.emplace_back(v, w);
            }
        }
        if (options.include_full)
            out.push_back(summary_of(variable, "full", std::move(full),
                                     options.disclosure_floor));
        if (options.by_treatment) {
            out.push_back(summary_of(variable, "treated", std::move(treated),
                                     options.disclosure_floor));
            out.push_back(summary_of(variable, "control", std::move(control),
                                     options.disclosure_floor));
        }
        if (options.control_weights)
            out.push_back(weighted_summary_of(variable, "matched-control",
                                              std::move(matched),
                                              options.disclosure_floor));
    }
    return out;
}

TrimResult trim_mid_quantile(const PanelDataset& panel,
                             const std::string& variable, double fraction) {
    require_column(panel, variable);
    if (!(fraction > 0.0) || fraction > 1.0)
        throw config_error("trim fraction must be in (0, 1]");

    auto col = panel.column(variable);
    if (fraction == 1.0) {
        TrimResult r{panel, 0, -std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity()};
        return r;
    }

    std::vector<double> values;
    values.reserve(col.size());
    for (double v : col)
        if (std::isfinite(v)) values.push_back(v);
    if (values.empty()) return TrimResult{panel, 0, kNaN, kNaN};
    std::sort(values.begin(), values.end());
    const double tail = 0.5 * (1.0 - fraction);
    const double lower = stats::quantile_sorted(values, tail);
    const double upper = stats::quantile_sorted(values, 1.0 - tail);

    auto rows = to_rows(panel);
    std::vector<FirmYear> kept;
    kept.reserve(rows.size());
    std::size_t dropped = 0;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        double v = col[r];
        if (std::isfinite(v) && (v < lower || v > upper)) {
            ++dropped;
            continue;
        }
        kept.push_back(std::move(rows[r]));
    }
    auto trimmed = PanelDataset::build(std::move(kept), panel.config());
    if (panel.has_derived()) trimmed = derive_variables(trimmed);
    return TrimResult{std::move(trimmed), dropped, lower, upper};
}

std::vector<BalanceRow> balance_tests(const PanelDataset& panel,
                                      const std::vector<std::string>& outcomes,
                                      const BalanceOptions& options) {
    for (const auto& v : outcomes) require_column(panel, v);
    if (options.control_weights &&
        options.control_weights->size() != panel.n_firms())
        throw config_error("control_weights must have one entry per firm");

    auto control_weight = [&](std::uint32_t f) {
        return options.control_weights ? (*options.control_weights)[f] : 1.0;
    };

    // Runs one Welch comparison given per-firm extractor; sorting the
    // samples first makes the result invariant to firm relabeling.
    struct Side {
        std::vector<std::pair<double, double>> vw;  // (value, weight)
    };
    auto run_test = [&](const auto& extract, double& t, double& p,
                        std::size_t& n_treated, std::size_t& n_control,
                        std::string& note) {
        Side tr, co;
        for (std::uint32_t f = 0; f < panel.n_firms(); ++f) {
            double v = extract(f);
            if (!std::isfinite(v)) continue;
            if (panel.firm_treated(f)) {
                tr.vw.emplace_back(v, 1.0);
            } else {
                double w = control_weight(f);
                if (w > 0.0) co.vw.emplace_back(v, w);
            }
        }
        n_treated = tr.vw.size();
        n_control = co.vw.size();
        if (n_treated < 2 || n_control < 2) {
            t = kNaN;
            p = kNaN;
            if (!note.empty()) note += "; ";
            note += (n_treated < 2 ? "fewer than 2 treated units"
                                   : "fewer than 2 control units");
            return;
        }
        auto summarize_side = [](Side& s) {
            std::sort(s.vw.begin(), s.vw.end());
            std::vector<double> values(s.vw.size()), weights(s.vw.size());
            for (std::size_t i = 0; i < s.vw.size(); ++i) {
                values[i] = s.vw[i].first;
                weights[i] = s.vw[i].second;
            }
            return stats::weighted_sample(values, weights);
        };
        auto a = summarize_side(tr);
        auto b = summarize_side(co);
        auto res = stats::welch_from_summary(a.mean, a.var, a.n_eff, b.mean,
                                             b.var, b.n_eff);
        t = res.t;
        p = res.p;
    };

    std::vector<BalanceRow> out;
    for (const auto& outcome : outcomes) {
        BalanceRow row;
        row.outcome = outcome;
        run_test(
            [&](std::uint32_t f) {
                auto r = panel.find_row(f, options.level_year);
                return r ? log_value(panel, *r, outcome) : kNaN;
            },
            row.level_t, row.level_p, row.level_n_treated, row.level_n_control,
            row.note);
        run_test(
            [&](std::uint32_t f) {
                return log_diff(panel, f, outcome, options.trend_years.second,
                                options.trend_years.first);
            },
            row.trend_t, row.trend_p, row.trend_n_treated, row.trend_n_control,
            row.note);
        out.push_back(std::move(row));
    }
    return out;
}

}  // namespace panelfx
