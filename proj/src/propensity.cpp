#include "panelfx/propensity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "panelfx/error.hpp"
#include "panelfx/kernels.hpp"
#include "panelfx/stats.hpp"

namespace panelfx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_likelihood(const Design& d, const std::vector<std::uint8_t>& y,
                      const Eigen::VectorXd& beta) {
    const std::size_t n = y.size();
    const std::size_t k = d.k();
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double t = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            t += d.cols[j][i] * beta(static_cast<Eigen::Index>(j));
        const double q = y[i] ? 1.0 : -1.0;
        ll += stats::norm_logcdf(q * t);
    }
    return ll;
}

}  // namespace

ProbitFit fit_probit(const Design& d, const std::vector<std::uint8_t>& y) {
    const std::size_t n = y.size();
    const std::size_t k = d.k();
    if (k == 0) throw data_error("probit: empty design");
    for (const auto& col : d.cols)
        if (col.size() != n) throw data_error("probit: column length mismatch");
    if (n <= k)
        throw estimation_error("probit: need more rows (" + std::to_string(n) +
                               ") than columns (" + std::to_string(k) + ")");
    std::size_t n1 = 0;
    for (auto v : y) n1 += v ? 1 : 0;
    if (n1 == 0 || n1 == n)
        throw estimation_error("probit: response has no variation");
    check_full_rank(d);

    const auto ki = static_cast<Eigen::Index>(k);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(ki);
    double ll = log_likelihood(d, y, beta);

    Eigen::VectorXd grad(ki);
    Eigen::MatrixXd info(ki, ki);
    std::vector<double> lambda(n), h(n);

    ProbitFit fit;
    fit.names = d.names;
    constexpr double kGradTol = 1e-8;
    constexpr int kMaxIter = 100;
    constexpr double kRidge = 1e-8;
    constexpr double kSeparationNorm = 1e3;

    int iter = 0;
    for (; iter < kMaxIter; ++iter) {
        // Score and observed information at the current beta.
        for (std::size_t i = 0; i < n; ++i) {
            double t = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                t += d.cols[j][i] * beta(static_cast<Eigen::Index>(j));
            const double q = y[i] ? 1.0 : -1.0;
            const double lam = stats::inverse_mills(q * t);
            lambda[i] = q * lam;
            h[i] = lam * (lam + q * t);
        }
        for (std::size_t j = 0; j < k; ++j) {
            grad(static_cast<Eigen::Index>(j)) =
                kernels::weighted_sum(d.cols[j], lambda);
            for (std::size_t l = j; l < k; ++l) {
                double v = kernels::weighted_dot(d.cols[j], d.cols[l], h);
                info(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = v;
                info(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = v;
            }
        }
        if (grad.lpNorm<Eigen::Infinity>() < kGradTol) {
            fit.converged = true;
            break;
        }
        if (beta.lpNorm<Eigen::Infinity>() > kSeparationNorm)
            throw estimation_error(
                "probit: perfect separation suspected (coefficients diverging "
                "with the likelihood still improving)");

        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        Eigen::VectorXd step;
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            step = ldlt.solve(grad);
        } else {
            Eigen::MatrixXd ridged = info;
            ridged.diagonal().array() += kRidge;
            step = ridged.ldlt().solve(grad);
        }

        // Step-halving keeps the ascent monotone.
        double scale = 1.0;
        double new_ll = -std::numeric_limits<double>::infinity();
        Eigen::VectorXd candidate;
        for (int half = 0; half < 60; ++half) {
            candidate = beta + scale * step;
            new_ll = log_likelihood(d, y, candidate);
            if (new_ll >= ll - 1e-12) break;
            scale *= 0.5;
        }
        if (!(new_ll >= ll - 1e-12))
            throw estimation_error("probit: line search failed to improve the likelihood");
        beta = candidate;
        ll = new_ll;
    }
    if (!fit.converged && grad.lpNorm<Eigen::Infinity>() < kGradTol)
        fit.converged = true;

    fit.iterations = iter;
    fit.log_likelihood = ll;
    fit.beta.assign(beta.data(), beta.data() + k);
    if (!fit.converged)
        throw estimation_error("probit: no convergence after " +
                               std::to_string(kMaxIter) + " iterations");

    // Perfect separation makes the score vanish along a divergent ray, so
    // the gradient test can pass at a spurious point.  If the fitted index
    // classifies every observation correctly, scaling beta up would raise
    // the likelihood forever: no finite optimum exists.
    {
        double min_qt = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            double t = 0.0;
            for (std::size_t j = 0; j < k; ++j)
                t += d.cols[j][i] * beta(static_cast<Eigen::Index>(j));
            min_qt = std::min(min_qt, (y[i] ? 1.0 : -1.0) * t);
        }
        if (min_qt > 0.0)
            throw estimation_error(
                "probit: perfect separation (fitted index classifies every "
                "observation correctly; no finite maximum)");
    }

    // Observed information at the optimum for the standard errors.
    for (std::size_t i = 0; i < n; ++i) {
        double t = 0.0;
        for (std::size_t j = 0; j < k; ++j)
            t += d.cols[j][i] * beta(static_cast<Eigen::Index>(j));
        const double q = y[i] ? 1.0 : -1.0;
        const double lam = stats::inverse_mills(q * t);
        h[i] = lam * (lam + q * t);
    }
    for (std::size_t j = 0; j < k; ++j)
        for (std::size_t l = j; l < k; ++l) {
            double v = kernels::weighted_dot(d.cols[j], d.cols[l], h);
            info(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = v;
            info(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = v;
        }
    Eigen::MatrixXd vcov = info.ldlt().solve(Eigen::MatrixXd::Identity(ki, ki));
    fit.se.resize(k);
    for (std::size_t j = 0; j < k; ++j)
        fit.se[j] = std::sqrt(std::max(0.0, vcov(static_cast<Eigen::Index>(j),
                                                 static_cast<Eigen::Index>(j))));
    return fit;
}

std::vector<double> probit_index(const ProbitFit& fit, const Design& d) {
    if (d.names != fit.names)
        throw config_error("probit: design columns do not match the fitted model");
    const std::size_t n = d.cols.empty() ? 0 : d.cols.front().size();
    std::vector<double> idx(n, 0.0);
    for (std::size_t j = 0; j < d.k(); ++j)
        for (std::size_t i = 0; i < n; ++i)
            idx[i] += d.cols[j][i] * fit.beta[j];
    return idx;
}

double index_to_probability(double index) {
    double p = stats::norm_cdf(index);
    // Keep the score strictly inside (0,1): a finite index can round to the
    // endpoints in double precision.
    constexpr double lo = 1e-300;
    constexpr double hi = 1.0 - 1e-16;
    return std::min(hi, std::max(lo, p));
}

SupportReport enforce_common_support(const std::vector<ScoredUnit>& scored,
                                     const SupportRule& rule) {
    bool any_treated = false, any_control = false;
    for (const auto& u : scored) (u.treated ? any_treated : any_control) = true;
    if (!any_treated) throw data_error("common support: no treated units");
    if (!any_control) throw data_error("common support: no control units");

    SupportReport report;
    switch (rule.kind) {
        case SupportRule::Kind::none:
            report.retained = scored;
            return report;
        case SupportRule::Kind::minmax: {
            double lo = std::numeric_limits<double>::infinity();
            double hi = -std::numeric_limits<double>::infinity();
            for (const auto& u : scored)
                if (!u.treated) {
                    lo = std::min(lo, u.p);
                    hi = std::max(hi, u.p);
                }
            for (const auto& u : scored) {
                if (u.treated && (u.p < lo || u.p > hi))
                    report.dropped.push_back(u);
                else
                    report.retained.push_back(u);
            }
            break;
        }
        case SupportRule::Kind::caliper: {
            if (!(rule.radius > 0.0))
                throw config_error("common support: caliper radius must be positive");
            std::vector<double> control_idx;
            for (const auto& u : scored)
                if (!u.treated) control_idx.push_back(u.index);
            std::sort(control_idx.begin(), control_idx.end());
            auto has_neighbor = [&](double x) {
                auto it = std::lower_bound(control_idx.begin(), control_idx.end(), x);
                if (it != control_idx.end() && *it - x <= rule.radius) return true;
                if (it != control_idx.begin() && x - *(it - 1) <= rule.radius)
                    return true;
                return false;
            };
            for (const auto& u : scored) {
                if (u.treated && !has_neighbor(u.index))
                    report.dropped.push_back(u);
                else
                    report.retained.push_back(u);
            }
            break;
        }
    }
    bool treated_left = false;
    for (const auto& u : report.retained) treated_left |= u.treated;
    if (!treated_left)
        throw estimation_error(
            "common support: every treated unit fell outside the control score range");
    return report;
}

PropensityData build_propensity_design(const PanelDataset& panel,
                                       const PropensitySpec& spec) {
    for (const auto& v : spec.level_vars)
        if (!panel.has_column(v)) throw config_error("unknown covariate '" + v + "'");
    for (const auto& v : spec.trend_vars)
        if (!panel.has_column(v)) throw config_error("unknown covariate '" + v + "'");

    std::vector<int> industries = panel.distinct_industries();

    PropensityData out;
    std::vector<std::vector<double>> cols;  // per covariate, built row-wise
    const std::size_t k_level = spec.level_vars.size();
    const std::size_t k_trend = spec.trend_vars.size();
    // Baseline = lowest industry code; dummies for the rest.
    const std::size_t k_ind =
        spec.industry_dummies && industries.size() > 1 ? industries.size() - 1 : 0;
    cols.resize(k_level + k_trend + k_ind);

    std::vector<double> row(cols.size());
    for (std::uint32_t f = 0; f < panel.n_firms(); ++f) {
        bool complete = true;
        std::size_t c = 0;
        auto r_level = panel.find_row(f, spec.level_year);
        for (const auto& v : spec.level_vars) {
            double lv = r_level ? log_value(panel, *r_level, v) : kNaN;
            if (!std::isfinite(lv)) complete = false;
            row[c++] = lv;
        }
        for (const auto& v : spec.trend_vars) {
            double dv = log_diff(panel, f, v, spec.trend_years.second,
                                 spec.trend_years.first);
            if (!std::isfinite(dv)) complete = false;
            row[c++] = dv;
        }
        if (k_ind > 0) {
            int ind = panel.firm_industry(f);
            for (std::size_t j = 1; j < industries.size(); ++j)
                row[c++] = industries[j] == ind ? 1.0 : 0.0;
        }
        if (!complete) {
            ++out.dropped_missing;
            continue;
        }
        for (std::size_t j = 0; j < cols.size(); ++j) cols[j].push_back(row[j]);
        out.firms.push_back(f);
        out.treated.push_back(panel.firm_treated(f) ? 1 : 0);
    }

    out.design.add_column("const",
                          std::vector<double>(out.firms.size(), 1.0));
    std::size_t c = 0;
    for (const auto& v : spec.level_vars)
        out.design.add_column("ln_" + v, std::move(cols[c++]));
    for (const auto& v : spec.trend_vars)
        out.design.add_column("dln_" + v, std::move(cols[c++]));
    for (std::size_t j = 1; j <= k_ind; ++j)
        out.design.add_column("industry_" + std::to_string(industries[j]),
                              std::move(cols[c++]));
    return out;
}

std::vector<ScoredUnit> score_units(const PanelDataset& panel,
                                    const PropensityData& data,
                                    const ProbitFit& fit) {
    auto idx = probit_index(fit, data.design);
    std::vector<ScoredUnit> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out[i].firm_id = panel.firm_id(data.firms[i]);
        out[i].index = idx[i];
        out[i].p = index_to_probability(idx[i]);
        out[i].treated = data.treated[i] != 0;
    }
    return out;
}

}  // namespace panelfx
