#include "panelfx/frontier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <span>
#include <tuple>

#include <Eigen/Dense>

#include "panelfx/error.hpp"
#include "panelfx/stats.hpp"
#include "panelfx/wls.hpp"

namespace panelfx {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2Pi = 1.8378770664093454836;

// Shared evaluation of the composed-error log density and its partials.
double density_core(double eps, double p, double q, double mu, bool trunc,
                    FrontierPointGrad* grad) {
    if (!(p > 0.0) || !(q > 0.0)) return -kInf;
    const double s2 = p * p + q * q;
    const double s = std::sqrt(s2);
    const double z = (eps + mu) / s;
    const double d = (mu * p * p - eps * q * q) / (p * q * s);
    double ll = -std::log(s) - 0.5 * kLn2Pi - 0.5 * z * z +
                stats::norm_logcdf(d);
    ll += trunc ? -stats::norm_logcdf(mu / q) : std::numbers::ln2;
    if (grad) {
        const double md = stats::inverse_mills(d);
        const double s3 = s2 * s;
        grad->d_eps = -z / s - md * q / (p * s);
        grad->d_sigma_noise =
            (z * z - 1.0) * p / s2 +
            md * (mu * q / s3 + eps * q * (s2 + p * p) / (p * p * s3));
        grad->d_sigma_ineff =
            (z * z - 1.0) * q / s2 +
            md * (-mu * p * (s2 + q * q) / (q * q * s3) - eps * p / s3);
        grad->d_mu = 0.0;
        if (trunc) {
            const double m0 = stats::inverse_mills(mu / q);
            grad->d_sigma_ineff += m0 * mu / (q * q);
            grad->d_mu = -z / s + md * p / (q * s) - m0 / q;
        }
    }
    return ll;
}

struct FitData {
    std::vector<std::array<double, 4>> x;  // const, ln capital, ln labor, ln energy
    std::vector<double> lny;
    std::size_t n_firms = 0;
    std::size_t n() const { return lny.size(); }
};

FitData collect(const PanelDataset& panel, int industry,
                const FrontierOptions& o) {
    FitData d;
    std::set<std::uint32_t> firms;
    for (std::size_t r = 0; r < panel.n_rows(); ++r) {
        if (panel.row_industry(r) != industry) continue;
        const int year = panel.row_year(r);
        if (year < o.year_min || year > o.year_max) continue;
        const double y = panel.value(r, o.output);
        const double k = panel.value(r, o.capital);
        const double l = panel.value(r, o.labor);
        const double e = panel.value(r, o.energy);
        if (!(y > 0.0) || !(k > 0.0) || !(l > 0.0) || !(e > 0.0)) continue;
        d.x.push_back({1.0, std::log(k), std::log(l), std::log(e)});
        d.lny.push_back(std::log(y));
        firms.insert(panel.row_firm(r));
    }
    d.n_firms = firms.size();
    return d;
}

// Negative mean log-likelihood and its gradient in the optimizer
// coordinates (b0..b3, ln p, ln q [, mu]).  Returns +inf outside the
// trust region.
double objective(const FitData& d, std::span<const double> th, bool trunc,
                 std::vector<double>* grad) {
    const std::size_t np = trunc ? 7 : 6;
    if (grad) grad->assign(np, 0.0);
    if (th[4] < -30.0 || th[4] > 6.0 || th[5] < -30.0 || th[5] > 6.0)
        return kInf;
    const double p = std::exp(th[4]);
    const double q = std::exp(th[5]);
    const double mu = trunc ? th[6] : 0.0;
    if (trunc && std::fabs(mu) > 50.0) return kInf;

    double total = 0.0;
    FrontierPointGrad pg;
    for (std::size_t i = 0; i < d.n(); ++i) {
        const auto& x = d.x[i];
        double eps = d.lny[i];
        for (int j = 0; j < 4; ++j) eps -= th[j] * x[j];
        const double ll = density_core(eps, p, q, mu, trunc,
                                       grad ? &pg : nullptr);
        if (!std::isfinite(ll)) return kInf;
        total += ll;
        if (grad) {
            for (int j = 0; j < 4; ++j) (*grad)[j] += pg.d_eps * x[j];
            (*grad)[4] -= pg.d_sigma_noise * p;
            (*grad)[5] -= pg.d_sigma_ineff * q;
            if (trunc) (*grad)[6] -= pg.d_mu;
        }
    }
    const double n = static_cast<double>(d.n());
    if (grad)
        for (auto& g : *grad) g /= n;
    return -total / n;
}

// Gradient of the negative total log-likelihood in the untransformed
// coordinates (b0..b3, p, q [, mu]); used for the observed-information
// standard errors.
std::vector<double> grad_original(const FitData& d,
                                  std::span<const double> th, bool trunc) {
    const std::size_t np = trunc ? 7 : 6;
    std::vector<double> g(np, 0.0);
    const double p = th[4], q = th[5];
    const double mu = trunc ? th[6] : 0.0;
    FrontierPointGrad pg;
    for (std::size_t i = 0; i < d.n(); ++i) {
        const auto& x = d.x[i];
        double eps = d.lny[i];
        for (int j = 0; j < 4; ++j) eps -= th[j] * x[j];
        density_core(eps, p, q, mu, trunc, &pg);
        for (int j = 0; j < 4; ++j) g[j] += pg.d_eps * x[j];
        g[4] -= pg.d_sigma_noise;
        g[5] -= pg.d_sigma_ineff;
        if (trunc) g[6] -= pg.d_mu;
    }
    return g;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

struct BfgsResult {
    std::vector<double> theta;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
    double grad_norm = 0.0;
};

BfgsResult bfgs(const FitData& d, std::vector<double> th, bool trunc,
                int max_iter, double tol) {
    const std::size_t np = th.size();
    std::vector<double> g;
    double f = objective(d, th, trunc, &g);
    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(
        static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(np));
    bool first_step = true;
    bool reset_used = false;

    BfgsResult out;
    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it;
        out.grad_norm = max_abs(g);
        if (out.grad_norm < tol) {
            out.converged = true;
            break;
        }
        Eigen::VectorXd ge(static_cast<Eigen::Index>(np));
        for (std::size_t j = 0; j < np; ++j) ge[static_cast<Eigen::Index>(j)] = g[j];
        Eigen::VectorXd dir = -(H * ge);
        double slope = dir.dot(ge);
        if (!(slope < 0.0)) {  // not a descent direction: restart
            H.setIdentity();
            dir = -ge;
            slope = dir.dot(ge);
        }
        // Armijo backtracking; equal objective values are accepted so the
        // search keeps moving once decreases fall below representable size.
        double t = 1.0;
        std::vector<double> th_new(np), g_new;
        double f_new = kInf;
        bool accepted = false;
        for (int h = 0; h < 60; ++h) {
            for (std::size_t j = 0; j < np; ++j)
                th_new[j] = th[j] + t * dir[static_cast<Eigen::Index>(j)];
            f_new = objective(d, th_new, trunc, &g_new);
            if (f_new <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            if (!reset_used) {  // one Hessian reset before giving up
                reset_used = true;
                H.setIdentity();
                first_step = true;
                continue;
            }
            break;
        }
        Eigen::VectorXd s(static_cast<Eigen::Index>(np)),
            yv(static_cast<Eigen::Index>(np));
        for (std::size_t j = 0; j < np; ++j) {
            s[static_cast<Eigen::Index>(j)] = th_new[j] - th[j];
            yv[static_cast<Eigen::Index>(j)] = g_new[j] - g[j];
        }
        const double ys = yv.dot(s);
        if (ys > 1e-12 * yv.norm() * s.norm()) {
            if (first_step) {  // scale the initial inverse Hessian
                H.setIdentity();
                H *= ys / yv.squaredNorm();
                first_step = false;
            }
            const double rho = 1.0 / ys;
            Eigen::MatrixXd I = Eigen::MatrixXd::Identity(
                static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(np));
            H = (I - rho * s * yv.transpose()) * H *
                    (I - rho * yv * s.transpose()) +
                rho * s * s.transpose();
        }
        th = th_new;
        g = g_new;
        f = f_new;
    }
    out.grad_norm = max_abs(g);
    if (out.grad_norm < tol) out.converged = true;
    out.theta = th;
    out.value = f;
    return out;
}

// Observed-information standard errors: central finite differences of the
// analytic gradient in the untransformed coordinates.
std::vector<double> information_se(const FitData& d, std::vector<double> th,
                                   bool trunc) {
    const std::size_t np = th.size();
    Eigen::MatrixXd Hm(static_cast<Eigen::Index>(np),
                       static_cast<Eigen::Index>(np));
    for (std::size_t i = 0; i < np; ++i) {
        double h = 1e-5 * std::max(std::fabs(th[i]), 1e-2);
        if (i == 4 || i == 5) h = std::min(h, 0.45 * th[i]);
        auto hi = th, lo = th;
        hi[i] += h;
        lo[i] -= h;
        auto gh = grad_original(d, hi, trunc);
        auto gl = grad_original(d, lo, trunc);
        for (std::size_t j = 0; j < np; ++j)
            Hm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                (gh[j] - gl[j]) / (2.0 * h);
    }
    Hm = 0.5 * (Hm + Hm.transpose()).eval();
    std::vector<double> se(np, kNaN);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Hm);
    if (!lu.isInvertible()) return se;
    Eigen::MatrixXd inv = lu.inverse();
    for (std::size_t i = 0; i < np; ++i) {
        const double v = inv(static_cast<Eigen::Index>(i),
                             static_cast<Eigen::Index>(i));
        se[i] = v > 0.0 && std::isfinite(v) ? std::sqrt(v) : kNaN;
    }
    return se;
}

std::string group_label(bool treated) { return treated ? "treated" : "control"; }

}  // namespace

double frontier_log_density(double eps, double sigma_noise, double sigma_ineff,
                            double mu_ineff, Inefficiency kind) {
    return density_core(eps, sigma_noise, sigma_ineff, mu_ineff,
                        kind == Inefficiency::truncated_normal, nullptr);
}

FrontierPointGrad frontier_log_density_grad(double eps, double sigma_noise,
                                            double sigma_ineff, double mu_ineff,
                                            Inefficiency kind) {
    FrontierPointGrad g;
    density_core(eps, sigma_noise, sigma_ineff, mu_ineff,
                 kind == Inefficiency::truncated_normal, &g);
    return g;
}

double frontier_distance(double eps, double sigma_noise, double sigma_ineff,
                         double mu_ineff, Inefficiency kind) {
    const double p = sigma_noise, q = sigma_ineff;
    const double mu = kind == Inefficiency::truncated_normal ? mu_ineff : 0.0;
    const double s2 = p * p + q * q;
    const double mu_post = (mu * p * p - eps * q * q) / s2;
    const double sd_post = p * q / std::sqrt(s2);
    const double dd = mu_post / sd_post;
    return sd_post * (dd + stats::inverse_mills(dd));
}

double returns_to_scale(const FrontierModel& model) {
    return model.beta_capital + model.beta_labor + model.beta_energy;
}

FrontierModel fit_frontier(const PanelDataset& panel, int industry,
                           const FrontierOptions& options) {
    const bool trunc = options.inefficiency == Inefficiency::truncated_normal;
    FitData data = collect(panel, industry, options);
    if (data.n() < options.min_obs)
        throw data_error("frontier: industry " + std::to_string(industry) +
                         " has " + std::to_string(data.n()) +
                         " usable observations; need at least " +
                         std::to_string(options.min_obs));

    // OLS start with moment-based intercept correction.
    Design ols;
    {
        std::vector<double> c0(data.n(), 1.0), ck(data.n()), cl(data.n()),
            ce(data.n()), y(data.n());
        for (std::size_t i = 0; i < data.n(); ++i) {
            ck[i] = data.x[i][1];
            cl[i] = data.x[i][2];
            ce[i] = data.x[i][3];
            y[i] = data.lny[i];
        }
        ols.add_column("const", std::move(c0));
        ols.add_column("ln_capital", std::move(ck));
        ols.add_column("ln_labor", std::move(cl));
        ols.add_column("ln_energy", std::move(ce));
        ols.y = std::move(y);
    }
    auto base = wls_fit(ols, CovEstimator::classical);
    const double n = static_cast<double>(data.n());
    double m2 = 0.0, m3 = 0.0;
    for (double e : base.residuals) {
        m2 += e * e;
        m3 += e * e * e;
    }
    m2 /= n;
    m3 /= n;

    FrontierModel model;
    model.industry = industry;
    model.kind = options.inefficiency;
    model.n_obs = data.n();
    model.n_firms = data.n_firms;
    model.se.fill(kNaN);

    if (std::sqrt(m2) < 1e-10) {
        // Exact Cobb-Douglas surface: no noise, no inefficiency to estimate.
        model.constant = base.beta[0];
        model.beta_capital = base.beta[1];
        model.beta_labor = base.beta[2];
        model.beta_energy = base.beta[3];
        model.sigma_noise = std::sqrt(m2);
        model.sigma_ineff = 0.0;
        model.mu_ineff = 0.0;
        model.boundary = true;
        model.converged = true;
        const double p_floor = std::max(std::sqrt(m2), 1e-12);
        model.log_likelihood =
            -n * (std::log(p_floor) + 0.5 * kLn2Pi) - 0.5 * base.rss /
                                                          (p_floor * p_floor);
        return model;
    }

    // Third-moment start for the inefficiency scale; the intercept shifts
    // by the implied mean inefficiency.
    const double kHalfNormalM3 =
        std::sqrt(2.0 / std::numbers::pi) * (1.0 - 4.0 / std::numbers::pi);
    double q0 = m3 < 0.0 ? std::cbrt(m3 / kHalfNormalM3)
                         : 0.5 * std::sqrt(m2);
    q0 = std::max(q0, 1e-3 * std::sqrt(m2));
    double p0sq = m2 - (1.0 - 2.0 / std::numbers::pi) * q0 * q0;
    double p0 = std::sqrt(std::max(p0sq, 0.01 * m2));
    std::vector<double> th = {
        base.beta[0] + std::sqrt(2.0 / std::numbers::pi) * q0,
        base.beta[1],
        base.beta[2],
        base.beta[3],
        std::log(p0),
        std::log(q0),
    };
    if (trunc) th.push_back(0.0);

    auto fit = bfgs(data, std::move(th), trunc, options.max_iterations,
                    options.grad_tol);
    if (!fit.converged)
        throw estimation_error(
            "frontier: industry " + std::to_string(industry) +
            " did not converge after " + std::to_string(fit.iterations) +
            " iterations (gradient max-norm " + std::to_string(fit.grad_norm) +
            ", target " + std::to_string(options.grad_tol) + ")");

    model.constant = fit.theta[0];
    model.beta_capital = fit.theta[1];
    model.beta_labor = fit.theta[2];
    model.beta_energy = fit.theta[3];
    model.sigma_noise = std::exp(fit.theta[4]);
    model.sigma_ineff = std::exp(fit.theta[5]);
    model.mu_ineff = trunc ? fit.theta[6] : 0.0;
    model.iterations = fit.iterations;
    model.converged = true;
    model.log_likelihood = -fit.value * n;
    model.boundary = model.sigma_ineff < options.boundary_tol;

    if (!model.boundary) {
        std::vector<double> orig = {model.constant,    model.beta_capital,
                                    model.beta_labor,  model.beta_energy,
                                    model.sigma_noise, model.sigma_ineff};
        if (trunc) orig.push_back(model.mu_ineff);
        auto se = information_se(data, orig, trunc);
        model.se[0] = se[1];            // capital
        model.se[1] = se[2];            // labor
        model.se[2] = se[3];            // energy
        model.se[3] = se[0];            // constant
        model.se[4] = se[4];            // sigma_noise
        model.se[5] = trunc ? se[6] : kNaN;  // mu_ineff
        model.se[6] = se[5];            // sigma_ineff
    }
    return model;
}

IndustryFrontiers fit_industry_frontiers(const PanelDataset& panel,
                                         const FrontierOptions& options) {
    IndustryFrontiers out;
    const std::set<int> excluded(options.excluded_industries.begin(),
                                 options.excluded_industries.end());
    for (int industry : panel.distinct_industries()) {
        if (excluded.count(industry)) {
            out.skipped.emplace_back(industry, "excluded by configuration");
            continue;
        }
        try {
            out.models.push_back(fit_frontier(panel, industry, options));
        } catch (const Error& e) {
            out.skipped.emplace_back(industry, e.what());
        }
    }
    return out;
}

std::vector<EfficiencyScore> efficiency_scores(const FrontierModel& model,
                                               const PanelDataset& panel,
                                               const FrontierOptions& options,
                                               ScoreReport* report) {
    std::vector<EfficiencyScore> out;
    ScoreReport rep;
    for (std::size_t r = 0; r < panel.n_rows(); ++r) {
        if (panel.row_industry(r) != model.industry) continue;
        const double y = panel.value(r, options.output);
        const double k = panel.value(r, options.capital);
        const double l = panel.value(r, options.labor);
        const double e = panel.value(r, options.energy);
        if (!(y > 0.0) || !(k > 0.0) || !(l > 0.0) || !(e > 0.0)) {
            ++rep.skipped;
            continue;
        }
        double dist = 0.0;
        if (!model.boundary) {
            const double eps = std::log(y) -
                               (model.constant +
                                model.beta_capital * std::log(k) +
                                model.beta_labor * std::log(l) +
                                model.beta_energy * std::log(e));
            dist = frontier_distance(eps, model.sigma_noise, model.sigma_ineff,
                                     model.mu_ineff, model.kind);
        }
        out.push_back({panel.firm_id(panel.row_firm(r)), panel.row_year(r),
                       dist});
        ++rep.scored;
    }
    if (report) *report = rep;
    return out;
}

std::vector<DistanceSeriesRow> median_distance_series(
    const std::vector<EfficiencyScore>& scores, const PanelDataset& panel) {
    std::map<std::tuple<int, std::string, int>, std::vector<double>> cells;
    for (const auto& s : scores) {
        auto f = panel.find_firm(s.firm_id);
        if (!f)
            throw data_error("distance series: unknown firm '" + s.firm_id +
                             "'");
        cells[{panel.firm_industry(*f), group_label(panel.firm_treated(*f)),
               s.year}]
            .push_back(s.distance);
    }
    std::vector<DistanceSeriesRow> out;
    out.reserve(cells.size());
    for (auto& [key, values] : cells) {
        std::sort(values.begin(), values.end());
        out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key),
                       stats::quantile_sorted(values, 0.5), values.size()});
    }
    return out;
}

std::vector<IndexedMedianRow> indexed_medians(
    const PanelDataset& panel, const std::vector<std::string>& variables,
    int base_year) {
    for (const auto& v : variables)
        if (!panel.has_column(v))
            throw config_error("indexed medians: unknown variable '" + v + "'");

    std::vector<IndexedMedianRow> out;
    for (const auto& variable : variables) {
        auto col = panel.column(variable);
        // group -> year -> values
        std::map<std::string, std::map<int, std::vector<double>>> cells;
        for (std::size_t r = 0; r < panel.n_rows(); ++r) {
            const double v = col[r];
            if (!std::isfinite(v)) continue;
            cells[group_label(panel.row_treated(r))][panel.row_year(r)]
                .push_back(v);
        }
        for (auto& [group, years] : cells) {
            double base = kNaN;
            for (auto& [year, values] : years) {
                std::sort(values.begin(), values.end());
                const double med = stats::quantile_sorted(values, 0.5);
                if (year == base_year) base = med;
            }
            for (auto& [year, values] : years) {
                const double med = stats::quantile_sorted(values, 0.5);
                const double index =
                    std::isfinite(base) && base != 0.0 ? med / base : kNaN;
                out.push_back({variable, group, year, med, index});
            }
        }
    }
    return out;
}

}  // namespace panelfx
