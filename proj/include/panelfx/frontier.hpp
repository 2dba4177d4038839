#pragma once

// Stochastic production frontier estimation and distance-to-frontier
// scoring.
//
// Model per observation (one industry at a time):
//
//   ln y = c + bK ln K + bL ln L + bE ln E + noise - ineff
//
// with symmetric noise ~ Normal(0, sigma_noise^2) and one-sided
// inefficiency >= 0 drawn from a Normal(mu_ineff, sigma_ineff^2) truncated
// to the nonnegative half-line (half-normal when mu_ineff = 0, the
// default).  Estimated by maximum likelihood with analytic gradients,
// quasi-Newton steps and a log transform keeping both scales positive.
//
// Report naming: the composed error is written noise + v with v <= 0, so
// the noise scale is reported as sigma_u and the inefficiency parameters
// as mu_v / sigma_v in the per-industry coefficient table (u = symmetric
// noise, v = one-sided shortfall in that naming).
//
// The distance to the frontier of an observation is the conditional mean
// of the inefficiency given the composed residual (the Jondrow-Lovell-
// Materov-Schmidt decomposition): always strictly positive for a model
// with a positive inefficiency scale.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "panelfx/panel.hpp"

namespace panelfx {

enum class Inefficiency {
    half_normal,       // mu_ineff fixed at 0
    truncated_normal,  // mu_ineff estimated
};

struct FrontierOptions {
    Inefficiency inefficiency = Inefficiency::half_normal;
    std::string output = "output";
    std::string capital = "capital";
    std::string labor = "employees";
    std::string energy = "energy_total";
    // Joint frontier over these years.
    int year_min = 2003;
    int year_max = 2012;
    std::size_t min_obs = 50;
    int max_iterations = 500;
    double grad_tol = 1e-6;
    // Below this inefficiency scale the fit is flagged as the
    // no-inefficiency boundary case.
    double boundary_tol = 1e-8;
    // Industries skipped by the multi-industry driver (too heterogeneous /
    // too small in the reference configuration).
    std::vector<int> excluded_industries = {12, 14, 21, 26, 30, 32, 33};
};

struct FrontierModel {
    int industry = -1;
    Inefficiency kind = Inefficiency::half_normal;

    // Cobb-Douglas elasticities and intercept.
    double beta_capital = 0.0;
    double beta_labor = 0.0;
    double beta_energy = 0.0;
    double constant = 0.0;

    // Composed-error parameters (sigma_u / mu_v / sigma_v in reports).
    double sigma_noise = 0.0;
    double mu_ineff = 0.0;
    double sigma_ineff = 0.0;

    // Standard errors from the inverse observed information, in the order
    // capital, labor, energy, constant, sigma_noise, mu_ineff, sigma_ineff.
    // NaN where not estimable (mu_ineff under the half-normal model, all
    // entries for boundary fits).
    std::array<double, 7> se{};

    double log_likelihood = 0.0;
    std::size_t n_obs = 0;
    std::size_t n_firms = 0;
    int iterations = 0;
    bool converged = false;
    // Inefficiency scale collapsed to ~0: the no-inefficiency limit.  The
    // model is still usable; every distance is 0.
    bool boundary = false;
};

// Fits the frontier for one industry on rows with strictly positive
// output and inputs inside [year_min, year_max].  Throws ErrorKind::data
// when fewer than min_obs usable observations exist and
// ErrorKind::estimation when the optimizer fails to reach the gradient
// tolerance within max_iterations.
FrontierModel fit_frontier(const PanelDataset& panel, int industry,
                           const FrontierOptions& options = {});

struct IndustryFrontiers {
    std::vector<FrontierModel> models;  // sorted by industry
    // (industry, reason) for industries present in the data but not fitted.
    std::vector<std::pair<int, std::string>> skipped;
};

// Fits every distinct industry in the panel except the configured
// exclusions; industries below the observation floor or failing to
// converge are reported in `skipped` instead of aborting the run.
IndustryFrontiers fit_industry_frontiers(const PanelDataset& panel,
                                         const FrontierOptions& options = {});

// Sum of the three input elasticities.
double returns_to_scale(const FrontierModel& model);

// --- composed-error primitives (exposed for testing/diagnostics) -----------

// Log density of the composed residual eps = noise - ineff at the given
// parameters.
double frontier_log_density(double eps, double sigma_noise,
                            double sigma_ineff, double mu_ineff,
                            Inefficiency kind);

struct FrontierPointGrad {
    double d_eps = 0.0;
    double d_sigma_noise = 0.0;
    double d_sigma_ineff = 0.0;
    double d_mu = 0.0;  // 0 under the half-normal model
};
// Analytic partial derivatives of frontier_log_density.
FrontierPointGrad frontier_log_density_grad(double eps, double sigma_noise,
                                            double sigma_ineff,
                                            double mu_ineff,
                                            Inefficiency kind);

// Conditional mean of the inefficiency given the composed residual:
// the distance to the frontier in log-output units.
double frontier_distance(double eps, double sigma_noise, double sigma_ineff,
                         double mu_ineff, Inefficiency kind);

// --- scoring and series -----------------------------------------------------

struct EfficiencyScore {
    std::string firm_id;
    int year = 0;
    double distance = 0.0;  // >= 0, log-output units
};

struct ScoreReport {
    std::size_t scored = 0;
    std::size_t skipped = 0;  // nonpositive or missing output/inputs
};

// Distance for every row of the model's industry with usable data, all
// panel years.  Rows with nonpositive or missing output/inputs are skipped
// and counted.
std::vector<EfficiencyScore> efficiency_scores(const FrontierModel& model,
                                               const PanelDataset& panel,
                                               const FrontierOptions& options = {},
                                               ScoreReport* report = nullptr);

struct DistanceSeriesRow {
    int industry = -1;
    std::string group;  // "treated" or "control"
    int year = 0;
    double median = 0.0;
    std::size_t n = 0;
};

// Median distance per (industry, treatment group, year), sorted.  Scores
// may come from several industry models concatenated.
std::vector<DistanceSeriesRow> median_distance_series(
    const std::vector<EfficiencyScore>& scores, const PanelDataset& panel);

struct IndexedMedianRow {
    std::string variable;
    std::string group;  // "treated" or "control"
    int year = 0;
    double median = 0.0;
    double index = 0.0;  // median / base-year median of the same group
};

// Per-group yearly medians of raw variables, indexed to the base year
// (base-year index = 1); the plot-ready descriptive trend table.
std::vector<IndexedMedianRow> indexed_medians(
    const PanelDataset& panel, const std::vector<std::string>& variables,
    int base_year = 2003);

}  // namespace panelfx
