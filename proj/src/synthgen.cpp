#include "panelfx/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "panelfx/error.hpp"
#include "panelfx/rng.hpp"
#include "panelfx/stats.hpp"

namespace panelfx {

namespace {

// Tonnes of CO2 per MWh by energy carrier (electricity counts the indirect
// emissions of generation).
constexpr double kFactorElectricity = 0.45;
constexpr double kFactorGas = 0.20;
constexpr double kFactorOil = 0.27;
constexpr double kFactorOther = 0.34;

// Crisis shape: log-output shortfall relative to the 2009 trough, plus the
// demand-driven part of the energy decline (capital and labour stay put).
double crisis_output_shock(int year, double dip) {
    switch (year) {
        case 2008: return -0.25 * dip;
        case 2009: return -dip;
        case 2010: return -0.35 * dip;
        default: return 0.0;
    }
}

std::string firm_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "f%06d", i);
    return buf;
}

bool known_effect_key(const std::string& key) {
    if (key == "distance") return true;
    for (const char* col : kRawColumns)
        if (key == col) return true;
    return false;
}

void validate(const SynthConfig& cfg) {
    if (!cfg.seed) throw config_error("synthgen: seed is required");
    if (cfg.n_firms <= 0) throw config_error("synthgen: n_firms must be positive");
    if (!(cfg.treated_share >= 0.0) || cfg.treated_share >= 1.0)
        throw config_error("synthgen: treated_share must lie in [0, 1)");
    if (cfg.year_min >= cfg.year_max)
        throw config_error("synthgen: year_min must precede year_max");
    if (cfg.treated_share > 0.0 &&
        (cfg.year_min > 2003 || cfg.year_max < 2003))
        throw config_error(
            "synthgen: treatment assignment uses 2003 covariates; the year "
            "range must include 2003");
    if (cfg.industries.empty())
        throw config_error("synthgen: at least one industry is required");
    double share_sum = 0.0;
    for (const auto& ind : cfg.industries) {
        if (!(ind.share > 0.0))
            throw config_error("synthgen: industry shares must be positive");
        if (ind.sigma_noise < 0.0 || ind.sigma_ineff < 0.0 || ind.crisis_dip < 0.0)
            throw config_error("synthgen: industry scale parameters must be >= 0");
        share_sum += ind.share;
    }
    if (!(share_sum > 0.0) || !std::isfinite(share_sum))
        throw config_error("synthgen: industry shares must sum to a positive value");
    for (const auto& [key, eff] : cfg.effects) {
        if (!known_effect_key(key))
            throw config_error("synthgen: unknown effect key '" + key +
                               "' (expected a raw column or 'distance')");
        if (!std::isfinite(eff.phase1) || !std::isfinite(eff.phase2))
            throw config_error("synthgen: effect sizes must be finite");
    }
    if (cfg.crisis_scale < 0.0 || cfg.year_shock_sd < 0.0)
        throw config_error("synthgen: shock scales must be >= 0");
}

struct FirmDraws {
    double u_treat = 0.5;  // reserved uniform for treatment assignment
    std::size_t industry_slot = 0;
};

// Fills the rows of firm `i` (already pointing at its slice) and returns the
// reserved treatment uniform.  Draw order per firm is fixed: treatment
// uniform, industry pick, size, capital and energy intensities, growth,
// wage level, exporter flag + share, four fuel-mix weights, then per year
// (ascending): inefficiency, output noise, capital/labour/energy noise,
// wage noise.
FirmDraws generate_firm(const SynthConfig& cfg,
                        const std::vector<double>& cum_share,
                        const std::vector<double>& year_shock, int i,
                        FirmYear* rows, FirmTruth* truth) {
    Rng rng = Rng::seeded(*cfg.seed, 1 + static_cast<std::uint64_t>(i));
    FirmDraws draws;
    draws.u_treat = rng.uniform01();

    const double u_ind = rng.uniform01();
    std::size_t slot = 0;
    while (slot + 1 < cum_share.size() && u_ind > cum_share[slot]) ++slot;
    draws.industry_slot = slot;
    const IndustryTruth& ind = cfg.industries[slot];

    const double ln_labor0 = rng.normal(3.9, 1.15);        // employees
    const double ln_k_per_l = rng.normal(4.1, 0.5);        // kEUR per worker
    const double ln_e_per_l = rng.normal(3.4, 0.9);        // MWh per worker
    const double growth = rng.normal(0.02, 0.03);
    const double wage0 = std::exp(rng.normal(std::log(28000.0), 0.32));
    const bool exporter = rng.uniform01() < 0.65;
    const double share_logit = rng.normal(-1.7, 1.4);
    const double export_share =
        exporter ? 1.0 / (1.0 + std::exp(-share_logit)) : 0.0;
    std::array<double, 4> fuel{};
    double fuel_sum = 0.0;
    for (double& w : fuel) {
        w = std::exp(rng.normal(0.0, 1.0));
        fuel_sum += w;
    }
    for (double& w : fuel) w /= fuel_sum;

    const double ln_capital0 = ln_labor0 + ln_k_per_l;
    const double ln_energy0 = ln_labor0 + ln_e_per_l;
    const int ny = cfg.year_max - cfg.year_min + 1;
    const std::string id = firm_name(i);

    truth->firm_id = id;
    truth->industry = ind.industry;
    truth->inefficiency.resize(static_cast<std::size_t>(ny));

    for (int t = 0; t < ny; ++t) {
        const int year = cfg.year_min + t;
        const double ineff = rng.half_normal(ind.sigma_ineff);
        const double noise = rng.normal(0.0, ind.sigma_noise);
        const double k_noise = rng.normal(0.0, 0.02);
        const double l_noise = rng.normal(0.0, 0.03);
        const double e_noise = rng.normal(0.0, 0.06);
        const double wage_noise = rng.normal(0.0, 0.01);

        const double dip =
            crisis_output_shock(year, ind.crisis_dip * cfg.crisis_scale);
        const double ln_capital = ln_capital0 + 0.8 * growth * t + k_noise;
        const double ln_labor = ln_labor0 + growth * t + l_noise;
        const double ln_energy =
            ln_energy0 + growth * t + e_noise + 0.6 * dip;
        const double ln_output = ind.constant +
                                 ind.beta_capital * ln_capital +
                                 ind.beta_labor * ln_labor +
                                 ind.beta_energy * ln_energy +
                                 year_shock[static_cast<std::size_t>(t)] +
                                 dip + noise - ineff;

        FirmYear& row = rows[t];
        row.firm_id = id;
        row.year = year;
        row.industry = ind.industry;
        row.treated = false;
        const double energy = std::exp(ln_energy);
        const double output = std::exp(ln_output);
        row.value("output") = output;
        row.value("exports") = export_share * output;
        row.value("employees") = std::exp(ln_labor);
        row.value("avg_wage") =
            wage0 * std::pow(1.01, t) * std::exp(wage_noise);
        row.value("capital") = std::exp(ln_capital);
        row.value("energy_total") = energy;
        row.value("electricity") = fuel[0] * energy;
        row.value("gas") = fuel[1] * energy;
        row.value("oil") = fuel[2] * energy;
        row.value("other_primary") = fuel[3] * energy;
        row.value("co2") = energy * (fuel[0] * kFactorElectricity +
                                     fuel[1] * kFactorGas +
                                     fuel[2] * kFactorOil +
                                     fuel[3] * kFactorOther);
        truth->inefficiency[static_cast<std::size_t>(t)] = ineff;
    }
    return draws;
}

// Standardized values (population moments); a degenerate column maps to 0.
std::vector<double> zscores(const std::vector<double>& x) {
    const auto m = stats::moments(x);
    const double sd = m.sd;
    std::vector<double> z(x.size(), 0.0);
    if (sd < 1e-12) return z;
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - m.mean) / sd;
    return z;
}

}  // namespace

SynthConfig default_synth_config() {
    SynthConfig cfg;
    cfg.industries = {
        // industry, share, bK, bL, bE, constant, noise, ineff, 2009 dip
        {10, 0.55, 0.265, 0.323, 0.481, 2.047, 0.25, 0.45, 0.10},
        {17, 0.10, 0.178, 0.677, 0.183, 3.720, 0.25, 0.35, 0.20},
        {20, 0.15, 0.205, 0.596, 0.173, 4.372, 0.25, 0.50, 0.18},
        {23, 0.20, 0.206, 0.612, 0.111, 4.229, 0.25, 0.40, 0.22},
    };
    return cfg;
}

std::pair<PanelDataset, GroundTruth> generate(const SynthConfig& config,
                                              int threads) {
    validate(config);
    const SynthConfig& cfg = config;
    const int n = cfg.n_firms;
    const int ny = cfg.year_max - cfg.year_min + 1;

    // Common year shocks come from stream 0 so they are shared by all firms.
    std::vector<double> year_shock(static_cast<std::size_t>(ny));
    {
        Rng rng0 = Rng::seeded(*cfg.seed, 0);
        for (int t = 0; t < ny; ++t)
            year_shock[static_cast<std::size_t>(t)] =
                cfg.year_trend * t + rng0.normal(0.0, cfg.year_shock_sd);
    }

    double share_sum = 0.0;
    for (const auto& ind : cfg.industries) share_sum += ind.share;
    std::vector<double> cum_share;
    cum_share.reserve(cfg.industries.size());
    double acc = 0.0;
    for (const auto& ind : cfg.industries) {
        acc += ind.share / share_sum;
        cum_share.push_back(acc);
    }
    cum_share.back() = 1.0;

    std::vector<FirmYear> rows(static_cast<std::size_t>(n) *
                               static_cast<std::size_t>(ny));
    GroundTruth truth;
    truth.injected_att = cfg.effects;
    truth.effect_industry = cfg.effect_industry;
    truth.firms.resize(static_cast<std::size_t>(n));
    std::vector<double> u_treat(static_cast<std::size_t>(n));

    int n_threads = threads > 0
                        ? threads
                        : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::clamp(n_threads, 1, std::max(1, n));
    auto work = [&](int lo, int hi) {
        for (int i = lo; i < hi; ++i) {
            auto draws = generate_firm(
                cfg, cum_share, year_shock, i,
                rows.data() + static_cast<std::size_t>(i) * ny,
                &truth.firms[static_cast<std::size_t>(i)]);
            u_treat[static_cast<std::size_t>(i)] = draws.u_treat;
        }
    };
    if (n_threads == 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (n + n_threads - 1) / n_threads;
        for (int w = 0; w < n_threads; ++w) {
            const int lo = w * chunk;
            const int hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(work, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    // --- treatment assignment -------------------------------------------
    const long k_treated = std::lround(cfg.treated_share * n);
    std::vector<double> index(static_cast<std::size_t>(n), 0.0);
    if (cfg.year_min <= 2003 && 2003 <= cfg.year_max) {
        const int t2003 = 2003 - cfg.year_min;
        std::vector<double> ln_out(static_cast<std::size_t>(n));
        std::vector<double> ln_co2(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const FirmYear& row =
                rows[static_cast<std::size_t>(i) * ny + t2003];
            ln_out[static_cast<std::size_t>(i)] =
                std::log(row.values[0]);  // output
            ln_co2[static_cast<std::size_t>(i)] =
                std::log(row.values[10]);  // co2
        }
        const auto z_out = zscores(ln_out);
        const auto z_co2 = zscores(ln_co2);
        for (int i = 0; i < n; ++i)
            index[static_cast<std::size_t>(i)] =
                cfg.selection_size * z_out[static_cast<std::size_t>(i)] +
                cfg.selection_emissions * z_co2[static_cast<std::size_t>(i)];
    }
    // Firm i is treated iff intercept + index_i exceeds the firm's latent
    // normal draw, i.e. iff cut_i = Phi^-1(u_i) - index_i < intercept; the
    // intercept is placed between order statistics so the treated count is
    // exactly k_treated.
    std::vector<double> cut(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        cut[static_cast<std::size_t>(i)] =
            stats::norm_quantile(u_treat[static_cast<std::size_t>(i)]) -
            index[static_cast<std::size_t>(i)];
    std::vector<double> sorted_cut = cut;
    std::sort(sorted_cut.begin(), sorted_cut.end());
    double intercept;
    if (k_treated <= 0)
        intercept = sorted_cut.front() - 1.0;
    else if (k_treated >= n)
        intercept = sorted_cut.back() + 1.0;
    else
        intercept = 0.5 * (sorted_cut[static_cast<std::size_t>(k_treated - 1)] +
                           sorted_cut[static_cast<std::size_t>(k_treated)]);
    truth.selection_intercept = intercept;
    for (int i = 0; i < n; ++i) {
        const bool treated = cut[static_cast<std::size_t>(i)] < intercept;
        truth.firms[static_cast<std::size_t>(i)].treated = treated;
        truth.firms[static_cast<std::size_t>(i)].propensity =
            stats::norm_cdf(intercept + index[static_cast<std::size_t>(i)]);
        for (int t = 0; t < ny; ++t)
            rows[static_cast<std::size_t>(i) * ny + t].treated = treated;
    }

    // --- injected effects -------------------------------------------------
    if (!cfg.effects.empty()) {
        const int p1_first = 2005, p1_last = std::min(2007, cfg.year_max);
        const int p2_first = 2008, p2_last = cfg.year_max;
        for (int i = 0; i < n; ++i) {
            FirmTruth& ft = truth.firms[static_cast<std::size_t>(i)];
            if (!ft.treated) continue;
            if (cfg.effect_industry && ft.industry != *cfg.effect_industry)
                continue;
            for (int t = 0; t < ny; ++t) {
                const int year = cfg.year_min + t;
                double delta_phase = 0.0;
                bool in_phase = false;
                if (year >= p1_first && year <= p1_last) {
                    in_phase = true;
                    delta_phase = 1.0;  // marker; per-effect value below
                } else if (year >= p2_first && year <= p2_last) {
                    in_phase = true;
                    delta_phase = 2.0;
                }
                if (!in_phase) continue;
                FirmYear& row = rows[static_cast<std::size_t>(i) * ny + t];
                for (const auto& [key, eff] : cfg.effects) {
                    const double delta =
                        delta_phase == 1.0 ? eff.phase1 : eff.phase2;
                    if (delta == 0.0) continue;
                    if (key == "distance") {
                        // Shift the true inefficiency (floored at zero);
                        // output rises by exactly the realized reduction.
                        double& u = ft.inefficiency[static_cast<std::size_t>(t)];
                        const double shifted = std::max(0.0, u + delta);
                        row.values[0] *= std::exp(u - shifted);
                        u = shifted;
                    } else {
                        row.value(key) *= std::exp(delta);
                    }
                }
            }
        }
    }

    PanelConfig panel_cfg;
    panel_cfg.year_min = cfg.year_min;
    panel_cfg.year_max = cfg.year_max;
    return {PanelDataset::build(std::move(rows), panel_cfg), std::move(truth)};
}

SynthConfig preset(const std::string& name) {
    SynthConfig cfg = default_synth_config();
    cfg.seed = 20120101;
    if (name == "null") {
        cfg.treated_share = 0.05;
        return cfg;
    }
    if (name == "phase2_policy") {
        cfg.effects["co2"] = {0.0, -0.25};
        cfg.effects["output"] = {0.0, 0.05};
        return cfg;
    }
    if (name == "industry_efficiency") {
        cfg.effects["distance"] = {-0.03, -0.03};
        cfg.effect_industry = 17;
        return cfg;
    }
    if (name == "high_selection") {
        cfg.treated_share = 0.02;
        cfg.selection_size = 2.0;
        cfg.selection_emissions = 1.5;
        return cfg;
    }
    throw config_error(
        "synthgen: unknown preset '" + name +
        "' (known: null, phase2_policy, industry_efficiency, high_selection)");
}

void write_truth_json(const GroundTruth& truth, std::ostream& out) {
    nlohmann::json j;
    j["selection_intercept"] = truth.selection_intercept;
    if (truth.effect_industry)
        j["effect_industry"] = *truth.effect_industry;
    else
        j["effect_industry"] = nullptr;
    nlohmann::json effects = nlohmann::json::object();
    for (const auto& [key, eff] : truth.injected_att)
        effects[key] = {{"phase1", eff.phase1}, {"phase2", eff.phase2}};
    j["injected_att"] = effects;
    nlohmann::json firms = nlohmann::json::array();
    for (const auto& f : truth.firms) {
        nlohmann::json jf;
        jf["firm_id"] = f.firm_id;
        jf["industry"] = f.industry;
        jf["treated"] = f.treated;
        jf["propensity"] = f.propensity;
        jf["inefficiency"] = f.inefficiency;
        firms.push_back(std::move(jf));
    }
    j["firms"] = std::move(firms);
    out << j.dump(2) << '\n';
}

}  // namespace panelfx
