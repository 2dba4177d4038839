#include "panelfx/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "panelfx/error.hpp"

namespace panelfx {

namespace fs = std::filesystem;
using nlohmann::json;

// --- scheme labels ----------------------------------------------------------

std::string SchemeSpec::label() const {
    if (kind == Kind::reweight) return "ols-reweight";
    return "nn(1:" + std::to_string(neighbors) + ")";
}

std::string SchemeSpec::file_tag() const {
    if (kind == Kind::reweight) return "reweight";
    return "nn" + std::to_string(neighbors);
}

RunConfig::RunConfig() {
    att.ols_covariates = {"capital", "employees", "energy_total"};
}

void apply_overrides(RunConfig& config, const CliOverrides& overrides) {
    if (overrides.input_csv) {
        config.input_csv = overrides.input_csv;
        config.preset_name.reset();
    }
    if (overrides.preset_name) {
        config.preset_name = overrides.preset_name;
        if (overrides.input_csv) {
            // Both flags set is as contradictory as both config keys.
            throw config_error("run config: --input and --preset are exclusive");
        }
        config.input_csv.reset();
    }
    if (overrides.out_dir) config.out_dir = *overrides.out_dir;
    if (overrides.seed) config.seed = overrides.seed;
    if (overrides.n_firms) config.n_firms = overrides.n_firms;
    if (overrides.threads) config.threads = *overrides.threads;
}

// --- JSON helpers -----------------------------------------------------------

namespace {

[[noreturn]] void key_error(const std::string& key, const std::string& want) {
    throw config_error("run config: key '" + key + "' must be " + want);
}

std::string get_string(const std::string& key, const json& v) {
    if (!v.is_string()) key_error(key, "a string");
    return v.get<std::string>();
}

bool get_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) key_error(key, "a boolean");
    return v.get<bool>();
}

int get_int(const std::string& key, const json& v) {
    if (!v.is_number_integer()) key_error(key, "an integer");
    return v.get<int>();
}

double get_double(const std::string& key, const json& v) {
    if (!v.is_number()) key_error(key, "a number");
    return v.get<double>();
}

std::uint64_t get_u64(const std::string& key, const json& v) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        key_error(key, "a nonnegative integer");
    return v.get<std::uint64_t>();
}

std::vector<std::string> get_string_list(const std::string& key, const json& v) {
    if (!v.is_array()) key_error(key, "an array of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string()) key_error(key, "an array of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

std::vector<int> get_int_list(const std::string& key, const json& v) {
    if (!v.is_array()) key_error(key, "an array of integers");
    std::vector<int> out;
    for (const auto& e : v) {
        if (!e.is_number_integer()) key_error(key, "an array of integers");
        out.push_back(e.get<int>());
    }
    return out;
}

void parse_trim(const json& v, TrimSpec& trim) {
    if (!v.is_object()) key_error("trim", "an object");
    for (const auto& [key, value] : v.items()) {
        if (key == "variable")
            trim.variable = get_string("trim.variable", value);
        else if (key == "fraction")
            trim.fraction = get_double("trim.fraction", value);
        else
            throw config_error("run config: unknown key 'trim." + key + "'");
    }
}

void parse_propensity(const json& v, PropensitySpec& spec) {
    if (!v.is_object()) key_error("propensity", "an object");
    for (const auto& [key, value] : v.items()) {
        if (key == "level_vars")
            spec.level_vars = get_string_list("propensity.level_vars", value);
        else if (key == "trend_vars")
            spec.trend_vars = get_string_list("propensity.trend_vars", value);
        else if (key == "industry_dummies")
            spec.industry_dummies =
                get_bool("propensity.industry_dummies", value);
        else
            throw config_error("run config: unknown key 'propensity." + key +
                               "'");
    }
}

void parse_support(const json& v, SupportRule& rule) {
    if (!v.is_object()) key_error("support", "an object");
    std::string kind = "minmax";
    double radius = 0.0;
    for (const auto& [key, value] : v.items()) {
        if (key == "rule")
            kind = get_string("support.rule", value);
        else if (key == "radius")
            radius = get_double("support.radius", value);
        else
            throw config_error("run config: unknown key 'support." + key + "'");
    }
    if (kind == "none")
        rule = SupportRule::none();
    else if (kind == "minmax")
        rule = SupportRule::minmax();
    else if (kind == "caliper")
        rule = SupportRule::caliper(radius);
    else
        throw config_error(
            "run config: support.rule must be none, minmax or caliper");
}

void parse_schemes(const json& v, std::vector<SchemeSpec>& schemes) {
    if (!v.is_array()) key_error("schemes", "an array");
    schemes.clear();
    for (const auto& e : v) {
        if (!e.is_object()) key_error("schemes[]", "an object");
        SchemeSpec s;
        bool kind_seen = false;
        for (const auto& [key, value] : e.items()) {
            if (key == "kind") {
                const std::string kind = get_string("schemes[].kind", value);
                if (kind == "nn")
                    s.kind = SchemeSpec::Kind::nn;
                else if (kind == "reweight")
                    s.kind = SchemeSpec::Kind::reweight;
                else
                    throw config_error(
                        "run config: schemes[].kind must be nn or reweight");
                kind_seen = true;
            } else if (key == "m") {
                s.neighbors = get_int("schemes[].m", value);
            } else {
                throw config_error("run config: unknown key 'schemes[]." + key +
                                   "'");
            }
        }
        if (!kind_seen)
            throw config_error("run config: schemes[] entries need a kind");
        if (s.kind == SchemeSpec::Kind::reweight) s.neighbors = 0;
        schemes.push_back(s);
    }
}

void parse_att(const json& v, AttOptions& att) {
    if (!v.is_object()) key_error("att", "an object");
    for (const auto& [key, value] : v.items()) {
        if (key == "pre_year")
            att.pre_year = get_int("att.pre_year", value);
        else if (key == "se_method") {
            const std::string m = get_string("att.se_method", value);
            if (m == "regression")
                att.se_method = AttOptions::SeMethod::regression;
            else if (m == "bootstrap")
                att.se_method = AttOptions::SeMethod::bootstrap;
            else
                throw config_error(
                    "run config: att.se_method must be regression or bootstrap");
        } else if (key == "bootstrap_reps")
            att.bootstrap_reps = get_int("att.bootstrap_reps", value);
        else if (key == "bootstrap_seed")
            att.bootstrap_seed = get_u64("att.bootstrap_seed", value);
        else if (key == "stars") {
            const std::string s = get_string("att.stars", value);
            if (s == "three_level")
                att.star_policy = StarPolicy::three_level;
            else if (s == "five_pct_only")
                att.star_policy = StarPolicy::five_pct_only;
            else
                throw config_error(
                    "run config: att.stars must be three_level or five_pct_only");
        } else if (key == "ols_covariates")
            att.ols_covariates = get_string_list("att.ols_covariates", value);
        else
            throw config_error("run config: unknown key 'att." + key + "'");
    }
}

void parse_frontier(const json& v, FrontierOptions& opt) {
    if (!v.is_object()) key_error("frontier", "an object");
    for (const auto& [key, value] : v.items()) {
        if (key == "inefficiency") {
            const std::string s = get_string("frontier.inefficiency", value);
            if (s == "half_normal")
                opt.inefficiency = Inefficiency::half_normal;
            else if (s == "truncated_normal")
                opt.inefficiency = Inefficiency::truncated_normal;
            else
                throw config_error(
                    "run config: frontier.inefficiency must be half_normal or "
                    "truncated_normal");
        } else if (key == "year_min")
            opt.year_min = get_int("frontier.year_min", value);
        else if (key == "year_max")
            opt.year_max = get_int("frontier.year_max", value);
        else if (key == "min_obs")
            opt.min_obs = static_cast<std::size_t>(
                get_int("frontier.min_obs", value));
        else if (key == "excluded_industries")
            opt.excluded_industries =
                get_int_list("frontier.excluded_industries", value);
        else
            throw config_error("run config: unknown key 'frontier." + key +
                               "'");
    }
}

void parse_satt(const json& v, RunConfig& cfg) {
    if (!v.is_object()) key_error("satt", "an object");
    for (const auto& [key, value] : v.items()) {
        if (key == "base_year")
            cfg.satt.base_year = get_int("satt.base_year", value);
        else if (key == "neighbors")
            cfg.satt_neighbors = get_int("satt.neighbors", value);
        else if (key == "windows")
            cfg.satt_windows = get_string_list("satt.windows", value);
        else if (key == "by_industry")
            cfg.satt_by_industry = get_bool("satt.by_industry", value);
        else
            throw config_error("run config: unknown key 'satt." + key + "'");
    }
}

}  // namespace

RunConfig parse_run_config(std::istream& in) {
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw config_error(std::string("run config: invalid JSON: ") +
                           e.what());
    }
    if (!j.is_object())
        throw config_error("run config: document must be a JSON object");
    RunConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (value.is_null()) continue;  // explicit null keeps the default
        if (key == "input")
            cfg.input_csv = get_string(key, value);
        else if (key == "preset")
            cfg.preset_name = get_string(key, value);
        else if (key == "n_firms")
            cfg.n_firms = get_int(key, value);
        else if (key == "seed")
            cfg.seed = get_u64(key, value);
        else if (key == "threads")
            cfg.threads = get_int(key, value);
        else if (key == "out_dir")
            cfg.out_dir = get_string(key, value);
        else if (key == "trim")
            parse_trim(value, cfg.trim);
        else if (key == "describe_variables")
            cfg.describe_variables = get_string_list(key, value);
        else if (key == "disclosure_floor")
            cfg.disclosure_floor =
                static_cast<std::size_t>(get_int(key, value));
        else if (key == "level_year")
            cfg.level_year = get_int(key, value);
        else if (key == "trend_years") {
            const auto years = get_int_list(key, value);
            if (years.size() != 2)
                throw config_error(
                    "run config: trend_years must be [first, second]");
            cfg.trend_years = {years[0], years[1]};
        } else if (key == "propensity")
            parse_propensity(value, cfg.propensity);
        else if (key == "support")
            parse_support(value, cfg.support);
        else if (key == "schemes")
            parse_schemes(value, cfg.schemes);
        else if (key == "outcomes")
            cfg.outcomes = get_string_list(key, value);
        else if (key == "windows")
            cfg.windows = get_string_list(key, value);
        else if (key == "att")
            parse_att(value, cfg.att);
        else if (key == "efficiency")
            cfg.efficiency = get_bool(key, value);
        else if (key == "frontier")
            parse_frontier(value, cfg.frontier);
        else if (key == "indexed_variables")
            cfg.indexed_variables = get_string_list(key, value);
        else if (key == "satt")
            parse_satt(value, cfg);
        else
            throw config_error("run config: unknown key '" + key + "'");
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("run config: cannot open '" + path + "'");
    return parse_run_config(in);
}

std::string run_config_json(const RunConfig& cfg) {
    json j;
    j["input"] = cfg.input_csv ? json(*cfg.input_csv) : json(nullptr);
    j["preset"] = cfg.preset_name ? json(*cfg.preset_name) : json(nullptr);
    j["n_firms"] = cfg.n_firms ? json(*cfg.n_firms) : json(nullptr);
    j["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
    // threads is an execution knob with no effect on any output, so the
    // embedded config omits it: bundles stay byte-identical across runs
    // that differ only in thread count.
    j["out_dir"] = cfg.out_dir;
    j["trim"] = {{"variable", cfg.trim.variable},
                 {"fraction", cfg.trim.fraction}};
    j["describe_variables"] = cfg.describe_variables;
    j["disclosure_floor"] = cfg.disclosure_floor;
    j["level_year"] = cfg.level_year;
    j["trend_years"] = {cfg.trend_years.first, cfg.trend_years.second};
    j["propensity"] = {{"level_vars", cfg.propensity.level_vars},
                       {"trend_vars", cfg.propensity.trend_vars},
                       {"industry_dummies", cfg.propensity.industry_dummies}};
    const char* rule = cfg.support.kind == SupportRule::Kind::none ? "none"
                       : cfg.support.kind == SupportRule::Kind::minmax
                           ? "minmax"
                           : "caliper";
    j["support"] = {{"rule", rule}, {"radius", cfg.support.radius}};
    json schemes = json::array();
    for (const auto& s : cfg.schemes)
        schemes.push_back(
            {{"kind", s.kind == SchemeSpec::Kind::nn ? "nn" : "reweight"},
             {"m", s.neighbors}});
    j["schemes"] = schemes;
    j["outcomes"] = cfg.outcomes;
    j["windows"] = cfg.windows;
    j["att"] = {
        {"pre_year", cfg.att.pre_year},
        {"se_method", cfg.att.se_method == AttOptions::SeMethod::regression
                          ? "regression"
                          : "bootstrap"},
        {"bootstrap_reps", cfg.att.bootstrap_reps},
        {"bootstrap_seed", cfg.att.bootstrap_seed},
        {"stars", cfg.att.star_policy == StarPolicy::three_level
                      ? "three_level"
                      : "five_pct_only"},
        {"ols_covariates", cfg.att.ols_covariates}};
    j["efficiency"] = cfg.efficiency;
    j["frontier"] = {
        {"inefficiency", cfg.frontier.inefficiency == Inefficiency::half_normal
                             ? "half_normal"
                             : "truncated_normal"},
        {"year_min", cfg.frontier.year_min},
        {"year_max", cfg.frontier.year_max},
        {"min_obs", cfg.frontier.min_obs},
        {"excluded_industries", cfg.frontier.excluded_industries}};
    j["indexed_variables"] = cfg.indexed_variables;
    j["satt"] = {{"base_year", cfg.satt.base_year},
                 {"neighbors", cfg.satt_neighbors},
                 {"windows", cfg.satt_windows},
                 {"by_industry", cfg.satt_by_industry}};
    return j.dump(2);
}

PhaseWindow resolve_window(const PanelConfig& config, const std::string& name) {
    if (name == "pretreatment") return config.pretreatment;
    if (name == "phase1") return config.phase1;
    if (name == "phase2") return config.phase2;
    if (name == "phase2_extended") return config.phase2_extended;
    const auto dash = name.find('-');
    if (dash != std::string::npos) {
        int first = 0, last = 0;
        const auto a = name.substr(0, dash);
        const auto b = name.substr(dash + 1);
        auto ra = std::from_chars(a.data(), a.data() + a.size(), first);
        auto rb = std::from_chars(b.data(), b.data() + b.size(), last);
        if (ra.ec == std::errc{} && rb.ec == std::errc{} &&
            ra.ptr == a.data() + a.size() && rb.ptr == b.data() + b.size() &&
            first <= last)
            return PhaseWindow{name, first, last};
    }
    throw config_error("run config: unknown window '" + name +
                       "' (phase label or FIRST-LAST range expected)");
}

PanelDataset pipeline_panel(const RunConfig& config, GroundTruth* truth,
                            IngestReport* report) {
    if (config.input_csv && config.preset_name)
        throw config_error("run config: input and preset are exclusive");
    PanelDataset panel = [&] {
        if (config.input_csv)
            return ingest_csv_file(*config.input_csv, PanelConfig{}, {},
                                   report);
        if (!config.preset_name)
            throw config_error("run config: either input or preset is required");
        SynthConfig sim = preset(*config.preset_name);
        if (config.n_firms) sim.n_firms = *config.n_firms;
        if (config.seed) sim.seed = *config.seed;
        auto [generated, ground_truth] = generate(sim, config.threads);
        if (truth) *truth = std::move(ground_truth);
        return std::move(generated);
    }();
    panel = derive_variables(panel);
    if (config.trim.fraction < 1.0)
        panel = trim_mid_quantile(panel, config.trim.variable,
                                  config.trim.fraction)
                    .panel;
    return panel;
}

PropensityArtifacts pipeline_propensity(const PanelDataset& panel,
                                        const PropensitySpec& spec,
                                        const SupportRule& rule) {
    PropensityArtifacts arts;
    auto data = build_propensity_design(panel, spec);
    arts.fit = fit_probit(data.design, data.treated);
    arts.dropped_missing = data.dropped_missing;
    auto scored = score_units(panel, data, arts.fit);
    auto support = enforce_common_support(scored, rule);
    arts.scored = std::move(support.retained);
    arts.dropped = std::move(support.dropped);
    return arts;
}

MatchWeights pipeline_match(const std::vector<ScoredUnit>& scored,
                            const SchemeSpec& scheme) {
    if (scheme.kind == SchemeSpec::Kind::reweight) return reweight(scored);
    return nn_match(scored, scheme.neighbors);
}

std::vector<double> firm_control_weights(const PanelDataset& panel,
                                         const MatchWeights& weights) {
    std::vector<double> w(panel.n_firms(), 0.0);
    const auto assign = [&](const std::string& id, double value) {
        const auto f = panel.find_firm(id);
        if (!f) throw data_error("match weights name unknown firm '" + id + "'");
        w[*f] += value;
    };
    if (weights.scheme == MatchWeights::Scheme::nn) {
        for (const auto& [id, total] : control_total_weights(weights))
            assign(id, total);
    } else {
        for (const auto& [id, raw] : weights.control_weights) assign(id, raw);
    }
    return w;
}

// --- CSV emission -----------------------------------------------------------

namespace {

std::string fmt(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

}  // namespace

void write_table1_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "variable,group,mean,sd,skewness,kurtosis,p10,p50,p90,n,suppressed\n";
    for (const auto& r : rows)
        out << csv_field(r.variable) << ',' << r.group << ',' << fmt(r.mean)
            << ',' << fmt(r.sd) << ',' << fmt(r.skewness) << ','
            << fmt(r.kurtosis) << ',' << fmt(r.p10) << ',' << fmt(r.p50) << ','
            << fmt(r.p90) << ',' << r.n << ',' << (r.suppressed ? 1 : 0)
            << '\n';
}

void write_balance_csv(std::ostream& out, const std::vector<BalanceRow>& rows) {
    out << "outcome,level_t,level_p,level_n_treated,level_n_control,"
           "trend_t,trend_p,trend_n_treated,trend_n_control,note\n";
    for (const auto& r : rows)
        out << csv_field(r.outcome) << ',' << fmt(r.level_t) << ','
            << fmt(r.level_p) << ',' << r.level_n_treated << ','
            << r.level_n_control << ',' << fmt(r.trend_t) << ','
            << fmt(r.trend_p) << ',' << r.trend_n_treated << ','
            << r.trend_n_control << ',' << csv_field(r.note) << '\n';
}

void write_att_grid_csv(std::ostream& out,
                        const std::vector<AttEstimate>& rows) {
    out << "outcome,window,estimator,att,se,p_value,stars,n_treated,"
           "n_controls,dropped_treated,failed,error\n";
    for (const auto& r : rows)
        out << csv_field(r.outcome) << ',' << csv_field(r.window) << ','
            << csv_field(r.estimator) << ',' << fmt(r.att) << ',' << fmt(r.se)
            << ',' << fmt(r.p_value) << ',' << r.stars << ',' << r.n_treated
            << ',' << r.n_controls << ',' << r.dropped_treated << ','
            << (r.failed ? 1 : 0) << ',' << csv_field(r.error) << '\n';
}

void write_frontier_csv(std::ostream& out,
                        const std::vector<FrontierModel>& models) {
    out << "industry,inefficiency,n_firms,n_obs,capital,capital_se,labor,"
           "labor_se,energy,energy_se,constant,constant_se,sigma_u,sigma_u_se,"
           "mu_v,mu_v_se,sigma_v,sigma_v_se,returns_to_scale,log_likelihood,"
           "iterations,converged,boundary\n";
    for (const auto& m : models) {
        const char* kind = m.kind == Inefficiency::half_normal
                               ? "half_normal"
                               : "truncated_normal";
        out << m.industry << ',' << kind << ',' << m.n_firms << ',' << m.n_obs
            << ',' << fmt(m.beta_capital) << ',' << fmt(m.se[0]) << ','
            << fmt(m.beta_labor) << ',' << fmt(m.se[1]) << ','
            << fmt(m.beta_energy) << ',' << fmt(m.se[2]) << ','
            << fmt(m.constant) << ',' << fmt(m.se[3]) << ','
            << fmt(m.sigma_noise) << ',' << fmt(m.se[4]) << ','
            << fmt(m.mu_ineff) << ',' << fmt(m.se[5]) << ','
            << fmt(m.sigma_ineff) << ',' << fmt(m.se[6]) << ','
            << fmt(returns_to_scale(m)) << ',' << fmt(m.log_likelihood) << ','
            << m.iterations << ',' << (m.converged ? 1 : 0) << ','
            << (m.boundary ? 1 : 0) << '\n';
    }
}

void write_distance_series_csv(std::ostream& out,
                               const std::vector<DistanceSeriesRow>& rows) {
    out << "industry,group,year,median,n\n";
    for (const auto& r : rows)
        out << r.industry << ',' << r.group << ',' << r.year << ','
            << fmt(r.median) << ',' << r.n << '\n';
}

void write_indexed_medians_csv(std::ostream& out,
                               const std::vector<IndexedMedianRow>& rows) {
    out << "variable,group,year,median,index\n";
    for (const auto& r : rows)
        out << csv_field(r.variable) << ',' << r.group << ',' << r.year << ','
            << fmt(r.median) << ',' << fmt(r.index) << '\n';
}

void write_satt_csv(std::ostream& out, const std::vector<SattEstimate>& rows) {
    out << "window,industry,neighbors,satt,satt_pct,se,n_treated,n_controls,"
           "dropped_treated,significant_5pct\n";
    for (const auto& r : rows) {
        out << csv_field(r.window) << ',';
        if (r.industry) out << *r.industry;
        out << ',' << r.neighbors << ',' << fmt(r.satt) << ','
            << fmt(r.satt_pct) << ',' << fmt(r.se) << ',' << r.n_treated << ','
            << r.n_controls << ',' << r.dropped_treated << ','
            << (r.significant_5pct ? 1 : 0) << '\n';
    }
}

void write_scores_csv(std::ostream& out,
                      const std::vector<ScoredUnit>& units) {
    out << "firm_id,treated,index,p\n";
    for (const auto& u : units)
        out << csv_field(u.firm_id) << ',' << (u.treated ? 1 : 0) << ','
            << fmt(u.index) << ',' << fmt(u.p) << '\n';
}

void write_probit_csv(std::ostream& out, const ProbitFit& fit) {
    out << "term,beta,se\n";
    for (std::size_t i = 0; i < fit.names.size(); ++i)
        out << csv_field(fit.names[i]) << ',' << fmt(fit.beta[i]) << ','
            << fmt(fit.se[i]) << '\n';
}

void write_match_csv(std::ostream& out, const MatchWeights& weights) {
    out << "treated_id,control_id,weight,distance\n";
    if (weights.scheme == MatchWeights::Scheme::nn) {
        for (const auto& row : weights.rows)
            for (const auto& e : row.entries)
                out << csv_field(row.treated_id) << ','
                    << csv_field(e.control_id) << ',' << fmt(e.weight) << ','
                    << fmt(e.distance) << '\n';
    } else {
        // The reweight scheme has one shared counterfactual: control rows
        // carry the raw odds weight and the treated column stays empty.
        for (const auto& [id, w] : weights.control_weights)
            out << ',' << csv_field(id) << ',' << fmt(w) << ",\n";
    }
}

void write_match_quality_json(std::ostream& out, const MatchQuality& quality) {
    json j;
    j["mean_distance"] = quality.mean_distance;
    j["max_distance"] = quality.max_distance;
    j["distinct_controls"] = quality.distinct_controls;
    json reuse = json::array();
    for (const auto& [id, count] : quality.reuse_counts)
        reuse.push_back({{"control_id", id}, {"treated_served", count}});
    j["reuse_counts"] = reuse;
    out << j.dump(2) << '\n';
}

// --- stage driver -----------------------------------------------------------

namespace {

struct StageContext {
    fs::path dir;
    std::vector<std::string> files;
    std::vector<std::string> stages_run;
    json extra = json::object();
};

void emit(StageContext& ctx, const std::string& name,
          const std::function<void(std::ostream&)>& writer) {
    const fs::path path = ctx.dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw config_error("cannot open '" + path.string() + "' for writing");
    writer(out);
    out.flush();
    if (!out) throw data_error("failed while writing '" + path.string() + "'");
    ctx.files.push_back(name);
}

const char* kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::data: return "data";
        case ErrorKind::estimation: return "estimation";
    }
    return "internal";
}

void write_failure(const fs::path& dir, const std::string& stage,
                   const std::string& kind, int exit_code,
                   const std::string& message) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    {
        std::ofstream out(dir / "error.json", std::ios::binary);
        json j;
        j["stage"] = stage;
        j["kind"] = kind;
        j["exit_code"] = exit_code;
        j["message"] = message;
        out << j.dump(2) << '\n';
    }
    std::ofstream marker(dir / "FAILED", std::ios::binary);
    marker << stage << ": " << message << '\n';
}

bool known_stage(const std::string& stage) {
    static const char* kStages[] = {"simulate", "describe", "propensity",
                                    "match",    "balance",  "att",
                                    "frontier", "satt",     "run"};
    for (const char* s : kStages)
        if (stage == s) return true;
    return false;
}

void run_stages(const RunConfig& cfg, const std::string& stage,
                StageContext& ctx) {
    const bool full = stage == "run";

    // --- load -------------------------------------------------------------
    ctx.stages_run.push_back(cfg.input_csv ? "ingest" : "simulate");
    GroundTruth truth;
    IngestReport ingest;
    PanelDataset panel = pipeline_panel(cfg, &truth, &ingest);
    if (cfg.preset_name) {
        SynthConfig sim = preset(*cfg.preset_name);
        if (cfg.seed) sim.seed = cfg.seed;
        ctx.extra["seed_used"] = *sim.seed;
    }
    std::size_t treated_firms = 0;
    for (std::uint32_t f = 0; f < panel.n_firms(); ++f)
        treated_firms += panel.firm_treated(f) ? 1 : 0;
    ctx.extra["counts"] = {{"n_firms", panel.n_firms()},
                           {"n_rows", panel.n_rows()},
                           {"n_treated_firms", treated_firms}};
    if (cfg.input_csv)
        ctx.extra["ingest"] = {{"rows_read", ingest.rows_read},
                               {"rows_kept", ingest.rows_kept},
                               {"rows_outside_window",
                                ingest.rows_outside_window},
                               {"bad_numeric_fields",
                                ingest.bad_numeric_fields}};

    if (stage == "simulate" || (full && cfg.preset_name)) {
        if (!cfg.preset_name)
            throw config_error("simulate requires a preset data source");
        emit(ctx, "panel.csv", [&](std::ostream& o) { write_csv(panel, o); });
        emit(ctx, "truth.json",
             [&](std::ostream& o) { write_truth_json(truth, o); });
        if (stage == "simulate") return;
    }

    if (stage == "describe") {
        ctx.stages_run.push_back("describe");
        SummarizeOptions opts;
        opts.year = cfg.level_year;
        opts.disclosure_floor = cfg.disclosure_floor;
        const auto rows = summarize(panel, cfg.describe_variables, opts);
        emit(ctx, "table1.csv",
             [&](std::ostream& o) { write_table1_csv(o, rows); });
        return;
    }

    // --- propensity and matching ------------------------------------------
    const bool need_propensity =
        full || stage == "propensity" || stage == "match" ||
        stage == "balance" || stage == "att";
    PropensityArtifacts arts;
    std::vector<MatchWeights> weights;
    if (need_propensity) {
        ctx.stages_run.push_back("propensity");
        PropensitySpec spec = cfg.propensity;
        spec.level_year = cfg.level_year;
        spec.trend_years = cfg.trend_years;
        arts = pipeline_propensity(panel, spec, cfg.support);
        ctx.extra["propensity"] = {
            {"converged", arts.fit.converged},
            {"iterations", arts.fit.iterations},
            {"dropped_missing", arts.dropped_missing},
            {"off_support", arts.dropped.size()}};
        if (full || stage == "propensity") {
            emit(ctx, "propensity.csv",
                 [&](std::ostream& o) { write_scores_csv(o, arts.scored); });
            emit(ctx, "probit_coeffs.csv",
                 [&](std::ostream& o) { write_probit_csv(o, arts.fit); });
        }
        if (stage == "propensity") return;

        ctx.stages_run.push_back("match");
        if (cfg.schemes.empty())
            throw config_error("run config: at least one scheme is required");
        for (const auto& scheme : cfg.schemes)
            weights.push_back(pipeline_match(arts.scored, scheme));
        if (full || stage == "match") {
            for (std::size_t i = 0; i < cfg.schemes.size(); ++i) {
                const auto tag = cfg.schemes[i].file_tag();
                emit(ctx, "match_" + tag + ".csv", [&](std::ostream& o) {
                    write_match_csv(o, weights[i]);
                });
                if (cfg.schemes[i].kind == SchemeSpec::Kind::nn) {
                    const auto quality = match_quality(weights[i]);
                    emit(ctx, "match_" + tag + "_quality.json",
                         [&](std::ostream& o) {
                             write_match_quality_json(o, quality);
                         });
                }
            }
        }
        if (stage == "match") return;
    }

    if (full || stage == "balance") {
        ctx.stages_run.push_back("balance");
        BalanceOptions opts;
        opts.level_year = cfg.level_year;
        opts.trend_years = cfg.trend_years;
        if (!weights.empty())
            opts.control_weights = firm_control_weights(panel, weights.front());
        const auto rows = balance_tests(panel, cfg.outcomes, opts);
        emit(ctx, "table2.csv",
             [&](std::ostream& o) { write_balance_csv(o, rows); });
        if (stage == "balance") return;
    }

    if (full) {
        ctx.stages_run.push_back("describe");
        SummarizeOptions opts;
        opts.year = cfg.level_year;
        opts.disclosure_floor = cfg.disclosure_floor;
        if (!weights.empty())
            opts.control_weights = firm_control_weights(panel, weights.front());
        const auto rows = summarize(panel, cfg.describe_variables, opts);
        emit(ctx, "table1.csv",
             [&](std::ostream& o) { write_table1_csv(o, rows); });
    }

    if (full || stage == "att") {
        ctx.stages_run.push_back("att");
        std::vector<AttScheme> att_schemes;
        for (std::size_t i = 0; i < cfg.schemes.size(); ++i)
            att_schemes.push_back({cfg.schemes[i].label(), &weights[i]});
        std::vector<PhaseWindow> windows;
        for (const auto& name : cfg.windows)
            windows.push_back(resolve_window(panel.config(), name));
        const auto grid =
            att_table(panel, cfg.outcomes, att_schemes, windows, cfg.att);
        emit(ctx, "att_grid.csv",
             [&](std::ostream& o) { write_att_grid_csv(o, grid); });
        if (stage == "att") return;
    }

    // --- efficiency stages --------------------------------------------------
    if (!cfg.efficiency && !full) {
        if (stage == "frontier" || stage == "satt")
            throw config_error("run config: efficiency stages are disabled");
    }
    if ((full && cfg.efficiency) || stage == "frontier" || stage == "satt") {
        ctx.stages_run.push_back("frontier");
        const auto fitted = fit_industry_frontiers(panel, cfg.frontier);
        json skipped = json::array();
        for (const auto& [industry, reason] : fitted.skipped)
            skipped.push_back({{"industry", industry}, {"reason", reason}});
        ctx.extra["frontier_skipped"] = skipped;

        std::vector<EfficiencyScore> scores;
        std::size_t score_skipped = 0;
        for (const auto& model : fitted.models) {
            ScoreReport report;
            auto s = efficiency_scores(model, panel, cfg.frontier, &report);
            score_skipped += report.skipped;
            scores.insert(scores.end(), s.begin(), s.end());
        }
        ctx.extra["score_skipped"] = score_skipped;

        if (full || stage == "frontier") {
            emit(ctx, "frontier_coeffs.csv", [&](std::ostream& o) {
                write_frontier_csv(o, fitted.models);
            });
            const auto series = median_distance_series(scores, panel);
            emit(ctx, "distance_series.csv", [&](std::ostream& o) {
                write_distance_series_csv(o, series);
            });
            const auto indexed = indexed_medians(panel, cfg.indexed_variables,
                                                 cfg.satt.base_year);
            emit(ctx, "indexed_medians.csv", [&](std::ostream& o) {
                write_indexed_medians_csv(o, indexed);
            });
        }
        if (stage == "frontier") return;

        ctx.stages_run.push_back("satt");
        auto satt_arts =
            pipeline_propensity(panel, satt_matching_spec(), cfg.support);
        const auto satt_weights =
            nn_match(satt_arts.scored, cfg.satt_neighbors);
        std::vector<SattEstimate> rows;
        json satt_skipped = json::array();
        for (const auto& name : cfg.satt_windows) {
            const auto window = resolve_window(panel.config(), name);
            rows.push_back(
                satt_phase(scores, panel, satt_weights, window, cfg.satt));
            if (cfg.satt_by_industry) {
                for (const auto& model : fitted.models) {
                    try {
                        rows.push_back(industry_subset_satt(
                            scores, panel, satt_weights, window,
                            model.industry, cfg.satt));
                    } catch (const Error& e) {
                        satt_skipped.push_back({{"industry", model.industry},
                                                {"window", window.label},
                                                {"reason", e.what()}});
                    }
                }
            }
        }
        ctx.extra["satt_skipped"] = satt_skipped;
        emit(ctx, "satt_table.csv",
             [&](std::ostream& o) { write_satt_csv(o, rows); });
    }
}

// Every invocation, single stage or full run, finishes with a manifest so
// each bundle carries the resolved configuration and library version.
void run_impl(const RunConfig& cfg, const std::string& stage,
              StageContext& ctx) {
    run_stages(cfg, stage, ctx);

    json manifest;
    manifest["version"] = kVersion;
    manifest["config"] = json::parse(run_config_json(cfg));
    manifest["stages"] = ctx.stages_run;
    for (const auto& [key, value] : ctx.extra.items()) manifest[key] = value;
    std::vector<std::string> files = ctx.files;
    files.push_back("run_manifest.json");
    std::sort(files.begin(), files.end());
    manifest["files"] = files;
    emit(ctx, "run_manifest.json",
         [&](std::ostream& o) { o << manifest.dump(2) << '\n'; });
}

}  // namespace

int run_stage(const RunConfig& config, const std::string& stage) {
    const fs::path dir = config.out_dir;
    if (!known_stage(stage)) {
        write_failure(dir, stage, "config", 2, "unknown stage '" + stage + "'");
        return 2;
    }
    StageContext ctx;
    ctx.dir = dir;
    std::string current = "config";
    try {
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec)
            throw config_error("cannot create output directory '" +
                               dir.string() + "'");
        current = stage;
        run_impl(config, stage, ctx);
        return 0;
    } catch (const Error& e) {
        write_failure(dir, current, kind_name(e.kind()),
                      static_cast<int>(e.kind()), e.what());
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        write_failure(dir, current, "internal", 4, e.what());
        return 4;
    }
}

}  // namespace panelfx
