#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "panelfx/error.hpp"
#include "panelfx/pipeline.hpp"

namespace pf = panelfx;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Scoped working directory under the build tree; removed on destruction.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) : path("tmp_" + tag) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& leaf) const {
        return (path / leaf).string();
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::map<std::string, std::string> slurp_dir(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        files[entry.path().filename().string()] = slurp(entry.path());
    return files;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) rows.push_back(split(line));
    return rows;
}

pf::RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return pf::parse_run_config(in);
}

}  // namespace

TEST_CASE("empty config document keeps the documented defaults") {
    const pf::RunConfig cfg = parse("{}");
    CHECK_FALSE(cfg.input_csv.has_value());
    CHECK_FALSE(cfg.preset_name.has_value());
    CHECK(cfg.threads == 0);
    CHECK(cfg.out_dir == "out");
    CHECK(cfg.trim.fraction == 1.0);
    CHECK(cfg.level_year == 2003);
    CHECK(cfg.trend_years == std::pair<int, int>{2002, 2003});
    REQUIRE(cfg.schemes.size() == 3);
    CHECK(cfg.schemes[0].label() == "nn(1:1)");
    CHECK(cfg.schemes[1].label() == "nn(1:20)");
    CHECK(cfg.schemes[2].label() == "ols-reweight");
    CHECK(cfg.schemes[1].file_tag() == "nn20");
    CHECK(cfg.outcomes ==
          std::vector<std::string>{"co2", "co2_intensity", "output",
                                   "exports"});
    CHECK(cfg.windows == std::vector<std::string>{"phase1", "phase2"});
    CHECK(cfg.att.ols_covariates ==
          std::vector<std::string>{"capital", "employees", "energy_total"});
    CHECK(cfg.support.kind == pf::SupportRule::Kind::minmax);
    CHECK(cfg.efficiency);
    CHECK(cfg.satt_neighbors == 1);
    CHECK(cfg.satt_by_industry);
}

TEST_CASE("config parsing is strict") {
    SUBCASE("unknown top-level key is rejected by name") {
        try {
            parse(R"({"outcomez": ["co2"]})");
            FAIL("expected config error");
        } catch (const pf::Error& e) {
            CHECK(e.kind() == pf::ErrorKind::config);
            CHECK(std::string(e.what()).find("outcomez") != std::string::npos);
        }
    }
    SUBCASE("unknown nested key is rejected with its path") {
        try {
            parse(R"({"att": {"pre_yr": 2004}})");
            FAIL("expected config error");
        } catch (const pf::Error& e) {
            CHECK(std::string(e.what()).find("att.pre_yr") !=
                  std::string::npos);
        }
    }
    SUBCASE("wrong types are rejected") {
        CHECK_THROWS_AS(parse(R"({"seed": "abc"})"), pf::Error);
        CHECK_THROWS_AS(parse(R"({"outcomes": "co2"})"), pf::Error);
        CHECK_THROWS_AS(parse(R"({"trim": {"fraction": "half"}})"), pf::Error);
        CHECK_THROWS_AS(parse(R"({"seed": -4})"), pf::Error);
    }
    SUBCASE("trend_years must have exactly two entries") {
        CHECK_THROWS_AS(parse(R"({"trend_years": [2002]})"), pf::Error);
        CHECK_THROWS_AS(parse(R"({"trend_years": [2002, 2003, 2004]})"),
                        pf::Error);
    }
    SUBCASE("schemes entries need a kind") {
        CHECK_THROWS_AS(parse(R"({"schemes": [{"m": 5}]})"), pf::Error);
        CHECK_THROWS_AS(parse(R"({"schemes": [{"kind": "knn", "m": 5}]})"),
                        pf::Error);
    }
    SUBCASE("enumerated strings are validated") {
        CHECK_THROWS_AS(parse(R"({"support": {"rule": "trim"}})"), pf::Error);
        CHECK_THROWS_AS(parse(R"({"att": {"se_method": "jackknife"}})"),
                        pf::Error);
        CHECK_THROWS_AS(parse(R"({"frontier": {"inefficiency": "gamma"}})"),
                        pf::Error);
    }
    SUBCASE("invalid JSON is a config error") {
        CHECK_THROWS_AS(parse("{"), pf::Error);
    }
    SUBCASE("missing config file is a config error") {
        CHECK_THROWS_AS(pf::load_run_config("definitely_not_here.json"),
                        pf::Error);
    }
    SUBCASE("explicit null keeps the default") {
        const pf::RunConfig cfg = parse(R"({"seed": null, "n_firms": null})");
        CHECK_FALSE(cfg.seed.has_value());
        CHECK_FALSE(cfg.n_firms.has_value());
    }
}

TEST_CASE("config document round-trips through its JSON form") {
    pf::RunConfig cfg = parse(R"({
        "preset": "null",
        "n_firms": 321,
        "seed": 99,
        "out_dir": "reports",
        "trim": {"variable": "output", "fraction": 0.98},
        "disclosure_floor": 5,
        "level_year": 2004,
        "trend_years": [2003, 2004],
        "propensity": {"level_vars": ["output"], "trend_vars": [],
                        "industry_dummies": false},
        "support": {"rule": "caliper", "radius": 0.25},
        "schemes": [{"kind": "nn", "m": 7}, {"kind": "reweight"}],
        "outcomes": ["co2"],
        "windows": ["phase2", "2008-2011"],
        "att": {"pre_year": 2003, "se_method": "bootstrap",
                 "bootstrap_reps": 99, "bootstrap_seed": 7,
                 "stars": "five_pct_only", "ols_covariates": ["capital"]},
        "efficiency": false,
        "frontier": {"inefficiency": "truncated_normal", "year_min": 2004,
                      "year_max": 2010, "min_obs": 80,
                      "excluded_industries": [12]},
        "indexed_variables": ["output"],
        "satt": {"base_year": 2004, "neighbors": 3, "windows": ["phase1"],
                  "by_industry": false}
    })");
    const std::string text = pf::run_config_json(cfg);
    const pf::RunConfig back = parse(text);

    CHECK(back.preset_name == cfg.preset_name);
    CHECK(back.n_firms == cfg.n_firms);
    CHECK(back.seed == cfg.seed);
    CHECK(back.out_dir == cfg.out_dir);
    CHECK(back.trim.variable == cfg.trim.variable);
    CHECK(back.trim.fraction == cfg.trim.fraction);
    CHECK(back.disclosure_floor == cfg.disclosure_floor);
    CHECK(back.level_year == cfg.level_year);
    CHECK(back.trend_years == cfg.trend_years);
    CHECK(back.propensity.level_vars == cfg.propensity.level_vars);
    CHECK(back.propensity.trend_vars == cfg.propensity.trend_vars);
    CHECK(back.propensity.industry_dummies == cfg.propensity.industry_dummies);
    CHECK(back.support.kind == cfg.support.kind);
    CHECK(back.support.radius == cfg.support.radius);
    REQUIRE(back.schemes.size() == cfg.schemes.size());
    for (std::size_t i = 0; i < cfg.schemes.size(); ++i) {
        CHECK(back.schemes[i].kind == cfg.schemes[i].kind);
        CHECK(back.schemes[i].neighbors == cfg.schemes[i].neighbors);
    }
    CHECK(back.outcomes == cfg.outcomes);
    CHECK(back.windows == cfg.windows);
    CHECK(back.att.pre_year == cfg.att.pre_year);
    CHECK(back.att.se_method == cfg.att.se_method);
    CHECK(back.att.bootstrap_reps == cfg.att.bootstrap_reps);
    CHECK(back.att.bootstrap_seed == cfg.att.bootstrap_seed);
    CHECK(back.att.star_policy == cfg.att.star_policy);
    CHECK(back.att.ols_covariates == cfg.att.ols_covariates);
    CHECK(back.efficiency == cfg.efficiency);
    CHECK(back.frontier.inefficiency == cfg.frontier.inefficiency);
    CHECK(back.frontier.year_min == cfg.frontier.year_min);
    CHECK(back.frontier.year_max == cfg.frontier.year_max);
    CHECK(back.frontier.min_obs == cfg.frontier.min_obs);
    CHECK(back.frontier.excluded_industries ==
          cfg.frontier.excluded_industries);
    CHECK(back.indexed_variables == cfg.indexed_variables);
    CHECK(back.satt.base_year == cfg.satt.base_year);
    CHECK(back.satt_neighbors == cfg.satt_neighbors);
    CHECK(back.satt_windows == cfg.satt_windows);
    CHECK(back.satt_by_industry == cfg.satt_by_industry);
}

TEST_CASE("command-line overrides replace file values") {
    pf::RunConfig cfg = parse(R"({"preset": "null", "n_firms": 100})");
    pf::CliOverrides ovr;
    ovr.input_csv = "data.csv";
    ovr.out_dir = "elsewhere";
    ovr.threads = 3;
    pf::apply_overrides(cfg, ovr);
    REQUIRE(cfg.input_csv.has_value());
    CHECK(*cfg.input_csv == "data.csv");
    CHECK_FALSE(cfg.preset_name.has_value());  // input displaces preset
    CHECK(cfg.out_dir == "elsewhere");
    CHECK(cfg.threads == 3);

    pf::CliOverrides back_to_preset;
    back_to_preset.preset_name = "null";
    back_to_preset.seed = 5;
    back_to_preset.n_firms = 64;
    pf::apply_overrides(cfg, back_to_preset);
    CHECK_FALSE(cfg.input_csv.has_value());
    CHECK(*cfg.preset_name == "null");
    CHECK(*cfg.seed == 5);
    CHECK(*cfg.n_firms == 64);

    pf::CliOverrides both;
    both.input_csv = "a.csv";
    both.preset_name = "null";
    CHECK_THROWS_AS(pf::apply_overrides(cfg, both), pf::Error);
}

TEST_CASE("window names resolve to phase windows or year ranges") {
    const pf::PanelConfig config;
    CHECK(pf::resolve_window(config, "phase1").first == 2005);
    CHECK(pf::resolve_window(config, "phase1").last == 2007);
    CHECK(pf::resolve_window(config, "phase2").first == 2008);
    CHECK(pf::resolve_window(config, "phase2").last == 2010);
    CHECK(pf::resolve_window(config, "phase2_extended").last == 2012);
    CHECK(pf::resolve_window(config, "pretreatment").first == 2003);

    const pf::PhaseWindow range = pf::resolve_window(config, "2008-2011");
    CHECK(range.first == 2008);
    CHECK(range.last == 2011);
    CHECK(range.label == "2008-2011");

    CHECK_THROWS_AS(pf::resolve_window(config, "phase3"), pf::Error);
    CHECK_THROWS_AS(pf::resolve_window(config, "2010-2008"), pf::Error);
    CHECK_THROWS_AS(pf::resolve_window(config, "2008-musk"), pf::Error);
}

TEST_CASE("full run writes the documented bundle and is thread-count invariant") {
    TempDir tmp("pipeline_full");
    pf::RunConfig cfg;
    cfg.preset_name = "null";
    cfg.n_firms = 600;
    cfg.out_dir = tmp.sub("bundle");
    cfg.threads = 1;

    REQUIRE(pf::run_pipeline(cfg) == 0);
    const auto first = slurp_dir(cfg.out_dir);

    const std::vector<std::string> expected = {
        "panel.csv",          "truth.json",
        "propensity.csv",     "probit_coeffs.csv",
        "match_nn1.csv",      "match_nn1_quality.json",
        "match_nn20.csv",     "match_nn20_quality.json",
        "match_reweight.csv", "table1.csv",
        "table2.csv",         "att_grid.csv",
        "frontier_coeffs.csv", "distance_series.csv",
        "indexed_medians.csv", "satt_table.csv",
        "run_manifest.json"};
    for (const auto& name : expected) {
        INFO("missing " << name);
        CHECK(first.count(name) == 1);
    }
    CHECK(first.size() == expected.size());
    CHECK(first.count("FAILED") == 0);

    SUBCASE("documented headers") {
        auto header = [&](const std::string& name) {
            const auto& text = first.at(name);
            return text.substr(0, text.find('\n'));
        };
        CHECK(header("table1.csv") ==
              "variable,group,mean,sd,skewness,kurtosis,p10,p50,p90,n,"
              "suppressed");
        CHECK(header("table2.csv") ==
              "outcome,level_t,level_p,level_n_treated,level_n_control,"
              "trend_t,trend_p,trend_n_treated,trend_n_control,note");
        CHECK(header("att_grid.csv") ==
              "outcome,window,estimator,att,se,p_value,stars,n_treated,"
              "n_controls,dropped_treated,failed,error");
        CHECK(header("satt_table.csv") ==
              "window,industry,neighbors,satt,satt_pct,se,n_treated,"
              "n_controls,dropped_treated,significant_5pct");
        CHECK(header("propensity.csv") == "firm_id,treated,index,p");
        CHECK(header("probit_coeffs.csv") == "term,beta,se");
        CHECK(header("match_nn1.csv") ==
              "treated_id,control_id,weight,distance");
    }

    SUBCASE("rerun with a different thread count is byte-identical") {
        fs::remove_all(cfg.out_dir);
        cfg.threads = 4;
        REQUIRE(pf::run_pipeline(cfg) == 0);
        const auto second = slurp_dir(cfg.out_dir);
        REQUIRE(second.size() == first.size());
        for (const auto& [name, bytes] : first) {
            INFO("bundle file " << name);
            CHECK(second.at(name) == bytes);
        }
    }

    SUBCASE("manifest summarizes the run and embeds a loadable config") {
        const json manifest = json::parse(first.at("run_manifest.json"));
        CHECK(manifest.at("version").get<std::string>() == pf::kVersion);
        CHECK(manifest.at("counts").at("n_firms").get<int>() == 600);
        CHECK(manifest.at("counts").at("n_treated_firms").get<int>() == 30);
        const auto files =
            manifest.at("files").get<std::vector<std::string>>();
        CHECK(files.size() == expected.size());
        for (const auto& name : files) CHECK(first.count(name) == 1);

        std::istringstream embedded(manifest.at("config").dump());
        const pf::RunConfig back = pf::parse_run_config(embedded);
        CHECK(back.preset_name == cfg.preset_name);
        CHECK(back.n_firms == cfg.n_firms);
        CHECK(back.out_dir == cfg.out_dir);
    }

    SUBCASE("null scenario effects stay within sampling noise") {
        // No effect is injected, so every co2 cell should sit within a few
        // standard errors of zero.
        const auto rows = read_csv(fs::path(cfg.out_dir) / "att_grid.csv");
        std::size_t checked = 0;
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i][0] != "co2") continue;
            const double att = std::stod(rows[i][3]);
            const double se = std::stod(rows[i][4]);
            REQUIRE(se > 0.0);
            INFO("row " << i << " att=" << att << " se=" << se);
            CHECK(std::fabs(att) < 4.0 * se);
            ++checked;
        }
        CHECK(checked == 6);  // 3 estimators x 2 windows
    }
}

TEST_CASE("single stages emit their own reports plus a manifest") {
    TempDir tmp("pipeline_stages");
    pf::RunConfig cfg;
    cfg.preset_name = "null";
    cfg.n_firms = 400;
    cfg.threads = 2;

    SUBCASE("simulate") {
        cfg.out_dir = tmp.sub("sim");
        REQUIRE(pf::run_stage(cfg, "simulate") == 0);
        const auto files = slurp_dir(cfg.out_dir);
        CHECK(files.size() == 3);
        CHECK(files.count("panel.csv") == 1);
        CHECK(files.count("truth.json") == 1);
        CHECK(files.count("run_manifest.json") == 1);
        // The manifest pins the seed actually used (the preset default
        // here), satisfying the reproducibility contract.
        const json manifest = json::parse(files.at("run_manifest.json"));
        CHECK(manifest.at("seed_used").get<std::uint64_t>() == 20120101u);
        CHECK(manifest.at("version").get<std::string>() == pf::kVersion);
    }
    SUBCASE("describe") {
        cfg.out_dir = tmp.sub("desc");
        REQUIRE(pf::run_stage(cfg, "describe") == 0);
        const auto files = slurp_dir(cfg.out_dir);
        CHECK(files.size() == 2);
        CHECK(files.count("table1.csv") == 1);
        CHECK(files.count("run_manifest.json") == 1);
    }
    SUBCASE("att") {
        cfg.out_dir = tmp.sub("att");
        REQUIRE(pf::run_stage(cfg, "att") == 0);
        const auto files = slurp_dir(cfg.out_dir);
        CHECK(files.size() == 2);
        CHECK(files.count("att_grid.csv") == 1);
    }
    SUBCASE("satt") {
        cfg.out_dir = tmp.sub("satt");
        REQUIRE(pf::run_stage(cfg, "satt") == 0);
        const auto files = slurp_dir(cfg.out_dir);
        CHECK(files.size() == 2);
        CHECK(files.count("satt_table.csv") == 1);
    }
    SUBCASE("simulated panel re-ingests through the input path") {
        cfg.out_dir = tmp.sub("roundtrip_sim");
        REQUIRE(pf::run_stage(cfg, "simulate") == 0);
        pf::RunConfig ingest;
        ingest.input_csv = (fs::path(cfg.out_dir) / "panel.csv").string();
        ingest.out_dir = tmp.sub("roundtrip_att");
        REQUIRE(pf::run_stage(ingest, "att") == 0);
        const auto rows =
            read_csv(fs::path(ingest.out_dir) / "att_grid.csv");
        CHECK(rows.size() > 1);
    }
}

TEST_CASE("failures land in error.json plus a FAILED marker") {
    TempDir tmp("pipeline_err");

    SUBCASE("unknown preset is a config failure") {
        pf::RunConfig cfg;
        cfg.preset_name = "imaginary";
        cfg.out_dir = tmp.sub("bad_preset");
        CHECK(pf::run_stage(cfg, "run") == 2);
        const json err =
            json::parse(slurp(fs::path(cfg.out_dir) / "error.json"));
        CHECK(err.at("kind").get<std::string>() == "config");
        CHECK(err.at("exit_code").get<int>() == 2);
        CHECK(err.at("stage").get<std::string>() == "run");
        CHECK(err.at("message").get<std::string>().find("imaginary") !=
              std::string::npos);
        CHECK(fs::exists(fs::path(cfg.out_dir) / "FAILED"));
    }
    SUBCASE("missing input file is a data failure") {
        pf::RunConfig cfg;
        cfg.input_csv = tmp.sub("nothing.csv");
        cfg.out_dir = tmp.sub("bad_input");
        CHECK(pf::run_stage(cfg, "describe") == 3);
        const json err =
            json::parse(slurp(fs::path(cfg.out_dir) / "error.json"));
        CHECK(err.at("kind").get<std::string>() == "data");
    }
    SUBCASE("both data sources set is rejected") {
        pf::RunConfig cfg;
        cfg.input_csv = "a.csv";
        cfg.preset_name = "null";
        cfg.out_dir = tmp.sub("both");
        CHECK(pf::run_stage(cfg, "run") == 2);
    }
    SUBCASE("neither data source set is rejected") {
        pf::RunConfig cfg;
        cfg.out_dir = tmp.sub("neither");
        CHECK(pf::run_stage(cfg, "run") == 2);
    }
    SUBCASE("unknown stage name is rejected") {
        pf::RunConfig cfg;
        cfg.preset_name = "null";
        cfg.out_dir = tmp.sub("bad_stage");
        CHECK(pf::run_stage(cfg, "analyze") == 2);
        CHECK(fs::exists(fs::path(cfg.out_dir) / "FAILED"));
    }
    SUBCASE("simulate without a preset is rejected") {
        TempDir data("pipeline_err_data");
        pf::RunConfig sim;
        sim.preset_name = "null";
        sim.n_firms = 50;
        sim.out_dir = data.sub("src");
        REQUIRE(pf::run_stage(sim, "simulate") == 0);
        pf::RunConfig cfg;
        cfg.input_csv = (fs::path(sim.out_dir) / "panel.csv").string();
        cfg.out_dir = data.sub("resim");
        CHECK(pf::run_stage(cfg, "simulate") == 2);
    }
}

TEST_CASE("match weights fold into per-firm control weights") {
    TempDir tmp("pipeline_weights");
    pf::RunConfig cfg;
    cfg.preset_name = "null";
    cfg.n_firms = 300;
    pf::GroundTruth truth;
    const pf::PanelDataset panel = pf::pipeline_panel(cfg, &truth, nullptr);

    pf::PropensitySpec spec = cfg.propensity;
    spec.level_year = cfg.level_year;
    spec.trend_years = cfg.trend_years;
    const auto arts = pf::pipeline_propensity(panel, spec, cfg.support);
    REQUIRE(arts.fit.converged);

    SUBCASE("nearest-neighbour totals sum to one") {
        const auto weights =
            pf::pipeline_match(arts.scored, {pf::SchemeSpec::Kind::nn, 3});
        const auto w = pf::firm_control_weights(panel, weights);
        REQUIRE(w.size() == panel.n_firms());
        double total = 0.0;
        for (std::uint32_t f = 0; f < panel.n_firms(); ++f) {
            if (panel.firm_treated(f)) CHECK(w[f] == 0.0);
            total += w[f];
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("reweight weights are the raw odds") {
        const auto weights = pf::pipeline_match(
            arts.scored, {pf::SchemeSpec::Kind::reweight, 0});
        const auto w = pf::firm_control_weights(panel, weights);
        double total = 0.0;
        std::size_t positive = 0;
        for (double v : w) {
            total += v;
            positive += v > 0.0 ? 1 : 0;
        }
        CHECK(positive == weights.control_weights.size());
        double expected = 0.0;
        for (const auto& [id, v] : weights.control_weights) expected += v;
        CHECK(total == doctest::Approx(expected).epsilon(1e-12));
    }
}
