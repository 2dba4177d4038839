#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "panelfx/error.hpp"
#include "panelfx/propensity.hpp"
#include "panelfx/rng.hpp"
#include "panelfx/stats.hpp"

namespace pf = panelfx;
namespace ps = panelfx::stats;

namespace {

pf::Design intercept_only(std::size_t n) {
    pf::Design d;
    d.add_column("const", std::vector<double>(n, 1.0));
    return d;
}

std::vector<std::uint8_t> binary(std::initializer_list<int> v) {
    std::vector<std::uint8_t> out;
    for (int x : v) out.push_back(static_cast<std::uint8_t>(x));
    return out;
}

}  // namespace

TEST_CASE("intercept-only probit recovers the inverse-normal of the share") {
    SUBCASE("50% treated -> 0") {
        auto fit = pf::fit_probit(intercept_only(10),
                                  binary({1, 1, 1, 1, 1, 0, 0, 0, 0, 0}));
        CHECK(fit.converged);
        CHECK(std::fabs(fit.beta[0]) < 1e-10);
    }
    SUBCASE("30% treated -> about -0.5244") {
        auto fit = pf::fit_probit(intercept_only(10),
                                  binary({1, 1, 1, 0, 0, 0, 0, 0, 0, 0}));
        CHECK(fit.beta[0] == doctest::Approx(ps::norm_quantile(0.3)).epsilon(1e-8));
        CHECK(fit.beta[0] == doctest::Approx(-0.5244005127080409).epsilon(1e-8));
        // With only an intercept the fitted score equals the share up to
        // the gradient stopping tolerance.
        CHECK(pf::index_to_probability(fit.beta[0]) ==
              doctest::Approx(0.3).epsilon(1e-8));
    }
}

TEST_CASE("probit matches an independent maximum-likelihood fit") {
    // 24-row fixture; reference values from a separate Newton probit
    // implementation (coefficients, observed-information SEs, log-likelihood).
    pf::Design d;
    d.add_column("const", std::vector<double>(24, 1.0));
    d.add_column("x1", {0.5,  1.5, -0.7, 2.2,  0.0, -1.3, 0.8,  1.1,
                        -0.2, 0.4, -1.8, 0.9,  0.3, -0.6, 1.9,  -0.9,
                        0.7,  1.4, -1.1, 0.2,  2.0, -0.3, 0.6,  -1.5});
    d.add_column("x2", {2.0,  1.0, 0.3,  -1.1, 0.9,  1.7, -0.4, 0.6,
                        -1.5, 0.1, 0.8,  -0.2, 1.2,  -0.9, 0.4, 1.1,
                        -1.3, 0.5, 0.9,  -0.7, 0.2,  1.6, -1.0, 0.3});
    auto y = binary({0, 1, 0, 1, 0, 0, 1, 1, 0, 0, 0, 1,
                     0, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0});

    auto fit = pf::fit_probit(d, y);
    CHECK(fit.converged);
    CHECK(fit.beta[0] == doctest::Approx(-1.6019949889950018).epsilon(1e-7));
    CHECK(fit.beta[1] == doctest::Approx(1.2840481695489836).epsilon(1e-7));
    CHECK(fit.beta[2] == doctest::Approx(-0.06327463690464467).epsilon(1e-6));
    CHECK(fit.se[0] == doctest::Approx(0.6453271076418803).epsilon(1e-6));
    CHECK(fit.se[1] == doctest::Approx(0.5333175134256415).epsilon(1e-6));
    CHECK(fit.se[2] == doctest::Approx(0.4252486989553195).epsilon(1e-6));
    CHECK(fit.log_likelihood == doctest::Approx(-7.863563214789427).epsilon(1e-10));

    // Analytic gradient at the optimum is tiny and matches central finite
    // differences of the log-likelihood.
    auto loglike = [&](const std::vector<double>& beta) {
        double ll = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            double t = 0.0;
            for (std::size_t j = 0; j < d.k(); ++j) t += d.cols[j][i] * beta[j];
            ll += ps::norm_logcdf((y[i] ? 1.0 : -1.0) * t);
        }
        return ll;
    };
    for (std::size_t j = 0; j < fit.beta.size(); ++j) {
        const double eps = 1e-6;
        auto hi = fit.beta, lo = fit.beta;
        hi[j] += eps;
        lo[j] -= eps;
        double fd = (loglike(hi) - loglike(lo)) / (2 * eps);
        CHECK(std::fabs(fd) < 1e-5);  // near-zero score at the MLE
    }

    // With covariates the mean fitted probability tracks (but does not
    // exactly equal) the treated share; the fixture's reference value is
    // 0.242072 against a share of 0.25.
    auto idx = pf::probit_index(fit, d);
    double mean_p = 0.0;
    for (double t : idx) mean_p += pf::index_to_probability(t);
    mean_p /= static_cast<double>(idx.size());
    CHECK(mean_p == doctest::Approx(0.24207156507301644).epsilon(1e-6));
}

TEST_CASE("probit gradient matches finite differences away from the optimum") {
    // Property check of the score function used inside Newton-Raphson.
    pf::Rng rng = pf::Rng::seeded(17);
    const std::size_t n = 60;
    pf::Design d;
    std::vector<double> x1(n), x2(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        x1[i] = rng.normal();
        x2[i] = rng.normal();
        y[i] = rng.bernoulli(ps::norm_cdf(0.3 + 0.7 * x1[i] - 0.5 * x2[i])) ? 1 : 0;
    }
    d.add_column("const", std::vector<double>(n, 1.0));
    d.add_column("x1", x1);
    d.add_column("x2", x2);

    auto loglike = [&](const std::vector<double>& beta) {
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double t = beta[0] + beta[1] * x1[i] + beta[2] * x2[i];
            ll += ps::norm_logcdf((y[i] ? 1.0 : -1.0) * t);
        }
        return ll;
    };
    auto analytic_grad = [&](const std::vector<double>& beta) {
        std::vector<double> g(3, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double t = beta[0] + beta[1] * x1[i] + beta[2] * x2[i];
            double q = y[i] ? 1.0 : -1.0;
            double lam = q * ps::inverse_mills(q * t);
            g[0] += lam;
            g[1] += lam * x1[i];
            g[2] += lam * x2[i];
        }
        return g;
    };

    for (auto beta : {std::vector<double>{0.0, 0.0, 0.0},
                      std::vector<double>{0.5, -0.3, 0.2},
                      std::vector<double>{-1.0, 1.5, 0.7}}) {
        auto g = analytic_grad(beta);
        for (std::size_t j = 0; j < 3; ++j) {
            const double eps = 1e-6;
            auto hi = beta, lo = beta;
            hi[j] += eps;
            lo[j] -= eps;
            double fd = (loglike(hi) - loglike(lo)) / (2 * eps);
            CHECK(g[j] == doctest::Approx(fd).epsilon(1e-4));
        }
    }
}

TEST_CASE("probit failure modes") {
    SUBCASE("perfect separation raises a dedicated error") {
        pf::Design d;
        d.add_column("const", std::vector<double>(8, 1.0));
        d.add_column("x", {-4, -3, -2, -1, 1, 2, 3, 4});
        auto y = binary({0, 0, 0, 0, 1, 1, 1, 1});
        try {
            pf::fit_probit(d, y);
            FAIL("expected separation error");
        } catch (const pf::Error& e) {
            CHECK(e.kind() == pf::ErrorKind::estimation);
            CHECK(std::string(e.what()).find("separation") != std::string::npos);
        }
    }
    SUBCASE("rank-deficient design names the dependent columns") {
        pf::Design d;
        d.add_column("const", std::vector<double>(8, 1.0));
        d.add_column("a", {1, 2, 1, 2, 1, 2, 1, 2});
        d.add_column("two_a", {2, 4, 2, 4, 2, 4, 2, 4});
        auto y = binary({0, 1, 0, 1, 1, 0, 1, 0});
        CHECK_THROWS_AS(pf::fit_probit(d, y), pf::Error);
    }
    SUBCASE("constant response is rejected") {
        CHECK_THROWS_AS(pf::fit_probit(intercept_only(5), binary({1, 1, 1, 1, 1})),
                        pf::Error);
    }
}

TEST_CASE("prediction: link values and monotonicity") {
    pf::ProbitFit fit;
    fit.names = {"const", "x"};
    fit.beta = {0.0, 1.0};

    pf::Design d;
    d.add_column("const", {1.0, 1.0, 1.0});
    d.add_column("x", {0.0, 1.96, -1.96});
    auto idx = pf::probit_index(fit, d);
    CHECK(pf::index_to_probability(idx[0]) == doctest::Approx(0.5));
    CHECK(pf::index_to_probability(idx[1]) == doctest::Approx(0.9750021048517795).epsilon(1e-12));
    // Symmetry of the link.
    CHECK(pf::index_to_probability(idx[2]) ==
          doctest::Approx(1.0 - pf::index_to_probability(idx[1])).epsilon(1e-12));

    // Strictly inside (0,1) even for extreme indexes.
    CHECK(pf::index_to_probability(50.0) < 1.0);
    CHECK(pf::index_to_probability(-50.0) > 0.0);

    // Positive coefficient: score increases with the covariate.
    double prev = 0.0;
    for (double x = -3.0; x <= 3.0; x += 0.25) {
        double p = pf::index_to_probability(0.0 + 1.0 * x);
        CHECK(p >= prev);
        prev = p;
    }

    // Column mismatch is rejected.
    pf::Design wrong;
    wrong.add_column("const", {1.0});
    wrong.add_column("z", {1.0});
    CHECK_THROWS_AS(pf::probit_index(fit, wrong), pf::Error);
}

TEST_CASE("probit recovery on simulated data") {
    pf::Rng rng = pf::Rng::seeded(2718);
    const std::size_t n = 4000;
    pf::Design d;
    std::vector<double> x(n);
    std::vector<std::uint8_t> y(n);
    const double b0 = -0.4, b1 = 0.8;
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = rng.normal();
        y[i] = rng.bernoulli(ps::norm_cdf(b0 + b1 * x[i])) ? 1 : 0;
    }
    d.add_column("const", std::vector<double>(n, 1.0));
    d.add_column("x", x);
    auto fit = pf::fit_probit(d, y);
    CHECK(std::fabs(fit.beta[0] - b0) < 3.0 * fit.se[0] + 1e-9);
    CHECK(std::fabs(fit.beta[1] - b1) < 3.0 * fit.se[1] + 1e-9);

    // Mean fitted probability stays close to the observed share.
    auto idx = pf::probit_index(fit, d);
    double mean_p = 0.0, share = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_p += pf::index_to_probability(idx[i]);
        share += y[i];
    }
    CHECK(std::fabs((mean_p - share) / n) < 0.01);
}

TEST_CASE("common support") {
    auto unit = [](std::string id, double p, bool treated) {
        pf::ScoredUnit u;
        u.firm_id = std::move(id);
        u.p = p;
        u.index = ps::norm_quantile(p);
        u.treated = treated;
        return u;
    };

    SUBCASE("inside the control range nothing is dropped") {
        std::vector<pf::ScoredUnit> scored = {
            unit("t1", 0.4, true), unit("c1", 0.3, false), unit("c2", 0.5, false)};
        auto rep = pf::enforce_common_support(scored, pf::SupportRule::minmax());
        CHECK(rep.dropped.empty());
        CHECK(rep.retained.size() == 3);
    }
    SUBCASE("treated above every control is dropped") {
        std::vector<pf::ScoredUnit> scored = {
            unit("t1", 0.99, true), unit("t2", 0.5, true),
            unit("c1", 0.2, false), unit("c2", 0.9, false)};
        auto rep = pf::enforce_common_support(scored, pf::SupportRule::minmax());
        REQUIRE(rep.dropped.size() == 1);
        CHECK(rep.dropped[0].firm_id == "t1");
        CHECK(rep.retained.size() == 3);
    }
    SUBCASE("random 5/5 case equals the brute-force min-max filter") {
        pf::Rng rng = pf::Rng::seeded(5150);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<pf::ScoredUnit> scored;
            for (int i = 0; i < 5; ++i)
                scored.push_back(unit("t" + std::to_string(i), rng.uniform01(), true));
            for (int i = 0; i < 5; ++i)
                scored.push_back(unit("c" + std::to_string(i), rng.uniform01(), false));
            double lo = 1.0, hi = 0.0;
            for (const auto& u : scored)
                if (!u.treated) {
                    lo = std::min(lo, u.p);
                    hi = std::max(hi, u.p);
                }
            bool any_kept = false;
            for (const auto& u : scored)
                if (u.treated && u.p >= lo && u.p <= hi) any_kept = true;
            if (!any_kept) continue;  // error path, tested separately
            auto rep = pf::enforce_common_support(scored, pf::SupportRule::minmax());
            for (const auto& u : rep.retained)
                if (u.treated) {
                    CHECK(u.p >= lo);
                    CHECK(u.p <= hi);
                }
            for (const auto& u : rep.dropped) CHECK((u.p < lo || u.p > hi));
            CHECK(rep.retained.size() + rep.dropped.size() == scored.size());
        }
    }
    SUBCASE("no overlap at all is an error") {
        std::vector<pf::ScoredUnit> scored = {unit("t1", 0.9, true),
                                              unit("c1", 0.1, false),
                                              unit("c2", 0.2, false)};
        CHECK_THROWS_AS(pf::enforce_common_support(scored, pf::SupportRule::minmax()),
                        pf::Error);
    }
    SUBCASE("caliper drops treated units with no nearby control index") {
        std::vector<pf::ScoredUnit> scored = {
            unit("t_far", 0.97, true), unit("t_near", 0.55, true),
            unit("c1", 0.50, false), unit("c2", 0.60, false)};
        auto rep = pf::enforce_common_support(scored,
                                              pf::SupportRule::caliper(0.5));
        REQUIRE(rep.dropped.size() == 1);
        CHECK(rep.dropped[0].firm_id == "t_far");
    }
    SUBCASE("empty group is an error") {
        std::vector<pf::ScoredUnit> scored = {unit("t1", 0.4, true)};
        CHECK_THROWS_AS(pf::enforce_common_support(scored, pf::SupportRule::minmax()),
                        pf::Error);
    }
}

TEST_CASE("panel covariate assembly") {
    std::vector<pf::FirmYear> rows;
    auto add = [&](const std::string& id, int year, int industry, bool treated,
                   double output, double co2) {
        pf::FirmYear row;
        row.firm_id = id;
        row.year = year;
        row.industry = industry;
        row.treated = treated;
        row.value("output") = output;
        row.value("co2") = co2;
        rows.push_back(std::move(row));
    };
    // Two complete firms in different industries, one firm missing 2002
    // (no trend), one firm with a zero level (log undefined).
    add("f1", 2002, 10, true, 90, 4.5);
    add("f1", 2003, 10, true, 100, 5.0);
    add("f2", 2002, 17, false, 190, 2.2);
    add("f2", 2003, 17, false, 200, 2.0);
    add("f3", 2003, 10, false, 150, 3.0);
    add("f4", 2002, 17, false, 80, 1.0);
    add("f4", 2003, 17, false, 0.0, 1.0);
    auto panel = pf::PanelDataset::build(std::move(rows), pf::PanelConfig{});

    pf::PropensitySpec spec;
    spec.level_vars = {"output", "co2"};
    spec.trend_vars = {"output"};
    auto data = pf::build_propensity_design(panel, spec);

    CHECK(data.dropped_missing == 2);  // f3 (no trend year), f4 (log of 0)
    REQUIRE(data.firms.size() == 2);
    CHECK(panel.firm_id(data.firms[0]) == "f1");
    CHECK(panel.firm_id(data.firms[1]) == "f2");
    CHECK(data.treated[0] == 1);
    CHECK(data.treated[1] == 0);

    REQUIRE(data.design.names.size() == 5);
    CHECK(data.design.names[0] == "const");
    CHECK(data.design.names[1] == "ln_output");
    CHECK(data.design.names[2] == "ln_co2");
    CHECK(data.design.names[3] == "dln_output");
    CHECK(data.design.names[4] == "industry_17");
    CHECK(data.design.cols[1][0] == doctest::Approx(std::log(100.0)));
    CHECK(data.design.cols[3][0] == doctest::Approx(std::log(100.0 / 90.0)));
    CHECK(data.design.cols[4][0] == 0.0);  // f1 is in the baseline industry
    CHECK(data.design.cols[4][1] == 1.0);
}
