#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "panelfx/error.hpp"
#include "panelfx/matching.hpp"
#include "panelfx/rng.hpp"

namespace pf = panelfx;

namespace {

pf::ScoredUnit unit(std::string id, double p, bool treated) {
    pf::ScoredUnit u;
    u.firm_id = std::move(id);
    u.p = p;
    u.index = p;  // tests use probability-scale distances
    u.treated = treated;
    return u;
}

// O(n^2) reference: all controls sorted by (|dp|, id), first m.
std::vector<std::pair<std::string, double>> brute_force_nn(
    const std::vector<pf::ScoredUnit>& scored, const std::string& treated_id,
    std::size_t m) {
    double p = 0.0;
    for (const auto& u : scored)
        if (u.firm_id == treated_id) p = u.p;
    std::vector<std::pair<double, std::string>> all;
    for (const auto& u : scored)
        if (!u.treated) all.emplace_back(std::fabs(u.p - p), u.firm_id);
    std::sort(all.begin(), all.end());
    std::size_t take = std::min(m, all.size());
    std::vector<std::pair<std::string, double>> out;
    for (std::size_t i = 0; i < take; ++i)
        out.emplace_back(all[i].second, 1.0 / static_cast<double>(take));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

TEST_CASE("nearest-neighbour basics") {
    std::vector<pf::ScoredUnit> scored = {unit("t1", 0.50, true),
                                          unit("c1", 0.40, false),
                                          unit("c2", 0.55, false)};
    SUBCASE("m=1 picks the nearer control with weight 1") {
        auto w = pf::nn_match(scored, 1);
        REQUIRE(w.rows.size() == 1);
        REQUIRE(w.rows[0].entries.size() == 1);
        CHECK(w.rows[0].entries[0].control_id == "c2");
        CHECK(w.rows[0].entries[0].weight == 1.0);
        CHECK(w.rows[0].entries[0].distance == doctest::Approx(0.05));
    }
    SUBCASE("m=2 takes both with weight 1/2") {
        auto w = pf::nn_match(scored, 2);
        REQUIRE(w.rows[0].entries.size() == 2);
        CHECK(w.rows[0].entries[0].weight == 0.5);
        CHECK(w.rows[0].entries[1].weight == 0.5);
        CHECK(w.rows[0].entries[0].control_id == "c2");  // nearer first
    }
    SUBCASE("m beyond the pool size falls back to the whole pool") {
        auto w = pf::nn_match(scored, 5);
        REQUIRE(w.rows[0].entries.size() == 2);
        CHECK(w.rows[0].entries[0].weight == 0.5);
    }
    SUBCASE("empty control pool errors") {
        std::vector<pf::ScoredUnit> only_treated = {unit("t1", 0.5, true)};
        CHECK_THROWS_AS(pf::nn_match(only_treated, 1), pf::Error);
    }
    SUBCASE("m < 1 errors") {
        CHECK_THROWS_AS(pf::nn_match(scored, 0), pf::Error);
    }
}

TEST_CASE("ties at the cutoff go to the lexicographically smallest id") {
    // 0.25/0.50/0.75 are exactly representable, so both distances are
    // bit-identical 0.25 and the id decides.
    std::vector<pf::ScoredUnit> scored = {
        unit("t1", 0.50, true), unit("cz", 0.25, false), unit("ca", 0.75, false),
        unit("cb", 0.125, false)};
    auto w = pf::nn_match(scored, 1);
    REQUIRE(w.rows[0].entries.size() == 1);
    CHECK(w.rows[0].entries[0].control_id == "ca");

    // m=2 takes both tied controls, not 'cb'.
    auto w2 = pf::nn_match(scored, 2);
    std::set<std::string> picked;
    for (const auto& e : w2.rows[0].entries) picked.insert(e.control_id);
    CHECK(picked == std::set<std::string>{"ca", "cz"});
}

TEST_CASE("random panels equal the brute-force oracle") {
    pf::Rng rng = pf::Rng::seeded(808);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<pf::ScoredUnit> scored;
        for (int i = 0; i < 10; ++i)
            scored.push_back(unit("t" + std::to_string(10 + i), rng.uniform01(), true));
        for (int i = 0; i < 50; ++i)
            scored.push_back(unit("c" + std::to_string(10 + i), rng.uniform01(), false));
        for (int m : {1, 3, 5}) {
            auto w = pf::nn_match(scored, m);
            REQUIRE(w.rows.size() == 10);
            for (const auto& row : w.rows) {
                auto oracle = brute_force_nn(scored, row.treated_id,
                                             static_cast<std::size_t>(m));
                REQUIRE(row.entries.size() == oracle.size());
                std::vector<std::pair<std::string, double>> got;
                for (const auto& e : row.entries)
                    got.emplace_back(e.control_id, e.weight);
                std::sort(got.begin(), got.end());
                CHECK(got == oracle);
            }
        }
    }
}

TEST_CASE("row normalization, refinement, permutation and replacement properties") {
    pf::Rng rng = pf::Rng::seeded(4242);
    std::vector<pf::ScoredUnit> scored;
    for (int i = 0; i < 15; ++i)
        scored.push_back(unit("t" + std::to_string(100 + i), rng.uniform01(), true));
    for (int i = 0; i < 40; ++i)
        scored.push_back(unit("c" + std::to_string(100 + i), rng.uniform01(), false));

    SUBCASE("weights in each row sum to 1") {
        for (int m : {1, 2, 3, 7}) {
            auto w = pf::nn_match(scored, m);
            for (const auto& row : w.rows) {
                double sum = 0.0;
                for (const auto& e : row.entries) sum += e.weight;
                CHECK(std::fabs(sum - 1.0) < 1e-12);
            }
        }
    }
    SUBCASE("neighbour sets grow monotonically with m") {
        std::vector<std::map<std::string, std::set<std::string>>> sets;
        for (int m = 1; m <= 6; ++m) {
            auto w = pf::nn_match(scored, m);
            std::map<std::string, std::set<std::string>> by_treated;
            for (const auto& row : w.rows)
                for (const auto& e : row.entries)
                    by_treated[row.treated_id].insert(e.control_id);
            sets.push_back(std::move(by_treated));
        }
        for (std::size_t m = 1; m < sets.size(); ++m)
            for (const auto& [tid, small] : sets[m - 1])
                CHECK(std::includes(sets[m].at(tid).begin(), sets[m].at(tid).end(),
                                    small.begin(), small.end()));
    }
    SUBCASE("input order does not matter") {
        auto w1 = pf::nn_match(scored, 4);
        auto shuffled = scored;
        // Deterministic shuffle.
        pf::Rng sh = pf::Rng::seeded(1);
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[sh.next_u64() % i]);
        auto w2 = pf::nn_match(shuffled, 4);
        REQUIRE(w1.rows.size() == w2.rows.size());
        for (std::size_t r = 0; r < w1.rows.size(); ++r) {
            CHECK(w1.rows[r].treated_id == w2.rows[r].treated_id);
            REQUIRE(w1.rows[r].entries.size() == w2.rows[r].entries.size());
            for (std::size_t e = 0; e < w1.rows[r].entries.size(); ++e) {
                CHECK(w1.rows[r].entries[e].control_id ==
                      w2.rows[r].entries[e].control_id);
                CHECK(w1.rows[r].entries[e].weight == w2.rows[r].entries[e].weight);
            }
        }
    }
    SUBCASE("removing an unrelated treated unit changes nothing else") {
        auto w1 = pf::nn_match(scored, 3);
        std::vector<pf::ScoredUnit> without;
        for (const auto& u : scored)
            if (u.firm_id != "t100") without.push_back(u);
        auto w2 = pf::nn_match(without, 3);
        REQUIRE(w2.rows.size() == w1.rows.size() - 1);
        std::size_t j = 0;
        for (const auto& row : w1.rows) {
            if (row.treated_id == "t100") continue;
            CHECK(row.treated_id == w2.rows[j].treated_id);
            REQUIRE(row.entries.size() == w2.rows[j].entries.size());
            for (std::size_t e = 0; e < row.entries.size(); ++e)
                CHECK(row.entries[e].control_id == w2.rows[j].entries[e].control_id);
            ++j;
        }
    }
}

TEST_CASE("odds reweighting") {
    SUBCASE("direct formula") {
        std::vector<pf::ScoredUnit> scored = {
            unit("t1", 0.6, true), unit("c1", 0.2, false), unit("c2", 0.5, false),
            unit("c3", 0.8, false)};
        auto w = pf::reweight(scored);
        REQUIRE(w.control_weights.size() == 3);
        CHECK(w.control_weights[0].second == doctest::Approx(0.25));
        CHECK(w.control_weights[1].second == doctest::Approx(1.0));
        CHECK(w.control_weights[2].second == doctest::Approx(4.0));
        CHECK(w.treated_ids == std::vector<std::string>{"t1"});
        CHECK(!w.normalized);
    }
    SUBCASE("normalization to the treated count") {
        std::vector<pf::ScoredUnit> scored = {
            unit("t1", 0.6, true), unit("t2", 0.7, true),
            unit("c1", 0.2, false), unit("c2", 0.8, false)};
        auto w = pf::reweight(scored, true);
        double sum = 0.0;
        for (const auto& [id, wt] : w.control_weights) sum += wt;
        CHECK(sum == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("control score at 1 errors instead of clipping") {
        std::vector<pf::ScoredUnit> scored = {unit("t1", 0.6, true),
                                              unit("c1", 1.0, false)};
        try {
            pf::reweight(scored);
            FAIL("expected error");
        } catch (const pf::Error& e) {
            CHECK(std::string(e.what()).find("c1") != std::string::npos);
        }
    }
}

TEST_CASE("match quality diagnostics") {
    SUBCASE("exact matches give zero distances") {
        std::vector<pf::ScoredUnit> scored = {
            unit("t1", 0.3, true), unit("t2", 0.7, true),
            unit("c1", 0.3, false), unit("c2", 0.7, false)};
        auto q = pf::match_quality(pf::nn_match(scored, 1));
        CHECK(q.mean_distance == 0.0);
        CHECK(q.max_distance == 0.0);
        CHECK(q.distinct_controls == 2);
    }
    SUBCASE("disjoint clusters expose the gap as max distance") {
        std::vector<pf::ScoredUnit> scored = {
            unit("t1", 0.20, true), unit("t2", 0.22, true),
            unit("c1", 0.21, false), unit("c2", 0.60, false)};
        auto w = pf::nn_match(scored, 2);
        auto q = pf::match_quality(w);
        CHECK(q.max_distance == doctest::Approx(0.40));  // t1 -> c2
    }
    SUBCASE("single-control degenerate reuse") {
        std::vector<pf::ScoredUnit> scored = {
            unit("t1", 0.2, true), unit("t2", 0.5, true), unit("t3", 0.9, true),
            unit("c1", 0.4, false)};
        auto q = pf::match_quality(pf::nn_match(scored, 1));
        CHECK(q.distinct_controls == 1);
        REQUIRE(q.reuse_counts.size() == 1);
        CHECK(q.reuse_counts[0].first == "c1");
        CHECK(q.reuse_counts[0].second == 3);
    }
    SUBCASE("reweight scheme is rejected") {
        std::vector<pf::ScoredUnit> scored = {unit("t1", 0.5, true),
                                              unit("c1", 0.4, false)};
        CHECK_THROWS_AS(pf::match_quality(pf::reweight(scored)), pf::Error);
    }
}

TEST_CASE("control totals form a probability distribution over controls") {
    pf::Rng rng = pf::Rng::seeded(99);
    std::vector<pf::ScoredUnit> scored;
    for (int i = 0; i < 12; ++i)
        scored.push_back(unit("t" + std::to_string(10 + i), rng.uniform01(), true));
    for (int i = 0; i < 30; ++i)
        scored.push_back(unit("c" + std::to_string(10 + i), rng.uniform01(), false));

    for (auto weights : {pf::nn_match(scored, 3), pf::reweight(scored)}) {
        auto totals = pf::control_total_weights(weights);
        double sum = 0.0;
        for (const auto& [id, w] : totals) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}
