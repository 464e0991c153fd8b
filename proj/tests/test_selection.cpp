#include "oracles.hpp"

#include <poisonforge/selection.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace poisonforge;

namespace {

// Target-0 statistics with the given per-sample event rows.
MisclassStats stats_from_rows(std::vector<std::vector<std::size_t>> rows, std::size_t classes,
                              std::size_t target = 0) {
    MisclassStats s;
    s.num_classes = classes;
    s.num_epochs = 10;
    s.target_label = target;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        s.sample_indices.push_back(i);
        s.reference_labels.push_back(target);
        std::size_t f = 0;
        for (auto v : rows[i]) f += v;
        s.forget_counts.push_back(f);
    }
    s.events = std::move(rows);
    return s;
}

SelectionStrategy top(std::size_t k, Metric m = Metric::res_log) {
    SelectionStrategy st;
    st.metric = m;
    st.count = k;
    st.target_label = 0;
    return st;
}

const NegativeFunction kFunctions[] = {NegativeFunction::log, NegativeFunction::linear,
                                       NegativeFunction::square, NegativeFunction::exp};

oracle::NF to_oracle(NegativeFunction f) {
    switch (f) {
    case NegativeFunction::log: return oracle::NF::log;
    case NegativeFunction::linear: return oracle::NF::x;
    case NegativeFunction::square: return oracle::NF::x2;
    default: return oracle::NF::ex;
    }
}

} // namespace

TEST(MetricNames, RoundTrip) {
    for (auto m : {Metric::random, Metric::loss, Metric::grad_norm, Metric::forget, Metric::diversity,
                   Metric::res_log, Metric::res_x, Metric::res_x2, Metric::res_exp})
        EXPECT_EQ(metric_from_string(to_string(m)), m);
    EXPECT_THROW(metric_from_string("res-cube"), Error);
}

TEST(ScoreForget, RanksByCount) {
    MisclassStats s = stats_from_rows({{0, 3}, {0, 0}, {0, 5}}, 2);
    auto r = select(top(3, Metric::forget), score_forget(s));
    EXPECT_EQ(r.entries[0].rank, 2u);
    EXPECT_EQ(r.entries[1].rank, 3u);
    EXPECT_EQ(r.entries[2].rank, 1u);
}

TEST(ScoreForget, AllZeroFallsBackToIndexOrder) {
    MisclassStats s = stats_from_rows({{0, 0}, {0, 0}, {0, 0}}, 2);
    auto r = select(top(2, Metric::forget), score_forget(s));
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1}));
}

TEST(ScoreDiversity, WorkedRows) {
    MisclassStats s = stats_from_rows({{0, 2, 2, 2}, {0, 6, 0, 0}}, 4);
    auto sc = score_diversity(s);
    EXPECT_DOUBLE_EQ(sc.values[0], 0.0);
    EXPECT_NEAR(sc.values[1], -std::sqrt(24.0), 1e-12);
    EXPECT_NEAR(sc.values[1], -4.899, 1e-3);
}

TEST(ScoreDiversity, GreedyMatchesExhaustiveSubsetSearch) {
    std::mt19937 rng(11);
    std::uniform_int_distribution<std::size_t> cnt(0, 6);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::vector<std::size_t>> rows(6, std::vector<std::size_t>(4, 0));
        for (auto& r : rows)
            for (std::size_t m = 1; m < 4; ++m) r[m] = cnt(rng);
        auto s = stats_from_rows(rows, 4);
        auto greedy = select(top(2, Metric::diversity), score_diversity(s)).selected;
        std::set<std::size_t> greedy_set(greedy.begin(), greedy.end());

        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < 6; ++a)
            for (std::size_t b = a + 1; b < 6; ++b)
                best = std::min(best, oracle::diversity_deviation(rows[a], 0) +
                                          oracle::diversity_deviation(rows[b], 0));
        double got = 0.0;
        for (auto i : greedy_set) got += oracle::diversity_deviation(rows[i], 0);
        EXPECT_NEAR(got, best, 1e-9);
    }
}

TEST(ScoreDiversity, GlobalMean) {
    MisclassStats s = stats_from_rows({{0, 2, 2, 2}, {0, 6, 0, 0}}, 4);
    // global mu = 12 / 6 = 2
    auto sc = score_diversity(s, DiversityMean::global);
    EXPECT_DOUBLE_EQ(sc.values[0], 0.0);
    EXPECT_NEAR(sc.values[1], -std::sqrt(24.0), 1e-12);
    MisclassStats t = stats_from_rows({{0, 1, 1}, {0, 3, 3}}, 3);
    auto g = score_diversity(t, DiversityMean::global);
    EXPECT_NEAR(g.values[0], -std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(g.values[1], -std::sqrt(2.0), 1e-12);
}

TEST(ClassWeights, ResLogWorkedExample) {
    auto s = stats_from_rows({{0, 3, 1}, {0, 0, 4}}, 3);
    auto w = class_weights(s, NegativeFunction::log);
    ASSERT_EQ(w.classes, (std::vector<std::size_t>{1, 2}));
    EXPECT_EQ(w.totals, (std::vector<std::size_t>{3, 5}));
    EXPECT_NEAR(w.weights[0], 0.5638, 1e-4);
    EXPECT_NEAR(w.weights[1], 0.4362, 1e-4);
    auto sc = score_res(s, w);
    EXPECT_NEAR(sc.values[0], 2.1277, 1e-3);
    EXPECT_NEAR(sc.values[1], 1.7449, 1e-3);
    auto r = select(top(1), sc);
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0}));
}

TEST(ClassWeights, ResExpWorkedExample) {
    auto s = stats_from_rows({{0, 0, 4}}, 3);
    auto w = class_weights(s, NegativeFunction::exp);
    EXPECT_NEAR(w.weights[0], 0.0180, 1e-4);
    EXPECT_NEAR(w.weights[1], 0.9820, 1e-4);
}

TEST(ClassWeights, SymmetricTotals) {
    auto s = stats_from_rows({{0, 4, 0}, {0, 0, 4}}, 3);
    for (auto f : kFunctions) {
        auto w = class_weights(s, f);
        EXPECT_NEAR(w.weights[0], 0.5, 1e-12);
        EXPECT_NEAR(w.weights[1], 0.5, 1e-12);
    }
}

TEST(ClassWeights, DegenerateStatisticsError) {
    auto s = stats_from_rows({{0, 0, 0}, {0, 0, 0}}, 3);
    for (auto f : kFunctions) {
        try {
            class_weights(s, f);
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::degenerate);
            EXPECT_NE(std::string(e.what()).find("degenerate statistics"), std::string::npos);
        }
    }
}

TEST(ClassWeights, MatchOracleAndSumToOne) {
    std::mt19937 rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        auto log = oracle::random_log(rng, 300, 30, 10);
        const std::size_t target = trial % 10;
        auto stats = compute_misclass_stats(log, target);
        for (auto f : kFunctions) {
            auto w = class_weights(stats, f);
            auto ref = oracle::res_metric(stats.events, target, 10, to_oracle(f));
            double share = 0.0;
            for (std::size_t k = 0; k < w.classes.size(); ++k) {
                EXPECT_NEAR(w.weights[k], ref.cls.at(w.classes[k]), 1e-12);
                EXPECT_GE(w.weights[k], 0.0);
                EXPECT_LE(w.weights[k], 1.0);
                share += 1.0 - w.weights[k];
            }
            EXPECT_NEAR(share, 1.0, 1e-9);
            auto sc = score_res(stats, w);
            for (std::size_t i = 0; i < sc.values.size(); ++i) {
                EXPECT_NEAR(sc.values[i], ref.metric[i], 1e-9);
                EXPECT_GE(sc.values[i], 0.0);
            }
        }
    }
}

TEST(ClassWeights, LogBaseInvariance) {
    std::mt19937 rng(8);
    auto stats = compute_misclass_stats(oracle::random_log(rng, 500, 40, 10), 3);
    const auto n = stats.size();
    auto natural = select(top(n), score_res(stats, class_weights(stats, NegativeFunction::log)));
    auto base2 = select(top(n), score_res(stats, class_weights(stats, NegativeFunction::log, 2.0)));
    EXPECT_EQ(natural.selected, base2.selected);
}

TEST(ScoreRes, Monotonicity) {
    auto s = stats_from_rows({{0, 3, 1}, {0, 0, 4}}, 3);
    auto w = class_weights(s, NegativeFunction::log);
    const double before = score_res(s, w).values[0];
    for (std::size_t m = 1; m < 3; ++m) {
        auto bumped = s;
        bumped.events[0][m] += 1;
        EXPECT_GT(score_res(bumped, w).values[0], before);
    }
}

TEST(ScoreRes, ZeroRowAndUniformWeights) {
    auto s = stats_from_rows({{0, 0, 0}, {0, 2, 5}, {0, 1, 1}}, 3);
    auto w = class_weights(s, NegativeFunction::log);
    EXPECT_DOUBLE_EQ(score_res(s, w).values[0], 0.0);
    w.weights = {0.5, 0.5};
    auto res = select(top(3), score_res(s, w));
    auto fgt = select(top(3, Metric::forget), score_forget(s));
    EXPECT_EQ(res.selected, fgt.selected);
}

TEST(ScoreScalar, LossTopOne) {
    PredictionLog log;
    log.num_epochs = 1;
    log.num_classes = 2;
    log.sample_indices = {0, 1, 2};
    log.true_labels = {0, 0, 0};
    log.predictions = {{0}, {0}, {0}};
    log.loss = std::vector<std::vector<double>>{{0.1}, {2.3}, {0.7}};
    auto r = select(top(1, Metric::loss), score_scalar(log, ScalarField::loss, 0));
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{1}));
    EXPECT_THROW(score_scalar(log, ScalarField::grad_norm, 0), Error);
    log.loss = std::vector<std::vector<double>>{{1.0}, {1.0}, {1.0}};
    r = select(top(2, Metric::loss), score_scalar(log, ScalarField::loss, 0));
    EXPECT_EQ(r.selected, (std::vector<std::size_t>{0, 1}));
}

TEST(ScoreScalar, MatchesSortOracle) {
    std::mt19937 rng(13);
    auto log = oracle::random_log(rng, 400, 5, 4, true);
    auto sc = score_scalar(log, ScalarField::grad_norm, 2);
    for (std::size_t k = 0; k <= sc.indices.size(); k += 7) {
        auto r = select(top(k, Metric::grad_norm), sc);
        EXPECT_EQ(r.selected, oracle::top_k(sc.indices, sc.values, k));
    }
}

TEST(Select, ForgetMatchesSortOracleForAllK) {
    std::mt19937 rng(14);
    auto stats = compute_misclass_stats(oracle::random_log(rng, 200, 20, 5), 1);
    auto sc = score_forget(stats);
    for (std::size_t k = 0; k <= sc.indices.size(); ++k)
        EXPECT_EQ(select(top(k, Metric::forget), sc).selected, oracle::top_k(sc.indices, sc.values, k));
}

TEST(Select, EdgeCounts) {
    ScoredSamples sc{{4, 9, 12}, {1.0, 3.0, 2.0}};
    EXPECT_TRUE(select(top(0), sc).selected.empty());
    auto all = select(top(3), sc).selected;
    std::sort(all.begin(), all.end());
    EXPECT_EQ(all, sc.indices);
    EXPECT_THROW(select(top(4), sc), Error);
    SelectionStrategy st = top(1);
    st.rate = 0.5;
    EXPECT_THROW(select(st, sc), Error);
    st.count.reset();
    st.rate = 2.0 / 3.0;
    EXPECT_EQ(select(st, sc).selected, (std::vector<std::size_t>{9, 12}));
}

TEST(Select, RandomIsSeededAndDeterministic) {
    ScoredSamples sc;
    for (std::size_t i = 0; i < 100; ++i) {
        sc.indices.push_back(i * 3);
        sc.values.push_back(0.0);
    }
    SelectionStrategy st = top(10, Metric::random);
    st.seed = 7;
    auto a = select(st, sc), b = select(st, sc);
    EXPECT_EQ(a, b);
    std::set<std::size_t> uniq(a.selected.begin(), a.selected.end());
    EXPECT_EQ(uniq.size(), 10u);
    st.seed = 8;
    EXPECT_NE(select(st, sc).selected, a.selected);
}

TEST(Select, IndependentOfInputOrder) {
    ScoredSamples sc{{4, 9, 12, 20}, {1.0, 3.0, 3.0, 0.5}};
    ScoredSamples rev{{20, 12, 9, 4}, {0.5, 3.0, 3.0, 1.0}};
    EXPECT_EQ(select(top(2), sc), select(top(2), rev));
    EXPECT_EQ(select(top(2), sc).selected, (std::vector<std::size_t>{9, 12}));
}

TEST(Compose, KeepsLowestStealthScores) {
    SelectionReport r;
    r.selected = {10, 11, 12, 13};
    std::map<std::size_t, double> g{{10, 0.4}, {11, 0.1}, {12, 0.3}, {13, 0.2}};
    auto out = compose_with_stealth(r, g, 0.5);
    EXPECT_EQ(out.selected, (std::vector<std::size_t>{11, 13}));
    EXPECT_EQ(out.stealth_keep, 0.5);
    auto same = compose_with_stealth(r, g, 1.0);
    EXPECT_EQ(std::set<std::size_t>(same.selected.begin(), same.selected.end()),
              std::set<std::size_t>(r.selected.begin(), r.selected.end()));
    EXPECT_THROW(compose_with_stealth(r, g, 0.1), Error);
    EXPECT_THROW(compose_with_stealth(r, g, 0.0), Error);
    g.erase(12);
    EXPECT_THROW(compose_with_stealth(r, g, 0.5), Error);
}

TEST(Compose, MatchesSortAndTruncateOracle) {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> coarse(0, 4);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + trial % 40;
        SelectionReport r;
        std::map<std::size_t, double> g;
        std::vector<std::size_t> pool(200);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        std::shuffle(pool.begin(), pool.end(), rng);
        for (std::size_t i = 0; i < n; ++i) {
            r.selected.push_back(pool[i]);
            // Coarse scores on odd trials force ties.
            g[pool[i]] = trial % 2 ? coarse(rng) / 4.0 : u(rng);
        }
        const double keep = std::max(u(rng), 1.0 / static_cast<double>(n));
        auto out = compose_with_stealth(r, g, keep);
        EXPECT_EQ(out.selected, oracle::sort_and_truncate(r.selected, g, keep));
        EXPECT_EQ(out.selected.size(),
                  static_cast<std::size_t>(std::floor(keep * static_cast<double>(n) + 1e-9)));
    }
}
