#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "coldllm/evaluation.hpp"
#include "coldllm/random.hpp"
#include "support.hpp"

using namespace coldllm;

namespace {

struct MetricCase {
    std::vector<ItemId> ranked;
    std::set<ItemId> relevant;
    std::size_t k;
};

MetricCase random_case(Rng& rng) {
    MetricCase c;
    const std::size_t n = 1 + rng() % 60;
    std::vector<ItemId> items(n);
    std::iota(items.begin(), items.end(), 0);
    std::shuffle(items.begin(), items.end(), rng);
    c.ranked = items;
    const std::size_t r = rng() % (n + 1);
    for (std::size_t j = 0; j < r; ++j) c.relevant.insert(static_cast<ItemId>(rng() % (n + 10)));
    c.k = 1 + rng() % 70;
    return c;
}

std::vector<ItemId> sorted(const std::set<ItemId>& s) { return {s.begin(), s.end()}; }

ItemScorer hashed_scorer(std::uint64_t seed) {
    return [seed](UserId u, std::span<const ItemId> items, std::span<double> scores) {
        for (std::size_t n = 0; n < items.size(); ++n)
            scores[n] = static_cast<double>(derive_seed(seed, "score", (std::uint64_t{u} << 32) | items[n]) >> 11);
    };
}

ColdWarmSplit toy_split() { return make_cold_split(test::random_log(200, 60, 0.08, 7), 0.3, 7); }

double discount_sum(std::size_t n) {
    double s = 0.0;
    for (std::size_t r = 1; r <= n; ++r) s += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    return s;
}

}  // namespace

TEST(Metrics, MatchBruteForceOnRandomInstances) {
    Rng rng(1);
    for (int n = 0; n < 1000; ++n) {
        auto c = random_case(rng);
        auto rel = sorted(c.relevant);
        EXPECT_NEAR(recall_at_k(c.ranked, rel, c.k), test::ref_recall(c.ranked, c.relevant, c.k), 1e-12);
        EXPECT_NEAR(ndcg_at_k(c.ranked, rel, c.k), test::ref_ndcg(c.ranked, c.relevant, c.k), 1e-12);
    }
}

TEST(Metrics, SingleRelevantAtRankThree) {
    std::vector<ItemId> ranked{5, 6, 7, 8};
    std::vector<ItemId> rel{7};
    EXPECT_NEAR(ndcg_at_k(ranked, rel, 4), 0.5, 1e-12);
    EXPECT_DOUBLE_EQ(recall_at_k(ranked, rel, 4), 1.0);
    EXPECT_DOUBLE_EQ(recall_at_k(ranked, rel, 2), 0.0);
}

TEST(Metrics, TwoOfFourRelevantRetrieved) {
    std::vector<ItemId> ranked{1, 9, 2, 8, 3};
    std::vector<ItemId> rel{1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(recall_at_k(ranked, rel, 3), 0.5);
    const double dcg = 1.0 + 1.0 / std::log2(4.0);
    EXPECT_NEAR(ndcg_at_k(ranked, rel, 3), dcg / discount_sum(3), 1e-12);
}

TEST(Metrics, EmptyRelevantIsZero) {
    std::vector<ItemId> ranked{1, 2};
    EXPECT_EQ(recall_at_k(ranked, {}, 2), 0.0);
    EXPECT_EQ(ndcg_at_k(ranked, {}, 2), 0.0);
}

TEST(Metrics, RecallMonotoneInK) {
    Rng rng(2);
    for (int n = 0; n < 300; ++n) {
        auto c = random_case(rng);
        auto rel = sorted(c.relevant);
        double prev = 0.0;
        for (std::size_t k = 1; k <= c.ranked.size() + 2; ++k) {
            const double r = recall_at_k(c.ranked, rel, k);
            EXPECT_GE(r, prev);
            EXPECT_LE(r, 1.0);
            prev = r;
        }
    }
}

TEST(Metrics, NdcgIgnoresItemsBeyondK) {
    Rng rng(3);
    for (int n = 0; n < 300; ++n) {
        auto c = random_case(rng);
        auto rel = sorted(c.relevant);
        auto extended = c.ranked;
        extended.push_back(1000);
        extended.push_back(1001);
        const std::size_t k = std::min(c.k, c.ranked.size());
        EXPECT_EQ(ndcg_at_k(c.ranked, rel, k), ndcg_at_k(extended, rel, k));
        const double v = ndcg_at_k(c.ranked, rel, c.k);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0 + 1e-12);
    }
}

TEST(Metrics, RankTopKMatchesArgsort) {
    Rng rng(4);
    for (int n = 0; n < 500; ++n) {
        const std::size_t count = 1 + rng() % 50;
        std::vector<ItemId> items(count);
        std::iota(items.begin(), items.end(), 0);
        std::vector<double> scores(count);
        for (auto& s : scores) s = static_cast<double>(rng() % 7);
        const std::size_t k = rng() % 60;
        auto expected = test::ref_topk(scores, k);
        EXPECT_EQ(rank_top_k(items, scores, k), std::vector<ItemId>(expected.begin(), expected.end()));
    }
}

TEST(Evaluate, AdjacencyOracleScoresOne) {
    auto split = toy_split();
    std::set<Interaction> positives;
    for (auto task : {EvalTask::overall, EvalTask::warm, EvalTask::cold}) {
        for (const auto& p : task_positives(split, task)) positives.insert(p);
    }
    ItemScorer oracle = [&](UserId u, std::span<const ItemId> items, std::span<double> scores) {
        for (std::size_t n = 0; n < items.size(); ++n) scores[n] = positives.count({u, items[n]}) ? 1.0 : 0.0;
    };
    const std::vector<EvalTask> tasks{EvalTask::overall, EvalTask::warm, EvalTask::cold};
    EvalConfig config;
    config.k = 60;
    auto report = evaluate(oracle, split, tasks, config);
    for (const auto& t : report.tasks) {
        EXPECT_NEAR(t.recall, 1.0, 1e-12) << to_string(t.task);
        EXPECT_NEAR(t.ndcg, 1.0, 1e-12) << to_string(t.task);
        EXPECT_GT(t.users, 0u);
    }
    EXPECT_EQ(report.at(EvalTask::cold).candidates, task_candidates(split, EvalTask::cold).size());
}

TEST(Evaluate, FixedSeedIsReproducible) {
    auto split = toy_split();
    const std::vector<EvalTask> tasks{EvalTask::overall, EvalTask::cold};
    EvalConfig config;
    config.users = 50;
    config.seed = 3;
    auto a = evaluate(hashed_scorer(1), split, tasks, config, "fp");
    auto b = evaluate(hashed_scorer(1), split, tasks, config, "fp");
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_EQ(a.to_json()["config_fingerprint"], "fp");
    EXPECT_EQ(a.at(EvalTask::overall).users, 50u);
    EXPECT_EQ(evaluate_task(hashed_scorer(1), split, EvalTask::cold, config).ndcg, a.at(EvalTask::cold).ndcg);
}

TEST(Evaluate, RandomRankingMatchesAnalyticExpectation) {
    auto split = toy_split();
    const InteractionLog cold(split.num_users, split.num_items, split.cold_test);
    const std::size_t n = task_candidates(split, EvalTask::cold).size();
    EvalConfig config;
    config.k = 5;
    std::vector<UserId> users;
    for (UserId u = 0; u < split.num_users; ++u) {
        if (!cold.user_items(u).empty()) users.push_back(u);
    }
    double expected_recall = 0.0, expected_ndcg = 0.0;
    for (auto u : users) {
        const std::size_t r = cold.user_items(u).size();
        expected_recall += static_cast<double>(std::min(config.k, n)) / static_cast<double>(n);
        expected_ndcg += static_cast<double>(r) / static_cast<double>(n) * discount_sum(std::min(config.k, n)) /
                         discount_sum(std::min(r, config.k));
    }
    expected_recall /= static_cast<double>(users.size());
    expected_ndcg /= static_cast<double>(users.size());

    const int trials = 300;
    std::vector<double> recalls, ndcgs;
    for (int t = 0; t < trials; ++t) {
        auto m = evaluate_task(hashed_scorer(100 + t), split, EvalTask::cold, config);
        EXPECT_EQ(m.users, users.size());
        recalls.push_back(m.recall);
        ndcgs.push_back(m.ndcg);
    }
    auto check = [&](const std::vector<double>& xs, double expected) {
        double mean = 0.0, var = 0.0;
        for (double x : xs) mean += x;
        mean /= trials;
        for (double x : xs) var += (x - mean) * (x - mean);
        const double se = std::sqrt(var / (trials - 1) / trials);
        EXPECT_LT(std::abs(mean - expected), 3.0 * se) << mean << " vs " << expected;
    };
    check(recalls, expected_recall);
    check(ndcgs, expected_ndcg);
}

TEST(Evaluate, RejectsZeroK) {
    auto split = toy_split();
    EvalConfig config;
    config.k = 0;
    EXPECT_THROW(evaluate_task(hashed_scorer(0), split, EvalTask::cold, config), ValidationError);
    EXPECT_THROW(parse_eval_task("cool"), ValidationError);
}

TEST(Evaluate, TableHasHeaderAndRows) {
    auto split = toy_split();
    const std::vector<EvalTask> tasks{EvalTask::warm, EvalTask::cold};
    auto table = evaluate(hashed_scorer(0), split, tasks, {}).to_table();
    EXPECT_NE(table.find("Recall@20"), std::string::npos);
    EXPECT_NE(table.find("NDCG@20"), std::string::npos);
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 3);
}

TEST(Adoption, AcceptedOverFiltered) {
    std::vector<DecisionRecord> decisions;
    for (UserId u = 0; u < 20; ++u) decisions.push_back({u, 0, u < 7, false});
    auto stats = adoption_rate(decisions);
    EXPECT_EQ(stats.accepted, 7u);
    EXPECT_EQ(stats.filtered, 20u);
    EXPECT_DOUBLE_EQ(stats.rate, 0.35);
}

TEST(Adoption, AlwaysYesIsOneAndFailuresAreSkipped) {
    std::vector<DecisionRecord> decisions{{0, 0, true, false}, {1, 0, true, false}, {2, 0, false, true}};
    EXPECT_DOUBLE_EQ(adoption_rate(decisions).rate, 1.0);
    EXPECT_EQ(adoption_rate(decisions).filtered, 2u);
    EXPECT_THROW(adoption_rate(std::span<const DecisionRecord>{}), ValidationError);
    std::vector<DecisionRecord> failed{{0, 0, false, true}};
    EXPECT_THROW(adoption_rate(failed), ValidationError);
}

TEST(Adoption, PoolsAcrossSimulations) {
    std::vector<SimulationResult> sims(2);
    sims[0].decisions = {{0, 0, true, false}, {1, 0, false, false}};
    sims[1].decisions = {{0, 1, true, false}, {2, 1, true, false}};
    EXPECT_DOUBLE_EQ(adoption_rate(sims).rate, 0.75);
}

TEST(RandomCandidates, DistinctSortedAndSeeded) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto c = random_candidates(3, 100, 20, seed);
        ASSERT_EQ(c.users.size(), 20u);
        EXPECT_EQ(c.item, 3u);
        for (std::size_t r = 1; r < 20; ++r) EXPECT_LT(c.users[r - 1].user, c.users[r].user);
        EXPECT_EQ(c.ids(), random_candidates(3, 100, 20, seed).ids());
    }
    EXPECT_EQ(random_candidates(0, 5, 20, 1).users.size(), 5u);
}
