#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "coldllm/backbone.hpp"
#include "coldllm/content.hpp"
#include "coldllm/filter.hpp"
#include "coldllm/refiner.hpp"
#include "coldllm/synthetic.hpp"
#include "coldllm/tower.hpp"
#include "filter_support.hpp"
#include "support.hpp"

using namespace coldllm;
using coldllm::test::TempDir;
using coldllm::test::flatten;
using coldllm::test::kink_distance;
using coldllm::test::parameters;
using coldllm::test::random_inputs;
using coldllm::test::tower_gradient_error;

namespace {

// Independent dense forward pass: y = W x + b, rectifier on all but the last layer.
std::vector<double> reference_forward(const TowerMlp& tower, const std::vector<double>& x) {
    std::vector<double> h = x;
    const auto& layers = tower.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        std::vector<double> y(layers[l].out, 0.0);
        for (std::size_t o = 0; o < layers[l].out; ++o) {
            long double acc = layers[l].bias[o];
            for (std::size_t k = 0; k < layers[l].in; ++k) acc += static_cast<long double>(layers[l].weight[o * layers[l].in + k]) * h[k];
            y[o] = static_cast<double>(acc);
            if (l + 1 < layers.size()) y[o] = std::max(0.0, y[o]);
        }
        h = y;
    }
    return h;
}


}  // namespace

TEST(Tower, ZeroWeightsGiveZeroVector) {
    std::vector<std::size_t> widths{4, 6, 3};
    TwoTowerFilter f;
    f.item_tower = TowerMlp::zeros(widths);
    std::vector<double> raw{1, -2, 3, 4};
    EXPECT_EQ(map_item(f, std::span<const double>(raw)), (std::vector<double>{0, 0, 0}));
}

TEST(Tower, IdentityLayerPassesInputThrough) {
    DenseLayer layer{3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {0, 0, 0}};
    TwoTowerFilter f;
    f.item_tower = TowerMlp({layer});
    std::vector<double> raw{0.5, -1.25, 3};
    EXPECT_EQ(map_item(f, std::span<const double>(raw)), raw);
}

TEST(Tower, MapItemMatchesRecomputation) {
    Rng rng(1);
    std::normal_distribution<double> normal;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto f = make_filter(FilterVariant::behavior, 8, 12, 20, 8, seed);
        std::vector<double> raw(12);
        for (auto& v : raw) v = normal(rng);
        auto got = map_item(f, std::span<const double>(raw));
        auto expected = reference_forward(f.item_tower, raw);
        for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], expected[k], 1e-10);
    }
}

TEST(Tower, MapUserMatchesRecomputation) {
    Rng rng(2);
    std::normal_distribution<double> normal;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto f = make_filter(FilterVariant::coupled, 8, 12, 20, 8, seed);
        std::vector<double> eu(8), hist(12);
        for (auto& v : eu) v = normal(rng);
        for (auto& v : hist) v = normal(rng);
        auto got = map_user(f, eu, hist);
        std::vector<double> x = eu;
        x.insert(x.end(), hist.begin(), hist.end());
        auto expected = reference_forward(f.user_tower, x);
        for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], expected[k], 1e-10);
    }
}

TEST(Tower, EmptyHistoryUsesZeroBlock) {
    auto f = make_filter(FilterVariant::behavior, 4, 6, 10, 4, 3);
    std::vector<double> eu{0.1, 0.2, -0.3, 0.4};
    std::vector<double> x = eu;
    x.resize(10, 0.0);
    auto got = map_user(f, eu, {});
    auto expected = reference_forward(f.user_tower, x);
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], expected[k], 1e-12);
}

TEST(Tower, ZeroUserTowerGivesZeroOutput) {
    auto f = zeros_like(make_filter(FilterVariant::behavior, 4, 6, 10, 4, 3));
    std::vector<double> eu{1, 2, 3, 4};
    EXPECT_EQ(map_user(f, eu, {}), (std::vector<double>(4, 0.0)));
}

TEST(Tower, DimensionMismatchThrows) {
    auto f = make_filter(FilterVariant::behavior, 4, 6, 10, 4, 3);
    std::vector<double> wrong(5, 0.0);
    EXPECT_THROW(map_item(f, std::span<const double>(wrong)), ValidationError);
    std::vector<double> eu(4, 0.0);
    EXPECT_THROW(map_user(f, eu, wrong), ValidationError);
}

TEST(Tower, OutputsShareWidth) {
    auto f = make_filter(FilterVariant::behavior, 200, 256, 200, 200, 0);
    EXPECT_EQ(f.user_tower.output_width(), 200u);
    EXPECT_EQ(f.item_tower.output_width(), 200u);
    EXPECT_EQ(f.user_tower.widths(), (std::vector<std::size_t>{456, 200, 200}));
}

TEST(FilterInputs, UserRowIsBehaviorThenHistoryMean) {
    BackboneModel bb{EmbeddingTable(2, 2, {1, 2, 3, 4}), EmbeddingTable(3, 2), 0};
    ContentCache content(3, 2, {{"kind", "mock"}});
    std::vector<float> a{1, 0}, b{0, 1}, c{1, 1};
    content.put(0, a);
    content.put(1, b);
    content.put(2, c);
    InteractionLog history(2, 3, {{0, 0}, {0, 1}});
    auto inputs = build_filter_inputs(bb, content, history);
    auto r0 = inputs.user_inputs.row(0);
    EXPECT_EQ(std::vector<double>(r0.begin(), r0.end()), (std::vector<double>{1, 2, 0.5, 0.5}));
    auto r1 = inputs.user_inputs.row(1);
    EXPECT_EQ(std::vector<double>(r1.begin(), r1.end()), (std::vector<double>{3, 4, 0, 0}));
}

TEST(TopK, DefaultIsTwenty) {
    EXPECT_EQ(kDefaultTopK, 20u);
    EXPECT_EQ(FilterTrainConfig{}.lr, 1e-5);
    EXPECT_EQ(FilterTrainConfig{}.batch_size, 128u);
}

TEST(TopK, IndexMatchesFullArgsort) {
    Rng rng(7);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 200; ++trial) {
        EmbeddingTable users(100, 16);
        for (auto& v : users.values()) v = normal(rng);
        if (trial % 4 == 0) {
            for (std::size_t u = 50; u < 100; ++u) {
                auto src = users.row(u - 50);
                std::copy(src.begin(), src.end(), users.row(u).begin());
            }
        }
        std::vector<double> q(16);
        for (auto& v : q) v = normal(rng);
        InnerProductIndex index(users);
        std::vector<double> scores(100);
        for (std::size_t u = 0; u < 100; ++u) scores[u] = test::ref_dot(users.row(u), q);
        const std::size_t k = 1 + rng() % 30;
        auto got = topk_candidates(0, q, index, k);
        auto expected = test::ref_topk(scores, k);
        ASSERT_EQ(got.users.size(), expected.size());
        for (std::size_t r = 0; r < expected.size(); ++r) EXPECT_EQ(got.users[r].user, expected[r]);
    }
}

TEST(TopK, KLargerThanUsersRanksEveryone) {
    EmbeddingTable users(3, 1, {1, 3, 2});
    InnerProductIndex index(users);
    std::vector<double> q{1};
    EXPECT_EQ(topk_candidates(0, q, index, 10).ids(), (std::vector<UserId>{1, 2, 0}));
}

TEST(TopK, TiesBreakByAscendingId) {
    EmbeddingTable users(4, 1, {1, 1, 1, 1});
    InnerProductIndex index(users);
    std::vector<double> q{2};
    EXPECT_EQ(topk_candidates(0, q, index, 3).ids(), (std::vector<UserId>{0, 1, 2}));
}

TEST(TopK, PositiveScalingKeepsOrdering) {
    Rng rng(9);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 100; ++trial) {
        EmbeddingTable users(50, 8);
        for (auto& v : users.values()) v = normal(rng);
        std::vector<double> q(8);
        for (auto& v : q) v = normal(rng);
        std::vector<double> scaled = q;
        for (auto& v : scaled) v *= 4.0;
        InnerProductIndex index(users);
        EXPECT_EQ(topk_candidates(0, q, index, 20).ids(), topk_candidates(0, scaled, index, 20).ids());
    }
}

TEST(TopK, KZeroIsRejected) {
    InnerProductIndex index(EmbeddingTable(2, 1, {1, 2}));
    std::vector<double> q{1};
    EXPECT_THROW(topk_candidates(0, q, index, 0), ValidationError);
}

namespace {

CandidateSet ranked(std::vector<UserId> ids) {
    CandidateSet c{0, {}};
    for (std::size_t r = 0; r < ids.size(); ++r) c.users.push_back({ids[r], 100.0 - static_cast<double>(r)});
    return c;
}

}  // namespace

TEST(Funnel, IdenticalRankingsGiveThatTopK) {
    auto a = ranked({5, 3, 9, 1, 7});
    EXPECT_EQ(funnel_merge(0, &a, &a, 3).ids(), (std::vector<UserId>{5, 3, 9}));
}

TEST(Funnel, DisjointListsAlternateCoupledFirst) {
    std::vector<UserId> l, b;
    for (UserId u = 0; u < 10; ++u) {
        l.push_back(u);
        b.push_back(100 + u);
    }
    auto cl = ranked(l), cb = ranked(b);
    auto merged = funnel_merge(0, &cl, &cb, 20).ids();
    ASSERT_EQ(merged.size(), 20u);
    for (std::size_t r = 0; r < 20; ++r) EXPECT_EQ(merged[r], r % 2 == 0 ? l[r / 2] : b[r / 2]);
}

TEST(Funnel, SingleFilterGetsAllSlots) {
    auto cb = ranked({4, 2, 8, 6});
    EXPECT_EQ(funnel_merge(0, nullptr, &cb, 3).ids(), (std::vector<UserId>{4, 2, 8}));
    EXPECT_EQ(funnel_merge(0, &cb, nullptr, 4).ids(), (std::vector<UserId>{4, 2, 8, 6}));
}

TEST(Funnel, SizeIsMinOfKAndDistinctCandidates) {
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<UserId> l, b;
        std::set<UserId> distinct;
        const std::size_t nl = rng() % 15, nb = rng() % 15;
        std::set<UserId> used_l, used_b;
        while (l.size() < nl) {
            UserId u = static_cast<UserId>(rng() % 25);
            if (used_l.insert(u).second) l.push_back(u);
        }
        while (b.size() < nb) {
            UserId u = static_cast<UserId>(rng() % 25);
            if (used_b.insert(u).second) b.push_back(u);
        }
        distinct.insert(l.begin(), l.end());
        distinct.insert(b.begin(), b.end());
        const std::size_t k = 1 + rng() % 25;
        auto cl = ranked(l), cb = ranked(b);
        auto merged = funnel_merge(0, &cl, &cb, k);
        EXPECT_EQ(merged.users.size(), std::min(k, distinct.size()));
        auto ids = merged.ids();
        EXPECT_EQ(std::set<UserId>(ids.begin(), ids.end()).size(), ids.size());
        for (std::size_t r = 1; r < merged.users.size(); ++r)
            EXPECT_LE(merged.users[r].score, merged.users[r - 1].score);
    }
}

TEST(Funnel, BehaviorOnlyMatchesBehaviorTopK) {
    Rng rng(12);
    auto inputs = random_inputs(60, 10, 4, 6, rng);
    auto fb = make_filter(FilterVariant::behavior, 4, 6, 8, 4, 1);
    FilterRetriever retriever(fb, inputs);
    std::vector<float> raw(6);
    for (std::size_t k = 0; k < 6; ++k) raw[k] = static_cast<float>(inputs.item_content.row(3)[k]);
    EXPECT_EQ(funnel_filter(nullptr, &retriever, 3, raw, 20).ids(), retriever.retrieve(3, raw, 20).ids());
}

TEST(Loss, OneTripleBprMatchesHandComputation) {
    Rng rng(3);
    auto inputs = random_inputs(2, 3, 3, 4, rng);
    auto f = make_filter(FilterVariant::behavior, 3, 4, 5, 3, 8);
    std::vector<BprTriple> batch{{1, 0, 2}};
    const auto yu = reference_forward(f.user_tower, {inputs.user_inputs.row(1).begin(), inputs.user_inputs.row(1).end()});
    const auto fi = reference_forward(f.item_tower, {inputs.item_content.row(0).begin(), inputs.item_content.row(0).end()});
    const auto fj = reference_forward(f.item_tower, {inputs.item_content.row(2).begin(), inputs.item_content.row(2).end()});
    const double x = test::ref_dot(yu, fi) - test::ref_dot(yu, fj);
    const double expected = -std::log(1.0 / (1.0 + std::exp(-x)));
    EXPECT_NEAR(filter_bpr_loss(f, inputs, batch), expected, 1e-8);
}

TEST(Loss, CrossEntropyAtHalfIsLn2) {
    FilterInputs inputs;
    inputs.behavior_dim = 1;
    inputs.content_dim = 1;
    inputs.user_inputs = EmbeddingTable(1, 2, {1, 1});
    inputs.item_content = EmbeddingTable(1, 1, {1});
    auto f = zeros_like(make_filter(FilterVariant::coupled, 1, 1, 2, 2, 0));
    std::vector<LabeledPair> batch{{0, 0, true}};
    EXPECT_NEAR(coupled_ce_loss(f, inputs, batch), 0.693147, 1e-6);
}

TEST(Loss, CrossEntropyVanishesAsProbabilityApproachesOne) {
    FilterInputs inputs;
    inputs.behavior_dim = 1;
    inputs.content_dim = 1;
    inputs.user_inputs = EmbeddingTable(1, 2, {1, 0});
    inputs.item_content = EmbeddingTable(1, 1, {1});
    TwoTowerFilter f;
    f.variant = FilterVariant::coupled;
    f.user_tower = TowerMlp({DenseLayer{2, 1, {0, 0}, {0}}});
    f.item_tower = TowerMlp({DenseLayer{1, 1, {1}, {0}}});
    std::vector<LabeledPair> batch{{0, 0, true}};
    double previous = std::numeric_limits<double>::infinity();
    for (double s : {0.0, 2.0, 5.0, 10.0, 15.0}) {
        f.user_tower.layers()[0].weight[0] = s;
        const double ce = coupled_ce_loss(f, inputs, batch);
        EXPECT_NEAR(ce, std::log1p(std::exp(-s)), 1e-12);
        EXPECT_LT(ce, previous);
        previous = ce;
    }
    EXPECT_LT(previous, 1e-6);
    f.user_tower.layers()[0].weight[0] = 100;
    EXPECT_NEAR(coupled_ce_loss(f, inputs, batch), -std::log(1.0 - kProbabilityClip), 1e-15);
}

TEST(Gradient, TowerBprMatchesFiniteDifferences) {
    std::size_t checked = 0;
    for (std::uint64_t point = 0; checked < 100; ++point) {
        Rng rng(1000 + point);
        auto inputs = random_inputs(4, 5, 3, 4, rng);
        auto f = make_filter(FilterVariant::behavior, 3, 4, 6, 3, point);
        std::vector<BprTriple> batch{{0, 1, 2}, {3, 4, 0}, {1, 2, 3}};
        if (kink_distance(f, inputs, {0, 1, 3}, {0, 1, 2, 3, 4}) < 1e-3) continue;
        const double err = tower_gradient_error(f, [&](TwoTowerFilter* g) { return filter_bpr_loss(f, inputs, batch, g); });
        EXPECT_LT(err, 1e-4) << "point " << point;
        ++checked;
    }
}

TEST(Gradient, CoupledCrossEntropyMatchesFiniteDifferences) {
    std::size_t checked = 0;
    for (std::uint64_t point = 0; checked < 100; ++point) {
        Rng rng(2000 + point);
        auto inputs = random_inputs(4, 5, 3, 4, rng);
        auto f = make_filter(FilterVariant::coupled, 3, 4, 6, 3, point);
        std::vector<LabeledPair> batch{{0, 1, true}, {3, 4, false}, {2, 2, true}, {1, 0, false}};
        if (kink_distance(f, inputs, {0, 1, 2, 3}, {0, 1, 2, 4}) < 1e-3) continue;
        const double err = tower_gradient_error(f, [&](TwoTowerFilter* g) { return coupled_ce_loss(f, inputs, batch, g); });
        EXPECT_LT(err, 1e-4) << "point " << point;
        ++checked;
    }
}

namespace {

struct PlantedFilterWorld {
    PlantedDataset data;
    ColdWarmSplit split;
    FilterInputs inputs;
};

PlantedFilterWorld planted_world(std::size_t users, std::size_t items, std::uint64_t seed) {
    PlantedConfig pc;
    pc.users = users;
    pc.warm_items = items;
    pc.cold_items = 0;
    pc.groups_per_cluster = 1;
    pc.seed = seed;
    PlantedFilterWorld w{make_planted(pc), {}, {}};
    w.split = planted_split(w.data, seed);
    auto backbone = init_backbone(users, items, 8, seed);
    ContentCache content(items, 32, {{"kind", "mock"}});
    for (ItemId i = 0; i < items; ++i) content.put(i, mock_embed(w.data.corpus.catalog.text(i), 32));
    w.inputs = build_filter_inputs(backbone, content,
                                   InteractionLog(users, items, w.split.warm_train));
    return w;
}

}  // namespace

TEST(TrainFilter, ZeroLearningRateLeavesParametersUnchanged) {
    auto w = planted_world(30, 20, 1);
    auto f = make_filter(FilterVariant::behavior, 8, 32, 16, 8, 2);
    FilterTrainConfig config;
    config.lr = 0.0;
    config.max_epochs = 3;
    EXPECT_EQ(train_behavior_filter(f, w.inputs, w.split, config), f);
    std::vector<LabeledPair> labels{{0, 0, true}, {1, 1, false}};
    auto fl = make_filter(FilterVariant::coupled, 8, 32, 16, 8, 2);
    EXPECT_EQ(train_coupled_filter(fl, w.inputs, w.split, labels, config), fl);
}

TEST(TrainFilter, AdamWithZeroRateIsNoOp) {
    auto f = make_filter(FilterVariant::behavior, 3, 4, 5, 3, 1);
    auto copy = f;
    AdamW opt(f);
    auto grad = make_filter(FilterVariant::behavior, 3, 4, 5, 3, 9);
    opt.step(f, grad, 0.0);
    EXPECT_EQ(f, copy);
}

TEST(TrainFilter, BehaviorFilterImprovesValidation) {
    auto w = planted_world(60, 40, 3);
    auto f = make_filter(FilterVariant::behavior, 8, 32, 32, 16, 4);
    FilterTrainConfig config;
    config.lr = 1e-3;
    config.batch_size = 32;
    config.max_epochs = 30;
    config.patience = 30;
    FilterHistory history;
    train_behavior_filter(f, w.inputs, w.split, config, &history);
    ASSERT_FALSE(history.validation.empty());
    EXPECT_LT(history.epoch_loss.back(), history.epoch_loss.front());
}

TEST(TrainFilter, CoupledFilterFitsSeparableLabels) {
    auto w = planted_world(50, 50, 5);
    PlantedOracle oracle(w.data.truth);
    std::vector<LabeledPair> labels;
    for (UserId u = 0; u < 50; ++u) {
        for (ItemId i = 0; i < 50; ++i) labels.push_back({u, i, oracle.contains(u, i)});
    }
    auto f = make_filter(FilterVariant::coupled, 8, 32, 32, 16, 6);
    FilterTrainConfig config;
    config.lr = 1e-2;
    config.batch_size = 128;
    config.max_epochs = 200;
    config.patience = 200;
    FilterHistory history;
    train_coupled_filter(f, w.inputs, w.split, labels, config, &history);
    ASSERT_FALSE(history.epoch_ce.empty());
    EXPECT_LE(history.epoch_ce.size(), 200u);
    EXPECT_LT(*std::min_element(history.epoch_ce.begin(), history.epoch_ce.end()), 0.1);
}

TEST(LabelPairs, HalfObservedHalfUnobserved) {
    auto w = planted_world(40, 30, 7);
    auto pairs = sample_label_pairs(w.split, 50, 1);
    ASSERT_EQ(pairs.size(), 100u);
    InteractionLog train(40, 30, w.split.warm_train);
    InteractionLog all(40, 30, w.data.corpus.log.interactions());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (k % 2 == 0) EXPECT_TRUE(train.contains(pairs[k].user, pairs[k].item));
        else EXPECT_FALSE(all.contains(pairs[k].user, pairs[k].item));
    }
}

TEST(FilterIo, SaveLoadRoundTrip) {
    TempDir dir;
    auto f = make_filter(FilterVariant::coupled, 3, 4, 5, 3, 1);
    for (auto* p : parameters(f)) *p = static_cast<double>(static_cast<float>(*p));
    save_filter(f, dir.path(), "filter_L", {{"lr", 1e-5}});
    EXPECT_EQ(load_filter(dir.path(), "filter_L"), f);
    auto manifest = nlohmann::json::parse(test::read_file(dir / "filter_L.json"));
    EXPECT_EQ(manifest["variant"], "L");
    EXPECT_EQ(manifest["training"]["lr"], 1e-5);
}
