#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "coldllm/backbone.hpp"
#include "coldllm/config.hpp"
#include "coldllm/corpus.hpp"
#include "coldllm/evaluation.hpp"
#include "coldllm/filter.hpp"
#include "coldllm/pipeline.hpp"
#include "coldllm/refiner.hpp"
#include "coldllm/synthetic.hpp"
#include "coldllm/warmup.hpp"
#include "filter_support.hpp"
#include "support.hpp"

using namespace coldllm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(const char* pattern, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, pattern, args...);
    return buf;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
    std::string command = std::string(COLDLLM_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(command.c_str(), "r");
    if (!pipe) return -1;
    std::string text;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) text.append(buf, n);
    const int status = pclose(pipe);
    if (output) *output = text;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t field(const std::string& text, const std::string& key) {
    const auto at = text.find(key + "=");
    if (at == std::string::npos) return 0;
    return std::stoull(text.substr(at + key.size() + 1));
}

Outcome metric_equivalence() {
    const auto start = Clock::now();
    Rng rng(101);
    std::size_t mismatches = 0;
    for (int n = 0; n < 1000; ++n) {
        const std::size_t items = 1 + rng() % 50;
        std::vector<ItemId> ranked(items);
        std::iota(ranked.begin(), ranked.end(), 0);
        std::shuffle(ranked.begin(), ranked.end(), rng);
        std::set<ItemId> relevant;
        const std::size_t r = rng() % 11;
        while (relevant.size() < std::min<std::size_t>(r, items)) relevant.insert(static_cast<ItemId>(rng() % (items + 5)));
        const std::size_t k = 1 + rng() % 55;
        std::vector<ItemId> rel(relevant.begin(), relevant.end());
        if (std::abs(recall_at_k(ranked, rel, k) - test::ref_recall(ranked, relevant, k)) > 1e-12) ++mismatches;
        if (std::abs(ndcg_at_k(ranked, rel, k) - test::ref_ndcg(ranked, relevant, k)) > 1e-12) ++mismatches;
    }
    const std::vector<ItemId> ranked{5, 6, 7, 8};
    const std::vector<ItemId> single{7};
    const double closed = ndcg_at_k(ranked, single, 4);
    const double secs = seconds_since(start);
    return {mismatches == 0 && closed == 0.5 && secs < 10.0,
            fmt("1000 instances, %zu mismatches; rank-3 NDCG = %.17g; %.2fs", mismatches, closed, secs)};
}

Outcome topk_equivalence() {
    const auto start = Clock::now();
    Rng rng(202);
    std::normal_distribution<double> normal;
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        FilterInputs inputs;
        inputs.behavior_dim = 8;
        inputs.content_dim = 16;
        inputs.user_inputs = EmbeddingTable(100, 24);
        inputs.item_content = EmbeddingTable(1, 16);
        for (auto& v : inputs.user_inputs.values()) v = normal(rng);
        if (trial % 5 == 0) {
            for (std::size_t u = 50; u < 100; ++u) {
                auto src = inputs.user_inputs.row(u - 50);
                std::copy(src.begin(), src.end(), inputs.user_inputs.row(u).begin());
            }
        }
        auto filter = make_filter(FilterVariant::behavior, 8, 16, 32, 64, trial);
        FilterRetriever retriever(filter, inputs);
        std::vector<float> raw(16);
        for (auto& v : raw) v = static_cast<float>(normal(rng));
        const auto item_vec = map_item(filter, raw);
        std::vector<double> scores(100);
        for (UserId u = 0; u < 100; ++u) {
            auto row = inputs.user_inputs.row(u);
            scores[u] = test::ref_dot(map_user(filter, row.first(8), row.subspan(8)), item_vec);
        }
        const std::size_t k = 1 + rng() % 100;
        const auto expected = test::ref_topk(scores, k);
        const auto got = funnel_filter(nullptr, &retriever, 0, raw, k).ids();
        if (got != std::vector<UserId>(expected.begin(), expected.end())) ++mismatches;
    }
    const double secs = seconds_since(start);
    return {mismatches == 0 && secs < 10.0, fmt("1000 instances of 100 users x 64 dims, %zu mismatches; %.2fs", mismatches, secs)};
}

double backbone_gradient_error(std::uint64_t point) {
    auto model = init_backbone(3, 3, 6, 100 + point, 0.5);
    Rng rng(point);
    const double l2 = point % 2 ? 0.0 : 0.1;
    std::vector<BprTriple> batch{{static_cast<UserId>(rng() % 3), 0, 1}, {static_cast<UserId>(rng() % 3), 2, 1}};
    const auto grads = bpr_gradients(model, batch, l2);
    double worst = 0.0;
    std::set<UserId> users;
    for (const auto& t : batch) users.insert(t.user);
    auto check = [&](std::span<double> row, const std::vector<double>& analytic) {
        std::vector<double> x(row.begin(), row.end());
        auto numeric = test::numeric_gradient(x, [&] {
            std::copy(x.begin(), x.end(), row.begin());
            return bpr_loss(model, batch, l2);
        });
        std::copy(x.begin(), x.end(), row.begin());
        worst = std::max(worst, test::relative_error(analytic, numeric));
    };
    for (auto u : users) check(model.users.row(u), grads.users.at(u));
    for (ItemId i = 0; i < 3; ++i) check(model.items.row(i), grads.items.at(i));
    return worst;
}

template <class Loss>
double filter_gradient_error(FilterVariant variant, std::uint64_t base, const std::set<UserId>& users,
                             const std::set<ItemId>& items, Loss&& loss, std::size_t& skipped) {
    for (std::uint64_t point = base;; ++point) {
        Rng rng(point);
        auto inputs = test::random_inputs(4, 5, 3, 4, rng);
        auto f = make_filter(variant, 3, 4, 6, 3, point);
        if (test::kink_distance(f, inputs, users, items) < 1e-3) {
            ++skipped;
            continue;
        }
        return test::tower_gradient_error(f, [&](TwoTowerFilter* g) { return loss(f, inputs, g); });
    }
}

Outcome gradient_checks() {
    const auto start = Clock::now();
    double worst_bpr = 0, worst_tower = 0, worst_ce = 0, worst_warm = 0;
    std::size_t skipped = 0;
    for (std::uint64_t point = 0; point < 100; ++point) {
        worst_bpr = std::max(worst_bpr, backbone_gradient_error(point));

        std::vector<BprTriple> triples{{0, 1, 2}, {3, 4, 0}, {1, 2, 3}};
        worst_tower = std::max(worst_tower, filter_gradient_error(
            FilterVariant::behavior, 10000 + point * 1000, {0, 1, 3}, {0, 1, 2, 3, 4},
            [&](TwoTowerFilter& f, const FilterInputs& in, TwoTowerFilter* g) { return filter_bpr_loss(f, in, triples, g); },
            skipped));

        std::vector<LabeledPair> labels{{0, 1, true}, {3, 4, false}, {2, 2, true}, {1, 0, false}};
        worst_ce = std::max(worst_ce, filter_gradient_error(
            FilterVariant::coupled, 500000 + point * 1000, {0, 1, 2, 3}, {0, 1, 2, 4},
            [&](TwoTowerFilter& f, const FilterInputs& in, TwoTowerFilter* g) { return coupled_ce_loss(f, in, labels, g); },
            skipped));

        auto model = init_backbone(8, 1, 6, point, 1.0);
        Rng rng(point);
        std::normal_distribution<double> normal;
        std::vector<double> e(6);
        for (auto& v : e) v = normal(rng);
        std::vector<UserPair> pairs;
        for (int n = 0; n < 4; ++n) pairs.push_back({static_cast<UserId>(rng() % 4), static_cast<UserId>(4 + rng() % 4)});
        std::vector<double> grad;
        cold_bpr_loss(model, e, pairs, &grad);
        auto numeric = test::numeric_gradient(e, [&] { return cold_bpr_loss(model, e, pairs); });
        worst_warm = std::max(worst_warm, test::relative_error(grad, numeric));
    }
    const double secs = seconds_since(start);
    const bool ok = worst_bpr < 1e-4 && worst_tower < 1e-4 && worst_ce < 1e-4 && worst_warm < 1e-4 && secs < 60.0;
    return {ok, fmt("max relative error: backbone BPR %.2e, tower BPR %.2e, coupled CE %.2e, warmup %.2e "
                    "(100 points each, %zu near-kink draws resampled); %.2fs",
                    worst_bpr, worst_tower, worst_ce, worst_warm, skipped, secs)};
}

class RandomOracle : public OracleClient {
public:
    explicit RandomOracle(std::uint64_t seed) : seed_(seed) {}
    std::string kind() const override { return "random"; }
    OracleDecision decide(const OracleRequest& r) override {
        const bool z = derive_seed(seed_, "z", (std::uint64_t{r.user} << 32) | r.item) % 3 == 0;
        return {z, z ? "Yes" : "No", 0.0, false};
    }

private:
    std::uint64_t seed_;
};

Outcome funnel_invariants() {
    Rng rng(404);
    std::normal_distribution<double> normal;
    std::size_t subset = 0, size = 0, frozen = 0, saturated = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t users = 5 + rng() % 40, items = 4 + rng() % 12, cold_count = 1 + rng() % 3;
        auto log = test::random_log(users, items, 0.2, trial);
        auto catalog = test::numbered_catalog(items);
        FilterInputs inputs;
        inputs.behavior_dim = 4;
        inputs.content_dim = 6;
        inputs.user_inputs = EmbeddingTable(users, 10);
        inputs.item_content = EmbeddingTable(items, 6);
        for (auto& v : inputs.user_inputs.values()) v = normal(rng);
        for (auto& v : inputs.item_content.values()) v = normal(rng);
        auto fb = make_filter(FilterVariant::behavior, 4, 6, 8, 4, trial);
        auto fl = make_filter(FilterVariant::coupled, 4, 6, 8, 4, trial + 7);
        FilterRetriever behavior(fb, inputs), coupled(fl, inputs);
        const RefineEnvironment env{&log, &catalog, &inputs.item_content};
        RandomOracle oracle(trial);
        const std::size_t k = 1 + rng() % 60;
        const bool use_l = trial % 3 != 1, use_b = trial % 3 != 2;

        ColdWarmSplit split;
        split.num_users = users;
        split.num_items = items;
        std::vector<SimulationResult> sims;
        for (ItemId i = 0; i < items; ++i) {
            if (i < cold_count) {
                split.cold_items.push_back(i);
            } else {
                split.warm_items.push_back(i);
                continue;
            }
            auto row = inputs.item_content.row(i);
            std::vector<float> raw(row.begin(), row.end());
            auto sim = simulate_for_item(i, raw, use_l ? &coupled : nullptr, use_b ? &behavior : nullptr,
                                         trial % 4 == 0 ? nullptr : &oracle, env, k);
            std::set<UserId> filtered(sim.filtered.begin(), sim.filtered.end());
            for (auto u : sim.users) subset += filtered.count(u) == 0;
            size += sim.filtered.size() != std::min(k, users) || filtered.size() != sim.filtered.size();
            if (sim.users.size() == users) {
                ++saturated;
                continue;
            }
            sims.push_back(std::move(sim));
        }
        auto backbone = init_backbone(users, items, 4, trial, 1.0);
        WarmupConfig wc;
        wc.lr = 1e-2;
        wc.steps = 5;
        auto warmed = warm_all_cold(split, sims, backbone, nullptr, nullptr, wc);
        bool same = warmed.users == backbone.users;
        for (auto i : split.warm_items) {
            auto a = warmed.items.row(i), b = backbone.items.row(i);
            same = same && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
        }
        frozen += !same;
    }
    return {subset + size + frozen == 0,
            fmt("1000 randomized pipelines; violations: refined-not-filtered %zu, filtered size %zu, frozen rows %zu "
                "(%zu items whose simulated users covered every user left out of warmup)",
                subset, size, frozen, saturated)};
}

struct PlantedSeed {
    double full = 0, no_r = 0, baseline = 0, adoption = 0, random_adoption = 0, secs = 0;
};

PlantedSeed run_planted(const Config& base, std::uint64_t seed) {
    const auto start = Clock::now();
    Config c = base;
    c.seed = seed;
    auto pc = c.data.planted;
    pc.seed = derive_seed(c.seed, "data.planted");
    const auto data = make_planted(pc);
    const auto split = planted_split(data, derive_seed(c.seed, "stage.split"));
    PlantedOracle oracle(data.truth);
    const auto artifacts = prepare_artifacts(data.corpus, split, c, &oracle);
    const auto full = run_variant(artifacts, AblationVariant::full, &oracle, c);
    const auto no_r = run_variant(artifacts, AblationVariant::no_r, nullptr, c);
    const auto baseline = evaluate(backbone_scorer(artifacts.backbone), split, all_tasks(), eval_config(c));

    std::vector<DecisionRecord> random_decisions;
    for (auto item : split.cold_items) {
        auto candidates = random_candidates(item, split.num_users, c.filter.top_k, derive_seed(seed, "random", item));
        auto r = refine(candidates, oracle, artifacts.environment());
        random_decisions.insert(random_decisions.end(), r.decisions.begin(), r.decisions.end());
    }
    PlantedSeed out;
    out.full = full.report.at(EvalTask::cold).ndcg;
    out.no_r = no_r.report.at(EvalTask::cold).ndcg;
    out.baseline = baseline.at(EvalTask::cold).ndcg;
    out.adoption = full.adoption->rate;
    out.random_adoption = adoption_rate(random_decisions).rate;
    out.secs = seconds_since(start);
    return out;
}

Outcome planted_end_to_end(const std::vector<PlantedSeed>& seeds, double secs) {
    bool ok = secs < 300.0;
    std::string detail;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        const auto& r = seeds[s];
        const bool pass = r.full >= 5.0 * r.baseline && r.full >= r.no_r;
        ok = ok && pass;
        detail += fmt("\n    seed %zu: cold NDCG@20 full %.4f, no-R %.4f, random-embedding %.4f (ratio %.2fx) %s",
                      s + 1, r.full, r.no_r, r.baseline, r.full / r.baseline, pass ? "ok" : "short");
    }
    return {ok, fmt("5 seeds, %.1fs", secs) + detail};
}

Outcome adoption_direction(const std::vector<PlantedSeed>& seeds) {
    bool ok = true;
    std::string detail;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        const auto& r = seeds[s];
        const bool pass = r.adoption >= 4.0 * r.random_adoption;
        ok = ok && pass;
        detail += fmt("\n    seed %zu: funnel %.4f, random %.4f (ratio %.2fx) %s", s + 1, r.adoption, r.random_adoption,
                      r.adoption / r.random_adoption, pass ? "ok" : "short");
    }
    return {ok, "5 seeds" + detail};
}

Outcome protocol_constants() {
    test::TempDir dir;
    const std::size_t users = 5551, items = 16980, interactions = 204986;
    {
        std::ofstream out(dir / "items.tsv");
        for (std::size_t i = 0; i < items; ++i) out << i << "\tPaper " << i << "\tabstract " << i % 97 << "\n";
        std::ofstream log(dir / "users.dat");
        const std::size_t per_user = interactions / users, extra = interactions % users;
        for (std::size_t u = 0; u < users; ++u) {
            const std::size_t n = per_user + (u < extra ? 1 : 0);
            for (std::size_t j = 0; j < n; ++j) log << (j ? " " : "") << (u * 37 + j * 11) % items;
            log << "\n";
        }
    }
    const std::string base = "--out " + (dir / "w").string() + " ";
    std::string ingest, split, defaults;
    const int rc_ingest = run_cli(base + "ingest --source citeulike --path " + dir.path().string(), &ingest);
    const int rc_split = run_cli(base + "split --cold-frac 0.2", &split);
    const int rc_defaults = run_cli("default-config", &defaults);
    bool ok = rc_ingest == 0 && rc_split == 0 && rc_defaults == 0;
    ok = ok && field(ingest, "users") == users && field(ingest, "items") == items &&
         field(ingest, "interactions") == interactions && field(split, "cold_items") == 3396;
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(defaults);
    } catch (const std::exception&) {
        ok = false;
    }
    const bool defaults_ok = doc.is_object() && doc["filter"]["top_k"] == 20 && doc["eval"]["users"] == 2000 &&
                             doc["filter"]["lr"] == 1e-5 && doc["filter"]["batch_size"] == 128 &&
                             doc["data"]["cold_frac"] == 0.2;
    ok = ok && defaults_ok;
    std::string detail = fmt("fixture ingest users=%zu items=%zu interactions=%zu, cold_items=%zu; default-config %s",
                             field(ingest, "users"), field(ingest, "items"), field(ingest, "interactions"),
                             field(split, "cold_items"), defaults_ok ? "K=20, users=2000, filter lr 1e-05, batch 128" : "mismatch");
    if (const char* real = std::getenv("COLDLLM_CITEULIKE_DIR")) {
        std::string real_ingest, real_split;
        const std::string rbase = "--out " + (dir / "real").string() + " ";
        const bool real_ok = run_cli(rbase + "ingest --source citeulike --path " + std::string(real), &real_ingest) == 0 &&
                             run_cli(rbase + "split --cold-frac 0.2", &real_split) == 0 &&
                             field(real_ingest, "users") == users && field(real_ingest, "items") == items &&
                             field(real_ingest, "interactions") == interactions && field(real_split, "cold_items") == 3396;
        ok = ok && real_ok;
        detail += fmt("; real dataset users=%zu items=%zu interactions=%zu cold_items=%zu", field(real_ingest, "users"),
                      field(real_ingest, "items"), field(real_ingest, "interactions"), field(real_split, "cold_items"));
    } else {
        detail += "; real dataset SKIP (COLDLLM_CITEULIKE_DIR unset)";
    }
    return {ok, detail};
}

Outcome finetune_export() {
    std::size_t unbalanced = 0, missing_fragment = 0, unmatched = 0, records = 0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        const std::size_t users = 5 + trial % 11, items = 6 + trial % 13;
        auto log = test::random_log(users, items, 0.25, trial);
        auto split = make_cold_split(log, 0.0, trial);
        InteractionLog history(users, items, split.warm_train);
        auto catalog = test::numbered_catalog(items);
        EmbeddingTable vectors(items, 5);
        Rng rng(trial);
        std::normal_distribution<double> normal;
        for (auto& v : vectors.values()) v = normal(rng);
        const RefineEnvironment env{&history, &catalog, &vectors};
        FinetuneOptions options;
        options.seed = trial;
        const auto out = prepare_finetune_data(split, env, options);

        std::set<std::string> yes_prompts, no_prompts;
        InteractionLog all(users, items, [&] {
            auto v = split.warm_train;
            v.insert(v.end(), split.warm_val.begin(), split.warm_val.end());
            v.insert(v.end(), split.warm_test.begin(), split.warm_test.end());
            return v;
        }());
        for (UserId u = 0; u < users; ++u) {
            for (ItemId i = 0; i < items; ++i) {
                auto ctx = build_context(u, vectors.row(i), env, kDefaultContextLength, i);
                auto prompt = render_prompt(ctx, catalog.text(i));
                if (history.contains(u, i)) yes_prompts.insert(prompt);
                if (!all.contains(u, i)) no_prompts.insert(prompt);
            }
        }
        std::size_t yes = 0, no = 0;
        for (const auto& r : out) {
            ++records;
            if (r.prompt.find("by answering Yes or No") == std::string::npos) ++missing_fragment;
            if (r.completion == "Yes") {
                ++yes;
                unmatched += yes_prompts.count(r.prompt) == 0;
            } else {
                ++no;
                unmatched += no_prompts.count(r.prompt) == 0;
            }
        }
        unbalanced += yes != no || yes == 0;
    }
    return {unbalanced + missing_fragment + unmatched == 0,
            fmt("100 logs, %zu records; unbalanced logs %zu, prompts without fragment %zu, prompts not matching "
                "the template for a valid pair %zu",
                records, unbalanced, missing_fragment, unmatched)};
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file()) files[fs::relative(entry.path(), root).string()] = test::read_file(entry.path());
    }
    return files;
}

Outcome cli_determinism() {
    test::TempDir dir;
    Config c;
    c.seed = 3;
    c.data.source = "planted";
    c.data.planted.users = 80;
    c.data.planted.warm_items = 50;
    c.data.planted.cold_items = 8;
    c.backbone.dim = 8;
    c.backbone.lr = 1e-2;
    c.backbone.max_epochs = 30;
    c.content.dim = 32;
    c.filter.train.hidden = 16;
    c.filter.train.out = 8;
    c.filter.train.lr = 1e-3;
    c.filter.train.max_epochs = 5;
    c.filter.train.label_pairs = 200;
    c.refiner.oracle = "mock";
    c.warmup.lr = 1e-2;
    c.warmup.steps = 20;
    test::write_file(dir / "c.json", config_to_json(c).dump());
    const std::vector<std::string> steps{"ingest", "split", "train-backbone", "cache-content",
                                         "train-filter --variant B", "train-filter --variant L",
                                         "export-finetune", "simulate", "warmup", "evaluate",
                                         "ablate", "sweep --param K --values 5,10"};
    std::size_t failed = 0;
    for (const char* run : {"a", "b"}) {
        const std::string base = "--config " + (dir / "c.json").string() + " --out " + (dir / run).string() + " ";
        for (const auto& step : steps) failed += run_cli(base + step) != 0;
    }
    const std::string again = "--config " + (dir / "c.json").string() + " --out " + (dir / "b").string() + " ";
    for (const auto& step : steps) failed += run_cli(again + step) != 0;
    const auto a = snapshot(dir / "a"), b = snapshot(dir / "b");
    std::size_t differing = 0;
    for (const auto& [name, bytes] : a) differing += !b.count(name) || b.at(name) != bytes;
    differing += a.size() != b.size();
    return {failed == 0 && differing == 0 && !a.empty(),
            fmt("%zu commands x 3 runs, %zu failed; %zu artifacts compared, %zu differ", steps.size(), failed, a.size(),
                differing)};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> known_infeasible;
    for (int a = 1; a + 1 < argc; ++a) {
        if (std::string(argv[a]) == "--known-infeasible") known_infeasible.insert(std::atoi(argv[++a]));
    }

    std::vector<std::pair<int, std::function<Outcome()>>> criteria;
    std::vector<PlantedSeed> planted;
    double planted_secs = 0.0;
    auto planted_runs = [&] {
        if (!planted.empty()) return;
        const auto start = Clock::now();
        const auto config = load_config(fs::path(COLDLLM_SOURCE_DIR) / "tools" / "configs" / "planted.json");
        for (std::uint64_t seed = 1; seed <= 5; ++seed) planted.push_back(run_planted(config, seed));
        planted_secs = seconds_since(start);
    };
    criteria.emplace_back(1, metric_equivalence);
    criteria.emplace_back(2, topk_equivalence);
    criteria.emplace_back(3, gradient_checks);
    criteria.emplace_back(4, funnel_invariants);
    criteria.emplace_back(5, [&] {
        planted_runs();
        return planted_end_to_end(planted, planted_secs);
    });
    criteria.emplace_back(6, [&] {
        planted_runs();
        return adoption_direction(planted);
    });
    criteria.emplace_back(7, protocol_constants);
    criteria.emplace_back(8, finetune_export);
    criteria.emplace_back(9, cli_determinism);

    spdlog::set_level(spdlog::level::err);
    int unexpected = 0;
    for (auto& [id, check] : criteria) {
        Outcome outcome;
        try {
            outcome = check();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const bool known = known_infeasible.count(id) != 0;
        std::printf("criterion %d: %s  %s%s\n", id, outcome.pass ? "PASS" : "FAIL", outcome.detail.c_str(),
                    !outcome.pass && known ? "\n    (recorded as infeasible at this scale; see README)" : "");
        std::fflush(stdout);
        if (!outcome.pass && !known) ++unexpected;
    }
    return unexpected == 0 ? 0 : 1;
}
