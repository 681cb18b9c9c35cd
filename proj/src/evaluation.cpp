#include "coldllm/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "coldllm/random.hpp"

namespace coldllm {

std::string to_string(EvalTask task) {
    switch (task) {
        case EvalTask::overall: return "overall";
        case EvalTask::warm: return "warm";
        case EvalTask::cold: return "cold";
    }
    return "?";
}

EvalTask parse_eval_task(const std::string& name) {
    if (name == "overall") return EvalTask::overall;
    if (name == "warm") return EvalTask::warm;
    if (name == "cold") return EvalTask::cold;
    throw ValidationError("unknown evaluation task '" + name + "' (expected overall, warm or cold)");
}

const TaskMetrics& EvalReport::at(EvalTask task) const {
    for (const auto& t : tasks) {
        if (t.task == task) return t;
    }
    throw ValidationError("report has no '" + to_string(task) + "' task");
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json rows = nlohmann::json::object();
    for (const auto& t : tasks) {
        rows[to_string(t.task)] = {{"recall", t.recall}, {"ndcg", t.ndcg}, {"users", t.users},
                                   {"candidates", t.candidates}};
    }
    return {{"k", k}, {"user_sample", user_sample}, {"seed", seed}, {"config_fingerprint", fingerprint},
            {"tasks", std::move(rows)}};
}

std::string EvalReport::to_table() const {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-8s %10s %10s %7s %10s\n", "task", ("Recall@" + std::to_string(k)).c_str(),
                  ("NDCG@" + std::to_string(k)).c_str(), "users", "items");
    out << line;
    for (const auto& t : tasks) {
        std::snprintf(line, sizeof line, "%-8s %10.4f %10.4f %7zu %10zu\n", to_string(t.task).c_str(), t.recall,
                      t.ndcg, t.users, t.candidates);
        out << line;
    }
    return out.str();
}

std::vector<Interaction> task_positives(const ColdWarmSplit& split, EvalTask task) {
    std::vector<Interaction> out;
    if (task != EvalTask::cold) out.insert(out.end(), split.warm_test.begin(), split.warm_test.end());
    if (task != EvalTask::warm) out.insert(out.end(), split.cold_test.begin(), split.cold_test.end());
    return out;
}

std::vector<ItemId> task_candidates(const ColdWarmSplit& split, EvalTask task) {
    std::vector<ItemId> items;
    for (const auto& p : task_positives(split, task)) items.push_back(p.item);
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    return items;
}

namespace {

std::vector<UserId> user_permutation(std::size_t num_users, std::uint64_t seed) {
    std::vector<UserId> users(num_users);
    std::iota(users.begin(), users.end(), 0);
    Rng rng(derive_seed(seed, "eval.users"));
    std::shuffle(users.begin(), users.end(), rng);
    return users;
}

TaskMetrics evaluate_with_order(const ItemScorer& scorer, const ColdWarmSplit& split, EvalTask task,
                                const EvalConfig& config, std::span<const UserId> order,
                                const InteractionLog& train) {
    if (config.k < 1) throw ValidationError("evaluation needs K >= 1");
    const InteractionLog test(split.num_users, split.num_items, task_positives(split, task));
    std::vector<UserId> users;
    for (UserId u : order) {
        if (users.size() >= config.users) break;
        if (!test.user_items(u).empty()) users.push_back(u);
    }
    if (users.empty()) throw ValidationError("no users have test positives for the " + to_string(task) + " task");
    std::sort(users.begin(), users.end());
    const auto candidates = task_candidates(split, task);
    const auto m = evaluate_users(scorer, users, candidates, test, train, config.k);
    return {task, m.recall, m.ndcg, m.users, candidates.size()};
}

}  // namespace

TaskMetrics evaluate_task(const ItemScorer& scorer, const ColdWarmSplit& split, EvalTask task,
                          const EvalConfig& config) {
    const auto order = user_permutation(split.num_users, config.seed);
    const InteractionLog train(split.num_users, split.num_items, split.warm_train);
    return evaluate_with_order(scorer, split, task, config, order, train);
}

EvalReport evaluate(const ItemScorer& scorer, const ColdWarmSplit& split, std::span<const EvalTask> tasks,
                    const EvalConfig& config, std::string fingerprint) {
    EvalReport report;
    report.k = config.k;
    report.user_sample = config.users;
    report.seed = config.seed;
    report.fingerprint = std::move(fingerprint);
    const auto order = user_permutation(split.num_users, config.seed);
    const InteractionLog train(split.num_users, split.num_items, split.warm_train);
    for (auto task : tasks) report.tasks.push_back(evaluate_with_order(scorer, split, task, config, order, train));
    return report;
}

AdoptionStats adoption_rate(std::span<const DecisionRecord> decisions) {
    AdoptionStats stats;
    for (const auto& d : decisions) {
        if (d.failed) continue;
        ++stats.filtered;
        if (d.z) ++stats.accepted;
    }
    if (stats.filtered == 0) throw ValidationError("adoption rate needs a non-empty decision log");
    stats.rate = static_cast<double>(stats.accepted) / static_cast<double>(stats.filtered);
    return stats;
}

AdoptionStats adoption_rate(std::span<const SimulationResult> simulations) {
    std::vector<DecisionRecord> all;
    for (const auto& s : simulations) all.insert(all.end(), s.decisions.begin(), s.decisions.end());
    return adoption_rate(all);
}

CandidateSet random_candidates(ItemId item, std::size_t num_users, std::size_t k, std::uint64_t seed) {
    std::vector<UserId> users(num_users);
    std::iota(users.begin(), users.end(), 0);
    Rng rng(seed);
    std::shuffle(users.begin(), users.end(), rng);
    users.resize(std::min(k, num_users));
    std::sort(users.begin(), users.end());
    CandidateSet out{item, {}};
    for (UserId u : users) out.users.push_back({u, 0.0});
    return out;
}

}  // namespace coldllm
