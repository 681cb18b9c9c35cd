#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coldllm/corpus.hpp"
#include "coldllm/filter.hpp"
#include "coldllm/metrics.hpp"
#include "coldllm/refiner.hpp"

namespace coldllm {

enum class EvalTask { overall, warm, cold };

std::string to_string(EvalTask task);
EvalTask parse_eval_task(const std::string& name);

struct EvalConfig {
    std::size_t k = 20;
    std::size_t users = 2000;
    std::uint64_t seed = 0;
};

struct TaskMetrics {
    EvalTask task = EvalTask::overall;
    double recall = 0.0;
    double ndcg = 0.0;
    std::size_t users = 0;
    std::size_t candidates = 0;
};

struct EvalReport {
    std::size_t k = 20;
    std::size_t user_sample = 2000;
    std::uint64_t seed = 0;
    std::string fingerprint;
    std::vector<TaskMetrics> tasks;

    const TaskMetrics& at(EvalTask task) const;
    nlohmann::json to_json() const;
    std::string to_table() const;
};

// Items the task ranks: distinct items of the task's test pairs, ascending.
std::vector<ItemId> task_candidates(const ColdWarmSplit& split, EvalTask task);
std::vector<Interaction> task_positives(const ColdWarmSplit& split, EvalTask task);

// One seeded user permutation serves every task; each task takes the first
// `users` entries that have a test positive for it. Warm-train positives are
// excluded from each user's ranking.
TaskMetrics evaluate_task(const ItemScorer& scorer, const ColdWarmSplit& split, EvalTask task,
                          const EvalConfig& config);
EvalReport evaluate(const ItemScorer& scorer, const ColdWarmSplit& split, std::span<const EvalTask> tasks,
                    const EvalConfig& config, std::string fingerprint = {});

struct AdoptionStats {
    std::size_t filtered = 0;
    std::size_t accepted = 0;
    double rate = 0.0;
};

// Failed oracle calls are not counted as filtered candidates.
AdoptionStats adoption_rate(std::span<const DecisionRecord> decisions);
AdoptionStats adoption_rate(std::span<const SimulationResult> simulations);

// k distinct users drawn uniformly, in ascending id order.
CandidateSet random_candidates(ItemId item, std::size_t num_users, std::size_t k, std::uint64_t seed);

}  // namespace coldllm
