#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coldllm/backbone.hpp"
#include "coldllm/content.hpp"
#include "coldllm/corpus.hpp"
#include "coldllm/filter.hpp"
#include "coldllm/refiner.hpp"
#include "coldllm/types.hpp"

namespace coldllm {

enum class WarmupInit { user_mean, filter_map, zero };

std::string to_string(WarmupInit init);
WarmupInit parse_warmup_init(const std::string& name);

struct WarmupConfig {
    double lr = 1e-3;
    std::size_t steps = 100;
    std::size_t negatives = 1;  // per positive per step
    WarmupInit init = WarmupInit::user_mean;
    std::string optimizer = "adam";  // "adam" | "sgd"
    std::uint64_t seed = 0;
    bool skip_missing = true;
    bool retrain_with_simulated = false;
    std::size_t max_inflight = 8;
};

struct ColdEmbeddingResult {
    ItemId item = 0;
    std::vector<double> embedding;
    std::vector<UserId> users;
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// user_mean: mean of the simulated users' rows; filter_map: the behavior
// filter's item tower applied to the raw vector; zero: zeros.
std::vector<double> init_cold_embedding(std::span<const UserId> users, const BackboneModel& backbone,
                                        const TwoTowerFilter* behavior_filter, std::span<const float> raw,
                                        WarmupInit mode);

struct UserPair {
    UserId pos = 0;
    UserId neg = 0;
};

// -mean ln sigmoid(e_pos . e_i - e_neg . e_i); adds d/d e_i into `grad` if given.
double cold_bpr_loss(const BackboneModel& backbone, std::span<const double> item_embedding,
                     std::span<const UserPair> pairs, std::vector<double>* grad = nullptr);

// Item-side BPR on e_i only, with `negatives` uniform draws from U \ users
// for every simulated user at every step.
ColdEmbeddingResult optimize_cold_embedding(ItemId item, std::span<const UserId> users,
                                            const BackboneModel& backbone, std::vector<double> init,
                                            const WarmupConfig& config);

struct WarmupItemReport {
    ItemId item = 0;
    std::size_t simulated_users = 0;
    double final_loss = 0.0;
    bool fallback = false;
    bool skipped = false;
    std::string init;
};

struct WarmupReport {
    std::vector<WarmupItemReport> items;
    std::size_t skipped = 0;

    nlohmann::json to_json() const;
};

// Replaces every simulated cold row of the item table; warm rows and user
// rows are left untouched.
BackboneModel warm_all_cold(const ColdWarmSplit& split, std::span<const SimulationResult> simulations,
                            const BackboneModel& backbone, const TwoTowerFilter* behavior_filter,
                            const ContentCache* content, const WarmupConfig& config, WarmupReport* report = nullptr);

// Warm-train extended with the simulated (user, cold item) pairs.
ColdWarmSplit with_simulated_interactions(const ColdWarmSplit& split, std::span<const SimulationResult> simulations);

}  // namespace coldllm
