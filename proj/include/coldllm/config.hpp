#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "coldllm/backbone.hpp"
#include "coldllm/evaluation.hpp"
#include "coldllm/filter.hpp"
#include "coldllm/refiner.hpp"
#include "coldllm/synthetic.hpp"
#include "coldllm/warmup.hpp"

namespace coldllm {

struct DataConfig {
    std::string source = "citeulike";  // citeulike | movielens | planted
    std::string path;
    double cold_frac = 0.2;
    std::string users_file = "users.dat";
    std::string items_file = "items.tsv";
    std::string ratings_file = "ratings.dat";
    std::string movies_file = "movies.dat";
    double min_rating = 0.0;
    PlantedConfig planted;
};

struct ContentConfig {
    std::string provider = "mock";  // mock | file | http
    std::size_t dim = 256;
    std::uint64_t hash_seed = 0;
    std::string path;  // file provider
    std::string url;   // http provider
    double timeout_s = 30.0;
    std::size_t max_inflight = 8;
    std::size_t attempts = 3;
    double backoff_ms = 200.0;
};

struct FilterSection {
    FilterTrainConfig train;
    std::size_t top_k = kDefaultTopK;
};

struct RefinerSection {
    std::string oracle = "mock";  // mock | planted | http | always-yes | always-no
    double tau = 0.3;
    std::string truth;  // planted oracle ground-truth pairs
    std::string url;
    std::string protocol = "simulate";  // simulate | chat
    std::string chat_path = "/v1/chat/completions";
    double timeout_s = 30.0;
    RefinerConfig refiner;
    bool decision_cache = true;
    std::string finetune_mode = "offline";
    std::size_t finetune_positives = 0;
};

struct Config {
    std::uint64_t seed = 0;
    DataConfig data;
    BackboneConfig backbone;
    ContentConfig content;
    FilterSection filter;
    RefinerSection refiner;
    WarmupConfig warmup;
    EvalConfig eval;
};

nlohmann::json config_to_json(const Config& config);
// Missing keys keep their defaults; unknown keys are rejected.
Config config_from_json(const nlohmann::json& doc);
Config load_config(const std::filesystem::path& path);
void validate_config(const Config& config);

// Short hash of the canonical JSON form.
std::string config_fingerprint(const Config& config);

// Module configs carrying stage seeds derived from the global seed.
BackboneConfig backbone_config(const Config& config);
FilterTrainConfig filter_config(const Config& config, FilterVariant variant);
WarmupConfig warmup_config(const Config& config);
EvalConfig eval_config(const Config& config);

}  // namespace coldllm
