#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "coldllm/corpus.hpp"
#include "coldllm/types.hpp"

namespace coldllm {

// Clustered toy world: users and items belong to one group inside one of
// `clusters` clusters; a user interacts with an item of their own group with
// probability `p_interact` and never outside it. Item texts carry cluster and
// group words plus shared noise words.
struct PlantedConfig {
    std::size_t users = 200;
    std::size_t warm_items = 100;
    std::size_t cold_items = 20;
    std::size_t clusters = 2;
    std::size_t groups_per_cluster = 4;
    double p_interact = 0.5;
    std::size_t noise_words = 6;
    std::uint64_t seed = 0;
};

struct PlantedDataset {
    Corpus corpus;
    std::vector<ItemId> cold_items;
    std::vector<std::size_t> user_group;
    std::vector<std::size_t> item_group;
    std::vector<Interaction> truth;  // every same-group (user, item) pair
    PlantedConfig config;

    std::size_t cluster_of_group(std::size_t group) const { return group / config.groups_per_cluster; }
};

PlantedDataset make_planted(const PlantedConfig& config);

// split_with_cold_items over the generator's designated cold items.
ColdWarmSplit planted_split(const PlantedDataset& data, std::uint64_t seed);

void save_truth(std::span<const Interaction> truth, const std::filesystem::path& path);
std::vector<Interaction> load_truth(const std::filesystem::path& path);

}  // namespace coldllm
