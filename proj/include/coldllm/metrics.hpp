#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "coldllm/corpus.hpp"
#include "coldllm/types.hpp"

namespace coldllm {

// Binary-relevance ranking metrics. `ranked` must be duplicate-free and
// `relevant` sorted ascending. Both return 0 for an empty relevant set.
double recall_at_k(std::span<const ItemId> ranked, std::span<const ItemId> relevant, std::size_t k);
double ndcg_at_k(std::span<const ItemId> ranked, std::span<const ItemId> relevant, std::size_t k);

// Fills `scores[n]` with the preference of `user` for `items[n]`.
using ItemScorer = std::function<void(UserId user, std::span<const ItemId> items, std::span<double> scores)>;

// Top-k of `items` by score, ties broken by ascending item id.
std::vector<ItemId> rank_top_k(std::span<const ItemId> items, std::span<const double> scores, std::size_t k);

struct RankingMetrics {
    double recall = 0.0;
    double ndcg = 0.0;
    std::size_t users = 0;
};

// Macro-averaged Recall@k / NDCG@k over `users`. Each user ranks
// `candidates` minus their items in `exclude`; relevance comes from `relevant`.
RankingMetrics evaluate_users(const ItemScorer& scorer, std::span<const UserId> users,
                              std::span<const ItemId> candidates, const InteractionLog& relevant,
                              const InteractionLog& exclude, std::size_t k);

}  // namespace coldllm
