#include "coldllm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coldllm {

namespace {

bool is_relevant(std::span<const ItemId> relevant, ItemId item) {
    return std::binary_search(relevant.begin(), relevant.end(), item);
}

}  // namespace

double recall_at_k(std::span<const ItemId> ranked, std::span<const ItemId> relevant, std::size_t k) {
    if (relevant.empty()) return 0.0;
    const std::size_t depth = std::min(k, ranked.size());
    std::size_t hits = 0;
    for (std::size_t r = 0; r < depth; ++r) hits += is_relevant(relevant, ranked[r]) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const ItemId> ranked, std::span<const ItemId> relevant, std::size_t k) {
    if (relevant.empty()) return 0.0;
    const std::size_t depth = std::min(k, ranked.size());
    double dcg = 0.0;
    for (std::size_t r = 0; r < depth; ++r) {
        if (is_relevant(relevant, ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(relevant.size(), k);
    for (std::size_t r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

std::vector<ItemId> rank_top_k(std::span<const ItemId> items, std::span<const double> scores, std::size_t k) {
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t depth = std::min(k, order.size());
    auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return items[a] < items[b];
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(depth), order.end(), better);
    std::vector<ItemId> out(depth);
    for (std::size_t r = 0; r < depth; ++r) out[r] = items[order[r]];
    return out;
}

RankingMetrics evaluate_users(const ItemScorer& scorer, std::span<const UserId> users,
                              std::span<const ItemId> candidates, const InteractionLog& relevant,
                              const InteractionLog& exclude, std::size_t k) {
    RankingMetrics out;
    std::vector<ItemId> pool;
    std::vector<double> scores;
    for (auto u : users) {
        auto rel = relevant.user_items(u);
        if (rel.empty()) continue;
        auto excluded = exclude.user_items(u);
        pool.clear();
        for (auto i : candidates) {
            if (!std::binary_search(excluded.begin(), excluded.end(), i)) pool.push_back(i);
        }
        scores.assign(pool.size(), 0.0);
        scorer(u, pool, scores);
        auto top = rank_top_k(pool, scores, k);
        out.recall += recall_at_k(top, rel, k);
        out.ndcg += ndcg_at_k(top, rel, k);
        ++out.users;
    }
    if (out.users > 0) {
        out.recall /= static_cast<double>(out.users);
        out.ndcg /= static_cast<double>(out.users);
    }
    return out;
}

}  // namespace coldllm
