#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coldllm/corpus.hpp"
#include "coldllm/embedding.hpp"
#include "coldllm/metrics.hpp"
#include "coldllm/random.hpp"
#include "coldllm/types.hpp"

namespace coldllm {

// Plain matrix factorisation: score(u, i) = e_u . e_i, no biases.
struct BackboneModel {
    EmbeddingTable users;
    EmbeddingTable items;
    std::size_t trained_epochs = 0;

    std::size_t dim() const { return users.dim(); }
    bool operator==(const BackboneModel&) const = default;
};

BackboneModel init_backbone(std::size_t num_users, std::size_t num_items, std::size_t dim, std::uint64_t seed,
                            double init_std = 0.01);

double score(const BackboneModel& model, UserId u, ItemId i);
ItemScorer backbone_scorer(const BackboneModel& model);

void save_backbone(const BackboneModel& model, const std::filesystem::path& dir, const std::string& prefix);
BackboneModel load_backbone(const std::filesystem::path& dir, const std::string& prefix);

struct BprTriple {
    UserId user = 0;
    ItemId pos = 0;
    ItemId neg = 0;

    bool operator==(const BprTriple&) const = default;
};

// Uniform negatives from `universe`, rejected while (user, j) is observed.
class NegativeSampler {
public:
    static constexpr std::size_t kMaxRejections = 100;

    NegativeSampler(const InteractionLog& observed, std::span<const ItemId> universe);

    // Empty when the user appears to have interacted with every candidate.
    std::optional<ItemId> sample(UserId user, Rng& rng) const;

private:
    const InteractionLog& observed_;
    std::span<const ItemId> universe_;
};

struct SamplingStats {
    std::size_t skipped = 0;
};

// n draws of (u, i) uniform over `observed`, each paired with a negative from
// `warm_items`. Draws whose user exhausts the rejection budget are skipped.
std::vector<BprTriple> sample_bpr_triples(const InteractionLog& observed, std::span<const ItemId> warm_items,
                                          std::size_t n, std::uint64_t seed, SamplingStats* stats = nullptr);

// Gradients of the batch objective, keyed by row.
struct BprGradients {
    double loss = 0.0;
    std::map<std::size_t, std::vector<double>> users;
    std::map<std::size_t, std::vector<double>> items;
};

// Objective: -mean ln sigmoid(e_u.e_i - e_u.e_j)
//            + (l2 / 2) * mean(|e_u|^2 + |e_i|^2 + |e_j|^2).
double bpr_loss(const BackboneModel& model, std::span<const BprTriple> batch, double l2 = 0.0);
BprGradients bpr_gradients(const BackboneModel& model, std::span<const BprTriple> batch, double l2 = 0.0);

// One SGD step on the batch objective. Returns the pre-step loss; throws
// DivergenceError (leaving the model untouched) when that loss is not finite.
double bpr_step(BackboneModel& model, std::span<const BprTriple> batch, double lr, double l2 = 0.0);

// Row-sparse Adam over both tables.
class SparseAdam {
public:
    SparseAdam(const BackboneModel& model, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void apply(BackboneModel& model, const BprGradients& grads, double lr);

private:
    EmbeddingTable m_users_, v_users_, m_items_, v_items_;
    double beta1_, beta2_, eps_;
    std::size_t step_ = 0;
};

struct BackboneConfig {
    std::size_t dim = 200;
    double lr = 1e-3;
    std::string optimizer = "adam";  // "adam" | "sgd"
    std::size_t batch_size = 1024;
    std::size_t max_epochs = 500;
    std::size_t patience = 10;
    double l2 = 0.0;
    double init_std = 0.01;
    std::size_t eval_users = 2000;
    std::size_t eval_k = 20;
    std::uint64_t seed = 0;
};

struct BackboneHistory {
    std::vector<double> epoch_loss;
    std::vector<double> val_ndcg;
    std::size_t best_epoch = 0;
    std::size_t lr_halvings = 0;
};

// BPR training on warm-train with one sampled negative per positive per
// epoch; early-stops on warm-val NDCG and returns the best snapshot.
BackboneModel train_backbone(const ColdWarmSplit& split, const BackboneConfig& config,
                             BackboneHistory* history = nullptr);

// Warm-val NDCG@k over a seeded sample of at most `max_users` users.
double warm_validation_ndcg(const ItemScorer& scorer, const ColdWarmSplit& split, std::size_t max_users,
                            std::size_t k, std::uint64_t seed);

}  // namespace coldllm
