#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coldllm/backbone.hpp"
#include "coldllm/content.hpp"
#include "coldllm/corpus.hpp"
#include "coldllm/embedding.hpp"
#include "coldllm/tower.hpp"
#include "coldllm/types.hpp"

namespace coldllm {

inline constexpr std::size_t kDefaultTopK = 20;

// B is trained on real interactions; L imitates the refinement oracle.
enum class FilterVariant { behavior, coupled };

std::string to_string(FilterVariant variant);
FilterVariant parse_filter_variant(const std::string& name);

struct TwoTowerFilter {
    FilterVariant variant = FilterVariant::behavior;
    TowerMlp user_tower;  // [e_u | mean history content] -> shared space
    TowerMlp item_tower;  // raw content -> shared space

    bool operator==(const TwoTowerFilter&) const = default;
};

TwoTowerFilter make_filter(FilterVariant variant, std::size_t behavior_dim, std::size_t content_dim,
                           std::size_t hidden, std::size_t out, std::uint64_t seed);
TwoTowerFilter zeros_like(const TwoTowerFilter& filter);

using FilterVector = std::vector<double>;

FilterVector map_item(const TwoTowerFilter& filter, std::span<const float> raw);
FilterVector map_item(const TwoTowerFilter& filter, std::span<const double> raw);
// An empty `history_content` stands for a user without history (zero block).
FilterVector map_user(const TwoTowerFilter& filter, std::span<const double> behavior,
                      std::span<const double> history_content);

// Frozen tower inputs: per-user [e_u | mean content of the user's history]
// and per-item raw content.
struct FilterInputs {
    std::size_t behavior_dim = 0;
    std::size_t content_dim = 0;
    EmbeddingTable user_inputs;
    EmbeddingTable item_content;
};

FilterInputs build_filter_inputs(const BackboneModel& backbone, const ContentCache& content,
                                 const InteractionLog& history);

EmbeddingTable map_all_users(const TwoTowerFilter& filter, const FilterInputs& inputs);
EmbeddingTable map_all_items(const TwoTowerFilter& filter, const FilterInputs& inputs);

struct ScoredUser {
    UserId user = 0;
    double score = 0.0;

    bool operator==(const ScoredUser&) const = default;
};

// Ranked users for one item: scores non-increasing, ties by ascending id.
struct CandidateSet {
    ItemId item = 0;
    std::vector<ScoredUser> users;

    std::vector<UserId> ids() const;
};

// Exact maximum-inner-product search over a fixed user matrix, using a
// bounded heap instead of a full sort.
class InnerProductIndex {
public:
    InnerProductIndex() = default;
    explicit InnerProductIndex(EmbeddingTable vectors);

    std::size_t size() const { return vectors_.rows(); }
    std::size_t dim() const { return vectors_.dim(); }
    const EmbeddingTable& vectors() const { return vectors_; }

    std::vector<ScoredUser> search(std::span<const double> query, std::size_t k) const;

private:
    EmbeddingTable vectors_;
};

CandidateSet topk_candidates(ItemId item, std::span<const double> item_vector, const InnerProductIndex& users,
                             std::size_t k = kDefaultTopK);

// A filter plus its precomputed user-side index.
class FilterRetriever {
public:
    FilterRetriever(TwoTowerFilter filter, const FilterInputs& inputs);

    const TwoTowerFilter& filter() const { return filter_; }
    const InnerProductIndex& index() const { return index_; }
    CandidateSet retrieve(ItemId item, std::span<const float> raw, std::size_t k) const;

private:
    TwoTowerFilter filter_;
    InnerProductIndex index_;
};

// Interleaves the two rankings (coupled first), skipping users already
// taken, until k users are collected. A missing side yields its slots to the
// other. Output scores are reciprocal merged ranks.
CandidateSet funnel_merge(ItemId item, const CandidateSet* coupled, const CandidateSet* behavior, std::size_t k);
CandidateSet funnel_filter(const FilterRetriever* coupled, const FilterRetriever* behavior, ItemId item,
                           std::span<const float> raw, std::size_t k = kDefaultTopK);

struct LabeledPair {
    UserId user = 0;
    ItemId item = 0;
    bool label = false;

    bool operator==(const LabeledPair&) const = default;
};

inline constexpr double kProbabilityClip = 1e-7;

// Mean BPR loss of the tower scores; adds the gradient into `grad` if given.
double filter_bpr_loss(const TwoTowerFilter& filter, const FilterInputs& inputs, std::span<const BprTriple> batch,
                       TwoTowerFilter* grad = nullptr);

// Mean cross-entropy between labels and sigmoid(tower score), probabilities
// clipped to [1e-7, 1 - 1e-7]; adds the gradient into `grad` if given.
double coupled_ce_loss(const TwoTowerFilter& filter, const FilterInputs& inputs, std::span<const LabeledPair> batch,
                       TwoTowerFilter* grad = nullptr);

// Decoupled-weight-decay Adam over every tower parameter.
class AdamW {
public:
    explicit AdamW(const TwoTowerFilter& shape, double weight_decay = 0.01, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8);
    void step(TwoTowerFilter& params, const TwoTowerFilter& grad, double lr);

private:
    TwoTowerFilter m_, v_;
    double weight_decay_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

struct FilterTrainConfig {
    std::size_t hidden = 200;
    std::size_t out = 200;
    double lr = 1e-5;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    double weight_decay = 0.01;
    double coupled_weight = 1.0;     // weight of the BPR term in the coupled objective
    std::size_t label_pairs = 4096;  // positive pairs sent to the oracle (plus as many unobserved)
    bool extra_align_loss = false;   // reserved; no alignment term is implemented
    std::size_t eval_users = 2000;
    std::size_t eval_k = 20;
    std::uint64_t seed = 0;
};

struct FilterHistory {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_ce;
    std::vector<double> validation;
    std::size_t best_epoch = 0;
};

// BPR on warm-train triples with frozen inputs; early-stops on warm-val NDCG
// of filter-ranked warm items and returns the best snapshot.
TwoTowerFilter train_behavior_filter(TwoTowerFilter filter, const FilterInputs& inputs, const ColdWarmSplit& split,
                                     const FilterTrainConfig& config, FilterHistory* history = nullptr);

// Cross-entropy against oracle labels plus coupled_weight * BPR. A tenth of
// the labels (when there are at least 20) is held out for early stopping.
TwoTowerFilter train_coupled_filter(TwoTowerFilter filter, const FilterInputs& inputs, const ColdWarmSplit& split,
                                    std::span<const LabeledPair> labels, const FilterTrainConfig& config,
                                    FilterHistory* history = nullptr);

// Oracle-label pool: up to n warm-train positives plus as many uniformly
// sampled unobserved (user, warm item) pairs, labels left unset.
std::vector<LabeledPair> sample_label_pairs(const ColdWarmSplit& split, std::size_t n, std::uint64_t seed);

// <dir>/<name>.bin holds the per-layer matrices as consecutive CEMB blocks
// (user tower then item tower; weight then 1 x out bias per layer);
// <dir>/<name>.json is the manifest.
void save_filter(const TwoTowerFilter& filter, const std::filesystem::path& dir, const std::string& name,
                 const nlohmann::json& extra = {});
TwoTowerFilter load_filter(const std::filesystem::path& dir, const std::string& name);

}  // namespace coldllm
