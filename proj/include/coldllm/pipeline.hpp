#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coldllm/backbone.hpp"
#include "coldllm/config.hpp"
#include "coldllm/content.hpp"
#include "coldllm/corpus.hpp"
#include "coldllm/evaluation.hpp"
#include "coldllm/filter.hpp"
#include "coldllm/refiner.hpp"
#include "coldllm/warmup.hpp"

namespace coldllm {

enum class AblationVariant { full, no_lsf_r, no_bf_r, no_lsf, no_bf, no_r };

std::string to_string(AblationVariant variant);
AblationVariant parse_ablation_variant(const std::string& name);
std::vector<AblationVariant> all_variants();

struct VariantSpec {
    bool coupled = true;   // filter L in the funnel
    bool behavior = true;  // filter B in the funnel
    bool refine = true;
};

VariantSpec spec_of(AblationVariant variant);

Corpus load_dataset(const DataConfig& data);

std::unique_ptr<ContentProvider> make_content_provider(const ContentConfig& config);
// Embeds every catalog item in memory.
ContentCache build_content(ContentProvider& provider, const ItemCatalog& catalog, std::size_t max_inflight = 8);

// `content` backs the mock oracle; `truth` backs the planted one.
std::unique_ptr<OracleClient> make_oracle(const RefinerSection& config, const ContentCache* content,
                                          std::span<const Interaction> truth = {});

// Item vectors that rank user histories when building prompt contexts:
// filter B's item tower, else filter L's, else the raw content.
EmbeddingTable context_item_vectors(const TwoTowerFilter* behavior, const TwoTowerFilter* coupled,
                                    const FilterInputs& inputs);

TwoTowerFilter fit_behavior_filter(const FilterInputs& inputs, const ColdWarmSplit& split,
                                   const FilterTrainConfig& config, FilterHistory* history = nullptr);

struct CoupledFit {
    TwoTowerFilter filter;
    std::size_t labels = 0;
    std::size_t label_failures = 0;
    FilterHistory history;
};

CoupledFit fit_coupled_filter(const FilterInputs& inputs, const ColdWarmSplit& split, const ItemCatalog& catalog,
                              const EmbeddingTable& context_vectors, OracleClient& oracle,
                              const FilterTrainConfig& config, const RefinerConfig& refiner,
                              DecisionCache* cache = nullptr);

// Trained state shared by every variant of one configuration.
struct Artifacts {
    ColdWarmSplit split;
    ItemCatalog catalog;
    InteractionLog history;  // warm-train
    BackboneModel backbone;
    ContentCache content;
    FilterInputs inputs;
    std::optional<TwoTowerFilter> behavior;
    std::optional<TwoTowerFilter> coupled;
    EmbeddingTable context_vectors;

    RefineEnvironment environment() const { return {&history, &catalog, &context_vectors}; }
};

// Trains the backbone, embeds content and fits the filters (L only when an
// oracle is given). A backbone or content cache passed in is reused.
Artifacts prepare_artifacts(const Corpus& corpus, const ColdWarmSplit& split, const Config& config,
                            OracleClient* oracle, DecisionCache* cache = nullptr,
                            const BackboneModel* backbone = nullptr, const ContentCache* content = nullptr);

std::vector<SimulationResult> simulate_cold_items(const Artifacts& artifacts, AblationVariant variant,
                                                  OracleClient* oracle, std::size_t k, const RefinerConfig& refiner,
                                                  DecisionCache* cache = nullptr);

struct VariantRun {
    AblationVariant variant = AblationVariant::full;
    std::vector<SimulationResult> simulations;
    BackboneModel model;
    WarmupReport warmup;
    EvalReport report;
    std::optional<AdoptionStats> adoption;
};

std::vector<EvalTask> all_tasks();

VariantRun run_variant(const Artifacts& artifacts, AblationVariant variant, OracleClient* oracle,
                       const Config& config, DecisionCache* cache = nullptr);

VariantRun run_ablation(AblationVariant variant, const Config& config, const Corpus& corpus,
                        const ColdWarmSplit& split, OracleClient* oracle, DecisionCache* cache = nullptr);

enum class SweepParam { top_k, warmup_lr };

SweepParam parse_sweep_param(const std::string& name);
std::string to_string(SweepParam param);

struct SweepRow {
    double value = 0.0;
    EvalReport report;
    std::optional<AdoptionStats> adoption;
};

std::vector<SweepRow> sweep(const Artifacts& artifacts, SweepParam param, std::span<const double> values,
                            OracleClient* oracle, const Config& config, DecisionCache* cache = nullptr);
std::string sweep_csv(SweepParam param, std::span<const SweepRow> rows);

}  // namespace coldllm
