#include "coldllm/pipeline.hpp"

#include <cstdio>
#include <mutex>
#include <sstream>

#include <spdlog/spdlog.h>

#include "coldllm/parallel.hpp"
#include "coldllm/synthetic.hpp"

namespace coldllm {

std::string to_string(AblationVariant variant) {
    switch (variant) {
        case AblationVariant::full: return "full";
        case AblationVariant::no_lsf_r: return "no-LSF-R";
        case AblationVariant::no_bf_r: return "no-BF-R";
        case AblationVariant::no_lsf: return "no-LSF";
        case AblationVariant::no_bf: return "no-BF";
        case AblationVariant::no_r: return "no-R";
    }
    return "?";
}

AblationVariant parse_ablation_variant(const std::string& name) {
    for (auto v : all_variants()) {
        if (to_string(v) == name) return v;
    }
    std::string lower;
    for (char c : name) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (auto v : all_variants()) {
        std::string canon;
        for (char c : to_string(v)) canon.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (canon == lower) return v;
    }
    throw ValidationError("unknown ablation variant '" + name + "' (expected full, no-LSF-R, no-BF-R, no-LSF, no-BF or no-R)");
}

std::vector<AblationVariant> all_variants() {
    return {AblationVariant::full, AblationVariant::no_lsf_r, AblationVariant::no_bf_r,
            AblationVariant::no_lsf, AblationVariant::no_bf,   AblationVariant::no_r};
}

VariantSpec spec_of(AblationVariant variant) {
    switch (variant) {
        case AblationVariant::full: return {true, true, true};
        case AblationVariant::no_lsf_r: return {false, true, false};
        case AblationVariant::no_bf_r: return {true, false, false};
        case AblationVariant::no_lsf: return {false, true, true};
        case AblationVariant::no_bf: return {true, false, true};
        case AblationVariant::no_r: return {true, true, false};
    }
    return {};
}

Corpus load_dataset(const DataConfig& data) {
    if (data.source == "citeulike") {
        CiteULikeOptions options;
        options.users_file = data.users_file;
        options.items_file = data.items_file;
        return load_citeulike(data.path, options);
    }
    if (data.source == "movielens") {
        MovieLensOptions options;
        options.ratings_file = data.ratings_file;
        options.movies_file = data.movies_file;
        options.min_rating = data.min_rating;
        return load_movielens(data.path, options);
    }
    if (data.source == "planted") return make_planted(data.planted).corpus;
    throw ValidationError("unknown data source '" + data.source + "'");
}

std::unique_ptr<ContentProvider> make_content_provider(const ContentConfig& config) {
    if (config.provider == "mock") return std::make_unique<MockContentProvider>(config.dim, config.hash_seed);
    if (config.provider == "file") {
        if (config.path.empty()) throw ValidationError("file content provider needs content.path");
        return std::make_unique<FileContentProvider>(config.path);
    }
    if (config.provider == "http") {
        if (config.url.empty()) throw ValidationError("http content provider needs content.url");
        HttpEndpoint endpoint{config.url, config.timeout_s, 1, config.backoff_ms};
        return std::make_unique<HttpContentProvider>(endpoint);
    }
    throw ValidationError("unknown content provider '" + config.provider + "'");
}

ContentCache build_content(ContentProvider& provider, const ItemCatalog& catalog, std::size_t max_inflight) {
    std::vector<RawVector> vectors(catalog.size());
    parallel_for_bounded(catalog.size(), provider.concurrent() ? max_inflight : 1, [&](std::size_t i) {
        vectors[i] = embed_content(provider, static_cast<ItemId>(i), catalog.text(static_cast<ItemId>(i)));
    });
    const std::size_t dim = vectors.empty() ? provider.dim() : vectors.front().size();
    auto description = provider.describe();
    description["dim"] = dim;
    ContentCache cache(catalog.size(), dim, description);
    for (std::size_t i = 0; i < vectors.size(); ++i) cache.put(static_cast<ItemId>(i), vectors[i]);
    return cache;
}

std::unique_ptr<OracleClient> make_oracle(const RefinerSection& config, const ContentCache* content,
                                          std::span<const Interaction> truth) {
    if (config.oracle == "mock") {
        if (!content) throw ValidationError("mock oracle needs the content cache");
        return std::make_unique<MockThresholdOracle>(*content, config.tau);
    }
    if (config.oracle == "planted") {
        if (truth.empty()) throw ValidationError("planted oracle needs ground-truth pairs (refiner.truth)");
        return std::make_unique<PlantedOracle>(truth);
    }
    if (config.oracle == "always-yes") return std::make_unique<ConstantOracle>(true);
    if (config.oracle == "always-no") return std::make_unique<ConstantOracle>(false);
    if (config.oracle == "http") {
        if (config.url.empty()) throw ValidationError("http oracle needs refiner.url");
        HttpEndpoint endpoint{config.url, config.timeout_s, 1, config.refiner.retry.backoff_ms};
        return std::make_unique<HttpOracle>(endpoint,
                                            config.protocol == "chat" ? HttpOracleProtocol::chat
                                                                      : HttpOracleProtocol::simulate,
                                            config.chat_path);
    }
    throw ValidationError("unknown oracle '" + config.oracle + "'");
}

EmbeddingTable context_item_vectors(const TwoTowerFilter* behavior, const TwoTowerFilter* coupled,
                                    const FilterInputs& inputs) {
    if (behavior) return map_all_items(*behavior, inputs);
    if (coupled) return map_all_items(*coupled, inputs);
    return inputs.item_content;
}

TwoTowerFilter fit_behavior_filter(const FilterInputs& inputs, const ColdWarmSplit& split,
                                   const FilterTrainConfig& config, FilterHistory* history) {
    auto filter = make_filter(FilterVariant::behavior, inputs.behavior_dim, inputs.content_dim, config.hidden,
                              config.out, config.seed);
    return train_behavior_filter(std::move(filter), inputs, split, config, history);
}

CoupledFit fit_coupled_filter(const FilterInputs& inputs, const ColdWarmSplit& split, const ItemCatalog& catalog,
                              const EmbeddingTable& context_vectors, OracleClient& oracle,
                              const FilterTrainConfig& config, const RefinerConfig& refiner, DecisionCache* cache) {
    const InteractionLog history(split.num_users, split.num_items, split.warm_train);
    const RefineEnvironment env{&history, &catalog, &context_vectors};
    const auto pool = sample_label_pairs(split, config.label_pairs, derive_seed(config.seed, "filter.L.labels"));
    CoupledFit fit;
    const auto labels = label_pairs(oracle, pool, env, refiner, cache, &fit.label_failures);
    fit.labels = labels.size();
    auto filter = make_filter(FilterVariant::coupled, inputs.behavior_dim, inputs.content_dim, config.hidden,
                              config.out, config.seed);
    fit.filter = train_coupled_filter(std::move(filter), inputs, split, labels, config, &fit.history);
    return fit;
}

Artifacts prepare_artifacts(const Corpus& corpus, const ColdWarmSplit& split, const Config& config,
                            OracleClient* oracle, DecisionCache* cache, const BackboneModel* backbone,
                            const ContentCache* content) {
    Artifacts a;
    a.split = split;
    a.catalog = corpus.catalog;
    a.history = InteractionLog(split.num_users, split.num_items, split.warm_train);
    a.backbone = backbone ? *backbone : train_backbone(split, backbone_config(config));
    if (content) {
        a.content = *content;
    } else {
        auto provider = make_content_provider(config.content);
        a.content = build_content(*provider, corpus.catalog, config.content.max_inflight);
    }
    a.inputs = build_filter_inputs(a.backbone, a.content, a.history);
    a.behavior = fit_behavior_filter(a.inputs, split, filter_config(config, FilterVariant::behavior));
    a.context_vectors = context_item_vectors(&*a.behavior, nullptr, a.inputs);
    if (oracle) {
        a.coupled = fit_coupled_filter(a.inputs, split, a.catalog, a.context_vectors, *oracle,
                                       filter_config(config, FilterVariant::coupled), config.refiner.refiner, cache)
                        .filter;
    }
    return a;
}

std::vector<SimulationResult> simulate_cold_items(const Artifacts& artifacts, AblationVariant variant,
                                                  OracleClient* oracle, std::size_t k, const RefinerConfig& refiner,
                                                  DecisionCache* cache) {
    const auto spec = spec_of(variant);
    if (spec.coupled && !artifacts.coupled)
        throw ValidationError("variant " + to_string(variant) + " needs the coupled filter L");
    if (spec.behavior && !artifacts.behavior)
        throw ValidationError("variant " + to_string(variant) + " needs the behavior filter B");
    if (spec.refine && !oracle) throw ValidationError("variant " + to_string(variant) + " needs an oracle");

    std::optional<FilterRetriever> coupled, behavior;
    if (spec.coupled) coupled.emplace(*artifacts.coupled, artifacts.inputs);
    if (spec.behavior) behavior.emplace(*artifacts.behavior, artifacts.inputs);
    const auto env = artifacts.environment();
    std::vector<SimulationResult> out;
    for (ItemId item : artifacts.split.cold_items) {
        out.push_back(simulate_for_item(item, artifacts.content.get(item), coupled ? &*coupled : nullptr,
                                        behavior ? &*behavior : nullptr, spec.refine ? oracle : nullptr, env, k,
                                        refiner, cache));
    }
    return out;
}

std::vector<EvalTask> all_tasks() {
    return {EvalTask::overall, EvalTask::warm, EvalTask::cold};
}

VariantRun run_variant(const Artifacts& artifacts, AblationVariant variant, OracleClient* oracle,
                       const Config& config, DecisionCache* cache) {
    VariantRun run;
    run.variant = variant;
    run.simulations =
        simulate_cold_items(artifacts, variant, oracle, config.filter.top_k, config.refiner.refiner, cache);
    const auto warm_cfg = warmup_config(config);
    if (warm_cfg.retrain_with_simulated) {
        const auto augmented = with_simulated_interactions(artifacts.split, run.simulations);
        run.model = train_backbone(augmented, backbone_config(config));
    } else {
        run.model = warm_all_cold(artifacts.split, run.simulations, artifacts.backbone,
                                  artifacts.behavior ? &*artifacts.behavior : nullptr, &artifacts.content, warm_cfg,
                                  &run.warmup);
    }
    const auto tasks = all_tasks();
    run.report = evaluate(backbone_scorer(run.model), artifacts.split, tasks, eval_config(config),
                          config_fingerprint(config));
    if (spec_of(variant).refine && !artifacts.split.cold_items.empty()) run.adoption = adoption_rate(run.simulations);
    return run;
}

VariantRun run_ablation(AblationVariant variant, const Config& config, const Corpus& corpus,
                        const ColdWarmSplit& split, OracleClient* oracle, DecisionCache* cache) {
    const auto spec = spec_of(variant);
    const auto artifacts = prepare_artifacts(corpus, split, config, spec.coupled ? oracle : nullptr, cache);
    return run_variant(artifacts, variant, spec.refine ? oracle : nullptr, config, cache);
}

SweepParam parse_sweep_param(const std::string& name) {
    if (name == "K" || name == "k" || name == "top_k") return SweepParam::top_k;
    if (name == "warmup-lr" || name == "warmup_lr" || name == "lr") return SweepParam::warmup_lr;
    throw ValidationError("unknown sweep parameter '" + name + "' (expected K or warmup-lr)");
}

std::string to_string(SweepParam param) {
    return param == SweepParam::top_k ? "K" : "warmup-lr";
}

std::vector<SweepRow> sweep(const Artifacts& artifacts, SweepParam param, std::span<const double> values,
                            OracleClient* oracle, const Config& config, DecisionCache* cache) {
    if (values.empty()) throw ValidationError("sweep needs at least one value");
    std::vector<SweepRow> rows;
    for (double v : values) {
        Config c = config;
        if (param == SweepParam::top_k) {
            if (v < 1.0 || v != static_cast<double>(static_cast<std::size_t>(v)))
                throw ValidationError("K must be a positive integer");
            c.filter.top_k = static_cast<std::size_t>(v);
        } else {
            if (v < 0.0) throw ValidationError("warmup lr must be >= 0");
            c.warmup.lr = v;
        }
        auto run = run_variant(artifacts, AblationVariant::full, oracle, c, cache);
        rows.push_back({v, std::move(run.report), run.adoption});
    }
    return rows;
}

std::string sweep_csv(SweepParam param, std::span<const SweepRow> rows) {
    std::ostringstream out;
    out << to_string(param)
        << ",overall_recall,overall_ndcg,warm_recall,warm_ndcg,cold_recall,cold_ndcg,adoption_rate\n";
    char buf[64];
    auto num = [&](double x) {
        std::snprintf(buf, sizeof buf, "%.6f", x);
        return std::string(buf);
    };
    for (const auto& row : rows) {
        if (param == SweepParam::top_k) {
            out << static_cast<std::size_t>(row.value);
        } else {
            std::snprintf(buf, sizeof buf, "%g", row.value);
            out << buf;
        }
        for (auto task : all_tasks()) {
            const auto& t = row.report.at(task);
            out << ',' << num(t.recall) << ',' << num(t.ndcg);
        }
        out << ',' << (row.adoption ? num(row.adoption->rate) : std::string());
        out << '\n';
    }
    return out.str();
}

}  // namespace coldllm
