#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "coldllm/backbone.hpp"
#include "coldllm/config.hpp"
#include "coldllm/content.hpp"
#include "coldllm/corpus.hpp"
#include "coldllm/evaluation.hpp"
#include "coldllm/filter.hpp"
#include "coldllm/pipeline.hpp"
#include "coldllm/refiner.hpp"
#include "coldllm/synthetic.hpp"
#include "coldllm/warmup.hpp"

namespace fs = std::filesystem;
using namespace coldllm;
using nlohmann::json;

namespace {

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "coldllm_run";
    bool verbose = false;
};

// Stage artifacts inside the --out directory.
struct Workspace {
    fs::path root;

    fs::path corpus() const { return root / "corpus"; }
    fs::path truth() const { return root / "truth.tsv"; }
    fs::path planted() const { return root / "planted.json"; }
    fs::path split() const { return root / "split.json"; }
    fs::path content() const { return root / "content.cemb"; }
    fs::path decisions() const { return root / "decisions.jsonl"; }
    fs::path simulations() const { return root / "simulations.json"; }
    fs::path warmup_report() const { return root / "warmup_report.json"; }

    bool has_filter(FilterVariant v) const { return fs::exists(root / ("filter_" + to_string(v) + ".json")); }
    bool has_warm_model() const { return fs::exists(root / "warm_items.cemb"); }
};

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("missing " + path.string() + " (run the earlier stage first)");
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ValidationError(path.string() + " is not valid JSON");
    return doc;
}

Config resolve_config(const Globals& g) {
    Config c = g.config_path.empty() ? Config{} : load_config(g.config_path);
    if (g.seed) c.seed = *g.seed;
    return c;
}

std::vector<Interaction> load_pairs_tsv(const fs::path& path) {
    return load_truth(path);
}

std::vector<Interaction> planted_truth(const Workspace& ws, const Config& c) {
    fs::path path = c.refiner.truth.empty() ? ws.truth() : fs::path(c.refiner.truth);
    if (c.refiner.oracle != "planted") return {};
    return load_truth(path);
}

struct OracleBundle {
    std::vector<Interaction> truth;
    std::unique_ptr<OracleClient> client;
    DecisionCache cache;
    bool use_cache = false;
};

void open_oracle(OracleBundle& bundle, const Workspace& ws, const Config& c, const ContentCache& content) {
    bundle.truth = planted_truth(ws, c);
    bundle.client = make_oracle(c.refiner, &content, bundle.truth);
    bundle.use_cache = c.refiner.decision_cache;
    if (bundle.use_cache) bundle.cache = DecisionCache::load(ws.decisions());
}

void close_oracle(OracleBundle& bundle, const Workspace& ws) {
    if (bundle.use_cache) bundle.cache.save(ws.decisions());
}

// Everything trained so far, loaded from the workspace.
Artifacts load_artifacts(const Workspace& ws, const Config& c, bool need_behavior) {
    const Corpus corpus = load_corpus(ws.corpus());
    Artifacts a;
    a.split = load_split(ws.split());
    a.catalog = corpus.catalog;
    a.history = InteractionLog(a.split.num_users, a.split.num_items, a.split.warm_train);
    a.backbone = load_backbone(ws.root, "backbone");
    a.content = ContentCache::load(ws.content());
    a.inputs = build_filter_inputs(a.backbone, a.content, a.history);
    if (ws.has_filter(FilterVariant::behavior)) a.behavior = load_filter(ws.root, "filter_B");
    if (ws.has_filter(FilterVariant::coupled)) a.coupled = load_filter(ws.root, "filter_L");
    if (need_behavior && !a.behavior) throw ValidationError("filter B is not trained (run train-filter --variant B)");
    a.context_vectors = context_item_vectors(a.behavior ? &*a.behavior : nullptr, a.coupled ? &*a.coupled : nullptr,
                                             a.inputs);
    (void)c;
    return a;
}

void print_counts(const Corpus& corpus) {
    std::printf("users=%zu items=%zu interactions=%zu\n", corpus.log.num_users(), corpus.catalog.size(),
                corpus.log.size());
}

int cmd_ingest(const Globals& g, const std::string& source, const std::string& path) {
    Config c = resolve_config(g);
    if (!source.empty()) c.data.source = source;
    if (!path.empty()) c.data.path = path;
    validate_config(c);
    const Workspace ws{g.out};
    fs::create_directories(ws.root);
    if (c.data.source == "planted") {
        auto pc = c.data.planted;
        pc.seed = derive_seed(c.seed, "data.planted");
        const auto data = make_planted(pc);
        save_corpus(data.corpus, ws.corpus());
        save_truth(data.truth, ws.truth());
        write_json(ws.planted(), {{"cold_items", data.cold_items}, {"groups", data.config.clusters * data.config.groups_per_cluster}});
        print_counts(data.corpus);
        return 0;
    }
    if (c.data.path.empty()) throw ValidationError("ingest needs a dataset directory (--path or data.path)");
    const auto corpus = load_dataset(c.data);
    save_corpus(corpus, ws.corpus());
    print_counts(corpus);
    return 0;
}

int cmd_split(const Globals& g, std::optional<double> cold_frac) {
    Config c = resolve_config(g);
    if (cold_frac) c.data.cold_frac = *cold_frac;
    validate_config(c);
    const Workspace ws{g.out};
    const auto corpus = load_corpus(ws.corpus());
    const std::uint64_t seed = derive_seed(c.seed, "stage.split");
    ColdWarmSplit split;
    if (fs::exists(ws.planted())) {
        auto cold = read_json(ws.planted()).at("cold_items").get<std::vector<ItemId>>();
        const double frac = static_cast<double>(cold.size()) / static_cast<double>(corpus.catalog.size());
        split = split_with_cold_items(corpus.log, std::move(cold), seed, frac);
    } else {
        split = make_cold_split(corpus.log, c.data.cold_frac, seed);
    }
    save_split(split, ws.split());
    std::printf("warm_items=%zu cold_items=%zu warm_train=%zu warm_val=%zu warm_test=%zu cold_val=%zu cold_test=%zu\n",
                split.warm_items.size(), split.cold_items.size(), split.warm_train.size(), split.warm_val.size(),
                split.warm_test.size(), split.cold_val.size(), split.cold_test.size());
    return 0;
}

int cmd_train_backbone(const Globals& g) {
    const Config c = resolve_config(g);
    const Workspace ws{g.out};
    const auto split = load_split(ws.split());
    BackboneHistory history;
    const auto model = train_backbone(split, backbone_config(c), &history);
    save_backbone(model, ws.root, "backbone");
    write_json(ws.root / "backbone_history.json", {{"epoch_loss", history.epoch_loss},
                                                   {"val_ndcg", history.val_ndcg},
                                                   {"best_epoch", history.best_epoch},
                                                   {"lr_halvings", history.lr_halvings}});
    std::printf("epochs=%zu best_epoch=%zu best_val_ndcg=%.6f\n", history.epoch_loss.size(), history.best_epoch,
                history.val_ndcg.empty() ? 0.0 : history.val_ndcg[history.best_epoch - 1]);
    return 0;
}

int cmd_cache_content(const Globals& g) {
    const Config c = resolve_config(g);
    const Workspace ws{g.out};
    const auto corpus = load_corpus(ws.corpus());
    auto provider = make_content_provider(c.content);
    WarmCacheOptions options;
    options.max_inflight = c.content.max_inflight;
    options.attempts = c.content.attempts;
    options.backoff_ms = c.content.backoff_ms;
    const auto stats = warm_cache(*provider, corpus.catalog, ws.content(), options);
    std::printf("items=%zu cached=%zu provider_calls=%zu\n", corpus.catalog.size(), stats.hits, stats.provider_calls);
    return 0;
}

json history_json(const FilterHistory& h) {
    return {{"epoch_loss", h.epoch_loss}, {"epoch_ce", h.epoch_ce}, {"validation", h.validation},
            {"best_epoch", h.best_epoch}};
}

int cmd_train_filter(const Globals& g, const std::string& variant_name) {
    const Config c = resolve_config(g);
    const Workspace ws{g.out};
    const auto variant = parse_filter_variant(variant_name);
    auto a = load_artifacts(ws, c, false);
    if (variant == FilterVariant::behavior) {
        FilterHistory history;
        const auto filter = fit_behavior_filter(a.inputs, a.split, filter_config(c, variant), &history);
        save_filter(filter, ws.root, "filter_B", history_json(history));
        std::printf("filter=B epochs=%zu best_epoch=%zu\n", history.epoch_loss.size(), history.best_epoch);
        return 0;
    }
    OracleBundle oracle;
    open_oracle(oracle, ws, c, a.content);
    try {
        auto fit = fit_coupled_filter(a.inputs, a.split, a.catalog, a.context_vectors, *oracle.client,
                                      filter_config(c, variant), c.refiner.refiner,
                                      oracle.use_cache ? &oracle.cache : nullptr);
        auto meta = history_json(fit.history);
        meta["labels"] = fit.labels;
        meta["label_failures"] = fit.label_failures;
        save_filter(fit.filter, ws.root, "filter_L", meta);
        std::printf("filter=L labels=%zu label_failures=%zu epochs=%zu best_epoch=%zu\n", fit.labels,
                    fit.label_failures, fit.history.epoch_loss.size(), fit.history.best_epoch);
    } catch (...) {
        close_oracle(oracle, ws);
        throw;
    }
    close_oracle(oracle, ws);
    return 0;
}

int cmd_export_finetune(const Globals& g, const std::string& mode, const std::string& negatives_path,
                        std::size_t max_positives) {
    const Config c = resolve_config(g);
    const Workspace ws{g.out};
    auto a = load_artifacts(ws, c, false);
    FinetuneOptions options;
    options.mode = parse_finetune_mode(mode.empty() ? c.refiner.finetune_mode : mode);
    options.max_positives = max_positives > 0 ? max_positives : c.refiner.finetune_positives;
    options.context_len = c.refiner.refiner.context_len;
    options.seed = derive_seed(c.seed, "stage.finetune");
    std::vector<Interaction> negatives;
    if (!negatives_path.empty()) negatives = load_pairs_tsv(negatives_path);
    const auto records = prepare_finetune_data(a.split, a.environment(), options, negatives);
    write_finetune_jsonl(records, ws.root / "finetune.jsonl");
    std::size_t yes = 0;
    for (const auto& r : records) yes += r.completion == "Yes" ? 1 : 0;
    std::printf("records=%zu yes=%zu no=%zu\n", records.size(), yes, records.size() - yes);
    return 0;
}

json simulation_summary(std::span<const SimulationResult> sims, const std::optional<AdoptionStats>& adoption) {
    std::size_t fallback = 0, users = 0;
    for (const auto& s : sims) {
        fallback += s.fallback ? 1 : 0;
        users += s.users.size();
    }
    json out = {{"items", sims.size()}, {"simulated_pairs", users}, {"fallback_items", fallback}};
    if (adoption)
        out["adoption"] = {{"filtered", adoption->filtered}, {"accepted", adoption->accepted}, {"rate", adoption->rate}};
    return out;
}

int cmd_simulate(const Globals& g, const std::string& variant_name) {
    const Config c = resolve_config(g);
    const Workspace ws{g.out};
    const auto variant = parse_ablation_variant(variant_name);
    auto a = load_artifacts(ws, c, false);
    OracleBundle oracle;
    if (spec_of(variant).refine) open_oracle(oracle, ws, c, a.content);
    std::vector<SimulationResult> sims;
    try {
        sims = simulate_cold_items(a, variant, oracle.client.get(), c.filter.top_k, c.refiner.refiner,
                                   oracle.use_cache ? &oracle.cache : nullptr);
    } catch (...) {
        close_oracle(oracle, ws);
        throw;
    }
    close_oracle(oracle, ws);
    std::optional<AdoptionStats> adoption;
    if (spec_of(variant).refine && !sims.empty()) adoption = adoption_rate(sims);
    auto doc = simulations_to_json(sims);
    doc["variant"] = to_string(variant);
    doc["summary"] = simulation_summary(sims, adoption);
    write_json(ws.simulations(), doc);
    std::cout << doc["summary"].dump() << "\n";
    return 0;
}

int cmd_warmup(const Globals& g) {
    const Config c = resolve_config(g);
    const Workspace ws{g.out};
    auto a = load_artifacts(ws, c, false);
    const auto sims = simulations_from_json(read_json(ws.simulations()));
    const auto cfg = warmup_config(c);
    BackboneModel model;
    WarmupReport report;
    if (cfg.retrain_with_simulated) {
        model = train_backbone(with_simulated_interactions(a.split, sims), backbone_config(c));
    } else {
        model = warm_all_cold(a.split, sims, a.backbone, a.behavior ? &*a.behavior : nullptr, &a.content, cfg, &report);
    }
    save_backbone(model, ws.root, "warm");
    write_json(ws.warmup_report(), report.to_json());
    std::printf("cold_items=%zu warmed=%zu skipped=%zu\n", a.split.cold_items.size(),
                report.items.size() - report.skipped, report.skipped);
    return 0;
}

int cmd_evaluate(const Globals& g, std::vector<std::string> task_names, const std::string& model_name) {
    const Config c = resolve_config(g);
    const Workspace ws{g.out};
    const auto split = load_split(ws.split());
    std::string prefix = model_name;
    if (prefix.empty()) prefix = ws.has_warm_model() ? "warm" : "backbone";
    if (prefix != "warm" && prefix != "backbone") throw ValidationError("--model must be warm or backbone");
    const auto model = load_backbone(ws.root, prefix);
    if (task_names.empty()) task_names = {"overall", "warm", "cold"};
    std::vector<EvalTask> tasks;
    for (const auto& t : task_names) tasks.push_back(parse_eval_task(t));
    const auto report = evaluate(backbone_scorer(model), split, tasks, eval_config(c), config_fingerprint(c));
    auto doc = report.to_json();
    doc["model"] = prefix;
    write_json(ws.root / "evaluation.json", doc);
    std::cout << report.to_table();
    return 0;
}

json run_json(const VariantRun& run) {
    json doc = {{"variant", to_string(run.variant)}, {"report", run.report.to_json()},
                {"simulation", simulation_summary(run.simulations, run.adoption)}};
    return doc;
}

int cmd_ablate(const Globals& g, std::vector<std::string> variants) {
    const Config c = resolve_config(g);
    const Workspace ws{g.out};
    auto a = load_artifacts(ws, c, false);
    if (variants.empty()) {
        for (auto v : all_variants()) variants.push_back(to_string(v));
    }
    OracleBundle oracle;
    bool need_oracle = false;
    for (const auto& name : variants) need_oracle = need_oracle || spec_of(parse_ablation_variant(name)).refine;
    if (need_oracle) open_oracle(oracle, ws, c, a.content);
    json all = json::array();
    try {
        for (const auto& name : variants) {
            const auto v = parse_ablation_variant(name);
            auto run = run_variant(a, v, spec_of(v).refine ? oracle.client.get() : nullptr, c,
                                   oracle.use_cache ? &oracle.cache : nullptr);
            auto doc = run_json(run);
            write_json(ws.root / ("ablation_" + to_string(v) + ".json"), doc);
            std::printf("%-9s cold_recall=%.4f cold_ndcg=%.4f overall_ndcg=%.4f\n", to_string(v).c_str(),
                        run.report.at(EvalTask::cold).recall, run.report.at(EvalTask::cold).ndcg,
                        run.report.at(EvalTask::overall).ndcg);
            all.push_back(std::move(doc));
        }
    } catch (...) {
        close_oracle(oracle, ws);
        throw;
    }
    close_oracle(oracle, ws);
    return 0;
}

std::vector<double> parse_values(const std::string& text) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw ValidationError("sweep value '" + item + "' is not a number");
        out.push_back(v);
    }
    if (out.empty()) throw ValidationError("sweep needs at least one value");
    return out;
}

int cmd_sweep(const Globals& g, const std::string& param_name, const std::string& values_text) {
    const Config c = resolve_config(g);
    const Workspace ws{g.out};
    const auto param = parse_sweep_param(param_name);
    const auto values = parse_values(values_text);
    auto a = load_artifacts(ws, c, false);
    OracleBundle oracle;
    open_oracle(oracle, ws, c, a.content);
    std::vector<SweepRow> rows;
    try {
        rows = sweep(a, param, values, oracle.client.get(), c, oracle.use_cache ? &oracle.cache : nullptr);
    } catch (...) {
        close_oracle(oracle, ws);
        throw;
    }
    close_oracle(oracle, ws);
    const auto csv = sweep_csv(param, rows);
    write_text(ws.root / ("sweep_" + to_string(param) + ".csv"), csv);
    std::cout << csv;
    return 0;
}

int cmd_default_config(const Globals& g, const std::string& write_path) {
    Config c;
    if (g.seed) c.seed = *g.seed;
    const auto text = config_to_json(c).dump(2) + "\n";
    if (!write_path.empty()) write_text(write_path, text);
    std::cout << text;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cold-start item warmup via a filter-then-refine simulation funnel"};
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed_value = 0;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed_value, "global seed (overrides the config)");
    app.add_option("--out", g.out, "working directory for artifacts")->capture_default_str();
    app.add_flag("-v,--verbose", g.verbose, "debug logging");

    std::string source, path;
    auto* ingest = app.add_subcommand("ingest", "load a dataset into the working directory");
    ingest->add_option("--source", source, "citeulike | movielens | planted");
    ingest->add_option("--path", path, "dataset directory");

    std::optional<double> cold_frac;
    auto* split = app.add_subcommand("split", "cold/warm item split");
    split->add_option("--cold-frac", cold_frac, "fraction of items held out as cold");

    auto* train_backbone_cmd = app.add_subcommand("train-backbone", "train the MF backbone with BPR");
    auto* cache_content = app.add_subcommand("cache-content", "embed item texts into the content cache");

    std::string filter_variant;
    auto* train_filter = app.add_subcommand("train-filter", "train filter B or the coupled filter L");
    train_filter->add_option("--variant", filter_variant, "B | L")->required();

    std::string ft_mode, ft_negatives;
    std::size_t ft_positives = 0;
    auto* export_ft = app.add_subcommand("export-finetune", "write prompt/completion fine-tuning records");
    export_ft->add_option("--mode", ft_mode, "offline | online");
    export_ft->add_option("--negatives", ft_negatives, "TSV of explicit negative (user, item) pairs for online mode");
    export_ft->add_option("--max-positives", ft_positives, "cap on sampled positives (0 = all)");

    std::string sim_variant = "full";
    auto* simulate = app.add_subcommand("simulate", "filter and refine simulated users for every cold item");
    simulate->add_option("--variant", sim_variant, "ablation variant")->capture_default_str();

    auto* warmup = app.add_subcommand("warmup", "optimise cold-item embeddings on the simulated users");

    std::vector<std::string> tasks;
    std::string model_name;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Recall/NDCG on the overall, warm and cold tasks");
    evaluate_cmd->add_option("--task", tasks, "overall | warm | cold (repeatable)");
    evaluate_cmd->add_option("--model", model_name, "warm | backbone (default: warm when present)");

    std::vector<std::string> variants;
    auto* ablate = app.add_subcommand("ablate", "simulate, warm up and evaluate ablation variants");
    ablate->add_option("--variant", variants, "full | no-LSF-R | no-BF-R | no-LSF | no-BF | no-R (repeatable)");

    std::string sweep_param, sweep_values;
    auto* sweep_cmd = app.add_subcommand("sweep", "re-run the funnel and warmup over a parameter grid");
    sweep_cmd->add_option("--param", sweep_param, "K | warmup-lr")->required();
    sweep_cmd->add_option("--values", sweep_values, "comma-separated values")->required();

    std::string write_path;
    auto* default_config = app.add_subcommand("default-config", "print the default configuration");
    default_config->add_option("--write", write_path, "also write it to this file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (seed_opt->count() > 0) g.seed = seed_value;
    spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::warn);

    try {
        if (*ingest) return cmd_ingest(g, source, path);
        if (*split) return cmd_split(g, cold_frac);
        if (*train_backbone_cmd) return cmd_train_backbone(g);
        if (*cache_content) return cmd_cache_content(g);
        if (*train_filter) return cmd_train_filter(g, filter_variant);
        if (*export_ft) return cmd_export_finetune(g, ft_mode, ft_negatives, ft_positives);
        if (*simulate) return cmd_simulate(g, sim_variant);
        if (*warmup) return cmd_warmup(g);
        if (*evaluate_cmd) return cmd_evaluate(g, tasks, model_name);
        if (*ablate) return cmd_ablate(g, variants);
        if (*sweep_cmd) return cmd_sweep(g, sweep_param, sweep_values);
        if (*default_config) return cmd_default_config(g, write_path);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "failed: %s\n", e.what());
        return 2;
    }
    return 1;
}
