#include "coldllm/config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>

#include "coldllm/content.hpp"
#include "coldllm/random.hpp"

namespace coldllm {

namespace {

using nlohmann::json;

void check_keys(const json& obj, std::initializer_list<const char*> keys, const std::string& section) {
    if (!obj.is_object()) throw ValidationError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        bool known = false;
        for (const char* k : keys) known = known || key == k;
        if (!known) throw ValidationError("unknown config key '" + section + "." + key + "'");
    }
}

template <class T>
void read(const json& obj, const char* key, T& field) {
    if (obj.contains(key)) field = obj.at(key).get<T>();
}

json section(const json& doc, const char* name) {
    return doc.contains(name) ? doc.at(name) : json::object();
}

}  // namespace

json config_to_json(const Config& c) {
    const auto& d = c.data;
    const auto& p = d.planted;
    const auto& b = c.backbone;
    const auto& ct = c.content;
    const auto& f = c.filter.train;
    const auto& r = c.refiner;
    const auto& w = c.warmup;
    return {
        {"seed", c.seed},
        {"data",
         {{"source", d.source},
          {"path", d.path},
          {"cold_frac", d.cold_frac},
          {"users_file", d.users_file},
          {"items_file", d.items_file},
          {"ratings_file", d.ratings_file},
          {"movies_file", d.movies_file},
          {"min_rating", d.min_rating},
          {"planted",
           {{"users", p.users},
            {"warm_items", p.warm_items},
            {"cold_items", p.cold_items},
            {"clusters", p.clusters},
            {"groups_per_cluster", p.groups_per_cluster},
            {"p_interact", p.p_interact},
            {"noise_words", p.noise_words}}}}},
        {"backbone",
         {{"dim", b.dim},
          {"lr", b.lr},
          {"optimizer", b.optimizer},
          {"batch_size", b.batch_size},
          {"max_epochs", b.max_epochs},
          {"patience", b.patience},
          {"l2", b.l2},
          {"init_std", b.init_std},
          {"eval_users", b.eval_users},
          {"eval_k", b.eval_k}}},
        {"content",
         {{"provider", ct.provider},
          {"dim", ct.dim},
          {"hash_seed", ct.hash_seed},
          {"path", ct.path},
          {"url", ct.url},
          {"timeout_s", ct.timeout_s},
          {"max_inflight", ct.max_inflight},
          {"attempts", ct.attempts},
          {"backoff_ms", ct.backoff_ms}}},
        {"filter",
         {{"top_k", c.filter.top_k},
          {"hidden", f.hidden},
          {"out", f.out},
          {"lr", f.lr},
          {"batch_size", f.batch_size},
          {"max_epochs", f.max_epochs},
          {"patience", f.patience},
          {"weight_decay", f.weight_decay},
          {"coupled_weight", f.coupled_weight},
          {"label_pairs", f.label_pairs},
          {"extra_align_loss", f.extra_align_loss},
          {"eval_users", f.eval_users},
          {"eval_k", f.eval_k}}},
        {"refiner",
         {{"oracle", r.oracle},
          {"tau", r.tau},
          {"truth", r.truth},
          {"url", r.url},
          {"protocol", r.protocol},
          {"chat_path", r.chat_path},
          {"timeout_s", r.timeout_s},
          {"context_len", r.refiner.context_len},
          {"max_inflight", r.refiner.max_inflight},
          {"attempts", r.refiner.retry.attempts},
          {"backoff_ms", r.refiner.retry.backoff_ms},
          {"fallback", r.refiner.fallback_top1 ? "top1" : "leave-cold"},
          {"decision_cache", r.decision_cache},
          {"finetune_mode", r.finetune_mode},
          {"finetune_positives", r.finetune_positives}}},
        {"warmup",
         {{"lr", w.lr},
          {"steps", w.steps},
          {"negatives", w.negatives},
          {"init", to_string(w.init)},
          {"optimizer", w.optimizer},
          {"skip_missing", w.skip_missing},
          {"retrain_with_simulated", w.retrain_with_simulated},
          {"max_inflight", w.max_inflight}}},
        {"eval", {{"k", c.eval.k}, {"users", c.eval.users}}},
    };
}

Config config_from_json(const json& doc) {
    Config c;
    try {
        check_keys(doc, {"seed", "data", "backbone", "content", "filter", "refiner", "warmup", "eval"}, "config");
        read(doc, "seed", c.seed);

        const auto d = section(doc, "data");
        check_keys(d, {"source", "path", "cold_frac", "users_file", "items_file", "ratings_file", "movies_file",
                       "min_rating", "planted"},
                   "data");
        read(d, "source", c.data.source);
        read(d, "path", c.data.path);
        read(d, "cold_frac", c.data.cold_frac);
        read(d, "users_file", c.data.users_file);
        read(d, "items_file", c.data.items_file);
        read(d, "ratings_file", c.data.ratings_file);
        read(d, "movies_file", c.data.movies_file);
        read(d, "min_rating", c.data.min_rating);
        const auto p = section(d, "planted");
        check_keys(p, {"users", "warm_items", "cold_items", "clusters", "groups_per_cluster", "p_interact", "noise_words"},
                   "data.planted");
        read(p, "users", c.data.planted.users);
        read(p, "warm_items", c.data.planted.warm_items);
        read(p, "cold_items", c.data.planted.cold_items);
        read(p, "clusters", c.data.planted.clusters);
        read(p, "groups_per_cluster", c.data.planted.groups_per_cluster);
        read(p, "p_interact", c.data.planted.p_interact);
        read(p, "noise_words", c.data.planted.noise_words);

        const auto b = section(doc, "backbone");
        check_keys(b, {"dim", "lr", "optimizer", "batch_size", "max_epochs", "patience", "l2", "init_std", "eval_users",
                       "eval_k"},
                   "backbone");
        read(b, "dim", c.backbone.dim);
        read(b, "lr", c.backbone.lr);
        read(b, "optimizer", c.backbone.optimizer);
        read(b, "batch_size", c.backbone.batch_size);
        read(b, "max_epochs", c.backbone.max_epochs);
        read(b, "patience", c.backbone.patience);
        read(b, "l2", c.backbone.l2);
        read(b, "init_std", c.backbone.init_std);
        read(b, "eval_users", c.backbone.eval_users);
        read(b, "eval_k", c.backbone.eval_k);

        const auto ct = section(doc, "content");
        check_keys(ct, {"provider", "dim", "hash_seed", "path", "url", "timeout_s", "max_inflight", "attempts",
                        "backoff_ms"},
                   "content");
        read(ct, "provider", c.content.provider);
        read(ct, "dim", c.content.dim);
        read(ct, "hash_seed", c.content.hash_seed);
        read(ct, "path", c.content.path);
        read(ct, "url", c.content.url);
        read(ct, "timeout_s", c.content.timeout_s);
        read(ct, "max_inflight", c.content.max_inflight);
        read(ct, "attempts", c.content.attempts);
        read(ct, "backoff_ms", c.content.backoff_ms);

        const auto f = section(doc, "filter");
        check_keys(f, {"top_k", "hidden", "out", "lr", "batch_size", "max_epochs", "patience", "weight_decay",
                       "coupled_weight", "label_pairs", "extra_align_loss", "eval_users", "eval_k"},
                   "filter");
        read(f, "top_k", c.filter.top_k);
        read(f, "hidden", c.filter.train.hidden);
        read(f, "out", c.filter.train.out);
        read(f, "lr", c.filter.train.lr);
        read(f, "batch_size", c.filter.train.batch_size);
        read(f, "max_epochs", c.filter.train.max_epochs);
        read(f, "patience", c.filter.train.patience);
        read(f, "weight_decay", c.filter.train.weight_decay);
        read(f, "coupled_weight", c.filter.train.coupled_weight);
        read(f, "label_pairs", c.filter.train.label_pairs);
        read(f, "extra_align_loss", c.filter.train.extra_align_loss);
        read(f, "eval_users", c.filter.train.eval_users);
        read(f, "eval_k", c.filter.train.eval_k);

        const auto r = section(doc, "refiner");
        check_keys(r, {"oracle", "tau", "truth", "url", "protocol", "chat_path", "timeout_s", "context_len",
                       "max_inflight", "attempts", "backoff_ms", "fallback", "decision_cache", "finetune_mode",
                       "finetune_positives"},
                   "refiner");
        read(r, "oracle", c.refiner.oracle);
        read(r, "tau", c.refiner.tau);
        read(r, "truth", c.refiner.truth);
        read(r, "url", c.refiner.url);
        read(r, "protocol", c.refiner.protocol);
        read(r, "chat_path", c.refiner.chat_path);
        read(r, "timeout_s", c.refiner.timeout_s);
        read(r, "context_len", c.refiner.refiner.context_len);
        read(r, "max_inflight", c.refiner.refiner.max_inflight);
        read(r, "attempts", c.refiner.refiner.retry.attempts);
        read(r, "backoff_ms", c.refiner.refiner.retry.backoff_ms);
        if (r.contains("fallback")) {
            const auto mode = r.at("fallback").get<std::string>();
            if (mode != "top1" && mode != "leave-cold")
                throw ValidationError("refiner.fallback must be 'top1' or 'leave-cold'");
            c.refiner.refiner.fallback_top1 = mode == "top1";
        }
        read(r, "decision_cache", c.refiner.decision_cache);
        read(r, "finetune_mode", c.refiner.finetune_mode);
        read(r, "finetune_positives", c.refiner.finetune_positives);

        const auto w = section(doc, "warmup");
        check_keys(w, {"lr", "steps", "negatives", "init", "optimizer", "skip_missing", "retrain_with_simulated",
                       "max_inflight"},
                   "warmup");
        read(w, "lr", c.warmup.lr);
        read(w, "steps", c.warmup.steps);
        read(w, "negatives", c.warmup.negatives);
        if (w.contains("init")) c.warmup.init = parse_warmup_init(w.at("init").get<std::string>());
        read(w, "optimizer", c.warmup.optimizer);
        read(w, "skip_missing", c.warmup.skip_missing);
        read(w, "retrain_with_simulated", c.warmup.retrain_with_simulated);
        read(w, "max_inflight", c.warmup.max_inflight);

        const auto e = section(doc, "eval");
        check_keys(e, {"k", "users"}, "eval");
        read(e, "k", c.eval.k);
        read(e, "users", c.eval.users);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad config value: ") + e.what());
    }
    validate_config(c);
    return c;
}

void validate_config(const Config& c) {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) throw ValidationError("invalid config: " + what);
    };
    require(c.data.source == "citeulike" || c.data.source == "movielens" || c.data.source == "planted",
            "data.source must be citeulike, movielens or planted");
    require(c.data.cold_frac >= 0.0 && c.data.cold_frac < 1.0, "data.cold_frac must be in [0, 1)");
    require(c.backbone.dim >= 1, "backbone.dim must be >= 1");
    require(c.backbone.lr > 0.0, "backbone.lr must be > 0");
    require(c.backbone.optimizer == "adam" || c.backbone.optimizer == "sgd", "backbone.optimizer must be adam or sgd");
    require(c.content.provider == "mock" || c.content.provider == "file" || c.content.provider == "http",
            "content.provider must be mock, file or http");
    require(c.content.dim >= 1, "content.dim must be >= 1");
    require(c.filter.top_k >= 1, "filter.top_k must be >= 1");
    require(c.filter.train.hidden >= 1 && c.filter.train.out >= 1, "filter widths must be >= 1");
    require(c.filter.train.lr >= 0.0, "filter.lr must be >= 0");
    require(c.refiner.oracle == "mock" || c.refiner.oracle == "planted" || c.refiner.oracle == "http" ||
                c.refiner.oracle == "always-yes" || c.refiner.oracle == "always-no",
            "refiner.oracle must be mock, planted, http, always-yes or always-no");
    require(c.refiner.protocol == "simulate" || c.refiner.protocol == "chat", "refiner.protocol must be simulate or chat");
    require(c.refiner.refiner.context_len >= 1, "refiner.context_len must be >= 1");
    require(c.refiner.finetune_mode == "offline" || c.refiner.finetune_mode == "online",
            "refiner.finetune_mode must be offline or online");
    require(c.warmup.lr >= 0.0, "warmup.lr must be >= 0");
    require(c.warmup.optimizer == "adam" || c.warmup.optimizer == "sgd", "warmup.optimizer must be adam or sgd");
    require(c.eval.k >= 1 && c.eval.users >= 1, "eval.k and eval.users must be >= 1");
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ValidationError("config " + path.string() + " is not valid JSON");
    return config_from_json(doc);
}

std::string config_fingerprint(const Config& config) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config_to_json(config).dump())));
    return buf;
}

BackboneConfig backbone_config(const Config& config) {
    auto out = config.backbone;
    out.seed = derive_seed(config.seed, "stage.backbone");
    return out;
}

FilterTrainConfig filter_config(const Config& config, FilterVariant variant) {
    auto out = config.filter.train;
    out.seed = derive_seed(config.seed, "stage.filter", variant == FilterVariant::behavior ? 0 : 1);
    return out;
}

WarmupConfig warmup_config(const Config& config) {
    auto out = config.warmup;
    out.seed = derive_seed(config.seed, "stage.warmup");
    return out;
}

EvalConfig eval_config(const Config& config) {
    auto out = config.eval;
    out.seed = config.seed;
    return out;
}

}  // namespace coldllm
