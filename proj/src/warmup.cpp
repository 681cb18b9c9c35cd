#include "coldllm/warmup.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <spdlog/spdlog.h>

#include "coldllm/linalg.hpp"
#include "coldllm/parallel.hpp"
#include "coldllm/random.hpp"

namespace coldllm {

std::string to_string(WarmupInit init) {
    switch (init) {
        case WarmupInit::user_mean: return "user-mean";
        case WarmupInit::filter_map: return "filter-map";
        case WarmupInit::zero: return "zero";
    }
    return "?";
}

WarmupInit parse_warmup_init(const std::string& name) {
    if (name == "user-mean" || name == "user_mean") return WarmupInit::user_mean;
    if (name == "filter-map" || name == "filter_map") return WarmupInit::filter_map;
    if (name == "zero") return WarmupInit::zero;
    throw ValidationError("unknown warmup init '" + name + "' (expected user-mean, filter-map or zero)");
}

std::vector<double> init_cold_embedding(std::span<const UserId> users, const BackboneModel& backbone,
                                        const TwoTowerFilter* behavior_filter, std::span<const float> raw,
                                        WarmupInit mode) {
    const std::size_t dim = backbone.dim();
    switch (mode) {
        case WarmupInit::zero: return std::vector<double>(dim, 0.0);
        case WarmupInit::user_mean: {
            if (users.empty()) throw ValidationError("user-mean init needs at least one simulated user");
            std::vector<double> mean(dim, 0.0);
            for (UserId u : users) {
                auto e = backbone.users.row(u);
                for (std::size_t k = 0; k < dim; ++k) mean[k] += e[k];
            }
            for (auto& v : mean) v /= static_cast<double>(users.size());
            return mean;
        }
        case WarmupInit::filter_map: {
            if (!behavior_filter) throw ValidationError("filter-map init needs the behavior filter");
            auto v = map_item(*behavior_filter, raw);
            if (v.size() != dim)
                throw ValidationError("filter output width " + std::to_string(v.size()) +
                                      " differs from the backbone dim " + std::to_string(dim));
            return v;
        }
    }
    throw ValidationError("invalid warmup init");
}

double cold_bpr_loss(const BackboneModel& backbone, std::span<const double> item_embedding,
                     std::span<const UserPair> pairs, std::vector<double>* grad) {
    if (pairs.empty()) return 0.0;
    const double scale = 1.0 / static_cast<double>(pairs.size());
    double loss = 0.0;
    if (grad) grad->resize(item_embedding.size(), 0.0);
    for (const auto& p : pairs) {
        auto ep = backbone.users.row(p.pos);
        auto en = backbone.users.row(p.neg);
        const double x = dot(ep, item_embedding) - dot(en, item_embedding);
        loss -= log_sigmoid(x);
        if (!grad) continue;
        const double coef = -sigmoid(-x) * scale;
        for (std::size_t k = 0; k < item_embedding.size(); ++k) (*grad)[k] += coef * (ep[k] - en[k]);
    }
    return loss * scale;
}

ColdEmbeddingResult optimize_cold_embedding(ItemId item, std::span<const UserId> users,
                                            const BackboneModel& backbone, std::vector<double> init,
                                            const WarmupConfig& config) {
    if (users.empty()) throw ValidationError("cold item " + std::to_string(item) + " has no simulated users");
    if (config.lr < 0.0) throw ValidationError("warmup lr must be >= 0");
    if (init.size() != backbone.dim()) throw ValidationError("initial embedding width differs from the backbone dim");
    if (config.optimizer != "adam" && config.optimizer != "sgd")
        throw ValidationError("unknown warmup optimizer '" + config.optimizer + "'");

    std::vector<UserId> positives(users.begin(), users.end());
    std::sort(positives.begin(), positives.end());
    positives.erase(std::unique(positives.begin(), positives.end()), positives.end());
    for (UserId u : positives) {
        if (u >= backbone.users.rows()) throw ValidationError("simulated user " + std::to_string(u) + " out of range");
    }
    std::vector<UserId> complement;
    for (UserId u = 0; u < backbone.users.rows(); ++u) {
        if (!std::binary_search(positives.begin(), positives.end(), u)) complement.push_back(u);
    }
    if (complement.empty())
        throw ValidationError("simulated users of item " + std::to_string(item) +
                              " cover every user; no negative can be drawn");

    ColdEmbeddingResult result;
    result.item = item;
    result.users = positives;
    result.embedding = std::move(init);

    Rng rng(derive_seed(config.seed, "warmup.item", item));
    const std::size_t negatives = std::max<std::size_t>(1, config.negatives);
    auto draw = [&] {
        std::vector<UserPair> pairs;
        pairs.reserve(positives.size() * negatives);
        for (UserId u : positives) {
            for (std::size_t n = 0; n < negatives; ++n) pairs.push_back({u, complement[uniform_index(rng, complement.size())]});
        }
        return pairs;
    };

    const std::size_t dim = result.embedding.size();
    std::vector<double> m(dim, 0.0), v(dim, 0.0), grad;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<UserPair> pairs;
    for (std::size_t step = 1; step <= config.steps && config.lr > 0.0; ++step) {
        pairs = draw();
        grad.assign(dim, 0.0);
        const double loss = cold_bpr_loss(backbone, result.embedding, pairs, &grad);
        if (!std::isfinite(loss)) throw DivergenceError("warmup loss for item " + std::to_string(item) + " diverged");
        if (step == 1) result.initial_loss = loss;
        if (config.optimizer == "sgd") {
            for (std::size_t k = 0; k < dim; ++k) result.embedding[k] -= config.lr * grad[k];
        } else {
            const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
            for (std::size_t k = 0; k < dim; ++k) {
                m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
                result.embedding[k] -= config.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
            }
        }
    }
    if (pairs.empty()) {
        pairs = draw();
        result.initial_loss = cold_bpr_loss(backbone, result.embedding, pairs);
    }
    result.final_loss = cold_bpr_loss(backbone, result.embedding, pairs);
    return result;
}

nlohmann::json WarmupReport::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : items) {
        rows.push_back({{"item", r.item},
                        {"simulated_users", r.simulated_users},
                        {"final_loss", r.final_loss},
                        {"fallback", r.fallback},
                        {"skipped", r.skipped},
                        {"init", r.init}});
    }
    return {{"items", std::move(rows)}, {"skipped", skipped}};
}

BackboneModel warm_all_cold(const ColdWarmSplit& split, std::span<const SimulationResult> simulations,
                            const BackboneModel& backbone, const TwoTowerFilter* behavior_filter,
                            const ContentCache* content, const WarmupConfig& config, WarmupReport* report) {
    if (config.lr < 0.0) throw ValidationError("warmup lr must be >= 0");
    std::map<ItemId, const SimulationResult*> by_item;
    for (const auto& s : simulations) by_item[s.item] = &s;

    const auto& cold = split.cold_items;
    std::vector<WarmupItemReport> rows(cold.size());
    std::vector<std::optional<ColdEmbeddingResult>> results(cold.size());
    for (std::size_t n = 0; n < cold.size(); ++n) {
        rows[n].item = cold[n];
        auto it = by_item.find(cold[n]);
        if (it == by_item.end()) {
            if (!config.skip_missing)
                throw ValidationError("no simulation result for cold item " + std::to_string(cold[n]));
            rows[n].skipped = true;
        } else if (it->second->users.empty()) {
            rows[n].skipped = true;
        }
    }

    parallel_for_bounded(cold.size(), config.max_inflight, [&](std::size_t n) {
        if (rows[n].skipped) return;
        const auto& sim = *by_item.at(cold[n]);
        WarmupInit mode = config.init;
        if (mode == WarmupInit::user_mean && sim.fallback && behavior_filter && content) mode = WarmupInit::filter_map;
        std::span<const float> raw;
        if (mode == WarmupInit::filter_map) {
            if (!content) throw ValidationError("filter-map init needs the content cache");
            raw = content->get(cold[n]);
        }
        auto init = init_cold_embedding(sim.users, backbone, behavior_filter, raw, mode);
        results[n] = optimize_cold_embedding(cold[n], sim.users, backbone, std::move(init), config);
        rows[n].simulated_users = results[n]->users.size();
        rows[n].final_loss = results[n]->final_loss;
        rows[n].fallback = sim.fallback;
        rows[n].init = to_string(mode);
    });

    BackboneModel out = backbone;
    WarmupReport local;
    for (std::size_t n = 0; n < cold.size(); ++n) {
        if (rows[n].skipped) {
            ++local.skipped;
            continue;
        }
        auto dst = out.items.row(cold[n]);
        std::copy(results[n]->embedding.begin(), results[n]->embedding.end(), dst.begin());
    }
    if (local.skipped > 0) spdlog::warn("warmup skipped {} cold items without simulated users", local.skipped);
    local.items = std::move(rows);
    if (report) *report = std::move(local);
    return out;
}

ColdWarmSplit with_simulated_interactions(const ColdWarmSplit& split, std::span<const SimulationResult> simulations) {
    ColdWarmSplit out = split;
    for (const auto& s : simulations) {
        if (!split.is_cold(s.item)) continue;
        for (UserId u : s.users) out.warm_train.push_back({u, s.item});
    }
    std::sort(out.warm_train.begin(), out.warm_train.end());
    out.warm_train.erase(std::unique(out.warm_train.begin(), out.warm_train.end()), out.warm_train.end());
    return out;
}

}  // namespace coldllm
