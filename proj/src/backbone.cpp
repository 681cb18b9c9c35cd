#include "coldllm/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "coldllm/linalg.hpp"

namespace coldllm {

BackboneModel init_backbone(std::size_t num_users, std::size_t num_items, std::size_t dim, std::uint64_t seed,
                            double init_std) {
    BackboneModel model;
    model.users = init_embeddings(num_users, dim, derive_seed(seed, "backbone.users"), init_std);
    model.items = init_embeddings(num_items, dim, derive_seed(seed, "backbone.items"), init_std);
    return model;
}

double score(const BackboneModel& model, UserId u, ItemId i) {
    if (u >= model.users.rows()) throw std::out_of_range("user id " + std::to_string(u) + " out of range");
    if (i >= model.items.rows()) throw std::out_of_range("item id " + std::to_string(i) + " out of range");
    return dot(model.users.row(u), model.items.row(i));
}

ItemScorer backbone_scorer(const BackboneModel& model) {
    return [&model](UserId u, std::span<const ItemId> items, std::span<double> scores) {
        auto eu = model.users.row(u);
        for (std::size_t n = 0; n < items.size(); ++n) scores[n] = dot(eu, model.items.row(items[n]));
    };
}

void save_backbone(const BackboneModel& model, const std::filesystem::path& dir, const std::string& prefix) {
    std::filesystem::create_directories(dir);
    save_embeddings(model.users, dir / (prefix + "_users.cemb"));
    save_embeddings(model.items, dir / (prefix + "_items.cemb"));
}

BackboneModel load_backbone(const std::filesystem::path& dir, const std::string& prefix) {
    BackboneModel model;
    model.users = load_embeddings(dir / (prefix + "_users.cemb"));
    model.items = load_embeddings(dir / (prefix + "_items.cemb"));
    if (model.users.dim() != model.items.dim()) throw ValidationError("user and item tables disagree on dim");
    return model;
}

NegativeSampler::NegativeSampler(const InteractionLog& observed, std::span<const ItemId> universe)
    : observed_(observed), universe_(universe) {}

std::optional<ItemId> NegativeSampler::sample(UserId user, Rng& rng) const {
    if (universe_.empty()) return std::nullopt;
    for (std::size_t attempt = 0; attempt < kMaxRejections; ++attempt) {
        const ItemId j = universe_[uniform_index(rng, universe_.size())];
        if (!observed_.contains(user, j)) return j;
    }
    return std::nullopt;
}

std::vector<BprTriple> sample_bpr_triples(const InteractionLog& observed, std::span<const ItemId> warm_items,
                                          std::size_t n, std::uint64_t seed, SamplingStats* stats) {
    std::vector<BprTriple> out;
    if (n == 0) return out;
    if (observed.empty()) throw ValidationError("cannot sample BPR triples from an empty interaction set");
    NegativeSampler sampler(observed, warm_items);
    Rng rng(seed);
    const auto& pairs = observed.interactions();
    std::size_t skipped = 0;
    out.reserve(n);
    for (std::size_t draw = 0; draw < n; ++draw) {
        const auto& p = pairs[uniform_index(rng, pairs.size())];
        if (auto neg = sampler.sample(p.user, rng)) {
            out.push_back({p.user, p.item, *neg});
        } else {
            ++skipped;
        }
    }
    if (skipped > 0) spdlog::warn("sample_bpr_triples: skipped {} draws for users without sampleable negatives", skipped);
    if (stats) stats->skipped = skipped;
    return out;
}

namespace {

void check_bounds(const BackboneModel& model, const BprTriple& t) {
    if (t.user >= model.users.rows() || t.pos >= model.items.rows() || t.neg >= model.items.rows())
        throw std::out_of_range("BPR triple references a row outside the model");
}

std::vector<double>& grad_row(std::map<std::size_t, std::vector<double>>& grads, std::size_t row, std::size_t dim) {
    auto [it, inserted] = grads.try_emplace(row);
    if (inserted) it->second.assign(dim, 0.0);
    return it->second;
}

}  // namespace

double bpr_loss(const BackboneModel& model, std::span<const BprTriple> batch, double l2) {
    if (batch.empty()) return 0.0;
    double total = 0.0;
    for (const auto& t : batch) {
        check_bounds(model, t);
        auto eu = model.users.row(t.user);
        auto ei = model.items.row(t.pos);
        auto ej = model.items.row(t.neg);
        const double x = dot(eu, ei) - dot(eu, ej);
        total -= log_sigmoid(x);
        if (l2 != 0.0) total += 0.5 * l2 * (dot(eu, eu) + dot(ei, ei) + dot(ej, ej));
    }
    return total / static_cast<double>(batch.size());
}

BprGradients bpr_gradients(const BackboneModel& model, std::span<const BprTriple> batch, double l2) {
    BprGradients g;
    if (batch.empty()) return g;
    const std::size_t dim = model.dim();
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (const auto& t : batch) {
        check_bounds(model, t);
        auto eu = model.users.row(t.user);
        auto ei = model.items.row(t.pos);
        auto ej = model.items.row(t.neg);
        const double x = dot(eu, ei) - dot(eu, ej);
        g.loss -= log_sigmoid(x);
        if (l2 != 0.0) g.loss += 0.5 * l2 * (dot(eu, eu) + dot(ei, ei) + dot(ej, ej));
        // d/dx [-ln sigmoid(x)] = -sigmoid(-x)
        const double coef = -sigmoid(-x) * scale;
        auto& gu = grad_row(g.users, t.user, dim);
        auto& gi = grad_row(g.items, t.pos, dim);
        auto& gj = grad_row(g.items, t.neg, dim);
        for (std::size_t k = 0; k < dim; ++k) {
            gu[k] += coef * (ei[k] - ej[k]) + l2 * scale * eu[k];
            gi[k] += coef * eu[k] + l2 * scale * ei[k];
            gj[k] += -coef * eu[k] + l2 * scale * ej[k];
        }
    }
    g.loss *= scale;
    return g;
}

double bpr_step(BackboneModel& model, std::span<const BprTriple> batch, double lr, double l2) {
    auto grads = bpr_gradients(model, batch, l2);
    if (!std::isfinite(grads.loss)) throw DivergenceError("BPR loss is not finite");
    if (lr == 0.0) return grads.loss;
    for (const auto& [row, g] : grads.users) {
        auto r = model.users.row(row);
        for (std::size_t k = 0; k < g.size(); ++k) r[k] -= lr * g[k];
    }
    for (const auto& [row, g] : grads.items) {
        auto r = model.items.row(row);
        for (std::size_t k = 0; k < g.size(); ++k) r[k] -= lr * g[k];
    }
    return grads.loss;
}

SparseAdam::SparseAdam(const BackboneModel& model, double beta1, double beta2, double eps)
    : m_users_(model.users.rows(), model.dim()),
      v_users_(model.users.rows(), model.dim()),
      m_items_(model.items.rows(), model.dim()),
      v_items_(model.items.rows(), model.dim()),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void SparseAdam::apply(BackboneModel& model, const BprGradients& grads, double lr) {
    ++step_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    auto update = [&](EmbeddingTable& table, EmbeddingTable& m, EmbeddingTable& v,
                      const std::map<std::size_t, std::vector<double>>& rows) {
        for (const auto& [row, g] : rows) {
            auto p = table.row(row);
            auto mr = m.row(row);
            auto vr = v.row(row);
            for (std::size_t k = 0; k < g.size(); ++k) {
                mr[k] = beta1_ * mr[k] + (1.0 - beta1_) * g[k];
                vr[k] = beta2_ * vr[k] + (1.0 - beta2_) * g[k] * g[k];
                p[k] -= lr * (mr[k] / c1) / (std::sqrt(vr[k] / c2) + eps_);
            }
        }
    };
    if (lr == 0.0) return;
    update(model.users, m_users_, v_users_, grads.users);
    update(model.items, m_items_, v_items_, grads.items);
}

double warm_validation_ndcg(const ItemScorer& scorer, const ColdWarmSplit& split, std::size_t max_users,
                            std::size_t k, std::uint64_t seed) {
    InteractionLog val(split.num_users, split.num_items, split.warm_val);
    InteractionLog train(split.num_users, split.num_items, split.warm_train);
    std::vector<UserId> eligible;
    for (UserId u = 0; u < split.num_users; ++u) {
        if (!val.user_items(u).empty()) eligible.push_back(u);
    }
    if (eligible.empty()) return 0.0;
    Rng rng(seed);
    std::shuffle(eligible.begin(), eligible.end(), rng);
    if (eligible.size() > max_users) eligible.resize(max_users);
    std::sort(eligible.begin(), eligible.end());
    return evaluate_users(scorer, eligible, split.warm_items, val, train, k).ndcg;
}

BackboneModel train_backbone(const ColdWarmSplit& split, const BackboneConfig& config, BackboneHistory* history) {
    if (config.optimizer != "adam" && config.optimizer != "sgd")
        throw ValidationError("unknown backbone optimizer '" + config.optimizer + "'");
    BackboneModel model = init_backbone(split.num_users, split.num_items, config.dim, config.seed, config.init_std);
    BackboneHistory local;
    BackboneHistory& hist = history ? *history : local;
    hist = {};
    if (config.max_epochs == 0) return model;
    if (split.warm_train.empty()) throw ValidationError("warm-train is empty");

    const InteractionLog train(split.num_users, split.num_items, split.warm_train);
    const NegativeSampler sampler(train, split.warm_items);
    Rng rng(derive_seed(config.seed, "backbone.epochs"));
    const std::uint64_t eval_seed = derive_seed(config.seed, "backbone.eval");
    const std::size_t batch_size = std::max<std::size_t>(1, config.batch_size);

    double lr = config.lr;
    SparseAdam adam(model);
    BackboneModel best = model;
    double best_ndcg = -1.0;
    std::size_t stale = 0;
    const bool validate = !split.warm_val.empty();

    std::vector<std::size_t> order(train.size());
    std::vector<BprTriple> triples;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        triples.clear();
        for (auto idx : order) {
            const auto& p = train.interactions()[idx];
            if (auto neg = sampler.sample(p.user, rng)) triples.push_back({p.user, p.item, *neg});
        }

        const BackboneModel epoch_start = model;
        double epoch_loss = 0.0;
        bool diverged = false;
        for (std::size_t start = 0; start < triples.size(); start += batch_size) {
            std::span<const BprTriple> batch(triples.data() + start, std::min(batch_size, triples.size() - start));
            try {
                if (config.optimizer == "sgd") {
                    epoch_loss += bpr_step(model, batch, lr, config.l2) * static_cast<double>(batch.size());
                } else {
                    auto grads = bpr_gradients(model, batch, config.l2);
                    if (!std::isfinite(grads.loss)) throw DivergenceError("BPR loss is not finite");
                    adam.apply(model, grads, lr);
                    epoch_loss += grads.loss * static_cast<double>(batch.size());
                }
            } catch (const DivergenceError&) {
                diverged = true;
                break;
            }
        }
        if (diverged) {
            if (++hist.lr_halvings > 30) throw DivergenceError("backbone training diverged repeatedly");
            lr *= 0.5;
            spdlog::warn("backbone epoch {} diverged; restarting epoch with lr {}", epoch, lr);
            model = epoch_start;
            adam = SparseAdam(model);
            --epoch;
            continue;
        }

        model.trained_epochs = epoch;
        hist.epoch_loss.push_back(triples.empty() ? 0.0 : epoch_loss / static_cast<double>(triples.size()));
        if (!validate) {
            best = model;
            hist.best_epoch = epoch;
            continue;
        }
        const double ndcg =
            warm_validation_ndcg(backbone_scorer(model), split, config.eval_users, config.eval_k, eval_seed);
        hist.val_ndcg.push_back(ndcg);
        spdlog::debug("backbone epoch {} loss {:.6f} val ndcg {:.6f}", epoch, hist.epoch_loss.back(), ndcg);
        if (ndcg > best_ndcg) {
            best_ndcg = ndcg;
            best = model;
            hist.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= config.patience) {
            break;
        }
    }
    return best;
}

}  // namespace coldllm
