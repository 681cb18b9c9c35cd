#include "coldllm/filter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>

#include <spdlog/spdlog.h>

#include "coldllm/linalg.hpp"
#include "coldllm/random.hpp"

namespace coldllm {

std::string to_string(FilterVariant variant) {
    return variant == FilterVariant::behavior ? "B" : "L";
}

FilterVariant parse_filter_variant(const std::string& name) {
    if (name == "B" || name == "b" || name == "behavior") return FilterVariant::behavior;
    if (name == "L" || name == "l" || name == "coupled") return FilterVariant::coupled;
    throw ValidationError("unknown filter variant '" + name + "' (expected B or L)");
}

TwoTowerFilter make_filter(FilterVariant variant, std::size_t behavior_dim, std::size_t content_dim,
                           std::size_t hidden, std::size_t out, std::uint64_t seed) {
    const std::vector<std::size_t> user_widths{behavior_dim + content_dim, hidden, out};
    const std::vector<std::size_t> item_widths{content_dim, hidden, out};
    TwoTowerFilter filter;
    filter.variant = variant;
    filter.user_tower = TowerMlp::random(user_widths, derive_seed(seed, "filter.user_tower"));
    filter.item_tower = TowerMlp::random(item_widths, derive_seed(seed, "filter.item_tower"));
    return filter;
}

TwoTowerFilter zeros_like(const TwoTowerFilter& filter) {
    TwoTowerFilter out;
    out.variant = filter.variant;
    const auto uw = filter.user_tower.widths();
    const auto iw = filter.item_tower.widths();
    out.user_tower = TowerMlp::zeros(uw);
    out.item_tower = TowerMlp::zeros(iw);
    return out;
}

FilterVector map_item(const TwoTowerFilter& filter, std::span<const double> raw) {
    return filter.item_tower.forward(raw);
}

FilterVector map_item(const TwoTowerFilter& filter, std::span<const float> raw) {
    std::vector<double> x(raw.begin(), raw.end());
    return filter.item_tower.forward(x);
}

FilterVector map_user(const TwoTowerFilter& filter, std::span<const double> behavior,
                      std::span<const double> history_content) {
    const std::size_t width = filter.user_tower.input_width();
    if (behavior.size() > width) throw ValidationError("behavior embedding wider than the user tower input");
    const std::size_t content_width = width - behavior.size();
    if (!history_content.empty() && history_content.size() != content_width)
        throw ValidationError("history content width " + std::to_string(history_content.size()) +
                              " does not match the user tower (" + std::to_string(content_width) + ")");
    std::vector<double> x(width, 0.0);
    std::copy(behavior.begin(), behavior.end(), x.begin());
    std::copy(history_content.begin(), history_content.end(), x.begin() + static_cast<std::ptrdiff_t>(behavior.size()));
    return filter.user_tower.forward(x);
}

FilterInputs build_filter_inputs(const BackboneModel& backbone, const ContentCache& content,
                                 const InteractionLog& history) {
    FilterInputs inputs;
    inputs.behavior_dim = backbone.dim();
    inputs.content_dim = content.dim();
    const std::size_t n_users = backbone.users.rows();
    const std::size_t n_items = backbone.items.rows();
    if (content.num_items() != n_items)
        throw ValidationError("content cache covers " + std::to_string(content.num_items()) + " items, model has " +
                              std::to_string(n_items));
    inputs.item_content = EmbeddingTable(n_items, inputs.content_dim);
    for (ItemId i = 0; i < n_items; ++i) {
        auto src = content.get(i);
        auto dst = inputs.item_content.row(i);
        std::copy(src.begin(), src.end(), dst.begin());
    }
    const std::size_t width = inputs.behavior_dim + inputs.content_dim;
    inputs.user_inputs = EmbeddingTable(n_users, width);
    for (UserId u = 0; u < n_users; ++u) {
        auto row = inputs.user_inputs.row(u);
        auto eu = backbone.users.row(u);
        std::copy(eu.begin(), eu.end(), row.begin());
        auto items = u < history.num_users() ? history.user_items(u) : std::span<const ItemId>{};
        if (items.empty()) continue;
        auto content_block = row.subspan(inputs.behavior_dim);
        for (auto i : items) {
            auto c = inputs.item_content.row(i);
            for (std::size_t k = 0; k < inputs.content_dim; ++k) content_block[k] += c[k];
        }
        for (auto& v : content_block) v /= static_cast<double>(items.size());
    }
    return inputs;
}

EmbeddingTable map_all_users(const TwoTowerFilter& filter, const FilterInputs& inputs) {
    EmbeddingTable out(inputs.user_inputs.rows(), filter.user_tower.output_width());
    for (std::size_t u = 0; u < out.rows(); ++u) {
        auto v = filter.user_tower.forward(inputs.user_inputs.row(u));
        std::copy(v.begin(), v.end(), out.row(u).begin());
    }
    return out;
}

EmbeddingTable map_all_items(const TwoTowerFilter& filter, const FilterInputs& inputs) {
    EmbeddingTable out(inputs.item_content.rows(), filter.item_tower.output_width());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto v = filter.item_tower.forward(inputs.item_content.row(i));
        std::copy(v.begin(), v.end(), out.row(i).begin());
    }
    return out;
}

std::vector<UserId> CandidateSet::ids() const {
    std::vector<UserId> out;
    out.reserve(users.size());
    for (const auto& s : users) out.push_back(s.user);
    return out;
}

InnerProductIndex::InnerProductIndex(EmbeddingTable vectors) : vectors_(std::move(vectors)) {}

std::vector<ScoredUser> InnerProductIndex::search(std::span<const double> query, std::size_t k) const {
    if (query.size() != vectors_.dim())
        throw ValidationError("query width " + std::to_string(query.size()) + " does not match index width " +
                              std::to_string(vectors_.dim()));
    auto ranks_before = [](const ScoredUser& a, const ScoredUser& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.user < b.user;
    };
    const std::size_t depth = std::min(k, vectors_.rows());
    // Max-heap under ranks_before keeps the worst retained candidate on top.
    std::priority_queue<ScoredUser, std::vector<ScoredUser>, decltype(ranks_before)> heap(ranks_before);
    for (std::size_t u = 0; u < vectors_.rows() && depth > 0; ++u) {
        ScoredUser cand{static_cast<UserId>(u), dot(vectors_.row(u), query)};
        if (heap.size() < depth) {
            heap.push(cand);
        } else if (ranks_before(cand, heap.top())) {
            heap.pop();
            heap.push(cand);
        }
    }
    std::vector<ScoredUser> out(heap.size());
    for (std::size_t r = out.size(); r-- > 0;) {
        out[r] = heap.top();
        heap.pop();
    }
    return out;
}

CandidateSet topk_candidates(ItemId item, std::span<const double> item_vector, const InnerProductIndex& users,
                             std::size_t k) {
    if (k < 1) throw ValidationError("top-k needs k >= 1");
    return CandidateSet{item, users.search(item_vector, k)};
}

FilterRetriever::FilterRetriever(TwoTowerFilter filter, const FilterInputs& inputs)
    : filter_(std::move(filter)), index_(map_all_users(filter_, inputs)) {}

CandidateSet FilterRetriever::retrieve(ItemId item, std::span<const float> raw, std::size_t k) const {
    return topk_candidates(item, map_item(filter_, raw), index_, k);
}

CandidateSet funnel_merge(ItemId item, const CandidateSet* coupled, const CandidateSet* behavior, std::size_t k) {
    CandidateSet out{item, {}};
    std::vector<UserId> taken;
    auto take = [&](UserId u) {
        if (out.users.size() >= k || std::find(taken.begin(), taken.end(), u) != taken.end()) return;
        taken.push_back(u);
        out.users.push_back({u, 0.0});
    };
    const std::size_t n_l = coupled ? coupled->users.size() : 0;
    const std::size_t n_b = behavior ? behavior->users.size() : 0;
    for (std::size_t r = 0; r < std::max(n_l, n_b) && out.users.size() < k; ++r) {
        if (r < n_l) take(coupled->users[r].user);
        if (r < n_b) take(behavior->users[r].user);
    }
    for (std::size_t r = 0; r < out.users.size(); ++r) out.users[r].score = 1.0 / static_cast<double>(r + 1);
    return out;
}

CandidateSet funnel_filter(const FilterRetriever* coupled, const FilterRetriever* behavior, ItemId item,
                           std::span<const float> raw, std::size_t k) {
    if (!coupled && !behavior) throw ValidationError("funnel needs at least one filter");
    std::optional<CandidateSet> from_l, from_b;
    if (coupled) from_l = coupled->retrieve(item, raw, k);
    if (behavior) from_b = behavior->retrieve(item, raw, k);
    return funnel_merge(item, from_l ? &*from_l : nullptr, from_b ? &*from_b : nullptr, k);
}

namespace {

void add_scaled(TwoTowerFilter& dst, const TwoTowerFilter& src, double a) {
    auto add_tower = [a](TowerMlp& d, const TowerMlp& s) {
        for (std::size_t l = 0; l < d.layers().size(); ++l) {
            auto& dl = d.layers()[l];
            const auto& sl = s.layers()[l];
            for (std::size_t k = 0; k < dl.weight.size(); ++k) dl.weight[k] += a * sl.weight[k];
            for (std::size_t k = 0; k < dl.bias.size(); ++k) dl.bias[k] += a * sl.bias[k];
        }
    };
    add_tower(dst.user_tower, src.user_tower);
    add_tower(dst.item_tower, src.item_tower);
}

}  // namespace

double filter_bpr_loss(const TwoTowerFilter& filter, const FilterInputs& inputs, std::span<const BprTriple> batch,
                       TwoTowerFilter* grad) {
    if (batch.empty()) return 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    TowerMlp::Trace tu, ti, tj;
    for (const auto& t : batch) {
        auto yu = filter.user_tower.forward(inputs.user_inputs.row(t.user), tu);
        auto fi = filter.item_tower.forward(inputs.item_content.row(t.pos), ti);
        auto fj = filter.item_tower.forward(inputs.item_content.row(t.neg), tj);
        const double x = dot(yu, fi) - dot(yu, fj);
        loss -= log_sigmoid(x);
        if (!grad) continue;
        const double coef = -sigmoid(-x) * scale;
        std::vector<double> gu(yu.size()), gi(yu.size()), gj(yu.size());
        for (std::size_t k = 0; k < yu.size(); ++k) {
            gu[k] = coef * (fi[k] - fj[k]);
            gi[k] = coef * yu[k];
            gj[k] = -coef * yu[k];
        }
        filter.user_tower.backward(tu, gu, grad->user_tower);
        filter.item_tower.backward(ti, gi, grad->item_tower);
        filter.item_tower.backward(tj, gj, grad->item_tower);
    }
    return loss * scale;
}

double coupled_ce_loss(const TwoTowerFilter& filter, const FilterInputs& inputs, std::span<const LabeledPair> batch,
                       TwoTowerFilter* grad) {
    if (batch.empty()) return 0.0;
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    TowerMlp::Trace tu, ti;
    for (const auto& p : batch) {
        auto yu = filter.user_tower.forward(inputs.user_inputs.row(p.user), tu);
        auto fi = filter.item_tower.forward(inputs.item_content.row(p.item), ti);
        const double s = dot(yu, fi);
        const double raw_p = sigmoid(s);
        const double prob = std::clamp(raw_p, kProbabilityClip, 1.0 - kProbabilityClip);
        loss -= p.label ? std::log(prob) : std::log(1.0 - prob);
        if (!grad) continue;
        // Zero gradient where the clip is active.
        if (raw_p != prob) continue;
        const double coef = (raw_p - (p.label ? 1.0 : 0.0)) * scale;
        std::vector<double> gu(yu.size()), gi(yu.size());
        for (std::size_t k = 0; k < yu.size(); ++k) {
            gu[k] = coef * fi[k];
            gi[k] = coef * yu[k];
        }
        filter.user_tower.backward(tu, gu, grad->user_tower);
        filter.item_tower.backward(ti, gi, grad->item_tower);
    }
    return loss * scale;
}

AdamW::AdamW(const TwoTowerFilter& shape, double weight_decay, double beta1, double beta2, double eps)
    : m_(zeros_like(shape)), v_(zeros_like(shape)), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(TwoTowerFilter& params, const TwoTowerFilter& grad, double lr) {
    if (lr == 0.0) return;
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t k = 0; k < p.size(); ++k) {
            p[k] -= lr * weight_decay_ * p[k];
            m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
            v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
            p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
        }
    };
    auto update_tower = [&](TowerMlp& p, const TowerMlp& g, TowerMlp& m, TowerMlp& v) {
        for (std::size_t l = 0; l < p.layers().size(); ++l) {
            update(p.layers()[l].weight, g.layers()[l].weight, m.layers()[l].weight, v.layers()[l].weight);
            update(p.layers()[l].bias, g.layers()[l].bias, m.layers()[l].bias, v.layers()[l].bias);
        }
    };
    update_tower(params.user_tower, grad.user_tower, m_.user_tower, v_.user_tower);
    update_tower(params.item_tower, grad.item_tower, m_.item_tower, v_.item_tower);
}

namespace {

bool all_finite(const TwoTowerFilter& f) {
    for (const auto* tower : {&f.user_tower, &f.item_tower}) {
        for (const auto& layer : tower->layers()) {
            for (double w : layer.weight) {
                if (!std::isfinite(w)) return false;
            }
            for (double b : layer.bias) {
                if (!std::isfinite(b)) return false;
            }
        }
    }
    return true;
}

double filter_validation_ndcg(const TwoTowerFilter& filter, const FilterInputs& inputs, const ColdWarmSplit& split,
                              const FilterTrainConfig& config) {
    const auto users = map_all_users(filter, inputs);
    const auto items = map_all_items(filter, inputs);
    ItemScorer scorer = [&](UserId u, std::span<const ItemId> cand, std::span<double> scores) {
        auto yu = users.row(u);
        for (std::size_t n = 0; n < cand.size(); ++n) scores[n] = dot(yu, items.row(cand[n]));
    };
    return warm_validation_ndcg(scorer, split, config.eval_users, config.eval_k,
                                derive_seed(config.seed, "filter.eval"));
}

void check_inputs(const TwoTowerFilter& filter, const FilterInputs& inputs) {
    if (filter.user_tower.input_width() != inputs.user_inputs.dim())
        throw ValidationError("user tower input width does not match the filter inputs");
    if (filter.item_tower.input_width() != inputs.item_content.dim())
        throw ValidationError("item tower input width does not match the content dim");
    if (filter.user_tower.output_width() != filter.item_tower.output_width())
        throw ValidationError("user and item towers disagree on output width");
}

}  // namespace

TwoTowerFilter train_behavior_filter(TwoTowerFilter filter, const FilterInputs& inputs, const ColdWarmSplit& split,
                                     const FilterTrainConfig& config, FilterHistory* history) {
    check_inputs(filter, inputs);
    FilterHistory local;
    FilterHistory& hist = history ? *history : local;
    hist = {};
    if (config.max_epochs == 0 || config.lr == 0.0) return filter;
    if (split.warm_train.empty()) throw ValidationError("warm-train is empty");

    const InteractionLog train(split.num_users, split.num_items, split.warm_train);
    const NegativeSampler sampler(train, split.warm_items);
    Rng rng(derive_seed(config.seed, "filter.B.epochs"));
    const std::size_t batch_size = std::max<std::size_t>(1, config.batch_size);
    const bool validate = !split.warm_val.empty();

    AdamW optimizer(filter, config.weight_decay);
    TwoTowerFilter best = filter;
    double best_ndcg = -1.0;
    std::size_t stale = 0;
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
        double total = 0.0;
        for (std::size_t start = 0; start < triples.size(); start += batch_size) {
            std::span<const BprTriple> batch(triples.data() + start, std::min(batch_size, triples.size() - start));
            TwoTowerFilter grad = zeros_like(filter);
            const double loss = filter_bpr_loss(filter, inputs, batch, &grad);
            if (!std::isfinite(loss)) throw DivergenceError("behavior filter loss is not finite");
            optimizer.step(filter, grad, config.lr);
            total += loss * static_cast<double>(batch.size());
        }
        if (!all_finite(filter)) throw DivergenceError("behavior filter parameters diverged");
        hist.epoch_loss.push_back(triples.empty() ? 0.0 : total / static_cast<double>(triples.size()));
        if (!validate) {
            best = filter;
            hist.best_epoch = epoch;
            continue;
        }
        const double ndcg = filter_validation_ndcg(filter, inputs, split, config);
        hist.validation.push_back(ndcg);
        spdlog::debug("filter B epoch {} loss {:.6f} val ndcg {:.6f}", epoch, hist.epoch_loss.back(), ndcg);
        if (ndcg > best_ndcg) {
            best_ndcg = ndcg;
            best = filter;
            hist.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= config.patience) {
            break;
        }
    }
    return best;
}

TwoTowerFilter train_coupled_filter(TwoTowerFilter filter, const FilterInputs& inputs, const ColdWarmSplit& split,
                                    std::span<const LabeledPair> labels, const FilterTrainConfig& config,
                                    FilterHistory* history) {
    check_inputs(filter, inputs);
    FilterHistory local;
    FilterHistory& hist = history ? *history : local;
    hist = {};
    if (config.max_epochs == 0 || config.lr == 0.0) return filter;
    if (labels.empty()) throw ValidationError("coupled filter training needs oracle labels");

    Rng rng(derive_seed(config.seed, "filter.L.epochs"));
    std::vector<LabeledPair> pool(labels.begin(), labels.end());
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<LabeledPair> held_out;
    if (pool.size() >= 20) {
        const std::size_t n_held = pool.size() / 10;
        held_out.assign(pool.end() - static_cast<std::ptrdiff_t>(n_held), pool.end());
        pool.resize(pool.size() - n_held);
    }

    const bool use_bpr = config.coupled_weight != 0.0 && !split.warm_train.empty();
    const InteractionLog train(split.num_users, split.num_items, split.warm_train);
    const NegativeSampler sampler(train, split.warm_items);
    const std::size_t batch_size = std::max<std::size_t>(1, config.batch_size);

    AdamW optimizer(filter, config.weight_decay);
    TwoTowerFilter best = filter;
    double best_ce = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    std::vector<BprTriple> bpr_batch;
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(pool.begin(), pool.end(), rng);
        double total = 0.0, total_ce = 0.0;
        for (std::size_t start = 0; start < pool.size(); start += batch_size) {
            std::span<const LabeledPair> batch(pool.data() + start, std::min(batch_size, pool.size() - start));
            TwoTowerFilter grad = zeros_like(filter);
            const double ce = coupled_ce_loss(filter, inputs, batch, &grad);
            double loss = ce;
            if (use_bpr) {
                bpr_batch.clear();
                while (bpr_batch.size() < batch.size()) {
                    const auto& p = train.interactions()[uniform_index(rng, train.size())];
                    if (auto neg = sampler.sample(p.user, rng)) {
                        bpr_batch.push_back({p.user, p.item, *neg});
                    } else if (bpr_batch.empty()) {
                        break;
                    }
                }
                TwoTowerFilter bpr_grad = zeros_like(filter);
                loss += config.coupled_weight * filter_bpr_loss(filter, inputs, bpr_batch, &bpr_grad);
                add_scaled(grad, bpr_grad, config.coupled_weight);
            }
            if (!std::isfinite(loss)) throw DivergenceError("coupled filter loss is not finite");
            optimizer.step(filter, grad, config.lr);
            total += loss * static_cast<double>(batch.size());
            total_ce += ce * static_cast<double>(batch.size());
        }
        if (!all_finite(filter)) throw DivergenceError("coupled filter parameters diverged");
        hist.epoch_loss.push_back(total / static_cast<double>(pool.size()));
        hist.epoch_ce.push_back(total_ce / static_cast<double>(pool.size()));
        if (held_out.empty()) {
            best = filter;
            hist.best_epoch = epoch;
            continue;
        }
        const double val_ce = coupled_ce_loss(filter, inputs, held_out);
        hist.validation.push_back(val_ce);
        spdlog::debug("filter L epoch {} loss {:.6f} ce {:.6f} held-out ce {:.6f}", epoch, hist.epoch_loss.back(),
                      hist.epoch_ce.back(), val_ce);
        if (val_ce < best_ce) {
            best_ce = val_ce;
            best = filter;
            hist.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= config.patience) {
            break;
        }
    }
    return best;
}

std::vector<LabeledPair> sample_label_pairs(const ColdWarmSplit& split, std::size_t n, std::uint64_t seed) {
    std::vector<LabeledPair> out;
    if (split.warm_train.empty() || n == 0) return out;
    std::vector<Interaction> observed = split.warm_train;
    observed.insert(observed.end(), split.warm_val.begin(), split.warm_val.end());
    observed.insert(observed.end(), split.warm_test.begin(), split.warm_test.end());
    const InteractionLog seen(split.num_users, split.num_items, std::move(observed));

    Rng rng(seed);
    std::vector<std::size_t> order(split.warm_train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(std::min(n, order.size()));
    std::sort(order.begin(), order.end());

    const std::size_t max_tries = 1000;
    for (auto idx : order) {
        const auto& p = split.warm_train[idx];
        out.push_back({p.user, p.item, false});
        for (std::size_t attempt = 0; attempt < max_tries && !split.warm_items.empty(); ++attempt) {
            const auto u = static_cast<UserId>(uniform_index(rng, split.num_users));
            const ItemId j = split.warm_items[uniform_index(rng, split.warm_items.size())];
            if (!seen.contains(u, j)) {
                out.push_back({u, j, false});
                break;
            }
        }
    }
    return out;
}

void save_filter(const TwoTowerFilter& filter, const std::filesystem::path& dir, const std::string& name,
                 const nlohmann::json& extra) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / (name + ".bin"), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / (name + ".bin")).string());
    for (const auto* tower : {&filter.user_tower, &filter.item_tower}) {
        for (const auto& layer : tower->layers()) {
            write_embeddings(out, EmbeddingTable(layer.out, layer.in, layer.weight));
            write_embeddings(out, EmbeddingTable(1, layer.out, layer.bias));
        }
    }
    nlohmann::json manifest = {{"variant", to_string(filter.variant)},
                               {"user_widths", filter.user_tower.widths()},
                               {"item_widths", filter.item_tower.widths()},
                               {"activation", "relu"},
                               {"format", "CEMB blocks: user tower then item tower, weight (out x in) then bias (1 x out)"}};
    if (!extra.is_null()) manifest["training"] = extra;
    std::ofstream meta(dir / (name + ".json"));
    meta << manifest.dump(1) << "\n";
}

TwoTowerFilter load_filter(const std::filesystem::path& dir, const std::string& name) {
    std::ifstream meta(dir / (name + ".json"));
    if (!meta) throw ValidationError("missing filter manifest " + (dir / (name + ".json")).string());
    const auto manifest = nlohmann::json::parse(meta);
    std::ifstream in(dir / (name + ".bin"), std::ios::binary);
    if (!in) throw ValidationError("missing filter weights " + (dir / (name + ".bin")).string());

    auto read_tower = [&](const std::vector<std::size_t>& widths) {
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            auto w = read_embeddings(in);
            auto b = read_embeddings(in);
            if (w.rows() != widths[l + 1] || w.dim() != widths[l] || b.rows() != 1 || b.dim() != widths[l + 1])
                throw ValidationError("filter weights do not match the manifest widths");
            layers.push_back({widths[l], widths[l + 1], std::move(w.values()), std::move(b.values())});
        }
        return TowerMlp(std::move(layers));
    };
    TwoTowerFilter filter;
    filter.variant = parse_filter_variant(manifest.at("variant").get<std::string>());
    filter.user_tower = read_tower(manifest.at("user_widths").get<std::vector<std::size_t>>());
    filter.item_tower = read_tower(manifest.at("item_widths").get<std::vector<std::size_t>>());
    return filter;
}

}  // namespace coldllm
