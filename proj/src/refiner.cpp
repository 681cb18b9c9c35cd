#include "coldllm/refiner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include <spdlog/spdlog.h>

#include "coldllm/linalg.hpp"
#include "coldllm/parallel.hpp"
#include "coldllm/random.hpp"

namespace coldllm {

UserContext build_context(UserId user, std::span<const double> query_vector, const RefineEnvironment& env,
                          std::size_t length, std::optional<ItemId> exclude) {
    if (length < 1) throw ValidationError("context length must be >= 1");
    UserContext ctx;
    ctx.user = user;
    if (user >= env.history->num_users()) return ctx;
    std::vector<std::pair<double, ItemId>> ranked;
    for (ItemId j : env.history->user_items(user)) {
        if (exclude && *exclude == j) continue;
        ranked.emplace_back(dot(query_vector, env.item_vectors->row(j)), j);
    }
    const std::size_t keep = std::min(length, ranked.size());
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(keep), ranked.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    for (std::size_t r = 0; r < keep; ++r) {
        ctx.items.push_back(ranked[r].second);
        ctx.similarity.push_back(ranked[r].first);
        ctx.titles.push_back(env.catalog->title(ranked[r].second));
    }
    return ctx;
}

std::string quote_title(std::string_view title) {
    std::string out = "\"";
    for (char c : title) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string render_prompt(std::span<const std::string> titles, std::string_view item_text) {
    std::string prompt = "Given the user interacted with [";
    for (std::size_t n = 0; n < titles.size(); ++n) {
        if (n > 0) prompt += ", ";
        prompt += quote_title(titles[n]);
    }
    prompt += "], determine whether the user will interacted the [";
    prompt += item_text;
    prompt += "] by answering Yes or No.";
    return prompt;
}

std::string render_prompt(const UserContext& context, std::string_view item_text) {
    return render_prompt(context.titles, item_text);
}

bool parse_yes_no(std::string_view response) {
    auto alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); };
    std::size_t start = 0;
    while (start < response.size() && !alpha(response[start])) ++start;
    std::size_t end = start;
    while (end < response.size() && alpha(response[end])) ++end;
    std::string token(response.substr(start, end - start));
    for (auto& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (token == "yes") return true;
    if (token == "no") return false;
    throw OracleParseError("oracle response is neither yes nor no: '" + std::string(response.substr(0, 80)) + "'");
}

MockThresholdOracle::MockThresholdOracle(const ContentCache& content, double tau) : content_(content), tau_(tau) {}

double MockThresholdOracle::similarity(ItemId item, std::span<const ItemId> context) const {
    if (context.empty()) return 0.0;
    auto target = content_.get(item);
    std::vector<double> mean(target.size(), 0.0);
    for (ItemId j : context) {
        auto v = content_.get(j);
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += v[k];
    }
    for (auto& m : mean) m /= static_cast<double>(context.size());
    const double denom = l2_norm(mean) * l2_norm(target);
    return denom > 0.0 ? dot(mean, target) / denom : 0.0;
}

OracleDecision MockThresholdOracle::decide(const OracleRequest& request) {
    const bool yes = !request.context_items.empty() && similarity(request.item, request.context_items) >= tau_;
    return {yes, yes ? "Yes" : "No", 0.0, false};
}

nlohmann::json MockThresholdOracle::describe() const {
    return {{"kind", "mock"}, {"tau", tau_}};
}

PlantedOracle::PlantedOracle(std::span<const Interaction> truth) {
    for (const auto& p : truth) truth_.insert(pair_key(p.user, p.item));
}

OracleDecision PlantedOracle::decide(const OracleRequest& request) {
    const bool yes = contains(request.user, request.item);
    return {yes, yes ? "Yes" : "No", 0.0, false};
}

OracleDecision ConstantOracle::decide(const OracleRequest&) {
    std::lock_guard lock(mutex_);
    ++calls_;
    return {answer_, answer_ ? "Yes" : "No", 0.0, false};
}

std::size_t ConstantOracle::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

HttpOracle::HttpOracle(HttpEndpoint endpoint, HttpOracleProtocol protocol, std::string chat_path)
    : endpoint_(std::move(endpoint)), protocol_(protocol), chat_path_(std::move(chat_path)) {}

OracleDecision HttpOracle::decide(const OracleRequest& request) {
    const auto start = std::chrono::steady_clock::now();
    std::string text;
    if (protocol_ == HttpOracleProtocol::simulate) {
        auto response = post_json(endpoint_, "/simulate", {{"prompt", request.prompt}});
        if (!response.is_object() || !response.contains("answer") || !response["answer"].is_string())
            throw MalformedResponse("simulate response lacks a string 'answer'");
        text = response["answer"].get<std::string>();
    } else {
        nlohmann::json body = {{"messages", {{{"role", "user"}, {"content", request.prompt}}}}};
        auto response = post_json(endpoint_, chat_path_, body);
        const nlohmann::json* message = nullptr;
        if (response.contains("choices") && response["choices"].is_array() && !response["choices"].empty())
            message = &response["choices"][0]["message"];
        else if (response.contains("messages") && response["messages"].is_array() && !response["messages"].empty())
            message = &response["messages"][0];
        if (!message || !message->is_object() || !message->contains("content") || !(*message)["content"].is_string())
            throw MalformedResponse("chat response carries no message text");
        text = (*message)["content"].get<std::string>();
    }
    const bool yes = parse_yes_no(text);
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return {yes, text, ms, false};
}

nlohmann::json HttpOracle::describe() const {
    return {{"kind", "http"},
            {"url", endpoint_.url},
            {"protocol", protocol_ == HttpOracleProtocol::simulate ? "simulate" : "chat"}};
}

std::string prompt_hash(std::string_view prompt) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(prompt)));
    return buf;
}

DecisionCache::DecisionCache(DecisionCache&& other) noexcept {
    std::lock_guard lock(other.mutex_);
    entries_ = std::move(other.entries_);
}

DecisionCache& DecisionCache::operator=(DecisionCache&& other) noexcept {
    if (this != &other) {
        std::scoped_lock lock(mutex_, other.mutex_);
        entries_ = std::move(other.entries_);
    }
    return *this;
}

DecisionCache DecisionCache::load(const std::filesystem::path& path) {
    DecisionCache cache;
    std::ifstream in(path);
    if (!in) return cache;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object())
            throw ValidationError("malformed decision cache line at " + path.string() + ":" + std::to_string(line_no));
        cache.entries_[{doc.at("user").get<UserId>(), doc.at("item").get<ItemId>(), doc.at("oracle").get<std::string>(),
                        doc.value("prompt_hash", std::string())}] = {doc.at("z").get<int>() != 0,
                                                                     doc.at("raw").get<std::string>()};
    }
    return cache;
}

void DecisionCache::save(const std::filesystem::path& path) const {
    std::lock_guard lock(mutex_);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& [key, value] : entries_) {
        nlohmann::json doc = {{"user", std::get<0>(key)}, {"item", std::get<1>(key)}, {"z", value.first ? 1 : 0},
                              {"raw", value.second},      {"oracle", std::get<2>(key)}, {"prompt_hash", std::get<3>(key)}};
        out << doc.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << "\n";
    }
}

std::optional<OracleDecision> DecisionCache::find(UserId user, ItemId item, const std::string& oracle,
                                                  const std::string& hash) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find({user, item, oracle, hash});
    if (it == entries_.end()) return std::nullopt;
    return OracleDecision{it->second.first, it->second.second, 0.0, true};
}

void DecisionCache::insert(UserId user, ItemId item, const std::string& oracle, const std::string& hash,
                           const OracleDecision& decision) {
    std::lock_guard lock(mutex_);
    entries_[{user, item, oracle, hash}] = {decision.z, decision.raw};
}

std::size_t DecisionCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

OracleDecision query_oracle(OracleClient& client, const OracleRequest& request, DecisionCache* cache,
                            const RetryPolicy& retry) {
    const std::string kind = client.kind();
    const std::string hash = cache ? prompt_hash(request.prompt) : std::string();
    if (cache) {
        if (auto hit = cache->find(request.user, request.item, kind, hash)) return *hit;
    }
    const std::size_t attempts = std::max<std::size_t>(1, retry.attempts);
    double backoff = retry.backoff_ms;
    for (std::size_t attempt = 1;; ++attempt) {
        try {
            auto decision = client.decide(request);
            if (cache) cache->insert(request.user, request.item, kind, hash, decision);
            return decision;
        } catch (const TransportError& e) {
            if (attempt >= attempts) throw;
            spdlog::warn("oracle call for ({}, {}) failed: {} (attempt {}/{})", request.user, request.item, e.what(),
                         attempt, attempts);
        } catch (const MalformedResponse& e) {
            if (attempt >= attempts) throw;
            spdlog::warn("oracle call for ({}, {}) failed: {} (attempt {}/{})", request.user, request.item, e.what(),
                         attempt, attempts);
        }
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff));
        backoff *= 2.0;
    }
}

OracleRequest make_request(UserId user, ItemId item, const RefineEnvironment& env, std::size_t context_len) {
    const auto ctx = build_context(user, env.item_vectors->row(item), env, context_len, item);
    OracleRequest request;
    request.user = user;
    request.item = item;
    request.context_items = ctx.items;
    request.prompt = render_prompt(ctx, env.catalog->text(item));
    return request;
}

namespace {

struct BatchOutcome {
    std::vector<std::optional<bool>> answers;
    std::size_t failures = 0;
    std::string last_error;
};

BatchOutcome ask_all(OracleClient& client, std::span<const std::pair<UserId, ItemId>> pairs,
                     const RefineEnvironment& env, const RefinerConfig& config, DecisionCache* cache) {
    BatchOutcome outcome;
    outcome.answers.assign(pairs.size(), std::nullopt);
    std::mutex mutex;
    const std::size_t inflight = client.concurrent() ? config.max_inflight : 1;
    parallel_for_bounded(pairs.size(), inflight, [&](std::size_t n) {
        try {
            const auto request = make_request(pairs[n].first, pairs[n].second, env, config.context_len);
            outcome.answers[n] = query_oracle(client, request, cache, config.retry).z;
        } catch (const ValidationError&) {
            throw;
        } catch (const std::exception& e) {
            std::lock_guard lock(mutex);
            ++outcome.failures;
            outcome.last_error = e.what();
        }
    });
    return outcome;
}

}  // namespace

RefineResult refine(const CandidateSet& candidates, OracleClient& client, const RefineEnvironment& env,
                    const RefinerConfig& config, DecisionCache* cache) {
    if (candidates.users.empty()) throw ValidationError("refine needs a non-empty candidate set");
    std::vector<std::pair<UserId, ItemId>> pairs;
    for (const auto& c : candidates.users) pairs.emplace_back(c.user, candidates.item);
    auto outcome = ask_all(client, pairs, env, config, cache);

    RefineResult result;
    result.item = candidates.item;
    result.failures = outcome.failures;
    if (outcome.failures == pairs.size())
        throw OracleUnavailable("every oracle call for item " + std::to_string(candidates.item) +
                                " failed; last error: " + outcome.last_error);
    if (outcome.failures > 0)
        spdlog::warn("item {}: {} of {} oracle calls failed, users dropped", candidates.item, outcome.failures,
                     pairs.size());
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        const auto& answer = outcome.answers[n];
        result.decisions.push_back({pairs[n].first, candidates.item, answer.value_or(false), !answer.has_value()});
        if (answer.value_or(false)) result.accepted.push_back(pairs[n].first);
    }
    return result;
}

SimulationResult simulate_for_item(ItemId item, std::span<const float> raw, const FilterRetriever* coupled,
                                   const FilterRetriever* behavior, OracleClient* client,
                                   const RefineEnvironment& env, std::size_t k, const RefinerConfig& config,
                                   DecisionCache* cache) {
    const auto filtered = funnel_filter(coupled, behavior, item, raw, k);
    SimulationResult result;
    result.item = item;
    result.filtered = filtered.ids();
    if (!client || filtered.users.empty()) {
        result.users = result.filtered;
        return result;
    }
    auto refined = refine(filtered, *client, env, config, cache);
    result.refined = true;
    result.users = std::move(refined.accepted);
    result.decisions = std::move(refined.decisions);
    result.failures = refined.failures;
    if (result.users.empty() && config.fallback_top1) {
        result.users.push_back(result.filtered.front());
        result.fallback = true;
    }
    return result;
}

nlohmann::json simulations_to_json(std::span<const SimulationResult> results) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& r : results) {
        nlohmann::json decisions = nlohmann::json::array();
        for (const auto& d : r.decisions) {
            decisions.push_back({{"user", d.user}, {"z", d.z ? 1 : 0}, {"failed", d.failed}});
        }
        items.push_back({{"item", r.item},
                         {"filtered", r.filtered},
                         {"users", r.users},
                         {"refined", r.refined},
                         {"fallback", r.fallback},
                         {"failures", r.failures},
                         {"decisions", std::move(decisions)}});
    }
    return {{"items", std::move(items)}};
}

std::vector<SimulationResult> simulations_from_json(const nlohmann::json& doc) {
    std::vector<SimulationResult> out;
    for (const auto& entry : doc.at("items")) {
        SimulationResult r;
        r.item = entry.at("item").get<ItemId>();
        r.filtered = entry.at("filtered").get<std::vector<UserId>>();
        r.users = entry.at("users").get<std::vector<UserId>>();
        r.refined = entry.value("refined", false);
        r.fallback = entry.value("fallback", false);
        r.failures = entry.value("failures", std::size_t{0});
        if (entry.contains("decisions")) {
            for (const auto& d : entry["decisions"]) {
                r.decisions.push_back(
                    {d.at("user").get<UserId>(), r.item, d.at("z").get<int>() != 0, d.value("failed", false)});
            }
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<LabeledPair> label_pairs(OracleClient& client, std::span<const LabeledPair> pairs,
                                     const RefineEnvironment& env, const RefinerConfig& config, DecisionCache* cache,
                                     std::size_t* failures) {
    std::vector<std::pair<UserId, ItemId>> keys;
    for (const auto& p : pairs) keys.emplace_back(p.user, p.item);
    auto outcome = ask_all(client, keys, env, config, cache);
    if (failures) *failures = outcome.failures;
    if (!pairs.empty() && outcome.failures == pairs.size())
        throw OracleUnavailable("every oracle labeling call failed; last error: " + outcome.last_error);
    if (outcome.failures > 0)
        spdlog::warn("{} of {} oracle labeling calls failed; pairs skipped", outcome.failures, pairs.size());
    std::vector<LabeledPair> out;
    for (std::size_t n = 0; n < pairs.size(); ++n) {
        if (outcome.answers[n]) out.push_back({pairs[n].user, pairs[n].item, *outcome.answers[n]});
    }
    return out;
}

FinetuneMode parse_finetune_mode(const std::string& name) {
    if (name == "offline") return FinetuneMode::offline;
    if (name == "online") return FinetuneMode::online;
    throw ValidationError("unknown fine-tune mode '" + name + "' (expected offline or online)");
}

namespace {

std::optional<ItemId> sample_unobserved(UserId user, const ColdWarmSplit& split, const InteractionLog& seen, Rng& rng) {
    if (split.warm_items.empty()) return std::nullopt;
    for (std::size_t attempt = 0; attempt < 1000; ++attempt) {
        const ItemId j = split.warm_items[uniform_index(rng, split.warm_items.size())];
        if (!seen.contains(user, j)) return j;
    }
    return std::nullopt;
}

FinetuneRecord make_record(UserId user, ItemId item, bool yes, const RefineEnvironment& env, std::size_t context_len) {
    const auto ctx = build_context(user, env.item_vectors->row(item), env, context_len, item);
    return {render_prompt(ctx, env.catalog->text(item)), yes ? "Yes" : "No"};
}

}  // namespace

std::vector<FinetuneRecord> prepare_finetune_data(const ColdWarmSplit& split, const RefineEnvironment& env,
                                                  const FinetuneOptions& options,
                                                  std::span<const Interaction> explicit_negatives) {
    if (split.warm_train.empty()) throw ValidationError("fine-tune export needs at least one positive");
    if (options.mode == FinetuneMode::online && explicit_negatives.empty())
        throw ValidationError("online fine-tune export needs a log with explicit negatives");

    std::vector<Interaction> observed = split.warm_train;
    observed.insert(observed.end(), split.warm_val.begin(), split.warm_val.end());
    observed.insert(observed.end(), split.warm_test.begin(), split.warm_test.end());
    const InteractionLog seen(split.num_users, split.num_items, std::move(observed));

    Rng rng(derive_seed(options.seed, "finetune"));
    auto sample_positives = [&] {
        std::vector<Interaction> pos = split.warm_train;
        std::shuffle(pos.begin(), pos.end(), rng);
        if (options.max_positives > 0 && pos.size() > options.max_positives) pos.resize(options.max_positives);
        return pos;
    };

    std::vector<FinetuneRecord> records;
    auto add_unobserved_pairs = [&](const std::vector<Interaction>& positives) {
        for (const auto& p : positives) {
            auto j = sample_unobserved(p.user, split, seen, rng);
            if (!j) continue;
            records.push_back(make_record(p.user, p.item, true, env, options.context_len));
            records.push_back(make_record(p.user, *j, false, env, options.context_len));
        }
    };

    if (options.mode == FinetuneMode::offline) {
        add_unobserved_pairs(sample_positives());
    } else {
        auto positives = sample_positives();
        std::vector<Interaction> negatives(explicit_negatives.begin(), explicit_negatives.end());
        std::shuffle(negatives.begin(), negatives.end(), rng);
        const std::size_t n = std::min(positives.size(), negatives.size());
        for (std::size_t k = 0; k < n; ++k) {
            records.push_back(make_record(positives[k].user, positives[k].item, true, env, options.context_len));
            records.push_back(make_record(negatives[k].user, negatives[k].item, false, env, options.context_len));
        }
        add_unobserved_pairs(sample_positives());
    }
    if (records.empty()) throw ValidationError("no fine-tune records could be formed");
    return records;
}

void write_finetune_jsonl(std::span<const FinetuneRecord> records, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& r : records) {
        nlohmann::json doc = {{"prompt", r.prompt}, {"completion", r.completion}};
        out << doc.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << "\n";
    }
}

}  // namespace coldllm
