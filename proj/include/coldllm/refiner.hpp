#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "coldllm/content.hpp"
#include "coldllm/corpus.hpp"
#include "coldllm/embedding.hpp"
#include "coldllm/filter.hpp"
#include "coldllm/http.hpp"
#include "coldllm/types.hpp"

namespace coldllm {

inline constexpr std::size_t kDefaultContextLength = 10;

// The oracle answered, but not with a recognisable yes or no.
class OracleParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Every oracle call for an item failed.
class OracleUnavailable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct UserContext {
    UserId user = 0;
    std::vector<ItemId> items;  // most similar to the query item first
    std::vector<double> similarity;
    std::vector<std::string> titles;
};

// The frozen state the refiner reads: per-user history, item texts and the
// filter-space item vectors used to rank each history against the query item.
struct RefineEnvironment {
    const InteractionLog* history = nullptr;
    const ItemCatalog* catalog = nullptr;
    const EmbeddingTable* item_vectors = nullptr;
};

// Top-`length` items of the user's history by f_i . f_j, ties by ascending
// item id. `exclude` drops one item (the query itself) from consideration.
UserContext build_context(UserId user, std::span<const double> query_vector, const RefineEnvironment& env,
                          std::size_t length = kDefaultContextLength, std::optional<ItemId> exclude = std::nullopt);

// Double-quotes a title, backslash-escaping '"' and '\'.
std::string quote_title(std::string_view title);
std::string render_prompt(std::span<const std::string> titles, std::string_view item_text);
std::string render_prompt(const UserContext& context, std::string_view item_text);

// First alphabetic token, case-insensitive: "yes" -> true, "no" -> false,
// anything else throws OracleParseError.
bool parse_yes_no(std::string_view response);

struct OracleRequest {
    UserId user = 0;
    ItemId item = 0;
    std::vector<ItemId> context_items;
    std::string prompt;
};

struct OracleDecision {
    bool z = false;
    std::string raw;
    double latency_ms = 0.0;
    bool cached = false;
};

class OracleClient {
public:
    virtual ~OracleClient() = default;

    virtual std::string kind() const = 0;
    virtual OracleDecision decide(const OracleRequest& request) = 0;
    virtual bool concurrent() const { return false; }
    virtual nlohmann::json describe() const { return {{"kind", kind()}}; }
};

// Yes iff cosine(item raw vector, mean of the context items' raw vectors) >= tau.
class MockThresholdOracle : public OracleClient {
public:
    explicit MockThresholdOracle(const ContentCache& content, double tau = 0.3);

    std::string kind() const override { return "mock"; }
    OracleDecision decide(const OracleRequest& request) override;
    nlohmann::json describe() const override;

    double similarity(ItemId item, std::span<const ItemId> context) const;

private:
    const ContentCache& content_;
    double tau_;
};

// Yes iff (user, item) is in the injected ground-truth set.
class PlantedOracle : public OracleClient {
public:
    explicit PlantedOracle(std::span<const Interaction> truth);

    std::string kind() const override { return "planted"; }
    OracleDecision decide(const OracleRequest& request) override;
    bool contains(UserId user, ItemId item) const { return truth_.count(pair_key(user, item)) != 0; }

private:
    std::unordered_set<std::uint64_t> truth_;
};

// Fixed answer; counts how often it was asked.
class ConstantOracle : public OracleClient {
public:
    explicit ConstantOracle(bool answer) : answer_(answer) {}

    std::string kind() const override { return answer_ ? "always-yes" : "always-no"; }
    OracleDecision decide(const OracleRequest& request) override;
    bool concurrent() const override { return true; }
    std::size_t calls() const;

private:
    bool answer_;
    mutable std::mutex mutex_;
    std::size_t calls_ = 0;
};

enum class HttpOracleProtocol { simulate, chat };

// simulate: POST /simulate {"prompt"} -> {"answer"}.
// chat: POST `chat_path` {"messages":[{"role":"user","content":prompt}]} and
// read the first message text (choices[0].message.content or messages[0].content).
class HttpOracle : public OracleClient {
public:
    HttpOracle(HttpEndpoint endpoint, HttpOracleProtocol protocol = HttpOracleProtocol::simulate,
               std::string chat_path = "/v1/chat/completions");

    std::string kind() const override { return "http"; }
    OracleDecision decide(const OracleRequest& request) override;
    bool concurrent() const override { return true; }
    nlohmann::json describe() const override;

private:
    HttpEndpoint endpoint_;
    HttpOracleProtocol protocol_;
    std::string chat_path_;
};

std::string prompt_hash(std::string_view prompt);

// Decisions keyed by (user, item, oracle kind, prompt hash). Thread-safe.
// On disk: JSONL {user, item, z, raw, oracle, prompt_hash}, written in key order.
class DecisionCache {
public:
    DecisionCache() = default;
    DecisionCache(DecisionCache&& other) noexcept;
    DecisionCache& operator=(DecisionCache&& other) noexcept;
    static DecisionCache load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::optional<OracleDecision> find(UserId user, ItemId item, const std::string& oracle,
                                       const std::string& hash) const;
    void insert(UserId user, ItemId item, const std::string& oracle, const std::string& hash,
                const OracleDecision& decision);
    std::size_t size() const;

private:
    using Key = std::tuple<UserId, ItemId, std::string, std::string>;
    mutable std::mutex mutex_;
    std::map<Key, std::pair<bool, std::string>> entries_;
};

struct RetryPolicy {
    std::size_t attempts = 3;
    double backoff_ms = 200.0;
};

// Cache lookup, then the client with retries on transport and malformed
// responses. Parse errors are not retried.
OracleDecision query_oracle(OracleClient& client, const OracleRequest& request, DecisionCache* cache = nullptr,
                            const RetryPolicy& retry = {});

struct RefinerConfig {
    std::size_t context_len = kDefaultContextLength;
    std::size_t max_inflight = 8;
    RetryPolicy retry;
    bool fallback_top1 = true;  // otherwise an empty refinement leaves the item cold
};

struct DecisionRecord {
    UserId user = 0;
    ItemId item = 0;
    bool z = false;
    bool failed = false;

    bool operator==(const DecisionRecord&) const = default;
};

struct RefineResult {
    ItemId item = 0;
    std::vector<UserId> accepted;  // candidate order preserved
    std::vector<DecisionRecord> decisions;
    std::size_t failures = 0;
};

OracleRequest make_request(UserId user, ItemId item, const RefineEnvironment& env, std::size_t context_len);

RefineResult refine(const CandidateSet& candidates, OracleClient& client, const RefineEnvironment& env,
                    const RefinerConfig& config = {}, DecisionCache* cache = nullptr);

struct SimulationResult {
    ItemId item = 0;
    std::vector<UserId> filtered;
    std::vector<UserId> users;  // s_hat_i
    bool refined = false;
    bool fallback = false;
    std::vector<DecisionRecord> decisions;
    std::size_t failures = 0;
};

// Funnel filtering then refinement. A null client skips refinement.
SimulationResult simulate_for_item(ItemId item, std::span<const float> raw, const FilterRetriever* coupled,
                                   const FilterRetriever* behavior, OracleClient* client,
                                   const RefineEnvironment& env, std::size_t k, const RefinerConfig& config = {},
                                   DecisionCache* cache = nullptr);

nlohmann::json simulations_to_json(std::span<const SimulationResult> results);
std::vector<SimulationResult> simulations_from_json(const nlohmann::json& doc);

// Oracle labels for the coupled filter. Failed pairs are dropped with a warning.
std::vector<LabeledPair> label_pairs(OracleClient& client, std::span<const LabeledPair> pairs,
                                     const RefineEnvironment& env, const RefinerConfig& config = {},
                                     DecisionCache* cache = nullptr, std::size_t* failures = nullptr);

struct FinetuneRecord {
    std::string prompt;
    std::string completion;  // "Yes" | "No"

    bool operator==(const FinetuneRecord&) const = default;
};

enum class FinetuneMode { offline, online };

FinetuneMode parse_finetune_mode(const std::string& name);

struct FinetuneOptions {
    FinetuneMode mode = FinetuneMode::offline;
    std::size_t max_positives = 0;  // 0 = every warm-train positive
    std::size_t context_len = kDefaultContextLength;
    std::uint64_t seed = 0;
};

// Offline: each sampled positive (u, i) yields a Yes record and a No record
// for a uniformly drawn unobserved warm item of the same user. Online: the
// sampled positives pair 1:1 with `explicit_negatives`, and a second positive
// sample pairs 1:1 with unobserved items.
std::vector<FinetuneRecord> prepare_finetune_data(const ColdWarmSplit& split, const RefineEnvironment& env,
                                                  const FinetuneOptions& options,
                                                  std::span<const Interaction> explicit_negatives = {});

void write_finetune_jsonl(std::span<const FinetuneRecord> records, const std::filesystem::path& path);

}  // namespace coldllm
