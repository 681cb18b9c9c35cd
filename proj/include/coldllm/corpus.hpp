#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coldllm/types.hpp"

namespace coldllm {

// A set of (user, item) pairs over dense id universes, indexed both ways.
//
// Pairs are de-duplicated and kept in ascending (user, item) order. The
// per-item user sequence s_i and the per-user history are ascending id lists.
class InteractionLog {
public:
    InteractionLog() = default;
    InteractionLog(std::size_t num_users, std::size_t num_items, std::vector<Interaction> pairs);

    std::size_t num_users() const { return user_offsets_.empty() ? 0 : user_offsets_.size() - 1; }
    std::size_t num_items() const { return item_offsets_.empty() ? 0 : item_offsets_.size() - 1; }
    std::size_t size() const { return pairs_.size(); }
    bool empty() const { return pairs_.empty(); }

    const std::vector<Interaction>& interactions() const { return pairs_; }
    std::span<const ItemId> user_items(UserId u) const;
    std::span<const UserId> item_users(ItemId i) const;
    bool contains(UserId u, ItemId i) const;

private:
    std::vector<Interaction> pairs_;
    std::vector<std::size_t> user_offsets_;
    std::vector<ItemId> user_items_;
    std::vector<std::size_t> item_offsets_;
    std::vector<UserId> item_users_;
};

struct ItemContent {
    std::string title;
    std::string text;
    std::vector<std::string> features;
};

class ItemCatalog {
public:
    ItemCatalog() = default;
    explicit ItemCatalog(std::vector<ItemContent> items);

    std::size_t size() const { return items_.size(); }
    const ItemContent& at(ItemId i) const;
    const std::string& title(ItemId i) const { return at(i).title; }
    const std::string& text(ItemId i) const { return at(i).text; }
    const std::vector<ItemContent>& items() const { return items_; }

private:
    std::vector<ItemContent> items_;
};

// A loaded dataset plus the original keys behind each dense id.
struct Corpus {
    InteractionLog log;
    ItemCatalog catalog;
    std::vector<std::string> user_keys;
    std::vector<std::string> item_keys;
};

enum class UserFileFormat { automatic, plain, count_prefixed };

struct CiteULikeOptions {
    std::string users_file = "users.dat";
    std::string items_file = "items.tsv";
    // citeulike-a ships users.dat with a leading per-line count; `automatic`
    // treats the file as count-prefixed only when every line matches.
    UserFileFormat format = UserFileFormat::automatic;
};

struct MovieLensOptions {
    std::string ratings_file = "ratings.dat";
    std::string movies_file = "movies.dat";
    double min_rating = 0.0;
};

Corpus load_citeulike(const std::filesystem::path& dir, const CiteULikeOptions& options = {});
Corpus load_movielens(const std::filesystem::path& dir, const MovieLensOptions& options = {});

void save_id_map(const Corpus& corpus, const std::filesystem::path& path);

// Round-trippable on-disk form used between CLI stages:
// interactions.tsv, catalog.jsonl and id_map.json inside `dir`.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

struct ColdWarmSplit {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::vector<ItemId> warm_items;
    std::vector<ItemId> cold_items;
    std::vector<Interaction> warm_train;
    std::vector<Interaction> warm_val;
    std::vector<Interaction> warm_test;
    std::vector<Interaction> cold_val;
    std::vector<Interaction> cold_test;
    std::uint64_t seed = 0;
    double cold_frac = 0.0;

    bool is_cold(ItemId i) const;
    bool operator==(const ColdWarmSplit&) const = default;
};

// Samples floor(cold_frac * |I|) cold items uniformly, splits each cold item's
// interactions 1:1 into val/test (odd extra goes to test) and all warm
// interactions 8:1:1 globally into train/val/test.
ColdWarmSplit make_cold_split(const InteractionLog& log, double cold_frac, std::uint64_t seed);

// Same partition rules with the cold set supplied by the caller.
ColdWarmSplit split_with_cold_items(const InteractionLog& log, std::vector<ItemId> cold_items,
                                    std::uint64_t seed, double cold_frac);

nlohmann::json split_to_json(const ColdWarmSplit& split);
ColdWarmSplit split_from_json(const nlohmann::json& doc);
void save_split(const ColdWarmSplit& split, const std::filesystem::path& path);
ColdWarmSplit load_split(const std::filesystem::path& path);

}  // namespace coldllm
