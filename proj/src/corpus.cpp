#include "coldllm/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "coldllm/random.hpp"

namespace coldllm {

namespace {

std::string at_line(const std::filesystem::path& file, std::size_t line_no) {
    return file.string() + ":" + std::to_string(line_no);
}

std::ifstream open_input(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ValidationError("cannot open " + file.string());
    return in;
}

bool parse_u64(std::string_view s, std::uint64_t& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t k = 0;
    while (k < line.size()) {
        while (k < line.size() && std::isspace(static_cast<unsigned char>(line[k]))) ++k;
        std::size_t start = k;
        while (k < line.size() && !std::isspace(static_cast<unsigned char>(line[k]))) ++k;
        if (k > start) out.push_back(line.substr(start, k - start));
    }
    return out;
}

std::vector<std::string_view> split_on(std::string_view line, std::string_view sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + sep.size();
    }
}

std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        if (k) out += sep;
        out += parts[k];
    }
    return out;
}

}  // namespace

InteractionLog::InteractionLog(std::size_t num_users, std::size_t num_items, std::vector<Interaction> pairs)
    : pairs_(std::move(pairs)) {
    for (const auto& p : pairs_) {
        if (p.user >= num_users || p.item >= num_items)
            throw ValidationError("interaction (" + std::to_string(p.user) + ", " + std::to_string(p.item) +
                                  ") outside id universe");
    }
    std::sort(pairs_.begin(), pairs_.end());
    pairs_.erase(std::unique(pairs_.begin(), pairs_.end()), pairs_.end());

    user_offsets_.assign(num_users + 1, 0);
    item_offsets_.assign(num_items + 1, 0);
    for (const auto& p : pairs_) {
        ++user_offsets_[p.user + 1];
        ++item_offsets_[p.item + 1];
    }
    for (std::size_t u = 0; u < num_users; ++u) user_offsets_[u + 1] += user_offsets_[u];
    for (std::size_t i = 0; i < num_items; ++i) item_offsets_[i + 1] += item_offsets_[i];

    user_items_.resize(pairs_.size());
    item_users_.resize(pairs_.size());
    std::vector<std::size_t> user_fill(user_offsets_.begin(), user_offsets_.end() - 1);
    std::vector<std::size_t> item_fill(item_offsets_.begin(), item_offsets_.end() - 1);
    // pairs_ is sorted by user then item, so both lists come out ascending.
    for (const auto& p : pairs_) {
        user_items_[user_fill[p.user]++] = p.item;
        item_users_[item_fill[p.item]++] = p.user;
    }
}

std::span<const ItemId> InteractionLog::user_items(UserId u) const {
    if (u >= num_users()) throw std::out_of_range("user id " + std::to_string(u) + " out of range");
    return {user_items_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
}

std::span<const UserId> InteractionLog::item_users(ItemId i) const {
    if (i >= num_items()) throw std::out_of_range("item id " + std::to_string(i) + " out of range");
    return {item_users_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
}

bool InteractionLog::contains(UserId u, ItemId i) const {
    if (u >= num_users()) return false;
    auto items = user_items(u);
    return std::binary_search(items.begin(), items.end(), i);
}

ItemCatalog::ItemCatalog(std::vector<ItemContent> items) : items_(std::move(items)) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
        if (items_[i].text.empty()) throw ValidationError("item " + std::to_string(i) + " has empty content");
    }
}

const ItemContent& ItemCatalog::at(ItemId i) const {
    if (i >= items_.size()) throw std::out_of_range("item id " + std::to_string(i) + " not in catalog");
    return items_[i];
}

Corpus load_citeulike(const std::filesystem::path& dir, const CiteULikeOptions& options) {
    const auto users_path = dir / options.users_file;
    const auto items_path = dir / options.items_file;

    // Item metadata: id \t title \t abstract.
    std::map<std::uint64_t, ItemContent> metadata;
    {
        auto in = open_input(items_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view view = strip_cr(line);
            if (view.empty()) continue;
            auto fields = split_on(view, "\t");
            std::uint64_t id = 0;
            if (fields.size() < 2 || !parse_u64(fields[0], id))
                throw ValidationError("malformed item metadata at " + at_line(items_path, line_no));
            ItemContent content;
            content.title = std::string(fields[1]);
            content.text = content.title;
            if (fields.size() > 2 && !fields[2].empty()) {
                content.text += " ";
                content.text += fields[2];
            }
            if (content.text.empty()) throw ValidationError("empty item content at " + at_line(items_path, line_no));
            if (!metadata.emplace(id, std::move(content)).second)
                throw ValidationError("duplicate item id at " + at_line(items_path, line_no));
        }
    }

    std::vector<std::vector<std::uint64_t>> user_lines;
    {
        auto in = open_input(users_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::vector<std::uint64_t> ids;
            for (auto token : split_whitespace(line)) {
                std::uint64_t id = 0;
                if (!parse_u64(token, id))
                    throw ValidationError("malformed user line at " + at_line(users_path, line_no) + ": '" +
                                          std::string(token) + "'");
                ids.push_back(id);
            }
            user_lines.push_back(std::move(ids));
        }
    }

    bool prefixed = options.format == UserFileFormat::count_prefixed;
    if (options.format == UserFileFormat::automatic) {
        prefixed = !user_lines.empty() && std::all_of(user_lines.begin(), user_lines.end(), [](const auto& ids) {
            return !ids.empty() && ids.front() == ids.size() - 1;
        });
    }
    if (prefixed) {
        for (std::size_t k = 0; k < user_lines.size(); ++k) {
            auto& ids = user_lines[k];
            if (ids.empty() || ids.front() != ids.size() - 1)
                throw ValidationError("count prefix mismatch at " + at_line(users_path, k + 1));
            ids.erase(ids.begin());
        }
    }

    Corpus corpus;
    std::unordered_map<std::uint64_t, ItemId> item_index;
    std::vector<ItemContent> contents;
    for (auto& [key, content] : metadata) {
        item_index.emplace(key, static_cast<ItemId>(contents.size()));
        corpus.item_keys.push_back(std::to_string(key));
        contents.push_back(std::move(content));
    }

    std::vector<Interaction> pairs;
    for (std::size_t u = 0; u < user_lines.size(); ++u) {
        corpus.user_keys.push_back(std::to_string(u));
        for (auto key : user_lines[u]) {
            auto it = item_index.find(key);
            if (it == item_index.end())
                throw ValidationError("item " + std::to_string(key) + " referenced without metadata at " +
                                      at_line(users_path, u + 1));
            pairs.push_back({static_cast<UserId>(u), it->second});
        }
    }
    if (pairs.empty()) throw ValidationError("no interactions in " + users_path.string());

    corpus.log = InteractionLog(user_lines.size(), contents.size(), std::move(pairs));
    corpus.catalog = ItemCatalog(std::move(contents));
    return corpus;
}

Corpus load_movielens(const std::filesystem::path& dir, const MovieLensOptions& options) {
    const auto ratings_path = dir / options.ratings_file;
    const auto movies_path = dir / options.movies_file;

    std::map<std::uint64_t, ItemContent> metadata;
    {
        auto in = open_input(movies_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view view = strip_cr(line);
            if (view.empty()) continue;
            auto fields = split_on(view, "::");
            std::uint64_t id = 0;
            if (fields.size() != 3 || !parse_u64(fields[0], id))
                throw ValidationError("malformed movie record at " + at_line(movies_path, line_no));
            ItemContent content;
            content.title = std::string(fields[1]);
            for (auto genre : split_on(fields[2], "|")) {
                if (!genre.empty()) content.features.emplace_back(genre);
            }
            content.text = content.title;
            if (!content.features.empty()) content.text += " " + join(content.features, " ");
            if (content.text.empty()) throw ValidationError("empty movie content at " + at_line(movies_path, line_no));
            if (!metadata.emplace(id, std::move(content)).second)
                throw ValidationError("duplicate movie id at " + at_line(movies_path, line_no));
        }
    }

    struct Rating {
        std::uint64_t user, item;
    };
    std::vector<Rating> ratings;
    {
        auto in = open_input(ratings_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view view = strip_cr(line);
            if (view.empty()) continue;
            auto fields = split_on(view, "::");
            std::uint64_t user = 0, item = 0;
            double rating = 0;
            if (fields.size() != 4 || !parse_u64(fields[0], user) || !parse_u64(fields[1], item))
                throw ValidationError("malformed rating record at " + at_line(ratings_path, line_no));
            auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), rating);
            if (ec != std::errc() || ptr != fields[2].data() + fields[2].size())
                throw ValidationError("malformed rating value at " + at_line(ratings_path, line_no));
            if (!metadata.contains(item))
                throw ValidationError("movie " + std::to_string(item) + " referenced without metadata at " +
                                      at_line(ratings_path, line_no));
            if (rating >= options.min_rating) ratings.push_back({user, item});
        }
    }
    if (ratings.empty()) throw ValidationError("no interactions in " + ratings_path.string());

    Corpus corpus;
    std::unordered_map<std::uint64_t, ItemId> item_index;
    std::vector<ItemContent> contents;
    for (auto& [key, content] : metadata) {
        item_index.emplace(key, static_cast<ItemId>(contents.size()));
        corpus.item_keys.push_back(std::to_string(key));
        contents.push_back(std::move(content));
    }

    std::map<std::uint64_t, UserId> user_index;
    for (const auto& r : ratings) user_index.emplace(r.user, 0);
    UserId next = 0;
    for (auto& [key, id] : user_index) {
        id = next++;
        corpus.user_keys.push_back(std::to_string(key));
    }

    std::vector<Interaction> pairs;
    pairs.reserve(ratings.size());
    for (const auto& r : ratings) pairs.push_back({user_index.at(r.user), item_index.at(r.item)});

    corpus.log = InteractionLog(user_index.size(), contents.size(), std::move(pairs));
    corpus.catalog = ItemCatalog(std::move(contents));
    return corpus;
}

void save_id_map(const Corpus& corpus, const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["users"] = corpus.user_keys;
    doc["items"] = corpus.item_keys;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(1) << "\n";
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "interactions.tsv");
        if (!out) throw std::runtime_error("cannot write " + (dir / "interactions.tsv").string());
        out << "# users=" << corpus.log.num_users() << " items=" << corpus.log.num_items() << "\n";
        for (const auto& p : corpus.log.interactions()) out << p.user << '\t' << p.item << '\n';
    }
    {
        std::ofstream out(dir / "catalog.jsonl");
        if (!out) throw std::runtime_error("cannot write " + (dir / "catalog.jsonl").string());
        for (std::size_t i = 0; i < corpus.catalog.size(); ++i) {
            const auto& c = corpus.catalog.at(static_cast<ItemId>(i));
            nlohmann::json row = {{"id", i}, {"title", c.title}, {"text", c.text}, {"features", c.features}};
            out << row.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
        }
    }
    save_id_map(corpus, dir / "id_map.json");
}

Corpus load_corpus(const std::filesystem::path& dir) {
    Corpus corpus;
    {
        std::ifstream in(dir / "id_map.json");
        if (!in) throw ValidationError("missing " + (dir / "id_map.json").string());
        auto doc = nlohmann::json::parse(in);
        corpus.user_keys = doc.at("users").get<std::vector<std::string>>();
        corpus.item_keys = doc.at("items").get<std::vector<std::string>>();
    }
    std::vector<ItemContent> contents;
    {
        auto in = open_input(dir / "catalog.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto row = nlohmann::json::parse(line);
            ItemContent c;
            c.title = row.at("title").get<std::string>();
            c.text = row.at("text").get<std::string>();
            c.features = row.at("features").get<std::vector<std::string>>();
            contents.push_back(std::move(c));
        }
    }
    std::vector<Interaction> pairs;
    {
        const auto path = dir / "interactions.tsv";
        auto in = open_input(path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line[0] == '#') continue;
            auto fields = split_on(line, "\t");
            std::uint64_t u = 0, i = 0;
            if (fields.size() != 2 || !parse_u64(fields[0], u) || !parse_u64(fields[1], i))
                throw ValidationError("malformed interaction at " + at_line(path, line_no));
            pairs.push_back({static_cast<UserId>(u), static_cast<ItemId>(i)});
        }
    }
    corpus.log = InteractionLog(corpus.user_keys.size(), corpus.item_keys.size(), std::move(pairs));
    corpus.catalog = ItemCatalog(std::move(contents));
    if (corpus.catalog.size() != corpus.item_keys.size())
        throw ValidationError("catalog and id map disagree on item count");
    return corpus;
}

bool ColdWarmSplit::is_cold(ItemId i) const {
    return std::binary_search(cold_items.begin(), cold_items.end(), i);
}

ColdWarmSplit split_with_cold_items(const InteractionLog& log, std::vector<ItemId> cold_items, std::uint64_t seed,
                                    double cold_frac) {
    ColdWarmSplit split;
    split.num_users = log.num_users();
    split.num_items = log.num_items();
    split.seed = seed;
    split.cold_frac = cold_frac;

    std::sort(cold_items.begin(), cold_items.end());
    cold_items.erase(std::unique(cold_items.begin(), cold_items.end()), cold_items.end());
    std::vector<char> cold_mask(log.num_items(), 0);
    for (auto i : cold_items) {
        if (i >= log.num_items()) throw ValidationError("cold item " + std::to_string(i) + " out of range");
        cold_mask[i] = 1;
    }
    split.cold_items = std::move(cold_items);
    for (ItemId i = 0; i < log.num_items(); ++i) {
        if (!cold_mask[i]) split.warm_items.push_back(i);
    }

    Rng rng(derive_seed(seed, "split.interactions"));
    for (auto i : split.cold_items) {
        auto users = log.item_users(i);
        std::vector<UserId> order(users.begin(), users.end());
        std::shuffle(order.begin(), order.end(), rng);
        const std::size_t n_val = order.size() / 2;
        for (std::size_t k = 0; k < order.size(); ++k) {
            (k < n_val ? split.cold_val : split.cold_test).push_back({order[k], i});
        }
    }

    std::vector<Interaction> warm;
    for (const auto& p : log.interactions()) {
        if (!cold_mask[p.item]) warm.push_back(p);
    }
    std::shuffle(warm.begin(), warm.end(), rng);
    const std::size_t n_train = warm.size() * 8 / 10;
    const std::size_t n_val = warm.size() / 10;
    split.warm_train.assign(warm.begin(), warm.begin() + n_train);
    split.warm_val.assign(warm.begin() + n_train, warm.begin() + n_train + n_val);
    split.warm_test.assign(warm.begin() + n_train + n_val, warm.end());

    for (auto* part : {&split.warm_train, &split.warm_val, &split.warm_test, &split.cold_val, &split.cold_test})
        std::sort(part->begin(), part->end());
    return split;
}

ColdWarmSplit make_cold_split(const InteractionLog& log, double cold_frac, std::uint64_t seed) {
    if (!(cold_frac >= 0.0 && cold_frac < 1.0))
        throw ValidationError("cold_frac must lie in [0, 1), got " + std::to_string(cold_frac));
    const std::size_t n_items = log.num_items();
    // The epsilon absorbs representation error, e.g. 0.2 * 16980.
    const auto n_cold = static_cast<std::size_t>(std::floor(cold_frac * static_cast<double>(n_items) + 1e-9));

    std::vector<ItemId> order(n_items);
    for (std::size_t i = 0; i < n_items; ++i) order[i] = static_cast<ItemId>(i);
    Rng rng(derive_seed(seed, "split.cold_items"));
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(n_cold);
    return split_with_cold_items(log, std::move(order), seed, cold_frac);
}

namespace {

nlohmann::json pairs_to_json(const std::vector<Interaction>& pairs) {
    auto arr = nlohmann::json::array();
    for (const auto& p : pairs) arr.push_back({p.user, p.item});
    return arr;
}

std::vector<Interaction> pairs_from_json(const nlohmann::json& arr) {
    std::vector<Interaction> out;
    out.reserve(arr.size());
    for (const auto& p : arr) out.push_back({p.at(0).get<UserId>(), p.at(1).get<ItemId>()});
    return out;
}

}  // namespace

nlohmann::json split_to_json(const ColdWarmSplit& split) {
    nlohmann::json doc;
    doc["seed"] = split.seed;
    doc["cold_frac"] = split.cold_frac;
    doc["num_users"] = split.num_users;
    doc["num_items"] = split.num_items;
    doc["warm_items"] = split.warm_items;
    doc["cold_items"] = split.cold_items;
    doc["warm_train"] = pairs_to_json(split.warm_train);
    doc["warm_val"] = pairs_to_json(split.warm_val);
    doc["warm_test"] = pairs_to_json(split.warm_test);
    doc["cold_val"] = pairs_to_json(split.cold_val);
    doc["cold_test"] = pairs_to_json(split.cold_test);
    return doc;
}

ColdWarmSplit split_from_json(const nlohmann::json& doc) {
    ColdWarmSplit split;
    split.seed = doc.at("seed").get<std::uint64_t>();
    split.cold_frac = doc.at("cold_frac").get<double>();
    split.num_users = doc.at("num_users").get<std::size_t>();
    split.num_items = doc.at("num_items").get<std::size_t>();
    split.warm_items = doc.at("warm_items").get<std::vector<ItemId>>();
    split.cold_items = doc.at("cold_items").get<std::vector<ItemId>>();
    split.warm_train = pairs_from_json(doc.at("warm_train"));
    split.warm_val = pairs_from_json(doc.at("warm_val"));
    split.warm_test = pairs_from_json(doc.at("warm_test"));
    split.cold_val = pairs_from_json(doc.at("cold_val"));
    split.cold_test = pairs_from_json(doc.at("cold_test"));
    return split;
}

void save_split(const ColdWarmSplit& split, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << split_to_json(split).dump() << "\n";
}

ColdWarmSplit load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open split " + path.string());
    return split_from_json(nlohmann::json::parse(in));
}

}  // namespace coldllm
