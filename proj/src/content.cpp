#include "coldllm/content.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "coldllm/embedding.hpp"
#include "coldllm/parallel.hpp"

namespace coldllm {

namespace {

bool is_token_byte(unsigned char c) {
    return c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".json";
    return p;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_token_byte(c)) {
            current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
    constexpr std::uint64_t kOffset = 14695981039346656037ULL;
    constexpr std::uint64_t kPrime = 1099511628211ULL;
    std::uint64_t h = kOffset ^ seed;
    for (char ch : bytes) {
        h ^= static_cast<unsigned char>(ch);
        h *= kPrime;
    }
    return h;
}

RawVector mock_embed(std::string_view text, std::size_t dim, std::uint64_t hash_seed) {
    if (dim < 1) throw ValidationError("mock embedding dim must be >= 1");
    const auto tokens = tokenize(text);
    if (tokens.empty()) throw ValidationError("text has no tokens to embed");
    std::vector<double> acc(dim, 0.0);
    for (const auto& t : tokens) acc[fnv1a64(t, hash_seed) % dim] += 1.0;
    double norm = 0.0;
    for (auto& v : acc) {
        v /= static_cast<double>(tokens.size());
        norm += v * v;
    }
    norm = std::sqrt(norm);
    RawVector out(dim);
    for (std::size_t k = 0; k < dim; ++k) out[k] = static_cast<float>(acc[k] / norm);
    return out;
}

nlohmann::json ContentProvider::describe() const {
    return {{"kind", kind()}, {"dim", dim()}};
}

MockContentProvider::MockContentProvider(std::size_t dim, std::uint64_t hash_seed) : dim_(dim), hash_seed_(hash_seed) {
    if (dim_ < 1) throw ValidationError("mock embedding dim must be >= 1");
}

RawVector MockContentProvider::embed(ItemId, std::string_view text) {
    return mock_embed(text, dim_, hash_seed_);
}

nlohmann::json MockContentProvider::describe() const {
    return {{"kind", "mock"}, {"dim", dim_}, {"hash_seed", hash_seed_}};
}

FileContentProvider::FileContentProvider(const std::filesystem::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open content vectors " + path.string());
    values_ = read_embeddings_f32(in, rows_, dim_);
}

RawVector FileContentProvider::embed(ItemId item, std::string_view) {
    if (item >= rows_) throw ValidationError("no precomputed content vector for item " + std::to_string(item));
    return RawVector(values_.begin() + static_cast<std::ptrdiff_t>(item * dim_),
                     values_.begin() + static_cast<std::ptrdiff_t>((item + 1) * dim_));
}

nlohmann::json FileContentProvider::describe() const {
    return {{"kind", "file"}, {"dim", dim_}, {"path", path_.string()}};
}

HttpContentProvider::HttpContentProvider(HttpEndpoint endpoint, std::size_t expected_dim)
    : endpoint_(std::move(endpoint)), dim_(expected_dim) {}

RawVector HttpContentProvider::embed(ItemId, std::string_view text) {
    auto response = post_json(endpoint_, "/embed", {{"text", std::string(text)}});
    if (!response.is_object() || !response.contains("vector") || !response["vector"].is_array())
        throw MalformedResponse("embed response lacks a 'vector' array");
    RawVector out;
    out.reserve(response["vector"].size());
    for (const auto& v : response["vector"]) {
        if (!v.is_number()) throw MalformedResponse("embed response vector holds a non-number");
        out.push_back(v.get<float>());
    }
    if (out.empty()) throw MalformedResponse("embed response vector is empty");
    std::size_t expected = 0;
    if (!dim_.compare_exchange_strong(expected, out.size()) && expected != out.size())
        throw MalformedResponse("embed response has dim " + std::to_string(out.size()) + ", expected " +
                                std::to_string(expected));
    return out;
}

nlohmann::json HttpContentProvider::describe() const {
    return {{"kind", "http"}, {"dim", dim_.load()}, {"url", endpoint_.url}};
}

RawVector embed_content(ContentProvider& provider, ItemId item, std::string_view text) {
    if (text.empty()) throw ValidationError("cannot embed empty content text");
    auto v = provider.embed(item, text);
    if (provider.dim() != 0 && v.size() != provider.dim())
        throw ValidationError("provider returned dim " + std::to_string(v.size()) + ", expected " +
                              std::to_string(provider.dim()));
    for (float x : v) {
        if (!std::isfinite(x)) throw ValidationError("provider returned a non-finite content vector");
    }
    return v;
}

ContentCache::ContentCache(std::size_t num_items, std::size_t dim, nlohmann::json provider)
    : dim_(dim), provider_(std::move(provider)), values_(num_items * dim, 0.0f), present_(num_items, 0) {}

std::size_t ContentCache::filled() const {
    std::size_t n = 0;
    for (char p : present_) n += p ? 1 : 0;
    return n;
}

std::span<const float> ContentCache::get(ItemId item) const {
    if (!has(item)) throw ValidationError("content cache has no vector for item " + std::to_string(item));
    return {values_.data() + item * dim_, dim_};
}

void ContentCache::put(ItemId item, std::span<const float> vector) {
    if (item >= present_.size()) throw std::out_of_range("item outside content cache");
    if (vector.size() != dim_)
        throw ValidationError("content vector dim " + std::to_string(vector.size()) + " differs from cache dim " +
                              std::to_string(dim_));
    std::copy(vector.begin(), vector.end(), values_.begin() + static_cast<std::ptrdiff_t>(item * dim_));
    present_[item] = 1;
}

void ContentCache::save(const std::filesystem::path& path) const {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        write_embeddings(out, present_.size(), std::max<std::size_t>(dim_, 1), values_);
    }
    nlohmann::json present = nlohmann::json::array();
    for (std::size_t i = 0; i < present_.size(); ++i) {
        if (present_[i]) present.push_back(i);
    }
    nlohmann::json sidecar = {{"provider", provider_}, {"dim", dim_}, {"num_items", present_.size()},
                              {"present", std::move(present)}};
    std::ofstream out(sidecar_path(path));
    if (!out) throw std::runtime_error("cannot write " + sidecar_path(path).string());
    out << sidecar.dump(1) << "\n";
}

ContentCache ContentCache::load(const std::filesystem::path& path) {
    std::ifstream meta_in(sidecar_path(path));
    if (!meta_in) throw ValidationError("missing content cache sidecar " + sidecar_path(path).string());
    const auto sidecar = nlohmann::json::parse(meta_in);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open content cache " + path.string());
    std::size_t rows = 0, dim = 0;
    auto values = read_embeddings_f32(in, rows, dim);

    ContentCache cache;
    cache.dim_ = sidecar.at("dim").get<std::size_t>();
    cache.provider_ = sidecar.at("provider");
    if (rows != sidecar.at("num_items").get<std::size_t>() || (cache.dim_ != 0 && dim != cache.dim_))
        throw ValidationError("content cache payload disagrees with its sidecar");
    if (rows > 0) cache.values_ = std::move(values);
    cache.present_.assign(rows, 0);
    for (const auto& i : sidecar.at("present")) cache.present_.at(i.get<std::size_t>()) = 1;
    return cache;
}

WarmCacheStats warm_cache(ContentProvider& provider, const ItemCatalog& catalog,
                          const std::filesystem::path& cache_path, const WarmCacheOptions& options) {
    WarmCacheStats stats;
    const std::size_t n_items = catalog.size();
    ContentCache cache;
    if (std::filesystem::exists(cache_path)) {
        cache = ContentCache::load(cache_path);
        if (cache.num_items() != n_items)
            throw ValidationError("existing content cache covers " + std::to_string(cache.num_items()) +
                                  " items, catalog has " + std::to_string(n_items));
        if (cache.provider().value("kind", "") != provider.kind())
            throw ValidationError("existing content cache was built by a '" + cache.provider().value("kind", "") +
                                  "' provider");
    }

    std::vector<ItemId> missing;
    for (ItemId i = 0; i < n_items; ++i) {
        if (!cache.has(i)) missing.push_back(i);
    }
    stats.hits = n_items - missing.size();
    if (missing.empty()) {
        if (!std::filesystem::exists(cache_path)) ContentCache(0, provider.dim(), provider.describe()).save(cache_path);
        return stats;
    }

    auto tagged = [&](std::size_t dim) {
        auto description = provider.describe();
        description["dim"] = dim;
        return description;
    };

    std::mutex mutex;
    std::size_t calls = 0;
    std::size_t unsaved = 0;
    auto flush_locked = [&] {
        if (unsaved == 0) return;
        cache.save(cache_path);
        unsaved = 0;
    };

    const std::size_t inflight = provider.concurrent() ? options.max_inflight : 1;
    try {
        parallel_for_bounded(missing.size(), inflight, [&](std::size_t k) {
            const ItemId item = missing[k];
            double backoff = options.backoff_ms;
            RawVector vec;
            for (std::size_t attempt = 1;; ++attempt) {
                try {
                    {
                        std::lock_guard lock(mutex);
                        ++calls;
                    }
                    vec = embed_content(provider, item, catalog.text(item));
                    break;
                } catch (const std::exception& e) {
                    const bool transient = dynamic_cast<const TransportError*>(&e) != nullptr ||
                                           dynamic_cast<const MalformedResponse*>(&e) != nullptr;
                    if (!transient || attempt >= options.attempts) throw;
                    spdlog::warn("embedding item {} failed ({}); attempt {}/{}", item, e.what(), attempt,
                                 options.attempts);
                }
                std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff));
                backoff *= 2.0;
            }
            std::lock_guard lock(mutex);
            if (cache.num_items() == 0) cache = ContentCache(n_items, vec.size(), tagged(vec.size()));
            cache.put(item, vec);
            if (++unsaved >= options.flush_every) flush_locked();
        });
    } catch (...) {
        std::lock_guard lock(mutex);
        flush_locked();
        stats.provider_calls = calls;
        throw;
    }
    std::lock_guard lock(mutex);
    flush_locked();
    stats.provider_calls = calls;
    return stats;
}

}  // namespace coldllm
