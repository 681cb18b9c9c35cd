#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "coldllm/corpus.hpp"
#include "coldllm/http.hpp"
#include "coldllm/types.hpp"

namespace coldllm {

// Pooled content embedding of an item's text, as produced by a provider.
using RawVector = std::vector<float>;

// Lowercased tokens; any byte that is not ASCII alphanumeric and below 0x80
// separates tokens, so UTF-8 sequences stay inside their word.
std::vector<std::string> tokenize(std::string_view text);

// 64-bit FNV-1a with the offset basis xor-ed by `seed` (seed 0 is plain FNV-1a).
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0);

// Hashed bag-of-tokens: mean of token one-hots at fnv1a64(token) mod dim,
// L2-normalised. Throws ValidationError when the text has no tokens.
RawVector mock_embed(std::string_view text, std::size_t dim, std::uint64_t hash_seed = 0);

class ContentProvider {
public:
    virtual ~ContentProvider() = default;

    virtual std::string kind() const = 0;
    // 0 until an http provider has seen its first response.
    virtual std::size_t dim() const = 0;
    virtual RawVector embed(ItemId item, std::string_view text) = 0;
    virtual nlohmann::json describe() const;
    // Whether embed() may be called from several threads at once.
    virtual bool concurrent() const { return false; }
};

class MockContentProvider : public ContentProvider {
public:
    explicit MockContentProvider(std::size_t dim = 256, std::uint64_t hash_seed = 0);

    std::string kind() const override { return "mock"; }
    std::size_t dim() const override { return dim_; }
    RawVector embed(ItemId item, std::string_view text) override;
    nlohmann::json describe() const override;

private:
    std::size_t dim_;
    std::uint64_t hash_seed_;
};

// Precomputed vectors in CEMB layout, row index = item id.
class FileContentProvider : public ContentProvider {
public:
    explicit FileContentProvider(const std::filesystem::path& path);

    std::string kind() const override { return "file"; }
    std::size_t dim() const override { return dim_; }
    RawVector embed(ItemId item, std::string_view text) override;
    nlohmann::json describe() const override;

private:
    std::filesystem::path path_;
    std::size_t rows_ = 0;
    std::size_t dim_ = 0;
    std::vector<float> values_;
};

// POST {endpoint}/embed {"text": ...} -> {"vector": [...]}.
class HttpContentProvider : public ContentProvider {
public:
    explicit HttpContentProvider(HttpEndpoint endpoint, std::size_t expected_dim = 0);

    std::string kind() const override { return "http"; }
    std::size_t dim() const override { return dim_.load(); }
    RawVector embed(ItemId item, std::string_view text) override;
    nlohmann::json describe() const override;
    bool concurrent() const override { return true; }

private:
    HttpEndpoint endpoint_;
    std::atomic<std::size_t> dim_;
};

// Validates the text and the provider's dimension contract around embed().
RawVector embed_content(ContentProvider& provider, ItemId item, std::string_view text);

// Item-id keyed store of raw content vectors: CEMB payload + JSON sidecar
// ("<path>.json") with provider kind, dim, hash seed and the filled rows.
class ContentCache {
public:
    ContentCache() = default;
    ContentCache(std::size_t num_items, std::size_t dim, nlohmann::json provider);

    static ContentCache load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::size_t num_items() const { return present_.size(); }
    std::size_t dim() const { return dim_; }
    const nlohmann::json& provider() const { return provider_; }
    std::size_t filled() const;

    bool has(ItemId item) const { return item < present_.size() && present_[item]; }
    std::span<const float> get(ItemId item) const;
    void put(ItemId item, std::span<const float> vector);

private:
    std::size_t dim_ = 0;
    nlohmann::json provider_;
    std::vector<float> values_;
    std::vector<char> present_;
};

struct WarmCacheOptions {
    std::size_t max_inflight = 8;
    std::size_t attempts = 3;
    double backoff_ms = 200.0;
    std::size_t flush_every = 512;
};

struct WarmCacheStats {
    std::size_t provider_calls = 0;
    std::size_t hits = 0;
};

// Fills `cache_path` with a vector for every catalog item, resuming from any
// partial cache already there. Flushes progress before surfacing an error.
WarmCacheStats warm_cache(ContentProvider& provider, const ItemCatalog& catalog,
                          const std::filesystem::path& cache_path, const WarmCacheOptions& options = {});

}  // namespace coldllm
