#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "coldllm/corpus.hpp"
#include "coldllm/types.hpp"

namespace coldllm::test {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("coldllm_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    out << body;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Reference metrics: linear scans over the ranked list, no shared code with
// the library.
inline double ref_recall(const std::vector<ItemId>& ranked, const std::set<ItemId>& relevant, std::size_t k) {
    if (relevant.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < ranked.size() && r < k; ++r) {
        if (relevant.count(ranked[r])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

inline double ref_ndcg(const std::vector<ItemId>& ranked, const std::set<ItemId>& relevant, std::size_t k) {
    if (relevant.empty()) return 0.0;
    double dcg = 0.0;
    for (std::size_t r = 1; r <= ranked.size() && r <= k; ++r) {
        if (relevant.count(ranked[r - 1])) dcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    }
    double idcg = 0.0;
    for (std::size_t r = 1; r <= std::min(relevant.size(), k); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 1.0);
    return dcg / idcg;
}

// Full argsort by (score desc, id asc), truncated to k.
inline std::vector<std::uint32_t> ref_topk(const std::vector<double>& scores, std::size_t k) {
    std::vector<std::uint32_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0u);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    order.resize(std::min(k, order.size()));
    return order;
}

inline double ref_dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

// ||a - b|| / max(||a||, ||b||), with an absolute floor for vanishing gradients.
inline double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-10) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        diff += (a[k] - b[k]) * (a[k] - b[k]);
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Central differences of f around x, perturbing each coordinate in place.
template <class F>
std::vector<double> numeric_gradient(std::vector<double>& x, F&& f, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double saved = x[k];
        x[k] = saved + h;
        const double up = f();
        x[k] = saved - h;
        const double down = f();
        x[k] = saved;
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

// Random log where every item has at least one interaction.
inline InteractionLog random_log(std::size_t users, std::size_t items, double density, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(density);
    std::vector<Interaction> pairs;
    for (UserId u = 0; u < users; ++u) {
        for (ItemId i = 0; i < items; ++i) {
            if (coin(rng)) pairs.push_back({u, i});
        }
    }
    std::uniform_int_distribution<UserId> pick(0, static_cast<UserId>(users - 1));
    for (ItemId i = 0; i < items; ++i) pairs.push_back({pick(rng), i});
    return InteractionLog(users, items, std::move(pairs));
}

inline ItemCatalog numbered_catalog(std::size_t items) {
    std::vector<ItemContent> contents;
    for (std::size_t i = 0; i < items; ++i) {
        ItemContent c;
        c.title = "Item " + std::to_string(i);
        c.text = "item " + std::to_string(i) + " topic" + std::to_string(i % 5);
        contents.push_back(std::move(c));
    }
    return ItemCatalog(std::move(contents));
}

}  // namespace coldllm::test
