#include "coldllm/synthetic.hpp"

#include <fstream>
#include <sstream>

#include "coldllm/random.hpp"

namespace coldllm {

PlantedDataset make_planted(const PlantedConfig& config) {
    if (config.users == 0 || config.warm_items == 0) throw ValidationError("planted world needs users and warm items");
    if (config.clusters == 0 || config.groups_per_cluster == 0) throw ValidationError("planted world needs groups");
    if (config.p_interact <= 0.0 || config.p_interact > 1.0) throw ValidationError("p_interact must be in (0, 1]");

    PlantedDataset data;
    data.config = config;
    const std::size_t groups = config.clusters * config.groups_per_cluster;
    const std::size_t n_items = config.warm_items + config.cold_items;
    Rng rng(derive_seed(config.seed, "planted"));
    std::bernoulli_distribution coin(config.p_interact);

    data.user_group.resize(config.users);
    for (std::size_t u = 0; u < config.users; ++u) data.user_group[u] = u % groups;
    data.item_group.resize(n_items);
    for (std::size_t i = 0; i < n_items; ++i) data.item_group[i] = i % groups;
    for (std::size_t i = config.warm_items; i < n_items; ++i) data.cold_items.push_back(static_cast<ItemId>(i));

    std::vector<Interaction> pairs;
    for (std::size_t u = 0; u < config.users; ++u) {
        for (std::size_t i = 0; i < n_items; ++i) {
            if (data.user_group[u] != data.item_group[i]) continue;
            data.truth.push_back({static_cast<UserId>(u), static_cast<ItemId>(i)});
            if (coin(rng)) pairs.push_back({static_cast<UserId>(u), static_cast<ItemId>(i)});
        }
    }

    std::vector<ItemContent> items;
    for (std::size_t i = 0; i < n_items; ++i) {
        const std::size_t g = data.item_group[i];
        const std::size_t c = g / config.groups_per_cluster;
        std::ostringstream text;
        text << "cluster" << c << " cluster" << c << " group" << g << " group" << g << " group" << g;
        for (std::size_t w = 0; w < config.noise_words; ++w) text << " word" << uniform_index<std::size_t>(rng, 40);
        items.push_back({"Item " + std::to_string(i), text.str(), {"cluster" + std::to_string(c), "group" + std::to_string(g)}});
    }

    data.corpus.log = InteractionLog(config.users, n_items, std::move(pairs));
    data.corpus.catalog = ItemCatalog(std::move(items));
    for (std::size_t u = 0; u < config.users; ++u) data.corpus.user_keys.push_back("u" + std::to_string(u));
    for (std::size_t i = 0; i < n_items; ++i) data.corpus.item_keys.push_back("i" + std::to_string(i));
    return data;
}

ColdWarmSplit planted_split(const PlantedDataset& data, std::uint64_t seed) {
    const double n_items = static_cast<double>(data.corpus.catalog.size());
    return split_with_cold_items(data.corpus.log, data.cold_items, seed,
                                 static_cast<double>(data.cold_items.size()) / n_items);
}

void save_truth(std::span<const Interaction> truth, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& p : truth) out << p.user << '\t' << p.item << '\n';
}

std::vector<Interaction> load_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open truth file " + path.string());
    std::vector<Interaction> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        Interaction p;
        if (!(fields >> p.user >> p.item))
            throw ValidationError("malformed truth pair at " + path.string() + ":" + std::to_string(line_no));
        out.push_back(p);
    }
    return out;
}

}  // namespace coldllm
