#include <algorithm>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "coldllm/config.hpp"
#include "coldllm/content.hpp"
#include "coldllm/metrics.hpp"
#include "coldllm/pipeline.hpp"
#include "coldllm/random.hpp"
#include "coldllm/refiner.hpp"
#include "coldllm/synthetic.hpp"

namespace py = pybind11;
using namespace coldllm;

namespace {

std::vector<ItemId> sorted_unique(std::vector<ItemId> items) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    return items;
}

// Runs one ablation variant on the planted world the CLI would build for `config`.
std::string run_planted(const std::string& config_json, const std::string& variant_name) {
    const Config c = config_from_json(nlohmann::json::parse(config_json));
    validate_config(c);
    const auto variant = parse_ablation_variant(variant_name);
    auto pc = c.data.planted;
    pc.seed = derive_seed(c.seed, "data.planted");
    const auto data = make_planted(pc);
    const auto split = planted_split(data, derive_seed(c.seed, "stage.split"));
    PlantedOracle oracle(data.truth);
    py::gil_scoped_release release;
    const auto artifacts = prepare_artifacts(data.corpus, split, c, &oracle);
    const auto run = run_variant(artifacts, variant, spec_of(variant).refine ? &oracle : nullptr, c);
    auto doc = run.report.to_json();
    if (run.adoption) doc["adoption"] = run.adoption->rate;
    return doc.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Cold-start item warmup via a filter-then-refine simulation funnel";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<OracleParseError>(m, "OracleParseError", PyExc_ValueError);

    m.def("recall_at_k", [](const std::vector<ItemId>& ranked, std::vector<ItemId> relevant, std::size_t k) {
        return recall_at_k(ranked, sorted_unique(std::move(relevant)), k);
    }, py::arg("ranked"), py::arg("relevant"), py::arg("k"));
    m.def("ndcg_at_k", [](const std::vector<ItemId>& ranked, std::vector<ItemId> relevant, std::size_t k) {
        return ndcg_at_k(ranked, sorted_unique(std::move(relevant)), k);
    }, py::arg("ranked"), py::arg("relevant"), py::arg("k"));

    m.def("mock_embed", [](const std::string& text, std::size_t dim, std::uint64_t hash_seed) {
        auto v = mock_embed(text, dim, hash_seed);
        return std::vector<float>(v.begin(), v.end());
    }, py::arg("text"), py::arg("dim"), py::arg("hash_seed") = 0);

    m.def("render_prompt", [](const std::vector<std::string>& titles, const std::string& item_text) {
        return render_prompt(titles, item_text);
    }, py::arg("titles"), py::arg("item_text"));
    m.def("parse_yes_no", [](const std::string& text) { return parse_yes_no(text); }, py::arg("response"));

    m.def("default_config_json", [] { return config_to_json(Config{}).dump(); });
    m.def("normalize_config_json", [](const std::string& text) {
        const Config c = config_from_json(nlohmann::json::parse(text));
        validate_config(c);
        return config_to_json(c).dump();
    }, py::arg("config_json"));
    m.def("config_fingerprint", [](const std::string& text) {
        return config_fingerprint(config_from_json(nlohmann::json::parse(text)));
    }, py::arg("config_json"));

    m.def("run_planted_json", &run_planted, py::arg("config_json"), py::arg("variant") = "full");
}
