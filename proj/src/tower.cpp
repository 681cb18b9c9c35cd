#include "coldllm/tower.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "coldllm/random.hpp"
#include "coldllm/types.hpp"

namespace coldllm {

TowerMlp::TowerMlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.weight.size() != layer.in * layer.out || layer.bias.size() != layer.out)
            throw ValidationError("tower layer " + std::to_string(l) + " has inconsistent parameter shapes");
        if (l > 0 && layers_[l - 1].out != layer.in)
            throw ValidationError("tower layer " + std::to_string(l) + " input width does not chain");
    }
}

TowerMlp TowerMlp::zeros(std::span<const std::size_t> widths) {
    if (widths.size() < 2) throw ValidationError("a tower needs at least input and output widths");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        DenseLayer layer;
        layer.in = widths[l];
        layer.out = widths[l + 1];
        layer.weight.assign(layer.in * layer.out, 0.0);
        layer.bias.assign(layer.out, 0.0);
        layers.push_back(std::move(layer));
    }
    return TowerMlp(std::move(layers));
}

TowerMlp TowerMlp::random(std::span<const std::size_t> widths, std::uint64_t seed) {
    TowerMlp tower = zeros(widths);
    Rng rng(seed);
    for (auto& layer : tower.layers_) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        for (auto& w : layer.weight) w = uniform(rng);
        for (auto& b : layer.bias) b = uniform(rng);
    }
    return tower;
}

std::vector<std::size_t> TowerMlp::widths() const {
    std::vector<std::size_t> out;
    if (layers_.empty()) return out;
    out.push_back(layers_.front().in);
    for (const auto& layer : layers_) out.push_back(layer.out);
    return out;
}

std::size_t TowerMlp::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
    return n;
}

std::vector<double> TowerMlp::forward(std::span<const double> x) const {
    Trace trace;
    return forward(x, trace);
}

std::vector<double> TowerMlp::forward(std::span<const double> x, Trace& trace) const {
    if (x.size() != input_width())
        throw ValidationError("tower expects input width " + std::to_string(input_width()) + ", got " +
                              std::to_string(x.size()));
    trace.inputs.assign(layers_.size(), {});
    trace.pre.assign(layers_.size(), {});
    std::vector<double> h(x.begin(), x.end());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        std::vector<double> z(layer.out);
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double* w = layer.weight.data() + o * layer.in;
            double s = layer.bias[o];
            for (std::size_t k = 0; k < layer.in; ++k) s += w[k] * h[k];
            z[o] = s;
        }
        trace.inputs[l] = std::move(h);
        trace.pre[l] = z;
        if (l + 1 < layers_.size()) {
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
        }
        h = std::move(z);
    }
    return h;
}

void TowerMlp::backward(const Trace& trace, std::span<const double> grad_out, TowerMlp& grad) const {
    std::vector<double> g(grad_out.begin(), grad_out.end());
    for (std::size_t l = layers_.size(); l-- > 0;) {
        const auto& layer = layers_[l];
        auto& gl = grad.layers_[l];
        if (l + 1 < layers_.size()) {
            for (std::size_t o = 0; o < layer.out; ++o) {
                if (trace.pre[l][o] <= 0.0) g[o] = 0.0;
            }
        }
        const auto& input = trace.inputs[l];
        std::vector<double> g_in(l > 0 ? layer.in : 0, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double go = g[o];
            if (go == 0.0) continue;
            gl.bias[o] += go;
            double* gw = gl.weight.data() + o * layer.in;
            const double* w = layer.weight.data() + o * layer.in;
            for (std::size_t k = 0; k < layer.in; ++k) gw[k] += go * input[k];
            if (l > 0) {
                for (std::size_t k = 0; k < layer.in; ++k) g_in[k] += go * w[k];
            }
        }
        g = std::move(g_in);
    }
}

}  // namespace coldllm
