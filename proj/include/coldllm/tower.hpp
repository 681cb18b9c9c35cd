#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace coldllm {

struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weight;  // out x in, row-major
    std::vector<double> bias;    // out

    bool operator==(const DenseLayer&) const = default;
};

// Feed-forward stack with a rectifier after every layer except the last.
class TowerMlp {
public:
    TowerMlp() = default;
    explicit TowerMlp(std::vector<DenseLayer> layers);

    // PyTorch-style init: weights and biases ~ U(-1/sqrt(in), 1/sqrt(in)).
    static TowerMlp random(std::span<const std::size_t> widths, std::uint64_t seed);
    static TowerMlp zeros(std::span<const std::size_t> widths);

    std::size_t input_width() const { return layers_.empty() ? 0 : layers_.front().in; }
    std::size_t output_width() const { return layers_.empty() ? 0 : layers_.back().out; }
    std::vector<std::size_t> widths() const;
    std::size_t parameter_count() const;

    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    // Per-layer inputs and pre-activations recorded by forward() for backward().
    struct Trace {
        std::vector<std::vector<double>> inputs;
        std::vector<std::vector<double>> pre;
    };

    std::vector<double> forward(std::span<const double> x) const;
    std::vector<double> forward(std::span<const double> x, Trace& trace) const;

    // Adds d(loss)/d(params) into `grad` (same shapes) given d(loss)/d(output).
    void backward(const Trace& trace, std::span<const double> grad_out, TowerMlp& grad) const;

    bool operator==(const TowerMlp&) const = default;

private:
    std::vector<DenseLayer> layers_;
};

}  // namespace coldllm
