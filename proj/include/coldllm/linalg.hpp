#pragma once

#include <cmath>
#include <cstddef>
#include <iterator>

namespace coldllm {

// Sequential left-to-right sum; every ranking path relies on this exact order.
template <class A, class B>
double dot(const A& a, const B& b) {
    double s = 0.0;
    const std::size_t n = std::size(a);
    for (std::size_t k = 0; k < n; ++k) s += static_cast<double>(a[k]) * static_cast<double>(b[k]);
    return s;
}

template <class A>
double l2_norm(const A& a) {
    return std::sqrt(dot(a, a));
}

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// ln(sigmoid(x)) without overflow for large |x|.
inline double log_sigmoid(double x) {
    if (x >= 0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

}  // namespace coldllm
