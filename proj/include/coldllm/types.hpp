#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace coldllm {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

struct Interaction {
    UserId user = 0;
    ItemId item = 0;

    auto operator<=>(const Interaction&) const = default;
};

inline std::uint64_t pair_key(UserId u, ItemId i) {
    return (static_cast<std::uint64_t>(u) << 32) | i;
}

// Bad input, bad configuration, or a violated precondition the caller can fix.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A training loss became non-finite.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace coldllm
