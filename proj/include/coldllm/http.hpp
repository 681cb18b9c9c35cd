#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace coldllm {

struct HttpEndpoint {
    std::string url;  // scheme://host[:port], no trailing path
    double timeout_s = 30.0;
    std::size_t attempts = 3;
    double backoff_ms = 200.0;  // doubled after each failed attempt
};

// Connection failure, timeout or non-200 status after all attempts.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A 200 response whose body does not have the expected shape.
class MalformedResponse : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// POSTs `body` as JSON to `path` and returns the parsed JSON response,
// retrying transport errors with exponential backoff. A body that is not
// JSON is retried too and surfaces as MalformedResponse.
nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path, const nlohmann::json& body);

}  // namespace coldllm
