#include "coldllm/http.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

namespace coldllm {

nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path, const nlohmann::json& body) {
    httplib::Client client(endpoint.url);
    const auto timeout = std::chrono::duration<double>(endpoint.timeout_s);
    const auto whole = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - whole);
    client.set_connection_timeout(whole.count(), micros.count());
    client.set_read_timeout(whole.count(), micros.count());
    client.set_write_timeout(whole.count(), micros.count());

    const std::string payload = body.dump();
    const std::size_t attempts = std::max<std::size_t>(1, endpoint.attempts);
    double backoff = endpoint.backoff_ms;
    std::string last_error;
    bool malformed = false;
    for (std::size_t attempt = 1; attempt <= attempts; ++attempt) {
        auto res = client.Post(path, payload, "application/json");
        if (!res) {
            last_error = "request to " + endpoint.url + path + " failed: " + httplib::to_string(res.error());
            malformed = false;
        } else if (res->status != 200) {
            last_error = endpoint.url + path + " returned HTTP " + std::to_string(res->status);
            malformed = false;
        } else {
            auto parsed = nlohmann::json::parse(res->body, nullptr, false);
            if (!parsed.is_discarded()) return parsed;
            last_error = endpoint.url + path + " returned a non-JSON body";
            malformed = true;
        }
        if (attempt < attempts) {
            spdlog::warn("{} (attempt {}/{}); retrying in {:.0f} ms", last_error, attempt, attempts, backoff);
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff));
            backoff *= 2.0;
        }
    }
    if (malformed) throw MalformedResponse(last_error);
    throw TransportError(last_error);
}

}  // namespace coldllm
