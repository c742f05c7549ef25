#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <random>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "langlab/common.hpp"
#include "langlab/lm.hpp"

namespace langlab::lm {

/// OpenAI-compatible chat-completions client.
///
/// POSTs {model, messages, temperature, max_tokens, seed} to
/// <base_url>/chat/completions and reads the first choice's message content
/// plus usage.prompt_tokens / usage.completion_tokens. Transport failures,
/// 429 and 5xx responses are retried with jittered exponential backoff up to
/// the attempt cap, then surfaced.
class HttpBackend : public LmBackend {
public:
    struct Config {
        std::string base_url;              // e.g. "http://localhost:8080/v1"
        std::string api_key_env = "OPENAI_API_KEY";
        int max_attempts = 5;
        std::chrono::milliseconds backoff_base{1000};
        std::chrono::milliseconds timeout{120'000};
    };

    explicit HttpBackend(Config cfg) : cfg_(std::move(cfg)) {
        if (cfg_.base_url.empty()) throw ConfigError("HttpBackend: base_url is required");
        if (cfg_.max_attempts < 1) throw ConfigError("HttpBackend: max_attempts must be >= 1");
        split_url();
    }

    Prediction complete(const LmRequest& req) override {
        req.validate();
        nlohmann::ordered_json body = {
            {"model", req.model_id},
            {"messages", nlohmann::ordered_json::array(
                             {nlohmann::ordered_json{{"role", "user"}, {"content", req.prompt}}})},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens},
            {"seed", req.seed},
        };
        const std::string payload = body.dump();

        std::string last_error;
        for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
            if (attempt > 0) backoff(attempt);
            httplib::Client client(host_);
            client.set_connection_timeout(cfg_.timeout);
            client.set_read_timeout(cfg_.timeout);
            httplib::Headers headers;
            if (const char* key = std::getenv(cfg_.api_key_env.c_str());
                key != nullptr && *key != '\0')
                headers.emplace("Authorization", std::string("Bearer ") + key);

            auto res = client.Post(path_prefix_ + "/chat/completions", headers, payload,
                                   "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw ConfigError("chat completion failed with HTTP " +
                                  std::to_string(res->status) + ": " + res->body);
            return parse_response(res->body);
        }
        throw TransportError("chat completion failed after " +
                             std::to_string(cfg_.max_attempts) + " attempts (" + last_error + ")");
    }

private:
    void split_url() {
        // host = scheme://authority, path_prefix = the rest
        auto scheme_end = cfg_.base_url.find("://");
        if (scheme_end == std::string::npos)
            throw ConfigError("HttpBackend: base_url must include a scheme: " + cfg_.base_url);
        auto path_start = cfg_.base_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            host_ = cfg_.base_url;
        } else {
            host_ = cfg_.base_url.substr(0, path_start);
            path_prefix_ = cfg_.base_url.substr(path_start);
            while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
        }
    }

    void backoff(int attempt) {
        auto base = cfg_.backoff_base.count();
        std::int64_t delay = base << (attempt - 1);
        std::uniform_real_distribution<double> jitter(0.5, 1.5);
        delay = static_cast<std::int64_t>(static_cast<double>(delay) * jitter(jitter_rng_));
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }

    static Prediction parse_response(const std::string& body) {
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(body);
        } catch (const std::exception& e) {
            throw TransportError(std::string("unparseable completion response: ") + e.what());
        }
        Prediction p;
        try {
            p.raw_completion = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception&) {
            throw TransportError("completion response missing choices[0].message.content");
        }
        if (j.contains("usage")) {
            const auto& u = j["usage"];
            p.usage.input_tokens = u.value("prompt_tokens", std::int64_t{0});
            p.usage.output_tokens = u.value("completion_tokens", std::int64_t{0});
        } else {
            // degrade to the mock token definition when the server omits usage
            p.usage.output_tokens = word_count(p.raw_completion);
        }
        return p;
    }

    Config cfg_;
    std::string host_;
    std::string path_prefix_;
    std::mt19937 jitter_rng_{std::random_device{}()};
};

}  // namespace langlab::lm
