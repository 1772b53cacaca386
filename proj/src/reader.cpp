// SPDX-License-Identifier: Apache-2.0
#include "hichunk/reader.hpp"

#include "hichunk/errors.hpp"
#include "hichunk/text.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <thread>

namespace hichunk {

namespace {

std::size_t count_slot(const std::string& tpl, const std::string& slot) {
    std::size_t count = 0;
    for (std::size_t pos = tpl.find(slot); pos != std::string::npos;
         pos = tpl.find(slot, pos + slot.size())) {
        ++count;
    }
    return count;
}

std::string substitute(std::string tpl, const std::string& slot, const std::string& value) {
    const std::size_t pos = tpl.find(slot);
    tpl.replace(pos, slot.size(), value);
    return tpl;
}

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool transient_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

} // namespace

void ReaderConfig::validate() const {
    if (endpoint_url.empty()) throw ConfigError("reader requires endpoint_url");
    if (max_context_tokens == 0) throw ConfigError("reader max_context_tokens must be positive");
    if (count_slot(prompt_template, "{context}") != 1 ||
        count_slot(prompt_template, "{question}") != 1) {
        throw ConfigError("reader prompt template must contain {context} and {question} exactly once");
    }
}

std::string build_prompt(const std::string& question,
                         const std::vector<std::string>& chunks,
                         const ReaderConfig& cfg) {
    cfg.validate();
    if (chunks.empty()) throw ContractError("build_prompt: no chunks");

    const std::string skeleton =
        substitute(substitute(cfg.prompt_template, "{question}", question), "{context}", "");
    if (count_tokens(skeleton) > cfg.max_context_tokens) {
        throw ContractError("build_prompt: question alone exceeds the context budget");
    }

    std::string context;
    for (const auto& chunk : chunks) {
        std::string longer = context;
        if (!longer.empty()) longer += "\n\n";
        longer += chunk;
        const std::string candidate = substitute(
            substitute(cfg.prompt_template, "{question}", question), "{context}", longer);
        if (count_tokens(candidate) > cfg.max_context_tokens) break;
        context = std::move(longer);
    }
    return substitute(substitute(cfg.prompt_template, "{question}", question), "{context}",
                      context);
}

std::string answer(const std::string& question,
                   const std::vector<std::string>& chunks,
                   const ReaderConfig& cfg) {
    const std::string prompt = build_prompt(question, chunks, cfg);

    const auto scheme_end = cfg.endpoint_url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("reader endpoint_url must include a scheme: " + cfg.endpoint_url);
    }
    const auto path_start = cfg.endpoint_url.find('/', scheme_end + 3);
    const std::string base = path_start == std::string::npos
        ? cfg.endpoint_url
        : cfg.endpoint_url.substr(0, path_start);
    const std::string path = path_start == std::string::npos
        ? std::string("/")
        : cfg.endpoint_url.substr(path_start);

    nlohmann::json body;
    body["model"] = cfg.model_name;
    body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = cfg.temperature;
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (!cfg.api_key_env_var.empty()) {
        if (const char* key = std::getenv(cfg.api_key_env_var.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    constexpr int kMaxTries = 3;
    int backoff_ms = cfg.retry_backoff_ms;
    std::string last_error;

    for (int attempt = 1; attempt <= kMaxTries; ++attempt) {
        httplib::Client client(base);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(300, 0);
        auto res = client.Post(path, headers, payload, "application/json");

        if (!res) {
            last_error = "connection error (" + httplib::to_string(res.error()) + ")";
        } else if (res->status == 200) {
            nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
            if (parsed.is_discarded()) {
                throw ContractError("reader response is not valid JSON");
            }
            try {
                return trim(parsed.at("choices").at(0).at("message").at("content")
                                .get<std::string>());
            } catch (const nlohmann::json::exception& e) {
                throw ContractError(std::string("reader response malformed: ") + e.what());
            }
        } else if (!transient_status(res->status)) {
            throw TransportError("reader endpoint returned status " +
                                 std::to_string(res->status));
        } else {
            last_error = "status " + std::to_string(res->status);
        }

        if (attempt < kMaxTries) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
    }
    throw TransportError("reader request failed after " + std::to_string(kMaxTries) +
                         " tries: " + last_error);
}

} // namespace hichunk
