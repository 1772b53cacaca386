// SPDX-License-Identifier: Apache-2.0
#include "hichunk/embedding.hpp"

#include "hichunk/errors.hpp"
#include "hichunk/hvec.hpp"
#include "hichunk/kernels.hpp"
#include "hichunk/text.hpp"
#include "hichunk/util.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace hichunk {

namespace {

std::atomic<std::uint64_t> g_remote_requests{0};

std::string sanitize_key(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '_';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? std::string("default") : out;
}

struct SplitUrl {
    std::string base; // scheme://host[:port]
    std::string path; // leading '/'
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint_url must include a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::filesystem::path cache_file_path(const EmbeddingProviderConfig& cfg,
                                      const std::string& text) {
    const auto dir = *cfg.cache_dir / sanitize_key(cfg.cache_model_key());
    return dir / (to_hex16(fnv1a64(text)) + ".hvec");
}

std::optional<EmbeddingVector> cache_lookup(const EmbeddingProviderConfig& cfg,
                                            const std::string& text) {
    const auto path = cache_file_path(cfg, text);
    std::error_code ec;
    if (!std::filesystem::exists(path, ec)) return std::nullopt;
    HvecData data = read_hvec(path);
    if (data.dim != cfg.dim || data.row_count() != 1) {
        throw FormatError("embedding cache entry has wrong shape: " + path.string());
    }
    return EmbeddingVector{std::move(data.values)};
}

void cache_store(const EmbeddingProviderConfig& cfg, const std::string& text,
                 const EmbeddingVector& vec) {
    static std::atomic<std::uint64_t> counter{0};
    const auto path = cache_file_path(cfg, text);
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);

    HvecData data;
    data.dim = static_cast<std::uint32_t>(cfg.dim);
    data.values = vec.values;

    // write-then-rename keeps concurrent readers off partial files
    const auto tmp = path.parent_path() /
                     (path.filename().string() + ".tmp" + to_hex16(counter.fetch_add(1) + 1));
    write_hvec(tmp, data);
    std::filesystem::rename(tmp, path, ec);
    if (ec) std::filesystem::remove(tmp, ec);
}

bool transient_status(int status) {
    return status == 429 || (status >= 500 && status < 600);
}

std::vector<EmbeddingVector> post_batch(const EmbeddingProviderConfig& cfg,
                                        const std::vector<std::string>& batch) {
    const SplitUrl url = split_url(cfg.endpoint_url);

    nlohmann::json body;
    body["model"] = cfg.model_name;
    body["input"] = batch;
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
        httplib::Client client(url.base);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(120, 0);
        g_remote_requests.fetch_add(1);
        auto res = client.Post(url.path, headers, payload, "application/json");

        if (!res) {
            last_error = "connection error (" + httplib::to_string(res.error()) + ")";
        } else if (res->status == 200) {
            nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
            if (parsed.is_discarded() || !parsed.contains("data") || !parsed["data"].is_array() ||
                parsed["data"].size() != batch.size()) {
                throw ContractError("embedding response malformed from " + cfg.endpoint_url);
            }
            std::vector<EmbeddingVector> out(batch.size());
            std::vector<bool> filled(batch.size(), false);
            for (const auto& item : parsed["data"]) {
                if (!item.contains("index") || !item.contains("embedding")) {
                    throw ContractError("embedding response item missing index/embedding");
                }
                const auto idx = item["index"].get<std::size_t>();
                if (idx >= batch.size() || filled[idx]) {
                    throw ContractError("embedding response has bad index " + std::to_string(idx));
                }
                auto values = item["embedding"].get<std::vector<float>>();
                if (values.size() != cfg.dim) {
                    throw ContractError("embedding dimension " + std::to_string(values.size()) +
                                        " does not match configured dim " + std::to_string(cfg.dim));
                }
                for (float v : values) {
                    if (!std::isfinite(v)) throw ContractError("embedding contains non-finite value");
                }
                out[idx] = EmbeddingVector{std::move(values)};
                filled[idx] = true;
            }
            return out;
        } else if (!transient_status(res->status)) {
            throw TransportError("embedding endpoint returned status " +
                                 std::to_string(res->status));
        } else {
            last_error = "status " + std::to_string(res->status);
        }

        if (attempt < kMaxTries) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
    }
    throw TransportError("embedding request failed after " + std::to_string(kMaxTries) +
                         " tries: " + last_error);
}

} // namespace

void EmbeddingProviderConfig::validate() const {
    if (dim == 0) throw ConfigError("embedding dim must be positive");
    if (batch_size == 0) throw ConfigError("embedding batch_size must be positive");
    if (max_in_flight == 0) throw ConfigError("embedding max_in_flight must be positive");
    if (kind == ProviderKind::remote && endpoint_url.empty()) {
        throw ConfigError("remote embedding provider requires endpoint_url");
    }
}

std::string EmbeddingProviderConfig::cache_model_key() const {
    if (kind == ProviderKind::remote) {
        return model_name.empty() ? std::string("remote") : model_name;
    }
    return "det-d" + std::to_string(dim) + "-s" + std::to_string(seed);
}

EmbeddingVector deterministic_embed(std::string_view text, std::size_t dim,
                                    std::uint64_t seed) {
    if (dim == 0) throw ContractError("deterministic_embed: dim must be positive");
    std::vector<float> acc(dim, 0.0f);
    bool any = false;
    for (const auto& token : whitespace_tokens(text)) {
        const std::uint64_t h = fnv1a64(token, seed);
        const std::size_t bucket = static_cast<std::size_t>(mix64(h) % dim);
        const float sign = (mix64(h ^ 0x9e3779b97f4a7c15ull) & 1) ? 1.0f : -1.0f;
        acc[bucket] += sign;
        any = true;
    }
    if (!any) return EmbeddingVector{std::move(acc)};

    const double sq = kernels::dot_f64acc(acc.data(), acc.data(), dim);
    if (sq > 0.0) {
        kernels::scale_inplace(acc.data(), static_cast<float>(1.0 / std::sqrt(sq)), dim);
    }
    return EmbeddingVector{std::move(acc)};
}

EmbeddingVector mean_pool(std::span<const EmbeddingVector> vectors) {
    if (vectors.empty()) throw ContractError("mean_pool: empty input");
    const std::size_t dim = vectors.front().dim();
    // double accumulation, then one rounding per element; pooling k
    // copies of a vector returns that vector bitwise, which keeps
    // cosine tie-breaks downstream exact
    std::vector<double> acc(dim, 0.0);
    for (const auto& v : vectors) {
        if (v.dim() != dim) throw ContractError("mean_pool: mixed dimensions");
        for (std::size_t d = 0; d < dim; ++d) acc[d] += v.values[d];
    }
    const double count = static_cast<double>(vectors.size());
    EmbeddingVector out;
    out.values.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
        out.values[d] = static_cast<float>(acc[d] / count);
    }
    return out;
}

EmbeddingVector mean_pool(const std::vector<EmbeddingVector>& vectors) {
    return mean_pool(std::span<const EmbeddingVector>(vectors.data(), vectors.size()));
}

double cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
    if (u.dim() != v.dim()) throw ContractError("cosine: dimension mismatch");
    if (u.dim() == 0) throw ContractError("cosine: empty vectors");
    const double nu = kernels::dot_f64acc(u.data(), u.data(), u.dim());
    const double nv = kernels::dot_f64acc(v.data(), v.data(), v.dim());
    if (nu == 0.0 || nv == 0.0) throw ContractError("cosine: zero-norm input");
    return kernels::dot_f64acc(u.data(), v.data(), u.dim()) / (std::sqrt(nu) * std::sqrt(nv));
}

std::vector<EmbeddingVector> embed_texts(const EmbeddingProviderConfig& cfg,
                                         const std::vector<std::string>& texts) {
    cfg.validate();
    if (texts.empty()) throw ContractError("embed_texts: empty text list");
    for (const auto& t : texts) {
        if (t.empty()) throw ContractError("embed_texts: empty string in text list");
    }

    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::size_t> misses;
    misses.reserve(texts.size());

    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (cfg.cache_dir) {
            if (auto hit = cache_lookup(cfg, texts[i])) {
                out[i] = std::move(*hit);
                continue;
            }
        }
        misses.push_back(i);
    }
    if (misses.empty()) return out;

    if (cfg.kind == ProviderKind::deterministic) {
        for (std::size_t i : misses) {
            out[i] = deterministic_embed(texts[i], cfg.dim, cfg.seed);
            if (cfg.cache_dir) cache_store(cfg, texts[i], out[i]);
        }
        return out;
    }

    // remote: batch the misses, bounded fan-out
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < misses.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(misses.size(), start + cfg.batch_size);
        batches.emplace_back(misses.begin() + static_cast<std::ptrdiff_t>(start),
                             misses.begin() + static_cast<std::ptrdiff_t>(stop));
    }

    parallel_for(batches.size(), cfg.max_in_flight, [&](std::size_t b) {
        std::vector<std::string> batch_texts;
        batch_texts.reserve(batches[b].size());
        for (std::size_t i : batches[b]) batch_texts.push_back(texts[i]);

        auto vectors = post_batch(cfg, batch_texts);
        for (std::size_t j = 0; j < batches[b].size(); ++j) {
            const std::size_t i = batches[b][j];
            out[i] = std::move(vectors[j]);
            if (cfg.cache_dir) cache_store(cfg, texts[i], out[i]);
        }
    });
    return out;
}

std::uint64_t remote_request_count() {
    return g_remote_requests.load();
}

} // namespace hichunk
