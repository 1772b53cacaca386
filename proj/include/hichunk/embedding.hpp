// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hichunk {

struct EmbeddingVector {
    std::vector<float> values;

    std::size_t dim() const { return values.size(); }
    const float* data() const { return values.data(); }
};

enum class ProviderKind { remote, deterministic };

struct EmbeddingProviderConfig {
    ProviderKind kind = ProviderKind::deterministic;
    std::string endpoint_url;     // remote only
    std::string model_name;       // remote only; also keys the cache
    std::string api_key_env_var;  // bearer token source, optional
    std::size_t dim = 64;
    std::size_t batch_size = 32;
    std::size_t max_in_flight = 4;
    std::optional<std::filesystem::path> cache_dir;
    std::uint64_t seed = 0;       // deterministic kind
    int retry_backoff_ms = 100;   // first backoff step; doubles per retry

    void validate() const;
    // Identifies the vector space for cache partitioning.
    std::string cache_model_key() const;
};

// One vector per text, order preserving. The remote kind posts batches
// of at most batch_size texts with at most max_in_flight requests in
// flight, retrying transient failures (connection errors, 5xx/429) with
// exponential backoff, 3 tries total. Vectors are cached under
// cache_dir by (model key, 64-bit content hash) when a cache is
// configured.
std::vector<EmbeddingVector> embed_texts(const EmbeddingProviderConfig& cfg,
                                         const std::vector<std::string>& texts);

// Hashed bag-of-words embedder: every whitespace token hashes to a
// bucket in [0, dim) with a +/-1 sign from a second hash; bucket sums
// are L2-normalized. Token-free input yields the zero vector.
EmbeddingVector deterministic_embed(std::string_view text, std::size_t dim,
                                    std::uint64_t seed);

// Elementwise arithmetic mean. No re-normalization.
EmbeddingVector mean_pool(std::span<const EmbeddingVector> vectors);
EmbeddingVector mean_pool(const std::vector<EmbeddingVector>& vectors);

// dot(u, v) / (|u| * |v|), accumulated in double. Zero-norm input is a
// contract error.
double cosine(const EmbeddingVector& u, const EmbeddingVector& v);

// Number of HTTP requests issued by this process's remote embedding
// client; test hook for cache behavior.
std::uint64_t remote_request_count();

} // namespace hichunk
