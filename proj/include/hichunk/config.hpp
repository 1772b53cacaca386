// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hichunk/embedding.hpp"
#include "hichunk/index.hpp"
#include "hichunk/reader.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hichunk {

struct SegmenterConfig {
    enum class Kind { fallback, hseg };
    Kind kind = Kind::fallback;
    std::filesystem::path weights;      // hseg
    std::filesystem::path word_vectors; // hseg, optional
    double threshold = 0.5;             // hseg boundary probability
    std::size_t min_sentences = 1;      // fallback
    double drop_quantile = 0.25;        // fallback
};

// One experiment cell: corpus, chunking method and its parameters,
// embedder, segmenter, retrieval settings, and an optional reader.
struct RunConfig {
    std::string name; // label in grid reports
    std::filesystem::path corpus;
    ChunkingMethod method = ChunkingMethod::segment_cluster;
    std::optional<double> k;               // unset: derived from target_chunk_tokens
    std::size_t target_chunk_tokens = 512; // drives the default k and the eval budget
    std::size_t chunk_size_tokens = 0;     // fixed method; unset: target_chunk_tokens
    double breakpoint_quantile = 0.25;     // semantic method
    EmbeddingProviderConfig embedder;
    SegmenterConfig segmenter;
    RetrievalMode retrieval_mode = RetrievalMode::segment_plus_cluster;
    std::optional<std::size_t> top_k;      // unset: token-budgeted automatically
    std::optional<ReaderConfig> reader;
    std::filesystem::path out_dir = "out";
    std::size_t workers = 0;               // 0: logical core count

    double effective_k() const;
    std::size_t effective_chunk_size() const;
    void validate() const;
};

// Reads a single config object from a JSON file. Unknown keys are
// rejected.
RunConfig load_run_config(const std::filesystem::path& path);

// Reads a config list (JSON array) for grid runs; a single object loads
// as a one-cell list.
std::vector<RunConfig> load_run_config_list(const std::filesystem::path& path);

} // namespace hichunk
