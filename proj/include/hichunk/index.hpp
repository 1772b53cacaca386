// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hichunk/clustering.hpp"
#include "hichunk/embedding.hpp"
#include "hichunk/segmentation.hpp"
#include "hichunk/text.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hichunk {

enum class RetrievalMode { segment_plus_cluster, cluster_only, single_vector };

// How chunks and their vectors were produced. cluster_only_storage runs
// the full segmentation-clustering pipeline but stores only the cluster
// vector per chunk; fixed and semantic are the baselines, one vector
// per chunk.
enum class ChunkingMethod { segment_cluster, cluster_only_storage, fixed, semantic };

std::string to_string(RetrievalMode mode);
std::string to_string(ChunkingMethod method);
RetrievalMode retrieval_mode_from_string(const std::string& s);
ChunkingMethod chunking_method_from_string(const std::string& s);

struct IndexManifest {
    std::uint32_t version = 1;
    std::size_t dim = 0;
    std::string model_name;
    ChunkingMethod method = ChunkingMethod::segment_cluster;
    double k = 0.0;                    // clustering methods only
    std::size_t chunk_size_tokens = 0; // nominal target size, 0 when unset
    std::size_t record_count = 0;
    std::size_t vector_count = 0;
    std::string checksum;              // CRC32 of the vector payload, 8 hex digits
};

struct ChunkRecord {
    std::string chunk_id;
    std::string doc_id;
    std::string text;
    std::size_t token_count = 0;
    // m segment rows followed by 1 cluster row; single-vector records
    // hold just the cluster row
    std::vector<std::size_t> vector_rows;
    // byte spans of each segment within text, parallel to the segment rows
    std::vector<std::pair<std::size_t, std::size_t>> segment_spans;
};

struct ChunkIndex {
    IndexManifest manifest;
    std::vector<ChunkRecord> records;
    std::size_t dim = 0;
    std::vector<float> vectors; // row-major

    std::size_t row_count() const { return dim == 0 ? 0 : vectors.size() / dim; }
    const float* row(std::size_t r) const { return vectors.data() + r * dim; }
};

struct BestVector {
    bool is_cluster = false;
    std::size_t segment_index = 0; // valid when !is_cluster

    bool operator==(const BestVector&) const = default;
};

std::string to_string(const BestVector& b);

struct RetrievalResult {
    std::string chunk_id;
    double score = 0.0;
    BestVector best_vector;
    std::size_t rank = 0; // 1-based
    std::string text;
};

struct DocumentStats {
    std::size_t segments = 0;
    std::size_t chunks = 0;
};

struct IndexBuildReport {
    std::vector<std::pair<std::string, std::string>> failures; // doc_id, message
    std::map<std::string, DocumentStats> per_document;
};

using SegmenterFn = std::function<std::vector<Segment>(const Document&)>;

struct IndexBuildOptions {
    ChunkingMethod method = ChunkingMethod::segment_cluster;
    double k = 1.2;                    // clustering methods
    std::size_t chunk_size_tokens = 0; // fixed method; recorded as nominal size otherwise
    double breakpoint_quantile = 0.25; // semantic method
    std::size_t workers = 1;
    std::size_t max_segments = 2000;
};

// Segments, embeds, and clusters every document (or applies a baseline
// chunker, per options.method) and assembles one index. Documents fail
// independently: a failure is recorded in the report and the remaining
// documents proceed. Throws only on an empty document list or on
// configuration problems; callers decide what an all-failed build means.
ChunkIndex index_documents(const std::vector<Document>& docs,
                           const SegmenterFn& segmenter,
                           const EmbeddingProviderConfig& embedder,
                           const IndexBuildOptions& options,
                           IndexBuildReport* report = nullptr);

struct ScoredVector {
    double score = 0.0;
    BestVector best;
};

// Max cosine between the query and the record's vectors under the given
// mode: all rows (segment_plus_cluster), the cluster row only
// (cluster_only), or row 0 (single_vector). A tie between a segment row
// and the cluster row reports the segment.
ScoredVector chunk_score(const EmbeddingVector& query, const ChunkRecord& rec,
                         const ChunkIndex& index, RetrievalMode mode);

// Embeds the query and scores every record; exhaustive exact search.
// Ties break by ascending chunk_id. Ranks run from 1.
std::vector<RetrievalResult> retrieve(const std::string& query, const ChunkIndex& index,
                                      const EmbeddingProviderConfig& embedder,
                                      RetrievalMode mode, std::size_t top_k);

// Number of chunks whose combined size stays near a 4096-token reading
// budget: 20 for 256-token chunks, 8 for 512, 4 for 1024, 2 for 2048,
// otherwise floor(4096 / avg) clamped to at least 1.
std::size_t budget_top_k(std::int64_t avg_chunk_tokens);

// A baseline chunk before indexing. vector is set by chunkers that
// compute one themselves (semantic); otherwise the chunk text is
// embedded whole at indexing time.
struct BaselineChunk {
    std::string chunk_id;
    std::string doc_id;
    std::string text;
    std::size_t token_count = 0;
    std::size_t first_sentence = 0;
    std::size_t last_sentence = 0;
    std::optional<EmbeddingVector> vector;
};

// Greedy fill with whole sentences up to size_tokens; a sentence longer
// than size_tokens forms its own oversized chunk.
std::vector<BaselineChunk> fixed_size_chunks(const Document& doc, std::size_t size_tokens);

// Splits at adjacent-sentence cosine valleys strictly below the given
// quantile; each chunk carries the mean of its sentence vectors.
std::vector<BaselineChunk> semantic_chunks(const Document& doc,
                                           const EmbeddingProviderConfig& embedder,
                                           double breakpoint_quantile);

// Directory layout: manifest.json, chunks.jsonl, vectors.hvec. The
// round-trip is lossless; vectors compare bitwise equal.
void save_index(const ChunkIndex& index, const std::filesystem::path& dir);
ChunkIndex load_index(const std::filesystem::path& dir);

} // namespace hichunk
