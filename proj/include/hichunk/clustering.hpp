// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hichunk/embedding.hpp"
#include "hichunk/segmentation.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hichunk {

// Pairwise-relatedness graph over segment indices. An edge joins two
// segments whose cosine similarity strictly exceeds tau = mu + k *
// sigma, where mu and sigma are the mean and population standard
// deviation of all pairwise cosines.
struct RelatednessGraph {
    std::size_t n = 0;
    double mu = 0.0;
    double sigma = 0.0;
    double tau = 0.0;
    double k_param = 0.0;
    std::vector<std::pair<std::size_t, std::size_t>> edges; // i < j, sorted
    std::vector<std::uint64_t> adjacency; // n rows of ceil(n/64) words

    std::size_t words_per_row() const { return (n + 63) / 64; }
    bool has_edge(std::size_t i, std::size_t j) const {
        return (adjacency[i * words_per_row() + j / 64] >> (j % 64)) & 1;
    }
};

struct Clique {
    std::vector<std::size_t> members; // sorted
};

// Contiguous run of segment indices, inclusive bounds.
struct ClusterRange {
    std::size_t first = 0;
    std::size_t last = 0;

    std::size_t size() const { return last - first + 1; }
    bool operator==(const ClusterRange&) const = default;
};

// Final chunk: an ordered group of segments with their individual
// embeddings plus one mean-pooled cluster embedding.
struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    ClusterRange cluster_range;
    std::vector<std::string> segment_ids;
    std::vector<EmbeddingVector> segment_embeddings;
    EmbeddingVector cluster_embedding;
    std::size_t token_count = 0;
};

// Needs at least 2 embeddings, none zero-norm.
RelatednessGraph build_graph(const std::vector<EmbeddingVector>& embeddings, double k);

// Exact maximal-clique enumeration (recursive backtracking with
// pivoting). Members sorted ascending, cliques sorted lexicographically.
// Isolated vertices appear as singleton cliques.
std::vector<Clique> enumerate_maximal_cliques(const RelatednessGraph& g);

// Adjacent segments i and i+1 join the same cluster iff some clique
// contains both; the relation is chained transitively along the scan.
std::vector<ClusterRange> initial_clusters(const std::vector<Clique>& cliques, std::size_t n);

// One left-to-right pass: a cluster pair merges when some clique holds
// at least one segment of each; a merged pair is skipped, not re-tested
// against its new right neighbor.
std::vector<ClusterRange> merge_adjacent_clusters(const std::vector<ClusterRange>& clusters,
                                                  const std::vector<Clique>& cliques);

// While any single-segment cluster exists and at least 2 clusters
// remain: the leftmost singleton merges into whichever adjacent cluster
// has the higher cosine between the singleton's embedding and the
// neighbor's mean-pooled embedding (ties go left).
std::vector<ClusterRange> absorb_singletons(const std::vector<ClusterRange>& clusters,
                                            const std::vector<EmbeddingVector>& segment_embeddings);

// Full pipeline: graph, cliques, initial clusters, one merge pass,
// singleton absorption, then one Chunk per cluster. A single segment
// yields a single chunk whose cluster embedding equals the segment
// embedding. Documents past max_segments are rejected (clique counts
// are worst-case exponential).
std::vector<Chunk> cluster_pipeline(const std::vector<Segment>& segments,
                                    const std::vector<EmbeddingVector>& embeddings,
                                    double k, std::size_t max_segments = 2000);

// k values tuned per target average chunk size: 1.2 for 512 tokens, 0.7
// for 1024, 0.4 for 2048. Other targets snap to the nearest of the
// three.
double default_k_for_target_tokens(std::size_t target_tokens);

} // namespace hichunk
