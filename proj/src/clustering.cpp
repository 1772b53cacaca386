// SPDX-License-Identifier: Apache-2.0
#include "hichunk/clustering.hpp"

#include "hichunk/errors.hpp"
#include "hichunk/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <span>

namespace hichunk {

namespace {

using Bits = std::vector<std::uint64_t>;

bool bits_test(const Bits& b, std::size_t i) { return (b[i / 64] >> (i % 64)) & 1; }
void bits_set(Bits& b, std::size_t i) { b[i / 64] |= std::uint64_t{1} << (i % 64); }
void bits_clear(Bits& b, std::size_t i) { b[i / 64] &= ~(std::uint64_t{1} << (i % 64)); }

bool bits_empty(const Bits& b) {
    for (auto w : b) if (w) return false;
    return true;
}

Bits bits_and(const Bits& a, const Bits& b) {
    Bits out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] & b[i];
    return out;
}

std::size_t bits_and_count(const Bits& a, const Bits& b) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        c += static_cast<std::size_t>(std::popcount(a[i] & b[i]));
    }
    return c;
}

template <typename Fn>
void bits_for_each(const Bits& b, Fn fn) {
    for (std::size_t w = 0; w < b.size(); ++w) {
        std::uint64_t word = b[w];
        while (word) {
            const int bit = std::countr_zero(word);
            fn(w * 64 + static_cast<std::size_t>(bit));
            word &= word - 1;
        }
    }
}

void bron_kerbosch(const std::vector<Bits>& nbr, std::vector<std::size_t>& r,
                   Bits p, Bits x, std::vector<Clique>& out) {
    if (bits_empty(p) && bits_empty(x)) {
        out.push_back(Clique{r});
        return;
    }

    // pivot: the vertex of P ∪ X with the most neighbors inside P
    std::size_t pivot = 0;
    std::size_t best = 0;
    bool found = false;
    const Bits px = [&] {
        Bits u(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) u[i] = p[i] | x[i];
        return u;
    }();
    bits_for_each(px, [&](std::size_t v) {
        const std::size_t c = bits_and_count(p, nbr[v]);
        if (!found || c > best) {
            pivot = v;
            best = c;
            found = true;
        }
    });

    std::vector<std::size_t> candidates;
    bits_for_each(p, [&](std::size_t v) {
        if (!bits_test(nbr[pivot], v)) candidates.push_back(v);
    });

    for (std::size_t v : candidates) {
        r.push_back(v);
        bron_kerbosch(nbr, r, bits_and(p, nbr[v]), bits_and(x, nbr[v]), out);
        r.pop_back();
        bits_clear(p, v);
        bits_set(x, v);
    }
}

bool clique_touches(const Clique& c, const ClusterRange& range) {
    auto it = std::lower_bound(c.members.begin(), c.members.end(), range.first);
    return it != c.members.end() && *it <= range.last;
}

// Cosine that tolerates a zero-norm mean (opposed member vectors can
// cancel); such a neighbor is simply never preferred.
double guarded_cosine(const std::vector<float>& u, const std::vector<float>& v) {
    const double nu = kernels::dot_f64acc(u.data(), u.data(), u.size());
    const double nv = kernels::dot_f64acc(v.data(), v.data(), v.size());
    if (nu == 0.0 || nv == 0.0) return -1.0;
    return kernels::dot_f64acc(u.data(), v.data(), u.size()) / (std::sqrt(nu) * std::sqrt(nv));
}

EmbeddingVector range_mean(const ClusterRange& r, const std::vector<EmbeddingVector>& embs) {
    std::span<const EmbeddingVector> members(embs.data() + r.first, r.size());
    return mean_pool(members);
}

} // namespace

RelatednessGraph build_graph(const std::vector<EmbeddingVector>& embeddings, double k) {
    const std::size_t n = embeddings.size();
    if (n < 2) throw ContractError("build_graph: need at least 2 embeddings");

    std::vector<double> cosines;
    cosines.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            cosines.push_back(cosine(embeddings[i], embeddings[j]));
        }
    }

    double mu = 0.0;
    for (double c : cosines) mu += c;
    mu /= static_cast<double>(cosines.size());
    double var = 0.0;
    for (double c : cosines) var += (c - mu) * (c - mu);
    var /= static_cast<double>(cosines.size());

    RelatednessGraph g;
    g.n = n;
    g.k_param = k;
    g.mu = mu;
    g.sigma = std::sqrt(var);
    g.tau = mu + k * g.sigma;
    g.adjacency.assign(n * g.words_per_row(), 0);

    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j, ++idx) {
            if (cosines[idx] > g.tau) {
                g.edges.emplace_back(i, j);
                g.adjacency[i * g.words_per_row() + j / 64] |= std::uint64_t{1} << (j % 64);
                g.adjacency[j * g.words_per_row() + i / 64] |= std::uint64_t{1} << (i % 64);
            }
        }
    }
    return g;
}

std::vector<Clique> enumerate_maximal_cliques(const RelatednessGraph& g) {
    if (g.n == 0) return {};
    const std::size_t words = g.words_per_row();

    std::vector<Bits> nbr(g.n, Bits(words, 0));
    for (std::size_t v = 0; v < g.n; ++v) {
        std::copy(g.adjacency.begin() + static_cast<std::ptrdiff_t>(v * words),
                  g.adjacency.begin() + static_cast<std::ptrdiff_t>((v + 1) * words),
                  nbr[v].begin());
    }

    Bits p(words, 0), x(words, 0);
    for (std::size_t v = 0; v < g.n; ++v) bits_set(p, v);

    std::vector<Clique> out;
    std::vector<std::size_t> r;
    bron_kerbosch(nbr, r, std::move(p), std::move(x), out);

    for (auto& c : out) std::sort(c.members.begin(), c.members.end());
    std::sort(out.begin(), out.end(),
              [](const Clique& a, const Clique& b) { return a.members < b.members; });
    return out;
}

std::vector<ClusterRange> initial_clusters(const std::vector<Clique>& cliques, std::size_t n) {
    if (n == 0) return {};

    // joined[i] marks segments i and i+1 appearing in one clique; sorted
    // members make such a pair adjacent in the member list
    std::vector<bool> joined(n > 1 ? n - 1 : 0, false);
    for (const auto& c : cliques) {
        for (std::size_t m = 0; m + 1 < c.members.size(); ++m) {
            if (c.members[m + 1] == c.members[m] + 1 && c.members[m] + 1 < n) {
                joined[c.members[m]] = true;
            }
        }
    }

    std::vector<ClusterRange> out;
    std::size_t first = 0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if (!joined[i]) {
            out.push_back({first, i});
            first = i + 1;
        }
    }
    out.push_back({first, n - 1});
    return out;
}

std::vector<ClusterRange> merge_adjacent_clusters(const std::vector<ClusterRange>& clusters,
                                                  const std::vector<Clique>& cliques) {
    std::vector<ClusterRange> out;
    std::size_t i = 0;
    while (i < clusters.size()) {
        if (i + 1 < clusters.size()) {
            const bool bridged = std::any_of(cliques.begin(), cliques.end(), [&](const Clique& c) {
                return clique_touches(c, clusters[i]) && clique_touches(c, clusters[i + 1]);
            });
            if (bridged) {
                out.push_back({clusters[i].first, clusters[i + 1].last});
                i += 2;
                continue;
            }
        }
        out.push_back(clusters[i]);
        ++i;
    }
    return out;
}

std::vector<ClusterRange> absorb_singletons(const std::vector<ClusterRange>& clusters,
                                            const std::vector<EmbeddingVector>& segment_embeddings) {
    std::vector<ClusterRange> cur = clusters;
    while (cur.size() >= 2) {
        std::size_t s = cur.size();
        for (std::size_t i = 0; i < cur.size(); ++i) {
            if (cur[i].size() == 1) {
                s = i;
                break;
            }
        }
        if (s == cur.size()) break;

        const auto& own = segment_embeddings[cur[s].first].values;
        bool merge_left;
        if (s == 0) {
            merge_left = false;
        } else if (s + 1 == cur.size()) {
            merge_left = true;
        } else {
            const double left = guarded_cosine(own, range_mean(cur[s - 1], segment_embeddings).values);
            const double right = guarded_cosine(own, range_mean(cur[s + 1], segment_embeddings).values);
            merge_left = left >= right;
        }

        const std::size_t a = merge_left ? s - 1 : s;
        cur[a] = {cur[a].first, cur[a + 1].last};
        cur.erase(cur.begin() + static_cast<std::ptrdiff_t>(a) + 1);
    }
    return cur;
}

std::vector<Chunk> cluster_pipeline(const std::vector<Segment>& segments,
                                    const std::vector<EmbeddingVector>& embeddings,
                                    double k, std::size_t max_segments) {
    if (segments.empty()) throw ContractError("cluster_pipeline: no segments");
    if (segments.size() != embeddings.size()) {
        throw ContractError("cluster_pipeline: " + std::to_string(embeddings.size()) +
                            " embeddings for " + std::to_string(segments.size()) + " segments");
    }
    if (segments.size() > max_segments) {
        throw ContractError("cluster_pipeline: " + std::to_string(segments.size()) +
                            " segments exceeds the clique-enumeration cap of " +
                            std::to_string(max_segments));
    }

    std::vector<ClusterRange> clusters;
    if (segments.size() == 1) {
        clusters.push_back({0, 0});
    } else {
        const RelatednessGraph g = build_graph(embeddings, k);
        const auto cliques = enumerate_maximal_cliques(g);
        clusters = absorb_singletons(
            merge_adjacent_clusters(initial_clusters(cliques, g.n), cliques), embeddings);
    }

    std::vector<Chunk> chunks;
    chunks.reserve(clusters.size());
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto& r = clusters[c];
        Chunk chunk;
        chunk.doc_id = segments[r.first].doc_id;
        chunk.chunk_id = chunk.doc_id + ":" + std::to_string(c);
        chunk.cluster_range = r;
        for (std::size_t s = r.first; s <= r.last; ++s) {
            chunk.segment_ids.push_back(segments[s].segment_id);
            chunk.segment_embeddings.push_back(embeddings[s]);
            chunk.token_count += segments[s].token_count;
        }
        chunk.cluster_embedding = mean_pool(chunk.segment_embeddings);
        chunks.push_back(std::move(chunk));
    }
    return chunks;
}

double default_k_for_target_tokens(std::size_t target_tokens) {
    constexpr std::pair<std::size_t, double> table[] = {{512, 1.2}, {1024, 0.7}, {2048, 0.4}};
    double best_k = table[0].second;
    std::size_t best_gap = static_cast<std::size_t>(-1);
    for (const auto& [size, k] : table) {
        const std::size_t gap = size > target_tokens ? size - target_tokens : target_tokens - size;
        if (gap < best_gap) {
            best_gap = gap;
            best_k = k;
        }
    }
    return best_k;
}

} // namespace hichunk
