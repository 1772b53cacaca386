// SPDX-License-Identifier: Apache-2.0
#include "hichunk/index.hpp"

#include "hichunk/errors.hpp"
#include "hichunk/hvec.hpp"
#include "hichunk/kernels.hpp"
#include "hichunk/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace hichunk {

namespace {

using nlohmann::json;

std::string crc_hex(std::uint32_t crc) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", crc);
    return buf;
}

// Per-document build output; vector rows are assigned during the final
// single-threaded assembly so row numbering never depends on scheduling.
struct DocResult {
    std::vector<ChunkRecord> records;
    std::vector<std::vector<EmbeddingVector>> row_groups; // parallel to records
    DocumentStats stats;
    std::string error; // non-empty marks a failed document
};

DocResult build_clustered_doc(const Document& doc, const SegmenterFn& segmenter,
                              const EmbeddingProviderConfig& embedder,
                              const IndexBuildOptions& options) {
    DocResult res;
    auto segments = segmenter(doc);
    res.stats.segments = segments.size();
    if (segments.empty()) return res;

    std::vector<std::string> texts;
    texts.reserve(segments.size());
    for (const auto& s : segments) texts.push_back(s.text);
    auto embs = embed_texts(embedder, texts);

    auto chunks = cluster_pipeline(segments, embs, options.k, options.max_segments);
    res.stats.chunks = chunks.size();

    const bool store_segments = options.method == ChunkingMethod::segment_cluster;
    for (auto& chunk : chunks) {
        const Segment& first_seg = segments[chunk.cluster_range.first];
        const Segment& last_seg = segments[chunk.cluster_range.last];
        const std::size_t begin = doc.sentences[first_seg.first_sentence].begin;
        const std::size_t end = doc.sentences[last_seg.last_sentence].end;

        ChunkRecord rec;
        rec.chunk_id = chunk.chunk_id;
        rec.doc_id = chunk.doc_id;
        rec.text = doc.text.substr(begin, end - begin);
        rec.token_count = chunk.token_count;

        std::vector<EmbeddingVector> rows;
        if (store_segments) {
            for (std::size_t s = chunk.cluster_range.first; s <= chunk.cluster_range.last; ++s) {
                const std::size_t sb = doc.sentences[segments[s].first_sentence].begin;
                const std::size_t se = doc.sentences[segments[s].last_sentence].end;
                rec.segment_spans.emplace_back(sb - begin, se - begin);
            }
            rows = std::move(chunk.segment_embeddings);
        }
        rows.push_back(std::move(chunk.cluster_embedding));

        res.records.push_back(std::move(rec));
        res.row_groups.push_back(std::move(rows));
    }
    return res;
}

DocResult build_baseline_doc(const Document& doc, const EmbeddingProviderConfig& embedder,
                             const IndexBuildOptions& options) {
    DocResult res;
    std::vector<BaselineChunk> chunks;
    if (options.method == ChunkingMethod::fixed) {
        if (options.chunk_size_tokens == 0) {
            throw ConfigError("fixed chunking requires a positive chunk_size_tokens");
        }
        chunks = fixed_size_chunks(doc, options.chunk_size_tokens);
    } else {
        chunks = semantic_chunks(doc, embedder, options.breakpoint_quantile);
    }
    res.stats.segments = chunks.size();
    res.stats.chunks = chunks.size();
    if (chunks.empty()) return res;

    std::vector<std::size_t> pending; // chunks still needing a vector
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        if (!chunks[i].vector) {
            pending.push_back(i);
            texts.push_back(chunks[i].text);
        }
    }
    if (!pending.empty()) {
        auto embs = embed_texts(embedder, texts);
        for (std::size_t i = 0; i < pending.size(); ++i) {
            chunks[pending[i]].vector = std::move(embs[i]);
        }
    }

    for (auto& chunk : chunks) {
        ChunkRecord rec;
        rec.chunk_id = chunk.chunk_id;
        rec.doc_id = chunk.doc_id;
        rec.text = std::move(chunk.text);
        rec.token_count = chunk.token_count;
        res.records.push_back(std::move(rec));
        res.row_groups.push_back({std::move(*chunk.vector)});
    }
    return res;
}

ChunkRecord record_from_json(const json& j, std::size_t line_no) {
    try {
        ChunkRecord rec;
        rec.chunk_id = j.at("chunk_id").get<std::string>();
        rec.doc_id = j.at("doc_id").get<std::string>();
        rec.text = j.at("text").get<std::string>();
        rec.token_count = j.at("token_count").get<std::size_t>();
        rec.vector_rows = j.at("vector_rows").get<std::vector<std::size_t>>();
        for (const auto& span : j.at("segment_spans")) {
            rec.segment_spans.emplace_back(span.at(0).get<std::size_t>(),
                                           span.at(1).get<std::size_t>());
        }
        return rec;
    } catch (const json::exception& e) {
        throw FormatError("chunks.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
}

} // namespace

std::string to_string(RetrievalMode mode) {
    switch (mode) {
        case RetrievalMode::segment_plus_cluster: return "segment_plus_cluster";
        case RetrievalMode::cluster_only: return "cluster_only";
        case RetrievalMode::single_vector: return "single_vector";
    }
    return "segment_plus_cluster";
}

std::string to_string(ChunkingMethod method) {
    switch (method) {
        case ChunkingMethod::segment_cluster: return "segment_cluster";
        case ChunkingMethod::cluster_only_storage: return "cluster_only_storage";
        case ChunkingMethod::fixed: return "fixed";
        case ChunkingMethod::semantic: return "semantic";
    }
    return "segment_cluster";
}

RetrievalMode retrieval_mode_from_string(const std::string& s) {
    if (s == "segment_plus_cluster") return RetrievalMode::segment_plus_cluster;
    if (s == "cluster_only") return RetrievalMode::cluster_only;
    if (s == "single_vector") return RetrievalMode::single_vector;
    throw ConfigError("unknown retrieval mode: " + s);
}

ChunkingMethod chunking_method_from_string(const std::string& s) {
    if (s == "segment_cluster") return ChunkingMethod::segment_cluster;
    if (s == "cluster_only_storage") return ChunkingMethod::cluster_only_storage;
    if (s == "fixed") return ChunkingMethod::fixed;
    if (s == "semantic") return ChunkingMethod::semantic;
    throw ConfigError("unknown chunking method: " + s);
}

std::string to_string(const BestVector& b) {
    return b.is_cluster ? "cluster" : "segment(" + std::to_string(b.segment_index) + ")";
}

ChunkIndex index_documents(const std::vector<Document>& docs,
                           const SegmenterFn& segmenter,
                           const EmbeddingProviderConfig& embedder,
                           const IndexBuildOptions& options,
                           IndexBuildReport* report) {
    if (docs.empty()) throw ContractError("index_documents: empty document list");
    embedder.validate();
    const bool clustered = options.method == ChunkingMethod::segment_cluster ||
                           options.method == ChunkingMethod::cluster_only_storage;
    if (clustered && !segmenter) {
        throw ConfigError("clustering methods require a segmenter");
    }

    std::vector<DocResult> results(docs.size());
    parallel_for(docs.size(), std::max<std::size_t>(options.workers, 1), [&](std::size_t i) {
        if (docs[i].sentences.empty()) return; // nothing to index
        try {
            results[i] = clustered ? build_clustered_doc(docs[i], segmenter, embedder, options)
                                   : build_baseline_doc(docs[i], embedder, options);
        } catch (const ConfigError&) {
            throw; // misconfiguration is not a per-document condition
        } catch (const Error& e) {
            results[i] = DocResult{};
            results[i].error = e.what();
        }
    });

    ChunkIndex index;
    index.dim = embedder.dim;
    index.manifest.dim = embedder.dim;
    index.manifest.model_name = embedder.cache_model_key();
    index.manifest.method = options.method;
    index.manifest.k = clustered ? options.k : 0.0;
    index.manifest.chunk_size_tokens = options.chunk_size_tokens;

    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto& res = results[i];
        if (!res.error.empty()) {
            if (report) report->failures.emplace_back(docs[i].doc_id, res.error);
            continue;
        }
        if (report) report->per_document[docs[i].doc_id] = res.stats;
        for (std::size_t r = 0; r < res.records.size(); ++r) {
            ChunkRecord rec = std::move(res.records[r]);
            for (auto& vec : res.row_groups[r]) {
                if (vec.dim() != index.dim) {
                    throw ContractError("indexed vector dim " + std::to_string(vec.dim()) +
                                        " does not match embedder dim " + std::to_string(index.dim));
                }
                rec.vector_rows.push_back(index.row_count());
                index.vectors.insert(index.vectors.end(), vec.values.begin(), vec.values.end());
            }
            index.records.push_back(std::move(rec));
        }
    }

    HvecData data;
    data.dim = static_cast<std::uint32_t>(index.dim);
    data.values = index.vectors;
    index.manifest.record_count = index.records.size();
    index.manifest.vector_count = index.row_count();
    index.manifest.checksum = crc_hex(hvec_payload_crc(data));
    return index;
}

ScoredVector chunk_score(const EmbeddingVector& query, const ChunkRecord& rec,
                         const ChunkIndex& index, RetrievalMode mode) {
    if (query.dim() != index.dim) {
        throw ContractError("chunk_score: query dim " + std::to_string(query.dim()) +
                            " does not match index dim " + std::to_string(index.dim));
    }
    if (rec.vector_rows.empty()) throw ContractError("chunk_score: record has no vectors");
    const double qn = kernels::dot_f64acc(query.data(), query.data(), query.dim());
    if (qn == 0.0) throw ContractError("chunk_score: zero-norm query");
    const double qnorm = std::sqrt(qn);

    std::size_t begin = 0;
    std::size_t end = rec.vector_rows.size();
    if (mode == RetrievalMode::cluster_only) begin = end - 1;
    if (mode == RetrievalMode::single_vector) end = 1;

    ScoredVector out;
    bool first = true;
    for (std::size_t slot = begin; slot < end; ++slot) {
        const float* row = index.row(rec.vector_rows[slot]);
        const double rn = kernels::dot_f64acc(row, row, index.dim);
        // a zero-norm stored row can never win; -1 keeps the max total
        const double cos = rn == 0.0
            ? -1.0
            : kernels::dot_f64acc(query.data(), row, index.dim) / (qnorm * std::sqrt(rn));
        if (first || cos > out.score) {
            out.score = cos;
            out.best = {slot + 1 == rec.vector_rows.size(), slot};
            first = false;
        }
    }
    return out;
}

std::vector<RetrievalResult> retrieve(const std::string& query, const ChunkIndex& index,
                                      const EmbeddingProviderConfig& embedder,
                                      RetrievalMode mode, std::size_t top_k) {
    if (top_k == 0) throw ContractError("retrieve: top_k must be at least 1");
    if (index.records.empty()) throw ContractError("retrieve: index has no records");

    const EmbeddingVector qv = std::move(embed_texts(embedder, {query})[0]);

    std::vector<ScoredVector> scored(index.records.size());
    for (std::size_t i = 0; i < index.records.size(); ++i) {
        scored[i] = chunk_score(qv, index.records[i], index, mode);
    }

    std::vector<std::size_t> order(index.records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scored[a].score != scored[b].score) return scored[a].score > scored[b].score;
        return index.records[a].chunk_id < index.records[b].chunk_id;
    });

    const std::size_t k = std::min(top_k, order.size());
    std::vector<RetrievalResult> results(k);
    for (std::size_t r = 0; r < k; ++r) {
        const std::size_t i = order[r];
        results[r] = {index.records[i].chunk_id, scored[i].score, scored[i].best, r + 1,
                      index.records[i].text};
    }
    return results;
}

std::size_t budget_top_k(std::int64_t avg_chunk_tokens) {
    if (avg_chunk_tokens <= 0) {
        throw ConfigError("budget_top_k: average chunk size must be positive");
    }
    switch (avg_chunk_tokens) {
        case 256: return 20;
        case 512: return 8;
        case 1024: return 4;
        case 2048: return 2;
        default: break;
    }
    const std::int64_t k = 4096 / avg_chunk_tokens;
    return k < 1 ? 1 : static_cast<std::size_t>(k);
}

std::vector<BaselineChunk> fixed_size_chunks(const Document& doc, std::size_t size_tokens) {
    if (size_tokens == 0) throw ContractError("fixed_size_chunks: size_tokens must be positive");

    std::vector<BaselineChunk> out;
    std::size_t first = 0;
    std::size_t tokens = 0;
    auto flush = [&](std::size_t last) {
        BaselineChunk chunk;
        chunk.doc_id = doc.doc_id;
        chunk.chunk_id = doc.doc_id + ":" + std::to_string(out.size());
        chunk.first_sentence = first;
        chunk.last_sentence = last;
        const std::size_t begin = doc.sentences[first].begin;
        chunk.text = doc.text.substr(begin, doc.sentences[last].end - begin);
        chunk.token_count = tokens;
        out.push_back(std::move(chunk));
    };

    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
        const std::size_t t = doc.sentences[i].token_count;
        if (i > first && tokens + t > size_tokens) {
            flush(i - 1);
            first = i;
            tokens = 0;
        }
        tokens += t;
    }
    if (!doc.sentences.empty()) flush(doc.sentences.size() - 1);
    return out;
}

std::vector<BaselineChunk> semantic_chunks(const Document& doc,
                                           const EmbeddingProviderConfig& embedder,
                                           double breakpoint_quantile) {
    const std::size_t n = doc.sentences.size();
    if (n == 0) throw ContractError("semantic_chunks: document has no sentences");

    std::vector<std::string> texts(n);
    for (std::size_t i = 0; i < n; ++i) texts[i] = std::string(doc.sentence_text(i));
    auto vecs = embed_texts(embedder, texts);

    std::vector<bool> boundary(n, false);
    boundary[n - 1] = true;
    if (n >= 2) {
        std::vector<double> sims(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) sims[i] = cosine(vecs[i], vecs[i + 1]);
        const double cut = linear_quantile(sims, breakpoint_quantile);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (sims[i] < cut) boundary[i] = true;
        }
    }

    std::vector<BaselineChunk> out;
    std::size_t first = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!boundary[i]) continue;
        BaselineChunk chunk;
        chunk.doc_id = doc.doc_id;
        chunk.chunk_id = doc.doc_id + ":" + std::to_string(out.size());
        chunk.first_sentence = first;
        chunk.last_sentence = i;
        const std::size_t begin = doc.sentences[first].begin;
        chunk.text = doc.text.substr(begin, doc.sentences[i].end - begin);
        std::vector<EmbeddingVector> members(vecs.begin() + static_cast<std::ptrdiff_t>(first),
                                             vecs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        chunk.vector = mean_pool(members);
        for (std::size_t s = first; s <= i; ++s) chunk.token_count += doc.sentences[s].token_count;
        out.push_back(std::move(chunk));
        first = i + 1;
    }
    return out;
}

void save_index(const ChunkIndex& index, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    HvecData data;
    data.dim = static_cast<std::uint32_t>(index.dim);
    data.values = index.vectors;
    write_hvec(dir / "vectors.hvec", data);

    json manifest;
    manifest["version"] = index.manifest.version;
    manifest["dim"] = index.dim;
    manifest["model_name"] = index.manifest.model_name;
    manifest["method"] = to_string(index.manifest.method);
    manifest["k"] = index.manifest.k;
    manifest["chunk_size_tokens"] = index.manifest.chunk_size_tokens;
    manifest["record_count"] = index.records.size();
    manifest["vector_count"] = index.row_count();
    manifest["checksum"] = crc_hex(hvec_payload_crc(data));
    {
        std::ofstream out(dir / "manifest.json", std::ios::trunc);
        if (!out) throw FormatError("cannot write manifest.json in " + dir.string());
        out << manifest.dump(2) << "\n";
    }

    std::ofstream out(dir / "chunks.jsonl", std::ios::trunc);
    if (!out) throw FormatError("cannot write chunks.jsonl in " + dir.string());
    for (const auto& rec : index.records) {
        json j;
        j["chunk_id"] = rec.chunk_id;
        j["doc_id"] = rec.doc_id;
        j["text"] = rec.text;
        j["token_count"] = rec.token_count;
        j["vector_rows"] = rec.vector_rows;
        json spans = json::array();
        for (const auto& [b, e] : rec.segment_spans) spans.push_back(json::array({b, e}));
        j["segment_spans"] = spans;
        out << j.dump() << "\n";
    }
    if (!out) throw FormatError("short write to chunks.jsonl in " + dir.string());
}

ChunkIndex load_index(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    std::ifstream min(manifest_path);
    if (!min) throw FormatError("missing manifest.json in " + dir.string());
    json manifest = json::parse(min, nullptr, false);
    if (manifest.is_discarded()) throw FormatError("manifest.json is not valid JSON");

    ChunkIndex index;
    try {
        index.manifest.version = manifest.at("version").get<std::uint32_t>();
        if (index.manifest.version != 1) {
            throw FormatError("unsupported index version " +
                              std::to_string(index.manifest.version));
        }
        index.manifest.dim = manifest.at("dim").get<std::size_t>();
        index.manifest.model_name = manifest.at("model_name").get<std::string>();
        index.manifest.method = chunking_method_from_string(manifest.at("method").get<std::string>());
        index.manifest.k = manifest.at("k").get<double>();
        index.manifest.chunk_size_tokens = manifest.at("chunk_size_tokens").get<std::size_t>();
        index.manifest.record_count = manifest.at("record_count").get<std::size_t>();
        index.manifest.vector_count = manifest.at("vector_count").get<std::size_t>();
        index.manifest.checksum = manifest.at("checksum").get<std::string>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("manifest.json: ") + e.what());
    }

    HvecData data = read_hvec(dir / "vectors.hvec");
    if (data.dim != index.manifest.dim) {
        throw FormatError("vectors.hvec dim does not match manifest");
    }
    if (data.row_count() != index.manifest.vector_count) {
        throw FormatError("vectors.hvec row count does not match manifest");
    }
    if (crc_hex(hvec_payload_crc(data)) != index.manifest.checksum) {
        throw FormatError("vector checksum does not match manifest");
    }
    index.dim = data.dim;
    index.vectors = std::move(data.values);

    std::ifstream cin(dir / "chunks.jsonl");
    if (!cin) throw FormatError("missing chunks.jsonl in " + dir.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(cin, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw FormatError("chunks.jsonl line " + std::to_string(line_no) +
                              " is not valid JSON");
        }
        index.records.push_back(record_from_json(j, line_no));
    }
    if (index.records.size() != index.manifest.record_count) {
        throw FormatError("chunks.jsonl record count does not match manifest");
    }

    std::vector<bool> seen(index.row_count(), false);
    for (const auto& rec : index.records) {
        if (rec.vector_rows.size() != rec.segment_spans.size() + 1) {
            throw FormatError("record " + rec.chunk_id +
                              " does not have segment count + 1 vector rows");
        }
        for (std::size_t r : rec.vector_rows) {
            if (r >= seen.size() || seen[r]) {
                throw FormatError("record " + rec.chunk_id + " references vector row " +
                                  std::to_string(r) + " invalidly");
            }
            seen[r] = true;
        }
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
        throw FormatError("index has unreferenced vector rows");
    }
    return index;
}

} // namespace hichunk
