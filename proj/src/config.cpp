// SPDX-License-Identifier: Apache-2.0
#include "hichunk/config.hpp"

#include "hichunk/clustering.hpp"
#include "hichunk/errors.hpp"
#include "hichunk/util.hpp"

#include <json.hpp>

#include <fstream>
#include <set>

namespace hichunk {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) {
            throw ConfigError("unknown key \"" + key + "\" in " + where);
        }
    }
}

EmbeddingProviderConfig embedder_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"kind", "endpoint_url", "model_name", "api_key_env_var", "dim",
                         "batch_size", "max_in_flight", "cache_dir", "seed", "retry_backoff_ms"},
                        "embedder config");
    EmbeddingProviderConfig cfg;
    if (j.contains("kind")) {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "remote") {
            cfg.kind = ProviderKind::remote;
        } else if (kind == "deterministic") {
            cfg.kind = ProviderKind::deterministic;
        } else {
            throw ConfigError("unknown embedder kind: " + kind);
        }
    }
    if (j.contains("endpoint_url")) cfg.endpoint_url = j.at("endpoint_url").get<std::string>();
    if (j.contains("model_name")) cfg.model_name = j.at("model_name").get<std::string>();
    if (j.contains("api_key_env_var")) cfg.api_key_env_var = j.at("api_key_env_var").get<std::string>();
    if (j.contains("dim")) cfg.dim = j.at("dim").get<std::size_t>();
    if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("max_in_flight")) cfg.max_in_flight = j.at("max_in_flight").get<std::size_t>();
    if (j.contains("cache_dir")) cfg.cache_dir = j.at("cache_dir").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("retry_backoff_ms")) cfg.retry_backoff_ms = j.at("retry_backoff_ms").get<int>();
    return cfg;
}

SegmenterConfig segmenter_from_json(const json& j) {
    reject_unknown_keys(
        j, {"kind", "weights", "word_vectors", "threshold", "min_sentences", "drop_quantile"},
        "segmenter config");
    SegmenterConfig cfg;
    if (j.contains("kind")) {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "hseg") {
            cfg.kind = SegmenterConfig::Kind::hseg;
        } else if (kind == "fallback") {
            cfg.kind = SegmenterConfig::Kind::fallback;
        } else {
            throw ConfigError("unknown segmenter kind: " + kind);
        }
    }
    if (j.contains("weights")) cfg.weights = j.at("weights").get<std::string>();
    if (j.contains("word_vectors")) cfg.word_vectors = j.at("word_vectors").get<std::string>();
    if (j.contains("threshold")) cfg.threshold = j.at("threshold").get<double>();
    if (j.contains("min_sentences")) cfg.min_sentences = j.at("min_sentences").get<std::size_t>();
    if (j.contains("drop_quantile")) cfg.drop_quantile = j.at("drop_quantile").get<double>();
    return cfg;
}

ReaderConfig reader_from_json(const json& j) {
    reject_unknown_keys(j,
                        {"endpoint_url", "model_name", "api_key_env_var", "max_context_tokens",
                         "temperature", "prompt_template", "max_in_flight", "retry_backoff_ms"},
                        "reader config");
    ReaderConfig cfg;
    if (j.contains("endpoint_url")) cfg.endpoint_url = j.at("endpoint_url").get<std::string>();
    if (j.contains("model_name")) cfg.model_name = j.at("model_name").get<std::string>();
    if (j.contains("api_key_env_var")) cfg.api_key_env_var = j.at("api_key_env_var").get<std::string>();
    if (j.contains("max_context_tokens")) cfg.max_context_tokens = j.at("max_context_tokens").get<std::size_t>();
    if (j.contains("temperature")) cfg.temperature = j.at("temperature").get<double>();
    if (j.contains("prompt_template")) cfg.prompt_template = j.at("prompt_template").get<std::string>();
    if (j.contains("max_in_flight")) cfg.max_in_flight = j.at("max_in_flight").get<std::size_t>();
    if (j.contains("retry_backoff_ms")) cfg.retry_backoff_ms = j.at("retry_backoff_ms").get<int>();
    return cfg;
}

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    reject_unknown_keys(j,
                        {"name", "corpus", "method", "k", "target_chunk_tokens",
                         "chunk_size_tokens", "breakpoint_quantile", "embedder", "segmenter",
                         "retrieval_mode", "top_k", "reader", "out_dir", "workers"},
                        "run config");
    RunConfig cfg;
    try {
        if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
        if (j.contains("corpus")) cfg.corpus = j.at("corpus").get<std::string>();
        if (j.contains("method")) {
            cfg.method = chunking_method_from_string(j.at("method").get<std::string>());
        }
        if (j.contains("k") && !j.at("k").is_null()) cfg.k = j.at("k").get<double>();
        if (j.contains("target_chunk_tokens")) {
            cfg.target_chunk_tokens = j.at("target_chunk_tokens").get<std::size_t>();
        }
        if (j.contains("chunk_size_tokens")) {
            cfg.chunk_size_tokens = j.at("chunk_size_tokens").get<std::size_t>();
        }
        if (j.contains("breakpoint_quantile")) {
            cfg.breakpoint_quantile = j.at("breakpoint_quantile").get<double>();
        }
        if (j.contains("embedder")) cfg.embedder = embedder_from_json(j.at("embedder"));
        if (j.contains("segmenter")) cfg.segmenter = segmenter_from_json(j.at("segmenter"));
        if (j.contains("retrieval_mode")) {
            cfg.retrieval_mode = retrieval_mode_from_string(j.at("retrieval_mode").get<std::string>());
        }
        if (j.contains("top_k") && !j.at("top_k").is_null()) {
            cfg.top_k = j.at("top_k").get<std::size_t>();
        }
        if (j.contains("reader") && !j.at("reader").is_null()) {
            cfg.reader = reader_from_json(j.at("reader"));
        }
        if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
        if (j.contains("workers")) cfg.workers = j.at("workers").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    return cfg;
}

json parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
    return j;
}

} // namespace

double RunConfig::effective_k() const {
    return k ? *k : default_k_for_target_tokens(target_chunk_tokens);
}

std::size_t RunConfig::effective_chunk_size() const {
    return chunk_size_tokens == 0 ? target_chunk_tokens : chunk_size_tokens;
}

void RunConfig::validate() const {
    embedder.validate();
    if (target_chunk_tokens == 0) throw ConfigError("target_chunk_tokens must be positive");
    if (method == ChunkingMethod::fixed && effective_chunk_size() == 0) {
        throw ConfigError("fixed chunking requires a positive chunk size");
    }
    if (breakpoint_quantile <= 0.0 || breakpoint_quantile >= 1.0) {
        throw ConfigError("breakpoint_quantile must lie in (0, 1)");
    }
    if (segmenter.drop_quantile <= 0.0 || segmenter.drop_quantile >= 1.0) {
        throw ConfigError("segmenter drop_quantile must lie in (0, 1)");
    }
    if (segmenter.threshold <= 0.0 || segmenter.threshold >= 1.0) {
        throw ConfigError("segmenter threshold must lie in (0, 1)");
    }
    if (segmenter.kind == SegmenterConfig::Kind::hseg && segmenter.weights.empty()) {
        throw ConfigError("hseg segmenter requires a weights path");
    }
    if (reader) reader->validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return run_config_from_json(parse_config_file(path));
}

std::vector<RunConfig> load_run_config_list(const std::filesystem::path& path) {
    const json j = parse_config_file(path);
    std::vector<RunConfig> cells;
    if (j.is_array()) {
        for (const auto& cell : j) cells.push_back(run_config_from_json(cell));
    } else {
        cells.push_back(run_config_from_json(j));
    }
    if (cells.empty()) throw ConfigError("config list is empty: " + path.string());
    return cells;
}

} // namespace hichunk
