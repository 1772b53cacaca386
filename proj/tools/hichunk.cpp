// SPDX-License-Identifier: Apache-2.0
#include "hichunk/clustering.hpp"
#include "hichunk/config.hpp"
#include "hichunk/errors.hpp"
#include "hichunk/eval.hpp"
#include "hichunk/index.hpp"
#include "hichunk/metrics.hpp"
#include "hichunk/seg_model.hpp"
#include "hichunk/segmentation.hpp"
#include "hichunk/text.hpp"
#include "hichunk/util.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hichunk;

namespace {

struct GlobalFlags {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
};

RunConfig load_config(const GlobalFlags& g, bool required) {
    RunConfig cfg;
    if (!g.config_path.empty()) {
        cfg = load_run_config(g.config_path);
    } else if (required) {
        throw ConfigError("this command needs --config");
    }
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (g.seed) cfg.embedder.seed = *g.seed;
    if (g.workers) cfg.workers = *g.workers;
    return cfg;
}

std::size_t effective_workers(const RunConfig& cfg) {
    return cfg.workers == 0 ? default_workers() : cfg.workers;
}

SegmenterFn make_segmenter(const RunConfig& cfg) {
    if (cfg.segmenter.kind == SegmenterConfig::Kind::hseg) {
        if (!fs::exists(cfg.segmenter.weights)) {
            throw ConfigError("segmenter weights file not found: " +
                              cfg.segmenter.weights.string());
        }
        auto weights = std::make_shared<SegModelWeights>(load_weights(cfg.segmenter.weights));
        auto table = std::make_shared<WordVectorTable>();
        if (!cfg.segmenter.word_vectors.empty()) {
            if (!fs::exists(cfg.segmenter.word_vectors)) {
                throw ConfigError("word vector file not found: " +
                                  cfg.segmenter.word_vectors.string());
            }
            *table = load_word_vectors(cfg.segmenter.word_vectors);
        }
        const double threshold = cfg.segmenter.threshold;
        return [weights, table, threshold](const Document& doc) {
            return materialize_segments(doc, predict_boundaries(doc, *table, *weights, threshold));
        };
    }
    const EmbeddingProviderConfig embedder = cfg.embedder;
    const std::size_t min_sentences = cfg.segmenter.min_sentences;
    const double drop_quantile = cfg.segmenter.drop_quantile;
    return [embedder, min_sentences, drop_quantile](const Document& doc) {
        return fallback_segment(doc, embedder, min_sentences, drop_quantile);
    };
}

ChunkIndex build_index(const RunConfig& cfg, IndexBuildReport& report) {
    cfg.validate();
    if (!fs::exists(cfg.corpus)) {
        throw ConfigError("corpus path not found: " + cfg.corpus.string());
    }
    const auto docs = load_corpus(cfg.corpus);
    if (docs.empty()) throw ConfigError("corpus has no documents: " + cfg.corpus.string());

    IndexBuildOptions opts;
    opts.method = cfg.method;
    opts.k = cfg.effective_k();
    opts.chunk_size_tokens = cfg.method == ChunkingMethod::fixed ? cfg.effective_chunk_size()
                                                                 : cfg.target_chunk_tokens;
    opts.breakpoint_quantile = cfg.breakpoint_quantile;
    opts.workers = effective_workers(cfg);

    const bool clustered = cfg.method == ChunkingMethod::segment_cluster ||
                           cfg.method == ChunkingMethod::cluster_only_storage;
    auto index = index_documents(docs, clustered ? make_segmenter(cfg) : SegmenterFn{},
                                 cfg.embedder, opts, &report);

    for (const auto& [doc_id, message] : report.failures) {
        std::cerr << "document " << doc_id << " failed: " << message << "\n";
    }
    if (report.failures.size() == docs.size()) {
        throw Error("all " + std::to_string(docs.size()) + " documents failed to index");
    }
    return index;
}

void write_run_log(const fs::path& path, const ChunkIndex& index,
                   const IndexBuildReport& report) {
    json log;
    log["record_count"] = index.records.size();
    log["vector_count"] = index.row_count();
    json docs = json::object();
    for (const auto& [doc_id, stats] : report.per_document) {
        docs[doc_id] = {{"segments", stats.segments}, {"chunks", stats.chunks}};
    }
    log["documents"] = docs;
    json failures = json::array();
    for (const auto& [doc_id, message] : report.failures) {
        failures.push_back({{"doc_id", doc_id}, {"error", message}});
    }
    log["failures"] = failures;

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write run log: " + path.string());
    out << log.dump(2) << "\n";
}

// Deterministic indexes name their vector space det-d<dim>-s<seed>; a
// query against one needs no config file.
std::optional<EmbeddingProviderConfig> embedder_from_model_key(const std::string& key) {
    if (key.rfind("det-d", 0) != 0) return std::nullopt;
    const auto sep = key.find("-s", 5);
    if (sep == std::string::npos) return std::nullopt;
    try {
        EmbeddingProviderConfig cfg;
        cfg.kind = ProviderKind::deterministic;
        cfg.dim = std::stoull(key.substr(5, sep - 5));
        cfg.seed = std::stoull(key.substr(sep + 2));
        return cfg;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

EmbeddingProviderConfig query_embedder(const GlobalFlags& g, const ChunkIndex& index,
                                       RunConfig& cfg) {
    if (!g.config_path.empty()) return cfg.embedder;
    if (auto derived = embedder_from_model_key(index.manifest.model_name)) return *derived;
    throw ConfigError("index was built with model \"" + index.manifest.model_name +
                      "\"; pass --config with a matching embedder");
}

std::string snippet(const std::string& text, std::size_t limit = 160) {
    std::string out = text.substr(0, limit);
    std::replace(out.begin(), out.end(), '\n', ' ');
    return out;
}

json report_to_json(const EvalReport& report) {
    json j;
    j["count"] = report.count;
    j["unanswered"] = report.unanswered;
    j["with_reader"] = report.with_reader;
    j["metrics"] = report.metrics;
    j["meteor"] = "unsupported";
    return j;
}

void write_example_log(const fs::path& path, const std::vector<QAExample>& examples,
                       const EvalReport& report) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot write example log: " + path.string());
    for (const auto& res : report.examples) {
        json j;
        j["index"] = res.index;
        j["question"] = examples[res.index].question;
        j["hit_rate"] = res.hit_rate;
        j["retrieved"] = res.retrieved_chunk_ids;
        if (report.with_reader) {
            j["answered"] = res.answered;
            j["answer"] = res.answer;
            j["token_f1"] = res.token_f1_score;
            j["rouge_l"] = res.rouge_l_score;
            j["bleu_1"] = res.bleu1;
            j["bleu_4"] = res.bleu4;
            if (res.predicted_choice) j["predicted_choice"] = *res.predicted_choice;
        }
        out << j.dump() << "\n";
    }
}

int cmd_index(const GlobalFlags& g) {
    RunConfig cfg = load_config(g, true);
    IndexBuildReport report;
    const ChunkIndex index = build_index(cfg, report);

    fs::create_directories(cfg.out_dir);
    save_index(index, cfg.out_dir / "index");
    write_run_log(cfg.out_dir / "run_log.json", index, report);

    std::cout << "indexed " << report.per_document.size() << " documents into "
              << (cfg.out_dir / "index").string() << ": " << index.records.size()
              << " records, " << index.row_count() << " vectors";
    if (!report.failures.empty()) std::cout << " (" << report.failures.size() << " failed)";
    std::cout << "\n";
    return 0;
}

int cmd_query(const GlobalFlags& g, const std::string& index_dir, const std::string& question,
              const std::string& mode_flag, std::optional<std::size_t> top_k_flag) {
    RunConfig cfg = load_config(g, false);
    const ChunkIndex index = load_index(index_dir);
    const auto embedder = query_embedder(g, index, cfg);
    const RetrievalMode mode = mode_flag.empty() ? cfg.retrieval_mode
                                                 : retrieval_mode_from_string(mode_flag);
    const std::size_t top_k = top_k_flag ? *top_k_flag
                                         : (cfg.top_k ? *cfg.top_k : resolve_budget(index));

    for (const auto& r : retrieve(question, index, embedder, mode, top_k)) {
        json j;
        j["rank"] = r.rank;
        j["chunk_id"] = r.chunk_id;
        j["score"] = r.score;
        j["best_vector"] = to_string(r.best_vector);
        j["snippet"] = snippet(r.text);
        std::cout << j.dump() << "\n";
    }
    return 0;
}

int cmd_segment(const GlobalFlags& g, const std::string& doc_path, const std::string& gold_flag) {
    RunConfig cfg = load_config(g, false);
    if (!fs::exists(doc_path)) throw ConfigError("document path not found: " + doc_path);
    const auto docs = load_corpus(doc_path);
    if (docs.empty()) throw ConfigError("no document found at: " + doc_path);
    const Document& doc = docs.front();
    if (doc.sentences.empty()) throw ConfigError("document is empty: " + doc_path);

    const auto segments = make_segmenter(cfg)(doc);
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const auto& s = segments[i];
        std::cout << "segment " << i << ": sentences [" << s.first_sentence << ", "
                  << s.last_sentence << "] | " << snippet(s.text, 80) << "\n";
    }

    if (!gold_flag.empty()) {
        SegmentationReference gold;
        std::stringstream ss(gold_flag);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) gold.boundaries.push_back(std::stoull(item));
        }
        SegmentationReference hyp;
        for (const auto& s : segments) hyp.boundaries.push_back(s.last_sentence);
        std::cout << "pk: " << pk_score(gold, hyp, doc.sentences.size()) << "\n";
    }
    return 0;
}

EvalReport run_eval_cell(const RunConfig& cfg, const ChunkIndex& index,
                         const std::vector<QAExample>& examples) {
    EvalOptions opts;
    opts.mode = cfg.retrieval_mode;
    opts.top_k = cfg.top_k;
    opts.workers = effective_workers(cfg);
    return evaluate(index, examples, cfg.embedder, cfg.reader, opts);
}

int cmd_eval(const GlobalFlags& g, const std::string& index_dir, const std::string& qa_path,
             bool grid, const std::string& mode_flag, std::optional<std::size_t> top_k_flag) {
    const auto examples = load_qa_examples(qa_path);

    if (grid) {
        if (g.config_path.empty()) throw ConfigError("--grid needs --config with a cell list");
        auto cells = load_run_config_list(g.config_path);
        const fs::path base_out = g.out_dir.empty() ? fs::path("out") : fs::path(g.out_dir);

        json combined = json::array();
        for (std::size_t i = 0; i < cells.size(); ++i) {
            RunConfig cell = cells[i];
            if (cell.name.empty()) cell.name = "cell" + std::to_string(i);
            if (g.seed) cell.embedder.seed = *g.seed;
            if (g.workers) cell.workers = *g.workers;
            cell.out_dir = base_out / cell.name;

            IndexBuildReport report;
            const ChunkIndex index = build_index(cell, report);
            fs::create_directories(cell.out_dir);
            save_index(index, cell.out_dir / "index");
            write_run_log(cell.out_dir / "run_log.json", index, report);

            const EvalReport cell_report = run_eval_cell(cell, index, examples);
            const json report_json = report_to_json(cell_report);
            std::ofstream out(cell.out_dir / "report.json", std::ios::trunc);
            out << report_json.dump(2) << "\n";
            write_example_log(cell.out_dir / "examples.jsonl", examples, cell_report);

            json row;
            row["name"] = cell.name;
            row["method"] = to_string(cell.method);
            if (cell.method == ChunkingMethod::fixed) {
                row["chunk_size_tokens"] = cell.effective_chunk_size();
            } else {
                row["k"] = cell.effective_k();
                row["target_chunk_tokens"] = cell.target_chunk_tokens;
            }
            row["count"] = cell_report.count;
            row["unanswered"] = cell_report.unanswered;
            row["metrics"] = cell_report.metrics;
            combined.push_back(row);
        }

        json grid_report;
        grid_report["cells"] = combined;
        fs::create_directories(base_out);
        std::ofstream out(base_out / "grid_report.json", std::ios::trunc);
        out << grid_report.dump(2) << "\n";
        std::cout << grid_report.dump(2) << "\n";
        return 0;
    }

    RunConfig cfg = load_config(g, false);
    if (!mode_flag.empty()) cfg.retrieval_mode = retrieval_mode_from_string(mode_flag);
    if (top_k_flag) cfg.top_k = *top_k_flag;

    const fs::path dir = !index_dir.empty() ? fs::path(index_dir) : cfg.out_dir / "index";
    const ChunkIndex index = load_index(dir);
    if (g.config_path.empty()) {
        if (auto derived = embedder_from_model_key(index.manifest.model_name)) {
            cfg.embedder = *derived;
        } else {
            throw ConfigError("index was built with model \"" + index.manifest.model_name +
                              "\"; pass --config with a matching embedder");
        }
        if (g.seed) cfg.embedder.seed = *g.seed;
    }

    const EvalReport report = run_eval_cell(cfg, index, examples);
    const json report_json = report_to_json(report);

    fs::create_directories(cfg.out_dir);
    {
        std::ofstream out(cfg.out_dir / "report.json", std::ios::trunc);
        if (!out) throw Error("cannot write report.json");
        out << report_json.dump(2) << "\n";
    }
    write_example_log(cfg.out_dir / "examples.jsonl", examples, report);
    std::cout << report_json.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Document chunking and retrieval engine"};
    app.require_subcommand(1);

    GlobalFlags g;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    app.add_option("--config", g.config_path, "Run configuration JSON file");
    app.add_option("--out", g.out_dir, "Output directory (overrides config)");
    app.add_option("--seed", seed, "Embedder seed (overrides config)");
    app.add_option("--workers", workers, "Worker thread count (overrides config)");

    auto* index_cmd = app.add_subcommand("index", "Build a chunk index from a corpus");

    std::string q_index_dir, q_question, q_mode;
    std::optional<std::size_t> q_top_k;
    auto* query_cmd = app.add_subcommand("query", "Rank chunks for a question");
    query_cmd->add_option("--index", q_index_dir, "Index directory")->required();
    query_cmd->add_option("--question", q_question, "Query text")->required();
    query_cmd->add_option("--mode", q_mode,
                          "segment_plus_cluster | cluster_only | single_vector");
    query_cmd->add_option("--top-k", q_top_k, "Number of results");

    std::string s_doc, s_gold;
    auto* segment_cmd = app.add_subcommand("segment", "Print a document's segments");
    segment_cmd->add_option("--doc", s_doc, "Document file")->required();
    segment_cmd->add_option("--gold", s_gold,
                            "Comma-separated gold boundary sentence indices (prints Pk)");

    std::string e_index_dir, e_qa, e_mode;
    std::optional<std::size_t> e_top_k;
    bool e_grid = false;
    auto* eval_cmd = app.add_subcommand("eval", "Score retrieval (and answers) on QA examples");
    eval_cmd->add_option("--index", e_index_dir, "Index directory (default: <out>/index)");
    eval_cmd->add_option("--qa", e_qa, "QA examples JSONL file")->required();
    eval_cmd->add_option("--mode", e_mode, "Retrieval mode override");
    eval_cmd->add_option("--top-k", e_top_k, "Retrieval depth override");
    eval_cmd->add_flag("--grid", e_grid, "Treat --config as a cell list: index and evaluate each");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    g.seed = seed;
    g.workers = workers;

    try {
        if (*index_cmd) return cmd_index(g);
        if (*query_cmd) return cmd_query(g, q_index_dir, q_question, q_mode, q_top_k);
        if (*segment_cmd) return cmd_segment(g, s_doc, s_gold);
        if (*eval_cmd) return cmd_eval(g, e_index_dir, e_qa, e_grid, e_mode, e_top_k);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
