// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hichunk/embedding.hpp"
#include "hichunk/index.hpp"
#include "hichunk/reader.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hichunk {

struct QAExample {
    std::string question;
    std::vector<std::string> gold_answers;
    std::string doc_id;
    std::optional<std::vector<std::string>> choices; // multiple-choice
    std::optional<std::size_t> gold_choice;          // present iff choices present
};

// JSON lines: question, gold_answers, doc_id, optional choices and
// gold_choice.
std::vector<QAExample> load_qa_examples(const std::filesystem::path& path);

struct ExampleResult {
    std::size_t index = 0;
    bool answered = false; // reader produced an answer (false in retrieval-only runs)
    std::string answer;
    std::vector<std::string> retrieved_chunk_ids;
    double hit_rate = 0.0; // recall of gold tokens in the retrieved text
    double token_f1_score = 0.0;
    double rouge_l_score = 0.0;
    double bleu1 = 0.0;
    double bleu4 = 0.0;
    std::optional<std::size_t> predicted_choice;
};

struct EvalReport {
    std::size_t count = 0;
    std::size_t unanswered = 0; // reader failures
    bool with_reader = false;
    std::map<std::string, double> metrics;
    std::vector<ExampleResult> examples;
};

struct EvalOptions {
    RetrievalMode mode = RetrievalMode::segment_plus_cluster;
    std::optional<std::size_t> top_k; // unset: budgeted from the average chunk size
    std::size_t workers = 1;
};

// For each example: retrieve, optionally ask the reader, and score.
// Without a reader the report carries retrieval-only metrics (hit_rate).
// Reader failures mark the example unanswered (scored 0) and are
// counted, never fatal.
EvalReport evaluate(const ChunkIndex& index, const std::vector<QAExample>& examples,
                    const EmbeddingProviderConfig& embedder,
                    const std::optional<ReaderConfig>& reader,
                    const EvalOptions& options);

// Maps a free-form reader answer to a choice index: a leading letter
// ("B", "c)") counts from A, a leading number counts from 1, anything
// else falls back to the highest token-F1 choice (nullopt when nothing
// overlaps).
std::optional<std::size_t> parse_choice(const std::string& answer,
                                        const std::vector<std::string>& choices);

// The top_k an unset EvalOptions::top_k resolves to: the manifest's
// nominal chunk size when recorded, otherwise the measured mean chunk
// size, pushed through the token-budget table.
std::size_t resolve_budget(const ChunkIndex& index);

} // namespace hichunk
