// SPDX-License-Identifier: Apache-2.0
#include "hichunk/eval.hpp"

#include "hichunk/errors.hpp"
#include "hichunk/metrics.hpp"
#include "hichunk/text.hpp"
#include "hichunk/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

namespace hichunk {

namespace {

using nlohmann::json;

QAExample example_from_json(const json& j, std::size_t line_no) {
    try {
        QAExample ex;
        ex.question = j.at("question").get<std::string>();
        ex.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
        if (j.contains("doc_id")) ex.doc_id = j.at("doc_id").get<std::string>();
        if (j.contains("choices") && !j.at("choices").is_null()) {
            ex.choices = j.at("choices").get<std::vector<std::string>>();
        }
        if (j.contains("gold_choice") && !j.at("gold_choice").is_null()) {
            ex.gold_choice = j.at("gold_choice").get<std::size_t>();
        }
        if (ex.question.empty()) {
            throw FormatError("QA line " + std::to_string(line_no) + ": empty question");
        }
        if (ex.gold_answers.empty()) {
            throw FormatError("QA line " + std::to_string(line_no) + ": empty gold_answers");
        }
        if (ex.choices.has_value() != ex.gold_choice.has_value()) {
            throw FormatError("QA line " + std::to_string(line_no) +
                              ": gold_choice must be present exactly when choices is");
        }
        if (ex.choices && *ex.gold_choice >= ex.choices->size()) {
            throw FormatError("QA line " + std::to_string(line_no) + ": gold_choice out of range");
        }
        return ex;
    } catch (const json::exception& e) {
        throw FormatError("QA line " + std::to_string(line_no) + ": " + e.what());
    }
}

// recall of one gold answer's normalized tokens in the retrieved text
double gold_recall(const std::unordered_set<std::string>& retrieved, const std::string& gold) {
    const auto tokens = whitespace_tokens(normalize_answer(gold));
    if (tokens.empty()) return 0.0;
    std::size_t hit = 0;
    for (const auto& t : tokens) hit += retrieved.count(t);
    return static_cast<double>(hit) / static_cast<double>(tokens.size());
}

} // namespace

std::vector<QAExample> load_qa_examples(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open QA file: " + path.string());

    std::vector<QAExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw FormatError("QA line " + std::to_string(line_no) + " is not valid JSON");
        }
        out.push_back(example_from_json(j, line_no));
    }
    if (out.empty()) throw FormatError("QA file has no examples: " + path.string());
    return out;
}

std::optional<std::size_t> parse_choice(const std::string& answer,
                                        const std::vector<std::string>& choices) {
    if (choices.empty()) return std::nullopt;

    std::size_t i = 0;
    while (i < answer.size() && std::isspace(static_cast<unsigned char>(answer[i]))) ++i;

    if (i < answer.size() && std::isalpha(static_cast<unsigned char>(answer[i]))) {
        const bool alone = i + 1 == answer.size() ||
                           !std::isalnum(static_cast<unsigned char>(answer[i + 1]));
        if (alone) {
            const auto idx = static_cast<std::size_t>(
                std::toupper(static_cast<unsigned char>(answer[i])) - 'A');
            if (idx < choices.size()) return idx;
        }
    }
    if (i < answer.size() && std::isdigit(static_cast<unsigned char>(answer[i]))) {
        std::size_t value = 0;
        std::size_t j = i;
        while (j < answer.size() && std::isdigit(static_cast<unsigned char>(answer[j])) &&
               value <= choices.size()) {
            value = value * 10 + static_cast<std::size_t>(answer[j] - '0');
            ++j;
        }
        const bool alone = j == answer.size() ||
                           !std::isalnum(static_cast<unsigned char>(answer[j]));
        if (alone && value >= 1 && value <= choices.size()) return value - 1;
    }

    double best_score = 0.0;
    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < choices.size(); ++c) {
        const double s = token_f1(answer, {choices[c]});
        if (s > best_score) {
            best_score = s;
            best = c;
        }
    }
    return best;
}

std::size_t resolve_budget(const ChunkIndex& index) {
    if (index.manifest.chunk_size_tokens > 0) {
        return budget_top_k(static_cast<std::int64_t>(index.manifest.chunk_size_tokens));
    }
    if (index.records.empty()) throw ContractError("resolve_budget: index has no records");
    double total = 0.0;
    for (const auto& rec : index.records) total += static_cast<double>(rec.token_count);
    const auto avg = static_cast<std::int64_t>(
        std::llround(total / static_cast<double>(index.records.size())));
    return budget_top_k(std::max<std::int64_t>(avg, 1));
}

EvalReport evaluate(const ChunkIndex& index, const std::vector<QAExample>& examples,
                    const EmbeddingProviderConfig& embedder,
                    const std::optional<ReaderConfig>& reader,
                    const EvalOptions& options) {
    if (examples.empty()) throw ContractError("evaluate: no examples");
    if (reader) reader->validate();
    const std::size_t top_k = options.top_k ? *options.top_k : resolve_budget(index);

    EvalReport report;
    report.count = examples.size();
    report.with_reader = reader.has_value();
    report.examples.resize(examples.size());

    parallel_for(examples.size(), std::max<std::size_t>(options.workers, 1), [&](std::size_t i) {
        const QAExample& ex = examples[i];
        ExampleResult res;
        res.index = i;

        const auto results = retrieve(ex.question, index, embedder, options.mode, top_k);
        std::vector<std::string> chunk_texts;
        std::unordered_set<std::string> retrieved_tokens;
        for (const auto& r : results) {
            res.retrieved_chunk_ids.push_back(r.chunk_id);
            chunk_texts.push_back(r.text);
            for (const auto& t : whitespace_tokens(normalize_answer(r.text))) {
                retrieved_tokens.insert(t);
            }
        }
        for (const auto& gold : ex.gold_answers) {
            res.hit_rate = std::max(res.hit_rate, gold_recall(retrieved_tokens, gold));
        }

        if (reader) {
            try {
                res.answer = answer(ex.question, chunk_texts, *reader);
                res.answered = true;
            } catch (const Error&) {
                res.answered = false; // unanswered, scored 0
            }
            if (res.answered) {
                res.token_f1_score = token_f1(res.answer, ex.gold_answers);
                double best_rouge = 0.0;
                for (const auto& gold : ex.gold_answers) {
                    best_rouge = std::max(best_rouge, rouge_l(res.answer, gold));
                }
                res.rouge_l_score = best_rouge;
                res.bleu1 = bleu_n(res.answer, ex.gold_answers, 1);
                res.bleu4 = bleu_n(res.answer, ex.gold_answers, 4);
                if (ex.choices) res.predicted_choice = parse_choice(res.answer, *ex.choices);
            }
        }
        report.examples[i] = std::move(res);
    });

    double hit_sum = 0.0, f1_sum = 0.0, rouge_sum = 0.0, b1_sum = 0.0, b4_sum = 0.0;
    std::size_t mc_total = 0, mc_correct = 0;
    for (std::size_t i = 0; i < report.examples.size(); ++i) {
        const auto& res = report.examples[i];
        hit_sum += res.hit_rate;
        f1_sum += res.token_f1_score;
        rouge_sum += res.rouge_l_score;
        b1_sum += res.bleu1;
        b4_sum += res.bleu4;
        if (reader && !res.answered) ++report.unanswered;
        if (examples[i].choices) {
            ++mc_total;
            if (res.predicted_choice && *res.predicted_choice == *examples[i].gold_choice) {
                ++mc_correct;
            }
        }
    }

    const auto n = static_cast<double>(report.count);
    report.metrics["hit_rate"] = hit_sum / n;
    if (reader) {
        report.metrics["token_f1"] = f1_sum / n;
        report.metrics["rouge_l"] = rouge_sum / n;
        report.metrics["bleu_1"] = b1_sum / n;
        report.metrics["bleu_4"] = b4_sum / n;
        if (mc_total > 0) {
            report.metrics["accuracy"] =
                static_cast<double>(mc_correct) / static_cast<double>(mc_total);
        }
    }
    return report;
}

} // namespace hichunk
