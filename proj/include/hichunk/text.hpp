// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hichunk {

enum class TokenizerKind { whitespace, custom_regex };

struct TokenizerSpec {
    TokenizerKind kind = TokenizerKind::whitespace;
    std::string pattern; // custom_regex only
};

// One sentence of a document. Spans are byte offsets into the owning
// document's text, half-open [begin, end).
struct Sentence {
    std::size_t index = 0;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t token_count = 0;
};

struct Document {
    std::string doc_id;
    std::string text;
    std::vector<Sentence> sentences;

    std::string_view sentence_text(std::size_t i) const {
        const Sentence& s = sentences.at(i);
        return std::string_view(text).substr(s.begin, s.end - s.begin);
    }
};

// Splits text into sentence spans. A sentence ends at a run of terminal
// punctuation (. ! ?) followed by whitespace or end of text, or at a
// hard newline; trailing unterminated text forms a final sentence.
// Spans cover exactly the non-whitespace content, in order. Empty or
// whitespace-only input yields an empty list.
std::vector<Sentence> split_sentences(std::string_view text,
                                      const TokenizerSpec& spec = {});

// Number of tokens in text. The whitespace kind counts maximal
// non-whitespace runs; custom_regex counts pattern matches.
std::size_t count_tokens(std::string_view text, const TokenizerSpec& spec = {});

// Maximal non-whitespace runs, in order.
std::vector<std::string> whitespace_tokens(std::string_view text);

Document make_document(std::string doc_id, std::string text,
                       const TokenizerSpec& spec = {});

// Loads a corpus from a path: a .jsonl file with {"doc_id", "text"}
// objects, a plain-text file (one document, id = file stem), or a
// directory scanned for both kinds in sorted order.
std::vector<Document> load_corpus(const std::filesystem::path& path,
                                  const TokenizerSpec& spec = {});

} // namespace hichunk
