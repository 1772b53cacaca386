// SPDX-License-Identifier: Apache-2.0
#include "hichunk/text.hpp"

#include "hichunk/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <sstream>

namespace hichunk {

namespace {

inline bool is_ws(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_terminal(char c) {
    return c == '.' || c == '!' || c == '?';
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::vector<Sentence> split_sentences(std::string_view text, const TokenizerSpec& spec) {
    std::vector<Sentence> out;
    const std::size_t n = text.size();
    std::size_t pos = 0;

    while (pos < n) {
        while (pos < n && is_ws(text[pos])) ++pos;
        if (pos >= n) break;

        const std::size_t begin = pos;
        std::size_t end = 0;
        std::size_t last_non_ws = pos;
        bool closed = false;

        while (pos < n) {
            const char c = text[pos];
            if (c == '\n') {
                end = last_non_ws + 1;
                closed = true;
                break;
            }
            if (is_terminal(c)) {
                std::size_t run_end = pos;
                while (run_end + 1 < n && is_terminal(text[run_end + 1])) ++run_end;
                if (run_end + 1 >= n || is_ws(text[run_end + 1])) {
                    end = run_end + 1;
                    pos = run_end + 1;
                    closed = true;
                    break;
                }
                pos = run_end; // punctuation glued to more text, e.g. "3.14"
                last_non_ws = pos;
            } else if (!is_ws(c)) {
                last_non_ws = pos;
            }
            ++pos;
        }
        // ran off the end without a terminator: trim trailing whitespace
        if (!closed) end = last_non_ws + 1;

        Sentence s;
        s.index = out.size();
        s.begin = begin;
        s.end = end;
        s.token_count = count_tokens(text.substr(begin, end - begin), spec);
        out.push_back(s);

        pos = std::max(pos, end);
    }
    return out;
}

std::size_t count_tokens(std::string_view text, const TokenizerSpec& spec) {
    if (spec.kind == TokenizerKind::whitespace) {
        std::size_t count = 0;
        bool in_run = false;
        for (char c : text) {
            if (is_ws(c)) {
                in_run = false;
            } else if (!in_run) {
                in_run = true;
                ++count;
            }
        }
        return count;
    }
    if (spec.pattern.empty()) throw ConfigError("custom_regex tokenizer requires a pattern");
    const std::regex re(spec.pattern);
    auto begin = std::cregex_iterator(text.data(), text.data() + text.size(), re);
    return static_cast<std::size_t>(std::distance(begin, std::cregex_iterator()));
}

std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_ws(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_ws(text[i])) ++i;
        if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

Document make_document(std::string doc_id, std::string text, const TokenizerSpec& spec) {
    Document doc;
    doc.doc_id = std::move(doc_id);
    doc.text = std::move(text);
    doc.sentences = split_sentences(doc.text, spec);
    return doc;
}

namespace {

void load_jsonl_corpus(const std::filesystem::path& path, const TokenizerSpec& spec,
                       std::vector<Document>& out) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open corpus file: " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("doc_id") ||
            !obj.contains("text") || !obj["doc_id"].is_string() || !obj["text"].is_string()) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": expected {\"doc_id\": string, \"text\": string}");
        }
        out.push_back(make_document(obj["doc_id"].get<std::string>(),
                                    obj["text"].get<std::string>(), spec));
    }
}

} // namespace

std::vector<Document> load_corpus(const std::filesystem::path& path, const TokenizerSpec& spec) {
    namespace fs = std::filesystem;
    std::vector<Document> docs;

    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            const auto ext = entry.path().extension().string();
            if (ext == ".txt" || ext == ".jsonl") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            if (file.extension() == ".jsonl") {
                load_jsonl_corpus(file, spec, docs);
            } else {
                docs.push_back(make_document(file.stem().string(), read_file(file), spec));
            }
        }
    } else if (fs::is_regular_file(path)) {
        if (path.extension() == ".jsonl") {
            load_jsonl_corpus(path, spec, docs);
        } else {
            docs.push_back(make_document(path.stem().string(), read_file(path), spec));
        }
    } else {
        throw ConfigError("corpus path does not exist: " + path.string());
    }
    return docs;
}

} // namespace hichunk
