// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace hichunk {

// Chat-completion client configuration. The template must contain the
// {context} and {question} slots exactly once each.
struct ReaderConfig {
    std::string endpoint_url;
    std::string model_name;
    std::string api_key_env_var;
    std::size_t max_context_tokens = 4096;
    double temperature = 0.0;
    std::string prompt_template =
        "Answer the question using only the context.\n\n"
        "Context:\n{context}\n\nQuestion: {question}\nAnswer:";
    std::size_t max_in_flight = 4;
    int retry_backoff_ms = 100;

    void validate() const;
};

// Substitutes the question and the chunk texts (retrieval-rank order,
// blank-line separated) into the template, dropping whole chunks from
// the tail until the substituted prompt fits max_context_tokens. A
// question that does not fit on its own is an error.
std::string build_prompt(const std::string& question,
                         const std::vector<std::string>& chunks,
                         const ReaderConfig& cfg);

// Builds the prompt, posts it as a single user message, and returns the
// first completion's text with surrounding whitespace trimmed.
// Transient failures (connection errors, 5xx, 429) are retried with
// exponential backoff, 3 tries total.
std::string answer(const std::string& question,
                   const std::vector<std::string>& chunks,
                   const ReaderConfig& cfg);

} // namespace hichunk
