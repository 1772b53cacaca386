// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

namespace hichunk {

// Boundary view of a segmentation: the sorted sentence indices that end
// segments. The final sentence index is always a boundary.
struct SegmentationReference {
    std::vector<std::size_t> boundaries;
};

// Beeferman's Pk: slides a window of the given width over all positions
// and counts the fraction where reference and hypothesis disagree on
// whether the window's endpoints lie in the same segment. The window
// defaults to round(half the mean reference segment length), minimum 2.
double pk_score(const SegmentationReference& reference,
                const SegmentationReference& hypothesis,
                std::size_t n_sentences,
                std::optional<std::size_t> window = std::nullopt);

// LCS-based F1 over lowercased whitespace tokens. Either side empty
// scores 0.
double rouge_l(const std::string& candidate, const std::string& reference);

// Sentence BLEU with clipped n-gram precisions for n = 1..max_n,
// geometric mean, brevity penalty exp(1 - |ref|/|cand|) when the
// candidate is shorter (closest reference length), and zero precisions
// floored at 1/(2 * |cand|).
double bleu_n(const std::string& candidate, const std::vector<std::string>& references,
              int max_n);

// SQuAD-style token F1: lowercase, strip punctuation and the articles
// a/an/the, then multiset token overlap; returns the max over gold
// answers. Both sides normalizing to empty counts as a match.
double token_f1(const std::string& candidate, const std::vector<std::string>& gold_answers);

// Fraction of positions where the predicted choice equals the gold one.
double accuracy(const std::vector<std::size_t>& predicted_choices,
                const std::vector<std::size_t>& gold_choices);

// The normalization used by token_f1, exposed for answer matching:
// lowercase, punctuation removed, articles dropped, whitespace
// collapsed to single spaces.
std::string normalize_answer(const std::string& text);

} // namespace hichunk
