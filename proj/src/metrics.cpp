// SPDX-License-Identifier: Apache-2.0
#include "hichunk/metrics.hpp"

#include "hichunk/errors.hpp"
#include "hichunk/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <unordered_map>

namespace hichunk {

namespace {

std::vector<std::string> lower_tokens(const std::string& text) {
    auto tokens = whitespace_tokens(text);
    for (auto& t : tokens) {
        for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return tokens;
}

void validate_boundaries(const SegmentationReference& ref, std::size_t n, const char* who) {
    if (ref.boundaries.empty()) {
        throw ContractError(std::string(who) + " boundary set is empty");
    }
    if (!std::is_sorted(ref.boundaries.begin(), ref.boundaries.end()) ||
        std::adjacent_find(ref.boundaries.begin(), ref.boundaries.end()) != ref.boundaries.end()) {
        throw ContractError(std::string(who) + " boundaries must be strictly increasing");
    }
    if (ref.boundaries.back() != n - 1) {
        throw ContractError(std::string(who) + " boundaries must end at the final sentence");
    }
}

// true iff no segment boundary separates sentence i from sentence j
// (i <= j): no boundary index b with i <= b < j
bool same_segment(const std::vector<std::size_t>& boundaries, std::size_t i, std::size_t j) {
    auto it = std::lower_bound(boundaries.begin(), boundaries.end(), i);
    return it == boundaries.end() || *it >= j;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                        tokens.begin() + static_cast<std::ptrdiff_t>(i + n))]++;
    }
    return counts;
}

double multiset_f1(const std::vector<std::string>& cand, const std::vector<std::string>& gold) {
    if (cand.empty() && gold.empty()) return 1.0;
    if (cand.empty() || gold.empty()) return 0.0;
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& t : gold) counts[t]++;
    std::size_t overlap = 0;
    for (const auto& t : cand) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
    const double r = static_cast<double>(overlap) / static_cast<double>(gold.size());
    return 2.0 * p * r / (p + r);
}

} // namespace

double pk_score(const SegmentationReference& reference,
                const SegmentationReference& hypothesis,
                std::size_t n_sentences,
                std::optional<std::size_t> window) {
    if (n_sentences < 2) throw ContractError("pk_score: need at least 2 sentences");
    validate_boundaries(reference, n_sentences, "reference");
    validate_boundaries(hypothesis, n_sentences, "hypothesis");

    std::size_t w;
    if (window) {
        w = *window;
        if (w < 1 || w > n_sentences) throw ContractError("pk_score: window out of range");
    } else {
        const double mean_len =
            static_cast<double>(n_sentences) / static_cast<double>(reference.boundaries.size());
        w = static_cast<std::size_t>(std::llround(mean_len / 2.0));
        w = std::max<std::size_t>(w, 2);
        w = std::min(w, n_sentences);
    }

    std::size_t disagreements = 0;
    const std::size_t positions = n_sentences - w + 1;
    for (std::size_t i = 0; i < positions; ++i) {
        const bool ref_same = same_segment(reference.boundaries, i, i + w - 1);
        const bool hyp_same = same_segment(hypothesis.boundaries, i, i + w - 1);
        if (ref_same != hyp_same) ++disagreements;
    }
    return static_cast<double>(disagreements) / static_cast<double>(positions);
}

double rouge_l(const std::string& candidate, const std::string& reference) {
    const auto cand = lower_tokens(candidate);
    const auto ref = lower_tokens(reference);
    if (cand.empty() || ref.empty()) return 0.0;
    const std::size_t lcs = lcs_length(cand, ref);
    if (lcs == 0) return 0.0;
    const double p = static_cast<double>(lcs) / static_cast<double>(cand.size());
    const double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
    return 2.0 * p * r / (p + r);
}

double bleu_n(const std::string& candidate, const std::vector<std::string>& references,
              int max_n) {
    if (max_n < 1 || max_n > 4) throw ContractError("bleu_n: max_n must be in 1..4");
    if (references.empty()) throw ContractError("bleu_n: no references");

    const auto cand = lower_tokens(candidate);
    if (cand.empty()) return 0.0;

    std::vector<std::vector<std::string>> refs;
    refs.reserve(references.size());
    for (const auto& r : references) refs.push_back(lower_tokens(r));

    const double floor_p = 1.0 / (2.0 * static_cast<double>(cand.size()));
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const auto cand_counts = ngram_counts(cand, static_cast<std::size_t>(n));
        std::vector<NgramCounts> ref_counts;
        ref_counts.reserve(refs.size());
        for (const auto& ref : refs) ref_counts.push_back(ngram_counts(ref, static_cast<std::size_t>(n)));

        std::size_t clipped = 0;
        std::size_t total = 0;
        for (const auto& [gram, count] : cand_counts) {
            total += count;
            std::size_t best = 0;
            for (const auto& rc : ref_counts) {
                auto it = rc.find(gram);
                if (it != rc.end()) best = std::max(best, it->second);
            }
            clipped += std::min(count, best);
        }
        const double p = (total == 0 || clipped == 0)
            ? floor_p
            : static_cast<double>(clipped) / static_cast<double>(total);
        log_sum += std::log(p);
    }
    const double geo_mean = std::exp(log_sum / max_n);

    // closest reference length; ties prefer the shorter
    std::size_t ref_len = refs[0].size();
    for (const auto& ref : refs) {
        const auto gap = [&](std::size_t len) {
            return len > cand.size() ? len - cand.size() : cand.size() - len;
        };
        if (gap(ref.size()) < gap(ref_len) || (gap(ref.size()) == gap(ref_len) && ref.size() < ref_len)) {
            ref_len = ref.size();
        }
    }
    const double bp = cand.size() >= ref_len
        ? 1.0
        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand.size()));
    return bp * geo_mean;
}

std::string normalize_answer(const std::string& text) {
    std::string lowered;
    lowered.reserve(text.size());
    for (char c : text) {
        const auto uc = static_cast<unsigned char>(c);
        if (std::ispunct(uc)) continue;
        lowered.push_back(static_cast<char>(std::tolower(uc)));
    }
    std::string out;
    for (const auto& token : whitespace_tokens(lowered)) {
        if (token == "a" || token == "an" || token == "the") continue;
        if (!out.empty()) out.push_back(' ');
        out += token;
    }
    return out;
}

double token_f1(const std::string& candidate, const std::vector<std::string>& gold_answers) {
    if (gold_answers.empty()) throw ContractError("token_f1: no gold answers");
    const auto cand = whitespace_tokens(normalize_answer(candidate));
    double best = 0.0;
    for (const auto& gold : gold_answers) {
        best = std::max(best, multiset_f1(cand, whitespace_tokens(normalize_answer(gold))));
    }
    return best;
}

double accuracy(const std::vector<std::size_t>& predicted_choices,
                const std::vector<std::size_t>& gold_choices) {
    if (predicted_choices.size() != gold_choices.size()) {
        throw ContractError("accuracy: prediction and gold lists differ in length");
    }
    if (predicted_choices.empty()) throw ContractError("accuracy: empty input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted_choices.size(); ++i) {
        if (predicted_choices[i] == gold_choices[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(predicted_choices.size());
}

} // namespace hichunk
