// SPDX-License-Identifier: Apache-2.0
#include "hichunk/segmentation.hpp"

#include "hichunk/errors.hpp"
#include "hichunk/util.hpp"

namespace hichunk {

std::vector<Segment> materialize_segments(const Document& doc,
                                          const BoundaryPrediction& pred) {
    const std::size_t n = doc.sentences.size();
    if (pred.labels.size() != n) {
        throw ContractError("materialize_segments: " + std::to_string(pred.labels.size()) +
                            " labels for " + std::to_string(n) + " sentences");
    }
    if (n == 0) return {};
    if (pred.labels.back() != 1) {
        throw ContractError("materialize_segments: final sentence label must be 1");
    }

    std::vector<Segment> segments;
    std::size_t first = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (pred.labels[i] != 1) continue;
        Segment seg;
        seg.doc_id = doc.doc_id;
        seg.segment_id = doc.doc_id + ":" + std::to_string(segments.size());
        seg.first_sentence = first;
        seg.last_sentence = i;
        const std::size_t begin = doc.sentences[first].begin;
        const std::size_t end = doc.sentences[i].end;
        seg.text = doc.text.substr(begin, end - begin);
        for (std::size_t s = first; s <= i; ++s) seg.token_count += doc.sentences[s].token_count;
        segments.push_back(std::move(seg));
        first = i + 1;
    }
    return segments;
}

std::vector<Segment> fallback_segment(const Document& doc,
                                      const EmbeddingProviderConfig& embedder,
                                      std::size_t min_sentences,
                                      double drop_quantile) {
    const std::size_t n = doc.sentences.size();
    if (n == 0) throw ContractError("fallback_segment: document has no sentences");
    if (min_sentences == 0) min_sentences = 1;

    BoundaryPrediction pred;
    pred.probabilities.assign(n, 0.0);
    pred.labels.assign(n, 0);
    pred.labels.back() = 1;
    pred.probabilities.back() = 1.0;

    if (n >= 2 && min_sentences < n) {
        std::vector<std::string> texts(n);
        for (std::size_t i = 0; i < n; ++i) texts[i] = std::string(doc.sentence_text(i));
        auto vecs = embed_texts(embedder, texts);

        std::vector<double> sims(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) sims[i] = cosine(vecs[i], vecs[i + 1]);
        const double cut = linear_quantile(sims, drop_quantile);

        std::size_t run = 1; // sentences accumulated since the last boundary
        for (std::size_t i = 0; i + 1 < n; ++i, ++run) {
            if (sims[i] < cut && run >= min_sentences && n - (i + 1) >= min_sentences) {
                pred.labels[i] = 1;
                pred.probabilities[i] = 1.0;
                run = 0;
            }
        }
    }
    return materialize_segments(doc, pred);
}

} // namespace hichunk
