// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hichunk/embedding.hpp"
#include "hichunk/seg_model.hpp"
#include "hichunk/text.hpp"

#include <string>
#include <vector>

namespace hichunk {

// A contiguous run of sentences. A document's segments are disjoint,
// ordered, and cover every sentence.
struct Segment {
    std::string segment_id;
    std::string doc_id;
    std::size_t first_sentence = 0;
    std::size_t last_sentence = 0; // inclusive
    std::string text;
    std::size_t token_count = 0;
};

// Turns boundary labels into segments: each maximal run of sentences
// ending at a label-1 sentence becomes one segment. The prediction must
// cover every sentence and end with a 1-label.
std::vector<Segment> materialize_segments(const Document& doc,
                                          const BoundaryPrediction& pred);

// Unsupervised segmenter: embeds every sentence, computes
// adjacent-sentence cosine similarities, and places a boundary after
// sentence i when similarity(i, i+1) falls strictly below the
// drop_quantile-quantile of all adjacent similarities. Boundaries that
// would leave either side with fewer than min_sentences sentences are
// suppressed.
std::vector<Segment> fallback_segment(const Document& doc,
                                      const EmbeddingProviderConfig& embedder,
                                      std::size_t min_sentences,
                                      double drop_quantile);

} // namespace hichunk
