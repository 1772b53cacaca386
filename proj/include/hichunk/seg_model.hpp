// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "hichunk/text.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace hichunk {

// Weights of one LSTM direction. Matrices are row-major with the four
// gates stacked along rows in the order input, forget, cell, output:
// w_ih is [4 * hidden, input], w_hh is [4 * hidden, hidden], biases are
// [4 * hidden]. Values are promoted to double at load so the forward
// pass accumulates in double throughout.
struct LstmDirWeights {
    std::size_t input_size = 0;
    std::size_t hidden_size = 0;
    std::vector<double> w_ih;
    std::vector<double> w_hh;
    std::vector<double> b_ih;
    std::vector<double> b_hh;
};

struct LstmLayerWeights {
    LstmDirWeights fwd;
    LstmDirWeights bwd;
};

// Two stacked bidirectional LSTMs: a sentence encoder over word vectors
// (input 300, hidden 256, max-pooled over time to 512) and a boundary
// classifier over sentence vectors (input 512, hidden 256), closed by a
// single logit projection.
struct SegModelWeights {
    static constexpr std::size_t word_dim = 300;
    static constexpr std::size_t hidden = 256;
    static constexpr std::size_t sent_dim = 2 * hidden;

    LstmLayerWeights enc1; // input word_dim
    LstmLayerWeights enc2; // input sent_dim
    LstmLayerWeights cls1; // input sent_dim
    LstmLayerWeights cls2; // input sent_dim
    std::vector<double> out_w; // [sent_dim]
    double out_b = 0.0;
};

// Binary weight file, little-endian:
//   magic "HSEG" | u16 version = 1 | u32 tensor_count |
//   per tensor: u16 name_len | name bytes | u8 rank | u32 dims... | f32 data
// Required tensors: enc.l{1,2}.{fwd,bwd}.{W_ih,W_hh,b_ih,b_hh},
// cls.l{1,2}.{fwd,bwd}.{W_ih,W_hh,b_ih,b_hh}, cls.out.W [1,512],
// cls.out.b [1]. Shape mismatches and missing tensors raise errors
// naming the offending tensor.
SegModelWeights load_weights(const std::filesystem::path& path);
void save_weights(const std::filesystem::path& path, const SegModelWeights& weights);

// Token to 300-d vector map. Unknown tokens resolve to oov_vector
// (zeros unless the table provides one).
struct WordVectorTable {
    std::size_t dim = SegModelWeights::word_dim;
    std::unordered_map<std::string, std::vector<float>> entries;
    std::vector<float> oov_vector = std::vector<float>(SegModelWeights::word_dim, 0.0f);

    const std::vector<float>& lookup(const std::string& token) const {
        auto it = entries.find(token);
        return it == entries.end() ? oov_vector : it->second;
    }
};

// Text format: one line per word, the token followed by 300
// whitespace-separated decimal numbers. A line named "<oov>" sets the
// out-of-vocabulary vector.
WordVectorTable load_word_vectors(const std::filesystem::path& path);

struct BoundaryPrediction {
    std::vector<double> probabilities; // one per sentence, in [0, 1]
    std::vector<int> labels;           // 1 = ends a segment; final forced to 1
};

// Runs the 2-layer bidirectional recurrence over the per-token word
// vectors and max-pools the concatenated forward/backward states over
// time. Empty token list is a contract error.
std::vector<double> encode_sentence(const std::vector<std::string>& tokens,
                                    const WordVectorTable& table,
                                    const SegModelWeights& weights);

// Encodes every sentence, runs the classifier recurrence over the
// sentence vectors, projects each step to a logistic probability, and
// labels a sentence 1 iff its probability strictly exceeds threshold.
// The final sentence's label is always forced to 1.
BoundaryPrediction predict_boundaries(const Document& doc,
                                      const WordVectorTable& table,
                                      const SegModelWeights& weights,
                                      double threshold = 0.5);

} // namespace hichunk
