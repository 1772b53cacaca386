// SPDX-License-Identifier: Apache-2.0
#include "hichunk/seg_model.hpp"

#include "hichunk/errors.hpp"
#include "hichunk/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace hichunk {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'E', 'G'};
constexpr std::uint16_t kVersion = 1;

struct RawTensor {
    std::vector<std::size_t> dims;
    std::vector<float> data;
};

struct Cursor {
    const unsigned char* p;
    std::size_t size;
    std::size_t off = 0;

    void require(std::size_t n, const std::string& what) {
        if (off + n > size) throw FormatError("truncated weight file while reading " + what);
    }
    std::uint16_t u16(const std::string& what) {
        require(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(p[off]) |
                          static_cast<std::uint16_t>(p[off + 1]) << 8;
        off += 2;
        return v;
    }
    std::uint32_t u32(const std::string& what) {
        require(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | p[off + static_cast<std::size_t>(i)];
        off += 4;
        return v;
    }
    float f32(const std::string& what) {
        return std::bit_cast<float>(u32(what));
    }
    std::string bytes(std::size_t n, const std::string& what) {
        require(n, what);
        std::string s(reinterpret_cast<const char*>(p + off), n);
        off += n;
        return s;
    }
};

std::map<std::string, RawTensor> parse_hseg(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open weight file: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Cursor cur{reinterpret_cast<const unsigned char*>(buf.data()), buf.size()};
    const std::string magic = cur.bytes(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        throw FormatError("bad magic in weight file: " + path.string());
    }
    const std::uint16_t version = cur.u16("version");
    if (version != kVersion) {
        throw FormatError("unsupported weight format version " + std::to_string(version));
    }
    const std::uint32_t count = cur.u32("tensor count");

    std::map<std::string, RawTensor> tensors;
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint16_t name_len = cur.u16("tensor name length");
        const std::string name = cur.bytes(name_len, "tensor name");
        cur.require(1, "rank of " + name);
        const std::uint8_t rank = cur.p[cur.off++];

        RawTensor raw;
        std::size_t total = 1;
        for (std::uint8_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = cur.u32("dims of " + name);
            raw.dims.push_back(dim);
            total *= dim;
        }
        raw.data.resize(total);
        cur.require(total * 4, "data of " + name);
        for (std::size_t i = 0; i < total; ++i) raw.data[i] = cur.f32("data of " + name);

        if (!tensors.emplace(name, std::move(raw)).second) {
            throw FormatError("duplicate tensor " + name + " in weight file");
        }
    }
    return tensors;
}

std::string shape_string(const std::vector<std::size_t>& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

std::vector<double> take_tensor(std::map<std::string, RawTensor>& tensors,
                                const std::string& name,
                                const std::vector<std::size_t>& expect) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("missing tensor " + name);
    if (it->second.dims != expect) {
        throw FormatError("tensor " + name + " has shape " + shape_string(it->second.dims) +
                          ", expected " + shape_string(expect));
    }
    std::vector<double> out(it->second.data.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const float v = it->second.data[i];
        if (!std::isfinite(v)) throw FormatError("tensor " + name + " contains non-finite values");
        out[i] = static_cast<double>(v);
    }
    tensors.erase(it);
    return out;
}

LstmDirWeights take_direction(std::map<std::string, RawTensor>& tensors,
                              const std::string& prefix, std::size_t input) {
    constexpr std::size_t H = SegModelWeights::hidden;
    LstmDirWeights w;
    w.input_size = input;
    w.hidden_size = H;
    w.w_ih = take_tensor(tensors, prefix + ".W_ih", {4 * H, input});
    w.w_hh = take_tensor(tensors, prefix + ".W_hh", {4 * H, H});
    w.b_ih = take_tensor(tensors, prefix + ".b_ih", {4 * H});
    w.b_hh = take_tensor(tensors, prefix + ".b_hh", {4 * H});
    return w;
}

LstmLayerWeights take_layer(std::map<std::string, RawTensor>& tensors,
                            const std::string& prefix, std::size_t input) {
    return {take_direction(tensors, prefix + ".fwd", input),
            take_direction(tensors, prefix + ".bwd", input)};
}

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_tensor(std::string& buf, const std::string& name,
                const std::vector<std::size_t>& dims, const std::vector<double>& data) {
    put_u16(buf, static_cast<std::uint16_t>(name.size()));
    buf += name;
    buf.push_back(static_cast<char>(dims.size()));
    for (std::size_t d : dims) put_u32(buf, static_cast<std::uint32_t>(d));
    for (double v : data) put_u32(buf, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void put_layer(std::string& buf, const std::string& prefix, const LstmLayerWeights& lw) {
    constexpr std::size_t H = SegModelWeights::hidden;
    for (const auto* dir : {&lw.fwd, &lw.bwd}) {
        const std::string p = prefix + (dir == &lw.fwd ? ".fwd" : ".bwd");
        put_tensor(buf, p + ".W_ih", {4 * H, dir->input_size}, dir->w_ih);
        put_tensor(buf, p + ".W_hh", {4 * H, H}, dir->w_hh);
        put_tensor(buf, p + ".b_ih", {4 * H}, dir->b_ih);
        put_tensor(buf, p + ".b_hh", {4 * H}, dir->b_hh);
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Hidden state at every step, indexed in input order regardless of
// direction. Gate rows are stacked input, forget, cell, output.
std::vector<std::vector<double>> lstm_direction(const std::vector<std::vector<double>>& xs,
                                                const LstmDirWeights& w, bool backward) {
    const std::size_t steps = xs.size();
    const std::size_t H = w.hidden_size;
    std::vector<std::vector<double>> out(steps);
    std::vector<double> h(H, 0.0), c(H, 0.0), gates(4 * H);

    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = backward ? steps - 1 - s : s;
        for (std::size_t j = 0; j < 4 * H; ++j) gates[j] = w.b_ih[j] + w.b_hh[j];
        kernels::matvec_add(w.w_ih.data(), 4 * H, w.input_size, xs[t].data(), gates.data());
        kernels::matvec_add(w.w_hh.data(), 4 * H, H, h.data(), gates.data());
        for (std::size_t j = 0; j < H; ++j) {
            const double ig = sigmoid(gates[j]);
            const double fg = sigmoid(gates[H + j]);
            const double gg = std::tanh(gates[2 * H + j]);
            const double og = sigmoid(gates[3 * H + j]);
            c[j] = fg * c[j] + ig * gg;
            h[j] = og * std::tanh(c[j]);
        }
        out[t] = h;
    }
    return out;
}

std::vector<std::vector<double>> bilstm_layer(const std::vector<std::vector<double>>& xs,
                                              const LstmLayerWeights& lw) {
    auto f = lstm_direction(xs, lw.fwd, false);
    auto b = lstm_direction(xs, lw.bwd, true);
    std::vector<std::vector<double>> out(xs.size());
    for (std::size_t t = 0; t < xs.size(); ++t) {
        out[t].reserve(f[t].size() + b[t].size());
        out[t].insert(out[t].end(), f[t].begin(), f[t].end());
        out[t].insert(out[t].end(), b[t].begin(), b[t].end());
    }
    return out;
}

} // namespace

SegModelWeights load_weights(const std::filesystem::path& path) {
    auto tensors = parse_hseg(path);
    constexpr std::size_t D = SegModelWeights::sent_dim;

    SegModelWeights w;
    w.enc1 = take_layer(tensors, "enc.l1", SegModelWeights::word_dim);
    w.enc2 = take_layer(tensors, "enc.l2", D);
    w.cls1 = take_layer(tensors, "cls.l1", D);
    w.cls2 = take_layer(tensors, "cls.l2", D);
    w.out_w = take_tensor(tensors, "cls.out.W", {1, D});
    w.out_b = take_tensor(tensors, "cls.out.b", {1})[0];
    return w;
}

void save_weights(const std::filesystem::path& path, const SegModelWeights& weights) {
    constexpr std::size_t D = SegModelWeights::sent_dim;
    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kVersion);
    put_u32(buf, 34); // 4 layers * 2 directions * 4 tensors + projection W and b

    put_layer(buf, "enc.l1", weights.enc1);
    put_layer(buf, "enc.l2", weights.enc2);
    put_layer(buf, "cls.l1", weights.cls1);
    put_layer(buf, "cls.l2", weights.cls2);
    put_tensor(buf, "cls.out.W", {1, D}, weights.out_w);
    put_tensor(buf, "cls.out.b", {1}, {weights.out_b});

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write weight file: " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("short write to weight file: " + path.string());
}

WordVectorTable load_word_vectors(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open word vector file: " + path.string());

    WordVectorTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string token;
        ss >> token;
        std::vector<float> vec(table.dim);
        for (std::size_t i = 0; i < table.dim; ++i) {
            if (!(ss >> vec[i])) {
                throw FormatError("word vector line " + std::to_string(line_no) +
                                  " does not have " + std::to_string(table.dim) + " values");
            }
        }
        float extra;
        if (ss >> extra) {
            throw FormatError("word vector line " + std::to_string(line_no) +
                              " has more than " + std::to_string(table.dim) + " values");
        }
        if (token == "<oov>") {
            table.oov_vector = std::move(vec);
        } else {
            table.entries[token] = std::move(vec);
        }
    }
    return table;
}

std::vector<double> encode_sentence(const std::vector<std::string>& tokens,
                                    const WordVectorTable& table,
                                    const SegModelWeights& weights) {
    if (tokens.empty()) throw ContractError("encode_sentence: sentence has no tokens");
    if (table.dim != SegModelWeights::word_dim) {
        throw ContractError("word vector table dim " + std::to_string(table.dim) +
                            " does not match model input " +
                            std::to_string(SegModelWeights::word_dim));
    }

    std::vector<std::vector<double>> xs(tokens.size());
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const auto& v = table.lookup(tokens[t]);
        xs[t].assign(v.begin(), v.end());
    }

    auto ys = bilstm_layer(bilstm_layer(xs, weights.enc1), weights.enc2);
    std::vector<double> pooled = ys[0];
    for (std::size_t t = 1; t < ys.size(); ++t) {
        kernels::max_inplace(pooled.data(), ys[t].data(), pooled.size());
    }
    return pooled;
}

BoundaryPrediction predict_boundaries(const Document& doc,
                                      const WordVectorTable& table,
                                      const SegModelWeights& weights,
                                      double threshold) {
    if (doc.sentences.empty()) throw ContractError("predict_boundaries: document has no sentences");

    std::vector<std::vector<double>> sent(doc.sentences.size());
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
        sent[i] = encode_sentence(whitespace_tokens(doc.sentence_text(i)), table, weights);
    }

    auto zs = bilstm_layer(bilstm_layer(sent, weights.cls1), weights.cls2);

    BoundaryPrediction pred;
    pred.probabilities.resize(zs.size());
    pred.labels.resize(zs.size());
    for (std::size_t i = 0; i < zs.size(); ++i) {
        const double logit =
            kernels::dot(weights.out_w.data(), zs[i].data(), weights.out_w.size()) + weights.out_b;
        pred.probabilities[i] = sigmoid(logit);
        pred.labels[i] = pred.probabilities[i] > threshold ? 1 : 0;
    }
    pred.labels.back() = 1;
    return pred;
}

} // namespace hichunk
