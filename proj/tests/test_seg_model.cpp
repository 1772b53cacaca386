// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hichunk/errors.hpp"
#include "hichunk/seg_model.hpp"
#include "hichunk/segmentation.hpp"
#include "hichunk/text.hpp"
#include "support/reference_lstm.hpp"
#include "support/test_rng.hpp"
#include "support/tmpdir.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

using namespace hichunk;
using testsupport::SplitMix64;
using testsupport::TmpDir;

namespace {

// --- hand-rolled HSEG writer for malformed-file cases ---

struct RawTensor {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::vector<float> data; // empty = zero-filled
};

std::vector<RawTensor> canonical_tensors() {
    std::vector<RawTensor> out;
    const std::uint32_t H4 = 1024, H = 256, W = 300, S = 512;
    for (const std::string layer : {"enc.l1", "enc.l2", "cls.l1", "cls.l2"}) {
        const std::uint32_t in = layer == "enc.l1" ? W : S;
        for (const std::string dir : {"fwd", "bwd"}) {
            const std::string p = layer + "." + dir + ".";
            out.push_back({p + "W_ih", {H4, in}, {}});
            out.push_back({p + "W_hh", {H4, H}, {}});
            out.push_back({p + "b_ih", {H4}, {}});
            out.push_back({p + "b_hh", {H4}, {}});
        }
    }
    out.push_back({"cls.out.W", {1, S}, {}});
    out.push_back({"cls.out.b", {1}, {}});
    return out;
}

void write_hseg(const std::filesystem::path& path, const std::vector<RawTensor>& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out.write("HSEG", 4);
    const std::uint16_t version = 1;
    out.write(reinterpret_cast<const char*>(&version), 2);
    const std::uint32_t count = static_cast<std::uint32_t>(tensors.size());
    out.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& t : tensors) {
        const std::uint16_t name_len = static_cast<std::uint16_t>(t.name.size());
        out.write(reinterpret_cast<const char*>(&name_len), 2);
        out.write(t.name.data(), name_len);
        const std::uint8_t rank = static_cast<std::uint8_t>(t.dims.size());
        out.write(reinterpret_cast<const char*>(&rank), 1);
        std::size_t total = 1;
        for (std::uint32_t d : t.dims) {
            out.write(reinterpret_cast<const char*>(&d), 4);
            total *= d;
        }
        std::vector<float> data = t.data;
        data.resize(total, 0.0f);
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(total * 4));
    }
}

// --- weight builders ---

std::vector<double> promoted(SplitMix64& rng, std::size_t n, double lo, double hi) {
    std::vector<double> out(n);
    for (auto& v : out) v = static_cast<double>(static_cast<float>(rng.uniform(lo, hi)));
    return out;
}

LstmDirWeights random_dir(SplitMix64& rng, std::size_t in, std::size_t h, double scale) {
    LstmDirWeights d;
    d.input_size = in;
    d.hidden_size = h;
    d.w_ih = promoted(rng, 4 * h * in, -scale, scale);
    d.w_hh = promoted(rng, 4 * h * h, -scale, scale);
    d.b_ih = promoted(rng, 4 * h, -scale, scale);
    d.b_hh = promoted(rng, 4 * h, -scale, scale);
    return d;
}

// Full declared shapes (input 300, hidden 256).
SegModelWeights random_full_weights(SplitMix64& rng) {
    SegModelWeights w;
    w.enc1 = {random_dir(rng, 300, 256, 0.05), random_dir(rng, 300, 256, 0.05)};
    w.enc2 = {random_dir(rng, 512, 256, 0.05), random_dir(rng, 512, 256, 0.05)};
    w.cls1 = {random_dir(rng, 512, 256, 0.05), random_dir(rng, 512, 256, 0.05)};
    w.cls2 = {random_dir(rng, 512, 256, 0.05), random_dir(rng, 512, 256, 0.05)};
    w.out_w = promoted(rng, 512, -0.5, 0.5);
    w.out_b = 0.25;
    return w;
}

// Narrow hidden size keeps reference-oracle comparisons fast. The word
// dimension stays at the declared 300 because the encoder input is pinned
// to the word-vector table width.
SegModelWeights small_weights(SplitMix64& rng, std::size_t h, double scale = 0.3) {
    SegModelWeights w;
    w.enc1 = {random_dir(rng, 300, h, scale), random_dir(rng, 300, h, scale)};
    w.enc2 = {random_dir(rng, 2 * h, h, scale), random_dir(rng, 2 * h, h, scale)};
    w.cls1 = {random_dir(rng, 2 * h, h, scale), random_dir(rng, 2 * h, h, scale)};
    w.cls2 = {random_dir(rng, 2 * h, h, scale), random_dir(rng, 2 * h, h, scale)};
    w.out_w = testsupport::uniform_vector(rng, 2 * h, -1.0, 1.0);
    w.out_b = rng.uniform(-0.5, 0.5);
    return w;
}

LstmDirWeights zero_dir(std::size_t in, std::size_t h) {
    LstmDirWeights d;
    d.input_size = in;
    d.hidden_size = h;
    d.w_ih.assign(4 * h * in, 0.0);
    d.w_hh.assign(4 * h * h, 0.0);
    d.b_ih.assign(4 * h, 0.0);
    d.b_hh.assign(4 * h, 0.0);
    return d;
}

SegModelWeights zero_weights() {
    SegModelWeights w;
    w.enc1 = {zero_dir(300, 256), zero_dir(300, 256)};
    w.enc2 = {zero_dir(512, 256), zero_dir(512, 256)};
    w.cls1 = {zero_dir(512, 256), zero_dir(512, 256)};
    w.cls2 = {zero_dir(512, 256), zero_dir(512, 256)};
    w.out_w.assign(512, 0.0);
    w.out_b = 0.0;
    return w;
}

WordVectorTable random_table(SplitMix64& rng, const std::vector<std::string>& vocab) {
    WordVectorTable table;
    for (const auto& tok : vocab) {
        table.entries[tok] = testsupport::uniform_floats(rng, 300, -1.0, 1.0);
    }
    return table;
}

Document doc_from_sentences(const std::vector<std::vector<std::string>>& sentences) {
    std::string text;
    for (const auto& s : sentences) {
        std::string line;
        for (const auto& tok : s) {
            if (!line.empty()) line += " ";
            line += tok;
        }
        if (!text.empty()) text += "\n";
        text += line;
    }
    return make_document("doc", text);
}

std::vector<testsupport::Seq> to_ref_inputs(const Document& doc, const WordVectorTable& table) {
    std::vector<testsupport::Seq> out;
    for (std::size_t i = 0; i < doc.sentences.size(); ++i) {
        testsupport::Seq seq;
        for (const auto& tok : whitespace_tokens(doc.sentence_text(i))) {
            const auto& v = table.lookup(tok);
            seq.emplace_back(v.begin(), v.end());
        }
        out.push_back(std::move(seq));
    }
    return out;
}

} // namespace

TEST_CASE("weight file round-trips exactly") {
    TmpDir dir("hseg_rt");
    SplitMix64 rng(101);
    const SegModelWeights w = random_full_weights(rng);
    save_weights(dir / "m.hseg", w);
    const SegModelWeights back = load_weights(dir / "m.hseg");

    CHECK(back.enc1.fwd.w_ih == w.enc1.fwd.w_ih);
    CHECK(back.enc1.bwd.w_hh == w.enc1.bwd.w_hh);
    CHECK(back.enc2.fwd.b_ih == w.enc2.fwd.b_ih);
    CHECK(back.cls1.bwd.b_hh == w.cls1.bwd.b_hh);
    CHECK(back.cls2.fwd.w_ih == w.cls2.fwd.w_ih);
    CHECK(back.out_w == w.out_w);
    CHECK(back.out_b == w.out_b);
    CHECK(back.enc1.fwd.input_size == 300);
    CHECK(back.enc2.fwd.input_size == 512);
    CHECK(back.cls2.bwd.hidden_size == 256);
}

TEST_CASE("zero-filled weight file loads as zero tensors") {
    TmpDir dir("hseg_zero");
    write_hseg(dir / "z.hseg", canonical_tensors());
    const SegModelWeights w = load_weights(dir / "z.hseg");
    for (double v : w.enc1.fwd.w_ih) REQUIRE(v == 0.0);
    for (double v : w.out_w) REQUIRE(v == 0.0);
    CHECK(w.out_b == 0.0);
}

TEST_CASE("weight loader rejects malformed files with named errors") {
    TmpDir dir("hseg_bad");

    SUBCASE("missing file") {
        CHECK_THROWS_WITH_AS(load_weights(dir / "nope.hseg"),
                             doctest::Contains("cannot open"), FormatError);
    }
    SUBCASE("bad magic") {
        write_hseg(dir / "b.hseg", canonical_tensors());
        std::fstream f(dir / "b.hseg", std::ios::binary | std::ios::in | std::ios::out);
        f.write("XXXX", 4);
        f.close();
        CHECK_THROWS_WITH_AS(load_weights(dir / "b.hseg"),
                             doctest::Contains("magic"), FormatError);
    }
    SUBCASE("unsupported version") {
        write_hseg(dir / "b.hseg", canonical_tensors());
        std::fstream f(dir / "b.hseg", std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(4);
        const std::uint16_t v = 9;
        f.write(reinterpret_cast<const char*>(&v), 2);
        f.close();
        CHECK_THROWS_WITH_AS(load_weights(dir / "b.hseg"),
                             doctest::Contains("version"), FormatError);
    }
    SUBCASE("truncated file") {
        write_hseg(dir / "b.hseg", canonical_tensors());
        const auto size = std::filesystem::file_size(dir / "b.hseg");
        std::filesystem::resize_file(dir / "b.hseg", size / 2);
        CHECK_THROWS_WITH_AS(load_weights(dir / "b.hseg"),
                             doctest::Contains("truncated"), FormatError);
    }
    SUBCASE("missing output projection") {
        auto tensors = canonical_tensors();
        tensors.erase(std::remove_if(tensors.begin(), tensors.end(),
                                     [](const RawTensor& t) { return t.name == "cls.out.W"; }),
                      tensors.end());
        write_hseg(dir / "b.hseg", tensors);
        CHECK_THROWS_WITH_AS(load_weights(dir / "b.hseg"),
                             doctest::Contains("cls.out.W"), FormatError);
    }
    SUBCASE("wrong tensor shape") {
        auto tensors = canonical_tensors();
        for (auto& t : tensors) {
            if (t.name == "enc.l2.fwd.W_ih") t.dims = {1024, 300}; // should be [1024,512]
        }
        write_hseg(dir / "b.hseg", tensors);
        CHECK_THROWS_WITH_AS(load_weights(dir / "b.hseg"),
                             doctest::Contains("enc.l2.fwd.W_ih"), FormatError);
    }
    SUBCASE("duplicate tensor") {
        auto tensors = canonical_tensors();
        tensors.push_back({"cls.out.b", {1}, {}});
        write_hseg(dir / "b.hseg", tensors);
        CHECK_THROWS_WITH_AS(load_weights(dir / "b.hseg"),
                             doctest::Contains("duplicate"), FormatError);
    }
    SUBCASE("non-finite values") {
        auto tensors = canonical_tensors();
        for (auto& t : tensors) {
            if (t.name == "cls.out.W") {
                t.data.assign(512, 0.0f);
                t.data[7] = std::numeric_limits<float>::quiet_NaN();
            }
        }
        write_hseg(dir / "b.hseg", tensors);
        CHECK_THROWS_WITH_AS(load_weights(dir / "b.hseg"),
                             doctest::Contains("non-finite"), FormatError);
    }
    SUBCASE("unknown extra tensor is ignored") {
        auto tensors = canonical_tensors();
        tensors.push_back({"optimizer.step", {4}, {1.0f, 2.0f, 3.0f, 4.0f}});
        write_hseg(dir / "b.hseg", tensors);
        CHECK_NOTHROW(load_weights(dir / "b.hseg"));
    }
}

TEST_CASE("word vector loader") {
    TmpDir dir("wvec");
    SUBCASE("well-formed file with oov line") {
        std::ofstream out(dir / "v.txt");
        out << "hello";
        for (int d = 0; d < 300; ++d) out << " " << (d == 0 ? 1.0 : 0.0);
        out << "\n<oov>";
        for (int d = 0; d < 300; ++d) out << " " << 0.5;
        out << "\n";
        out.close();
        const auto table = load_word_vectors(dir / "v.txt");
        CHECK(table.entries.size() == 1);
        CHECK(table.lookup("hello")[0] == 1.0f);
        CHECK(table.lookup("unseen")[0] == 0.5f); // resolves to the oov vector
    }
    SUBCASE("wrong number count names the line") {
        std::ofstream out(dir / "v.txt");
        out << "ok";
        for (int d = 0; d < 300; ++d) out << " 0";
        out << "\nshort 1 2 3\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_word_vectors(dir / "v.txt"),
                             doctest::Contains("line 2"), FormatError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_word_vectors(dir / "missing.txt"), FormatError);
    }
}

TEST_CASE("all-zero weights: zero sentence vector, flat 0.5 probabilities, one segment") {
    const SegModelWeights w = zero_weights();
    WordVectorTable table; // all lookups resolve to the zero oov vector

    const auto repr = encode_sentence({"any", "tokens", "here"}, table, w);
    REQUIRE(repr.size() == 512);
    for (double v : repr) REQUIRE(v == 0.0);

    const Document doc = doc_from_sentences({{"a", "b"}, {"c"}, {"d", "e", "f"}});
    const auto pred = predict_boundaries(doc, table, w, 0.5);
    REQUIRE(pred.probabilities.size() == 3);
    for (double p : pred.probabilities) CHECK(p == 0.5);
    CHECK(pred.labels[0] == 0);
    CHECK(pred.labels[1] == 0);
    CHECK(pred.labels[2] == 1); // forced final boundary

    const auto segments = materialize_segments(doc, pred);
    REQUIRE(segments.size() == 1);
    CHECK(segments[0].first_sentence == 0);
    CHECK(segments[0].last_sentence == 2);
}

TEST_CASE("threshold zero makes every sentence its own segment") {
    SplitMix64 rng(55);
    const SegModelWeights w = small_weights(rng, 5);
    const std::vector<std::string> vocab = {"w0", "w1", "w2", "w3", "w4"};
    const WordVectorTable table = random_table(rng, vocab);
    const Document doc = doc_from_sentences({{"w0", "w1"}, {"w2"}, {"w3", "w4"}, {"w0"}});

    const auto pred = predict_boundaries(doc, table, w, 0.0);
    for (int label : pred.labels) CHECK(label == 1);
    CHECK(materialize_segments(doc, pred).size() == 4);
}

TEST_CASE("encode_sentence rejects empty input and wrong table width") {
    const SegModelWeights w = zero_weights();
    WordVectorTable table;
    CHECK_THROWS_AS(encode_sentence({}, table, w), ContractError);
    WordVectorTable narrow;
    narrow.dim = 10;
    CHECK_THROWS_AS(encode_sentence({"x"}, narrow, w), ContractError);
}

TEST_CASE("single-token sentence pools over exactly one time step") {
    SplitMix64 rng(66);
    const SegModelWeights w = small_weights(rng, 4);
    const WordVectorTable table = random_table(rng, {"solo"});

    const auto pooled = encode_sentence({"solo"}, table, w);

    const auto& v = table.lookup("solo");
    testsupport::Seq xs = {testsupport::Vec(v.begin(), v.end())};
    const auto ref = testsupport::ref_bilstm(w.enc2, testsupport::ref_bilstm(w.enc1, xs));
    REQUIRE(pooled.size() == ref[0].size());
    for (std::size_t d = 0; d < pooled.size(); ++d) {
        CHECK(pooled[d] == doctest::Approx(ref[0][d]).epsilon(1e-9));
    }
}

TEST_CASE("duplicating the final token changes the encoding per the oracle") {
    SplitMix64 rng(77);
    const SegModelWeights w = small_weights(rng, 4);
    const WordVectorTable table = random_table(rng, {"a", "b"});

    const auto short_form = encode_sentence({"a", "b"}, table, w);
    const auto long_form = encode_sentence({"a", "b", "b"}, table, w);

    auto ref_inputs = [&](const std::vector<std::string>& toks) {
        testsupport::Seq xs;
        for (const auto& t : toks) {
            const auto& v = table.lookup(t);
            xs.emplace_back(v.begin(), v.end());
        }
        return xs;
    };
    const auto ref_short = testsupport::ref_encode_sentence(w, ref_inputs({"a", "b"}));
    const auto ref_long = testsupport::ref_encode_sentence(w, ref_inputs({"a", "b", "b"}));

    bool differs = false;
    for (std::size_t d = 0; d < short_form.size(); ++d) {
        CHECK(short_form[d] == doctest::Approx(ref_short[d]).epsilon(1e-9));
        CHECK(long_form[d] == doctest::Approx(ref_long[d]).epsilon(1e-9));
        if (std::abs(ref_short[d] - ref_long[d]) > 1e-12) differs = true;
    }
    CHECK(differs); // the recurrence state moved, and both sides agree it did
}

TEST_CASE("probabilities match the reference forward pass on random pairs") {
    SplitMix64 rng(88);
    std::vector<std::string> vocab;
    for (int i = 0; i < 20; ++i) vocab.push_back("w" + std::to_string(i));

    for (int pair = 0; pair < 10; ++pair) {
        const SegModelWeights w = small_weights(rng, 3 + pair % 4);
        const WordVectorTable table = random_table(rng, vocab);

        std::vector<std::vector<std::string>> sentences(2 + rng.below(5));
        for (auto& s : sentences) {
            s.resize(1 + rng.below(6));
            for (auto& tok : s) tok = vocab[rng.below(vocab.size())];
        }
        const Document doc = doc_from_sentences(sentences);

        const auto pred = predict_boundaries(doc, table, w, 0.5);
        const auto ref = testsupport::ref_predict(w, to_ref_inputs(doc, table));

        REQUIRE(pred.probabilities.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(pred.probabilities[i] == doctest::Approx(ref[i]).epsilon(1e-5));
            CHECK(pred.probabilities[i] >= 0.0);
            CHECK(pred.probabilities[i] <= 1.0);
        }
    }
}

TEST_CASE("full-shape forward pass reproduces frozen probabilities") {
    // Constant-parameter network at the declared sizes. The expected numbers
    // come from an independent float64 forward pass that was itself checked
    // against a reference recurrence implementation.
    auto const_dir = [](std::size_t in, double c_w, double c_b) {
        LstmDirWeights d;
        d.input_size = in;
        d.hidden_size = 256;
        d.w_ih.assign(4 * 256 * in, c_w);
        d.w_hh.assign(4 * 256 * 256, c_w);
        d.b_ih.assign(4 * 256, c_b);
        d.b_hh.assign(4 * 256, c_b);
        return d;
    };
    SegModelWeights w;
    w.enc1 = {const_dir(300, 0.01, 0.05), const_dir(300, -0.01, 0.05)};
    w.enc2 = {const_dir(512, 0.02, -0.03), const_dir(512, 0.015, 0.0)};
    w.cls1 = {const_dir(512, 0.01, 0.02), const_dir(512, -0.005, 0.01)};
    w.cls2 = {const_dir(512, 0.008, -0.01), const_dir(512, 0.012, 0.005)};
    w.out_w.resize(512);
    for (std::size_t j = 0; j < 512; ++j) w.out_w[j] = ((static_cast<int>(j) % 11) - 5) / 50.0;
    w.out_b = 0.1;

    WordVectorTable table;
    for (int j = 0; j < 10; ++j) {
        std::vector<float> v(300);
        for (int d = 0; d < 300; ++d) v[d] = static_cast<float>((((j * 300 + d) % 13) - 6) / 20.0);
        table.entries["t" + std::to_string(j)] = std::move(v);
    }
    const Document doc = doc_from_sentences(
        {{"t0", "t1", "t2"}, {"t3"}, {"t4", "t5", "t6", "t7"}, {"t8", "t9"}});

    const auto repr = encode_sentence({"t0", "t1", "t2"}, table, w);
    CHECK(repr[0] == doctest::Approx(0.7646679670871217).epsilon(1e-6));
    CHECK(repr[511] == doctest::Approx(0.8257534604839989).epsilon(1e-6));

    const auto pred = predict_boundaries(doc, table, w, 0.5);
    const std::vector<double> golden = {0.47971127093391447, 0.4584653972446396,
                                        0.45292126413684103, 0.45609418173897115};
    REQUIRE(pred.probabilities.size() == golden.size());
    for (std::size_t i = 0; i < golden.size(); ++i) {
        CHECK(pred.probabilities[i] == doctest::Approx(golden[i]).epsilon(1e-6));
    }
    // every probability sits below 0.5, so only the forced final boundary
    const auto segments = materialize_segments(doc, pred);
    CHECK(segments.size() == 1);
}

TEST_CASE("saved and loaded weights predict identically") {
    TmpDir dir("hseg_predict");
    SplitMix64 rng(99);
    const SegModelWeights w = random_full_weights(rng);
    save_weights(dir / "m.hseg", w);
    const SegModelWeights back = load_weights(dir / "m.hseg");

    const WordVectorTable table = random_table(rng, {"p", "q", "r"});
    const Document doc = doc_from_sentences({{"p", "q"}, {"r"}});
    const auto a = predict_boundaries(doc, table, w, 0.5);
    const auto b = predict_boundaries(doc, table, back, 0.5);
    REQUIRE(a.probabilities.size() == b.probabilities.size());
    for (std::size_t i = 0; i < a.probabilities.size(); ++i) {
        CHECK(a.probabilities[i] == b.probabilities[i]);
    }
}
