// SPDX-License-Identifier: Apache-2.0
// Spawns the installed binary end to end; no library linkage is
// exercised here beyond what the executable carries itself.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support/tmpdir.hpp"

#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using nlohmann::json;
using testsupport::TmpDir;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spit(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::trunc);
    out << content;
}

RunResult run_cli(const TmpDir& tmp, const std::string& args) {
    const auto out_path = tmp.path() / "cli_stdout.txt";
    const auto err_path = tmp.path() / "cli_stderr.txt";
    const std::string cmd = std::string(HICHUNK_CLI_PATH) + " " + args + " > " +
                            out_path.string() + " 2> " + err_path.string();
    const int status = std::system(cmd.c_str());
    RunResult res;
    res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    res.out = slurp(out_path);
    res.err = slurp(err_path);
    return res;
}

std::vector<json> json_lines(const std::string& text) {
    std::vector<json> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        out.push_back(json::parse(line));
    }
    return out;
}

std::filesystem::path write_corpus(const TmpDir& tmp) {
    const auto path = tmp.path() / "corpus.jsonl";
    spit(path,
         R"({"doc_id": "engines", "text": "The piston drives the valve. Torque flows through the gear. Camshafts time the valves."})"
         "\n"
         R"({"doc_id": "strings", "text": "The violin plays a sonata. Tempo shapes the melody. A chord closes the cadence."})"
         "\n");
    return path;
}

std::filesystem::path write_config(const TmpDir& tmp, const std::string& out_name,
                                   std::uint64_t seed = 9) {
    const auto corpus = write_corpus(tmp);
    const auto path = tmp.path() / ("config_" + out_name + ".json");
    json cfg;
    cfg["corpus"] = corpus.string();
    cfg["embedder"] = {{"kind", "deterministic"}, {"dim", 32}, {"seed", seed}};
    cfg["segmenter"] = {{"kind", "fallback"}, {"min_sentences", 1}, {"drop_quantile", 0.25}};
    cfg["out_dir"] = (tmp.path() / out_name).string();
    cfg["workers"] = 1;
    spit(path, cfg.dump(2));
    return path;
}

std::filesystem::path write_qa(const TmpDir& tmp) {
    const auto path = tmp.path() / "qa.jsonl";
    spit(path,
         R"({"question": "what drives the valve", "gold_answers": ["the piston"], "doc_id": "engines"})"
         "\n"
         R"({"question": "what closes the cadence", "gold_answers": ["a chord"], "doc_id": "strings"})"
         "\n");
    return path;
}

} // namespace

TEST_CASE("usage errors exit 1") {
    TmpDir tmp("cli_usage");
    CHECK(run_cli(tmp, "--help").code == 0);
    CHECK(run_cli(tmp, "").code == 1);                   // a subcommand is required
    CHECK(run_cli(tmp, "--no-such-flag index").code == 1);
    CHECK(run_cli(tmp, "query --question q").code == 1); // --index is required
}

TEST_CASE("configuration problems exit 1 with a config error message") {
    TmpDir tmp("cli_config");
    SUBCASE("index needs a config") {
        const auto res = run_cli(tmp, "index");
        CHECK(res.code == 1);
        CHECK(res.err.find("config error:") != std::string::npos);
        CHECK(res.err.find("--config") != std::string::npos);
    }
    SUBCASE("missing config file") {
        const auto res =
            run_cli(tmp, "--config " + (tmp.path() / "absent.json").string() + " index");
        CHECK(res.code == 1);
        CHECK(res.err.find("cannot open config file") != std::string::npos);
    }
    SUBCASE("missing corpus") {
        const auto cfg_path = tmp.path() / "cfg.json";
        spit(cfg_path, json{{"corpus", (tmp.path() / "nowhere.jsonl").string()}}.dump());
        const auto res = run_cli(tmp, "--config " + cfg_path.string() + " index");
        CHECK(res.code == 1);
        CHECK(res.err.find("corpus path not found") != std::string::npos);
    }
    SUBCASE("unknown config key") {
        const auto cfg_path = tmp.path() / "cfg.json";
        spit(cfg_path, R"({"chunker": "big"})");
        const auto res = run_cli(tmp, "--config " + cfg_path.string() + " index");
        CHECK(res.code == 1);
        CHECK(res.err.find("unknown key \"chunker\"") != std::string::npos);
    }
}

TEST_CASE("index builds a loadable directory and logs the run") {
    TmpDir tmp("cli_index");
    const auto cfg = write_config(tmp, "out");
    const auto res = run_cli(tmp, "--config " + cfg.string() + " index");
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    CHECK(res.out.find("indexed 2 documents into") != std::string::npos);
    CHECK(res.out.find("(") == std::string::npos); // no failure suffix

    const auto out = tmp.path() / "out";
    CHECK(std::filesystem::exists(out / "index" / "manifest.json"));
    CHECK(std::filesystem::exists(out / "index" / "chunks.jsonl"));
    CHECK(std::filesystem::exists(out / "index" / "vectors.hvec"));

    const auto log = json::parse(slurp(out / "run_log.json"));
    CHECK(log.at("record_count").get<std::size_t>() >= 2);
    CHECK(log.at("vector_count").get<std::size_t>() > log.at("record_count").get<std::size_t>());
    CHECK(log.at("failures").empty());
    REQUIRE(log.at("documents").contains("engines"));
    CHECK(log.at("documents").at("engines").at("segments").get<std::size_t>() >= 1);
}

TEST_CASE("indexing is deterministic across processes") {
    TmpDir tmp("cli_det");
    const auto cfg1 = write_config(tmp, "out1");
    const auto cfg2 = write_config(tmp, "out2");
    REQUIRE(run_cli(tmp, "--config " + cfg1.string() + " index").code == 0);
    REQUIRE(run_cli(tmp, "--config " + cfg2.string() + " index").code == 0);
    for (const char* name : {"manifest.json", "chunks.jsonl", "vectors.hvec"}) {
        CHECK(slurp(tmp.path() / "out1" / "index" / name) ==
              slurp(tmp.path() / "out2" / "index" / name));
    }

    // a different seed changes the vector space
    const auto cfg3 = write_config(tmp, "out3", 10);
    REQUIRE(run_cli(tmp, "--config " + cfg3.string() + " index").code == 0);
    CHECK(slurp(tmp.path() / "out1" / "index" / "vectors.hvec") !=
          slurp(tmp.path() / "out3" / "index" / "vectors.hvec"));
}

TEST_CASE("query prints ranked JSON lines without needing the config") {
    TmpDir tmp("cli_query");
    const auto cfg = write_config(tmp, "out");
    REQUIRE(run_cli(tmp, "--config " + cfg.string() + " index").code == 0);
    const auto index_dir = (tmp.path() / "out" / "index").string();

    const auto res = run_cli(tmp, "query --index " + index_dir +
                                      " --question 'piston valve torque'");
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    const auto lines = json_lines(res.out);
    REQUIRE(!lines.empty());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        CHECK(lines[i].at("rank").get<std::size_t>() == i + 1);
        CHECK(lines[i].contains("chunk_id"));
        CHECK(lines[i].contains("score"));
        CHECK(lines[i].contains("best_vector"));
        CHECK(lines[i].contains("snippet"));
        if (i > 0) {
            CHECK(lines[i].at("score").get<double>() <=
                  lines[i - 1].at("score").get<double>());
        }
    }
    CHECK(lines[0].at("chunk_id").get<std::string>().rfind("engines:", 0) == 0);

    const auto one = run_cli(tmp, "query --index " + index_dir +
                                      " --question 'violin sonata' --top-k 1");
    REQUIRE(one.code == 0);
    const auto one_lines = json_lines(one.out);
    REQUIRE(one_lines.size() == 1);
    CHECK(one_lines[0].at("chunk_id").get<std::string>().rfind("strings:", 0) == 0);

    SUBCASE("bad mode is a config error") {
        const auto bad = run_cli(tmp, "query --index " + index_dir +
                                          " --question q --mode sideways");
        CHECK(bad.code == 1);
        CHECK(bad.err.find("unknown retrieval mode") != std::string::npos);
    }
    SUBCASE("top-k of zero is a contract violation") {
        const auto bad = run_cli(tmp, "query --index " + index_dir +
                                          " --question q --top-k 0");
        CHECK(bad.code == 2);
    }
    SUBCASE("cluster_only mode reports cluster vectors") {
        const auto co = run_cli(tmp, "query --index " + index_dir +
                                         " --question 'piston valve' --mode cluster_only");
        REQUIRE(co.code == 0);
        for (const auto& line : json_lines(co.out)) {
            CHECK(line.at("best_vector").get<std::string>() == "cluster");
        }
    }
}

TEST_CASE("query against a foreign-model index asks for a config") {
    TmpDir tmp("cli_foreign");
    const auto cfg = write_config(tmp, "out");
    REQUIRE(run_cli(tmp, "--config " + cfg.string() + " index").code == 0);

    const auto manifest_path = tmp.path() / "out" / "index" / "manifest.json";
    auto manifest = json::parse(slurp(manifest_path));
    manifest["model_name"] = "external-embedding-model";
    spit(manifest_path, manifest.dump(2) + "\n");

    const auto res = run_cli(tmp, "query --index " +
                                      (tmp.path() / "out" / "index").string() +
                                      " --question q");
    CHECK(res.code == 1);
    CHECK(res.err.find("pass --config") != std::string::npos);
}

TEST_CASE("an unwritable corpus of failures exits 2") {
    TmpDir tmp("cli_allfail");
    const auto corpus = write_corpus(tmp);
    const auto cfg_path = tmp.path() / "cfg.json";
    json cfg;
    cfg["corpus"] = corpus.string();
    // nothing listens on port 9; every document's embedding call fails
    cfg["embedder"] = {{"kind", "remote"},
                       {"endpoint_url", "http://127.0.0.1:9/v1/embeddings"},
                       {"dim", 8},
                       {"retry_backoff_ms", 1}};
    cfg["out_dir"] = (tmp.path() / "out").string();
    cfg["workers"] = 1;
    spit(cfg_path, cfg.dump());

    const auto res = run_cli(tmp, "--config " + cfg_path.string() + " index");
    CHECK(res.code == 2);
    CHECK(res.err.find("document engines failed:") != std::string::npos);
    CHECK(res.err.find("all 2 documents failed to index") != std::string::npos);
}

TEST_CASE("segment prints sentence ranges and an optional Pk") {
    TmpDir tmp("cli_segment");
    const auto doc_path = tmp.path() / "doc.txt";
    spit(doc_path, "alpha beta. gamma delta.");

    const auto res = run_cli(tmp, "segment --doc " + doc_path.string());
    CAPTURE(res.err);
    REQUIRE(res.code == 0);
    CHECK(res.out.find("segment 0: sentences [0, 1] | alpha beta. gamma delta.") !=
          std::string::npos);

    // the hypothesis equals this gold, so Pk is zero
    const auto scored = run_cli(tmp, "segment --doc " + doc_path.string() + " --gold 1");
    REQUIRE(scored.code == 0);
    CHECK(scored.out.find("pk: 0") != std::string::npos);

    SUBCASE("missing document") {
        const auto bad = run_cli(tmp, "segment --doc " + (tmp.path() / "no.txt").string());
        CHECK(bad.code == 1);
        CHECK(bad.err.find("document path not found") != std::string::npos);
    }
    SUBCASE("empty document") {
        spit(tmp.path() / "empty.txt", "   \n");
        const auto bad = run_cli(tmp, "segment --doc " + (tmp.path() / "empty.txt").string());
        CHECK(bad.code == 1);
    }
}

TEST_CASE("eval writes a report, an example log, and prints the report") {
    TmpDir tmp("cli_eval");
    const auto cfg = write_config(tmp, "out");
    REQUIRE(run_cli(tmp, "--config " + cfg.string() + " index").code == 0);
    const auto qa = write_qa(tmp);
    const auto eval_out = (tmp.path() / "evalout").string();

    const auto res = run_cli(tmp, "--out " + eval_out + " eval --index " +
                                      (tmp.path() / "out" / "index").string() + " --qa " +
                                      qa.string());
    CAPTURE(res.err);
    REQUIRE(res.code == 0);

    const auto printed = json::parse(res.out);
    CHECK(printed.at("count") == 2);
    CHECK(printed.at("unanswered") == 0);
    CHECK(printed.at("with_reader") == false);
    CHECK(printed.at("meteor") == "unsupported");
    CHECK(printed.at("metrics").contains("hit_rate"));
    CHECK(printed.at("metrics").at("hit_rate").get<double>() > 0.5);

    const auto report = json::parse(slurp(tmp.path() / "evalout" / "report.json"));
    CHECK(report == printed);

    const auto examples = json_lines(slurp(tmp.path() / "evalout" / "examples.jsonl"));
    REQUIRE(examples.size() == 2);
    CHECK(examples[0].at("index") == 0);
    CHECK(examples[0].at("question") == "what drives the valve");
    CHECK(examples[0].contains("hit_rate"));
    CHECK(examples[0].at("retrieved").is_array());
    CHECK(!examples[0].contains("answer")); // retrieval-only run

    SUBCASE("missing QA file exits 2") {
        const auto bad = run_cli(tmp, "--out " + eval_out + " eval --index " +
                                          (tmp.path() / "out" / "index").string() +
                                          " --qa " + (tmp.path() / "no.jsonl").string());
        CHECK(bad.code == 2);
        CHECK(bad.err.find("cannot open QA file") != std::string::npos);
    }
}

TEST_CASE("eval --grid runs every cell and writes a combined report") {
    TmpDir tmp("cli_grid");
    const auto corpus = write_corpus(tmp);
    const auto qa = write_qa(tmp);

    json cells = json::array();
    cells.push_back({{"name", "clustered"},
                     {"corpus", corpus.string()},
                     {"method", "segment_cluster"},
                     {"target_chunk_tokens", 512},
                     {"embedder", {{"kind", "deterministic"}, {"dim", 32}, {"seed", 9}}},
                     {"workers", 1}});
    cells.push_back({{"name", "fixed6"},
                     {"corpus", corpus.string()},
                     {"method", "fixed"},
                     {"chunk_size_tokens", 6},
                     {"embedder", {{"kind", "deterministic"}, {"dim", 32}, {"seed", 9}}},
                     {"workers", 1}});
    const auto cfg_path = tmp.path() / "grid.json";
    spit(cfg_path, cells.dump(2));

    const auto base = (tmp.path() / "gridout").string();
    const auto res = run_cli(tmp, "--config " + cfg_path.string() + " --out " + base +
                                      " eval --grid --qa " + qa.string());
    CAPTURE(res.err);
    REQUIRE(res.code == 0);

    const auto printed = json::parse(res.out);
    REQUIRE(printed.at("cells").size() == 2);
    const auto& c0 = printed.at("cells").at(0);
    CHECK(c0.at("name") == "clustered");
    CHECK(c0.at("method") == "segment_cluster");
    CHECK(c0.at("k") == 1.2);
    CHECK(c0.at("target_chunk_tokens") == 512);
    CHECK(c0.at("count") == 2);
    CHECK(c0.at("metrics").contains("hit_rate"));
    const auto& c1 = printed.at("cells").at(1);
    CHECK(c1.at("name") == "fixed6");
    CHECK(c1.at("method") == "fixed");
    CHECK(c1.at("chunk_size_tokens") == 6);
    CHECK(!c1.contains("k"));

    CHECK(json::parse(slurp(tmp.path() / "gridout" / "grid_report.json")) == printed);
    for (const char* cell : {"clustered", "fixed6"}) {
        const auto dir = tmp.path() / "gridout" / cell;
        CHECK(std::filesystem::exists(dir / "index" / "vectors.hvec"));
        CHECK(std::filesystem::exists(dir / "run_log.json"));
        CHECK(std::filesystem::exists(dir / "report.json"));
        CHECK(std::filesystem::exists(dir / "examples.jsonl"));
    }

    SUBCASE("--grid without --config is a config error") {
        const auto bad = run_cli(tmp, "--out " + base + " eval --grid --qa " + qa.string());
        CHECK(bad.code == 1);
        CHECK(bad.err.find("--grid needs --config") != std::string::npos);
    }
}
