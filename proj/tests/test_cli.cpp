#include <catch_amalgamated.hpp>

#include "synthetic.hpp"

#include <cstdlib>
#include <sys/wait.h>

using namespace caselaw;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(const std::string& args, const fs::path& scratch, const std::string& env = {}) {
    auto out = scratch / "stdout.txt", err = scratch / "stderr.txt";
    std::string cmd = env + (env.empty() ? "" : " ") + "\"" CASELAW_CLI_PATH "\" " + args + " >\"" + out.string() + "\" 2>\"" + err.string() + "\"";
    int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out), read_file(err)};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::size_t data_lines(const std::string& text) {
    std::size_t n = 0;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);)
        if (!line.empty() && line[0] != '#') ++n;
    return n;
}

} // namespace

TEST_CASE("cli user errors exit 1 with one line", "[cli]") {
    synthetic::TempDir tmp("cli_err");
    auto r = run_cli("retrieve --preset nope --corpus x --out y", tmp.path);
    CHECK(r.code == 1);
    CHECK_THAT(r.err, ContainsSubstring("task1-reduced-sbert"));
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);

    CHECK(run_cli("retrieve --no-such-flag", tmp.path).code == 1);
    CHECK(run_cli("", tmp.path).code == 1);
    CHECK(run_cli("retrieve --corpus " + q(tmp.path / "missing") + " --out " + q(tmp.path / "o"), tmp.path).code == 1);
    CHECK(run_cli("retrieve --set nonsense --corpus x --out y", tmp.path).code == 1);
    CHECK(run_cli("retrieve --set bogus_key=1 --corpus x --out y", tmp.path).code == 1);
    CHECK(run_cli("evaluate --run " + q(tmp.path / "none.tsv") + " --labels x", tmp.path).code == 1);
    CHECK(run_cli("--help", tmp.path).code == 0);
}

TEST_CASE("cli retrieve, evaluate and stats on a synthetic corpus", "[cli]") {
    synthetic::TempDir tmp("cli_t1");
    auto set = synthetic::make_task1(31, 12, 80);
    synthetic::write_task1(tmp.path, set);
    auto run_path = tmp.path / "run.tsv";

    auto r = run_cli("retrieve --preset task1-bm25 --corpus " + q(tmp.path) + " --out " + q(run_path), tmp.path);
    REQUIRE(r.code == 0);
    auto text = read_file(run_path);
    CHECK_THAT(text, ContainsSubstring("# b=0.99\n"));
    CHECK_THAT(text, ContainsSubstring("# run_tag=task1-bm25\n"));
    CHECK(text.find("threads") == std::string::npos);
    auto parsed = parse_run(text);
    CHECK(parsed.per_query.size() == 12);
    for (const auto& [_, preds] : parsed.per_query) CHECK(preds.size() <= 5);
    CHECK(data_lines(text) == 60);

    // Same bytes as the library with the same config echo.
    auto config = preset("task1-bm25");
    std::vector<std::string> header;
    for (const auto& [k, v] : config.describe()) header.push_back(k + "=" + v);
    CHECK(text == format_run(run_task1(set.queries, set.candidates, config), header));

    auto e = run_cli("evaluate --run " + q(run_path) + " --labels " + q(tmp.path / "labels.json"), tmp.path);
    REQUIRE(e.code == 0);
    auto j = nlohmann::json::parse(e.out);
    CHECK(j["recall"].get<double>() == 1.0);
    CHECK(j.contains("precision"));
    CHECK(j.contains("f1"));
    CHECK_THAT(e.err, ContainsSubstring("TOTAL (micro)"));

    auto s = run_cli("stats --json --corpus " + q(tmp.path) + " --labels " + q(tmp.path / "labels.json"), tmp.path);
    REQUIRE(s.code == 0);
    auto sj = nlohmann::json::parse(s.out);
    CHECK(sj["queries"].get<int>() == 12);
    CHECK(sj["candidates"].get<int>() == 80);
    auto lib = compute_stats(set.queries, set.candidates, set.labels);
    CHECK(sj["avg_relevant"].get<double>() == round4(lib.avg_relevant));
    CHECK(sj["avg_query_words"].get<double>() == round4(lib.avg_query_words));

    auto over = run_cli("retrieve --preset task1-bm25 --set predict_k=2 --set predict_k=3 --corpus " + q(tmp.path) + " --out " + q(run_path),
                        tmp.path);
    REQUIRE(over.code == 0);
    CHECK(data_lines(read_file(run_path)) == 36);
    CHECK_THAT(read_file(run_path), ContainsSubstring("# predict_k=3\n"));
}

TEST_CASE("cli index cache is reused and refreshed when stale", "[cli]") {
    synthetic::TempDir tmp("cli_idx");
    auto set = synthetic::make_task1(32, 6, 40);
    synthetic::write_task1(tmp.path, set);
    auto idx = tmp.path / "bm25.idx";
    REQUIRE(run_cli("index --preset task1-bm25 --corpus " + q(tmp.path) + " --index " + q(idx), tmp.path).code == 0);
    REQUIRE(fs::exists(idx));
    auto first = read_file(idx);

    auto fresh = run_cli("retrieve --corpus " + q(tmp.path) + " --out " + q(tmp.path / "a.tsv"), tmp.path);
    auto cached = run_cli("retrieve --corpus " + q(tmp.path) + " --index " + q(idx) + " --out " + q(tmp.path / "b.tsv"), tmp.path);
    REQUIRE(fresh.code == 0);
    REQUIRE(cached.code == 0);
    CHECK(cached.err.find("stale") == std::string::npos);
    CHECK(read_file(tmp.path / "a.tsv") == read_file(tmp.path / "b.tsv"));
    CHECK(read_file(idx) == first);

    // A changed parameter invalidates the cache.
    auto changed = run_cli("retrieve --set b=0.5 --corpus " + q(tmp.path) + " --index " + q(idx) + " --out " + q(tmp.path / "c.tsv"), tmp.path);
    REQUIRE(changed.code == 0);
    CHECK_THAT(changed.err, ContainsSubstring("stale"));
    CHECK(read_file(idx) != first);

    // So does edited candidate content.
    synthetic::write(tmp.path / "candidates" / "c0000.txt", "[1] Entirely new text for this candidate.");
    auto edited = run_cli("retrieve --set b=0.5 --corpus " + q(tmp.path) + " --index " + q(idx) + " --out " + q(tmp.path / "d.tsv"), tmp.path);
    REQUIRE(edited.code == 0);
    CHECK_THAT(edited.err, ContainsSubstring("stale"));
    auto direct = run_cli("retrieve --set b=0.5 --corpus " + q(tmp.path) + " --out " + q(tmp.path / "e.tsv"), tmp.path);
    CHECK(read_file(tmp.path / "d.tsv") == read_file(tmp.path / "e.tsv"));
}

TEST_CASE("cli re-ranking presets with word vectors and precomputed stores", "[cli]") {
    synthetic::TempDir tmp("cli_emb");
    auto set = synthetic::make_task1(33, 8, 60);
    synthetic::write_task1(tmp.path, set);
    auto table = synthetic::vectors_for(set);
    write_file_atomic(tmp.path / "vectors.txt", format_word_vectors(table));

    auto r = run_cli("retrieve --preset task1-reduced-sent2vec --set reduce_to=20 --corpus " + q(tmp.path) + " --embeddings " +
                         q(tmp.path / "vectors.txt") + " --out " + q(tmp.path / "s2v.tsv") + " --diagnostics " + q(tmp.path / "diag.tsv"),
                     tmp.path);
    REQUIRE(r.code == 0);
    CHECK(data_lines(read_file(tmp.path / "s2v.tsv")) == 40);
    CHECK(data_lines(read_file(tmp.path / "diag.tsv")) == 160);

    // Templates list exactly the units the precomputed provider will ask for.
    REQUIRE(run_cli("dump-embeddings-template --corpus " + q(tmp.path) + " --out " + q(tmp.path / "tmpl"), tmp.path).code == 0);
    auto shared = std::make_shared<const WordVectorTable>(table);
    AveragedNgramProvider avg(shared);
    auto [qs, cs] = synthetic::precomputed_for(set, avg);
    CHECK(data_lines(read_file(tmp.path / "tmpl.queries.tsv")) == qs.vectors.size());
    CHECK(data_lines(read_file(tmp.path / "tmpl.candidates.tsv")) == cs.vectors.size());

    write_file_atomic(tmp.path / "q.tsv", format_paragraph_embeddings(qs));
    write_file_atomic(tmp.path / "c.tsv", format_paragraph_embeddings(cs));
    auto sb = run_cli("retrieve --preset task1-reduced-sbert --set reduce_to=20 --corpus " + q(tmp.path) + " --embeddings " +
                          q(tmp.path / "q.tsv") + " --embeddings " + q(tmp.path / "c.tsv") + " --out " + q(tmp.path / "sb.tsv"),
                      tmp.path);
    REQUIRE(sb.code == 0);
    auto a = parse_run(read_file(tmp.path / "s2v.tsv")), b = parse_run(read_file(tmp.path / "sb.tsv"));
    for (const auto& [qid, preds] : a.per_query) {
        REQUIRE(b.per_query.at(qid).size() == preds.size());
        for (std::size_t i = 0; i < preds.size(); ++i) CHECK(b.per_query.at(qid)[i].score == Catch::Approx(preds[i].score).margin(1e-5));
    }

    auto missing = run_cli("retrieve --preset task1-reduced-sbert --corpus " + q(tmp.path) + " --embeddings " + q(tmp.path / "q.tsv") +
                               " --embeddings " + q(tmp.path / "q.tsv") + " --out " + q(tmp.path / "x.tsv"),
                           tmp.path);
    CHECK(missing.code == 1);
    CHECK_THAT(missing.err, ContainsSubstring("missing"));
    CHECK_FALSE(fs::exists(tmp.path / "x.tsv"));
}

TEST_CASE("cli entailment runs and thread-count determinism", "[cli]") {
    synthetic::TempDir tmp("cli_t2");
    auto set = synthetic::make_task2(34, 15);
    synthetic::write_task2(tmp.path, set);
    auto corpus = q(tmp.path / "corpus");
    for (auto name : {"task2-fragment", "task2-basewindow"}) {
        auto a = run_cli(std::string("entail --preset ") + name + " --threads 1 --corpus " + corpus + " --out " + q(tmp.path / "a.tsv"), tmp.path);
        auto b = run_cli(std::string("entail --preset ") + name + " --corpus " + corpus + " --out " + q(tmp.path / "b.tsv"), tmp.path,
                         "CASELAW_THREADS=8");
        REQUIRE(a.code == 0);
        REQUIRE(b.code == 0);
        CHECK(read_file(tmp.path / "a.tsv") == read_file(tmp.path / "b.tsv"));
        auto run = parse_run(read_file(tmp.path / "a.tsv"));
        CHECK(run.per_query.size() == 15);
        for (const auto& [_, preds] : run.per_query) {
            REQUIRE(preds.size() == 1);
            CHECK(preds[0].paragraph_index.has_value());
        }
    }
    auto e = run_cli("evaluate --run " + q(tmp.path / "a.tsv") + " --labels " + q(tmp.path / "labels.json"), tmp.path);
    REQUIRE(e.code == 0);
    CHECK(nlohmann::json::parse(e.out)["precision"].get<double>() > 0.9);

    auto s = run_cli("stats --task task2 --json --corpus " + corpus + " --labels " + q(tmp.path / "labels.json"), tmp.path);
    REQUIRE(s.code == 0);
    auto lib = compute_stats(set.queries, set.labels);
    auto j = nlohmann::json::parse(s.out);
    CHECK(j["queries"].get<std::size_t>() == 15);
    CHECK(j["candidates"].get<std::size_t>() == lib.candidate_count);
    CHECK(j["avg_candidate_paragraphs_per_query"].get<double>() == round4(*lib.avg_candidate_paragraphs_per_query));

    CHECK(run_cli("retrieve --preset task2-fragment --corpus " + corpus + " --out " + q(tmp.path / "z.tsv"), tmp.path).code == 1);
}
