#include <catch_amalgamated.hpp>

#include <caselaw/evaluation.hpp>

#include <random>

using namespace caselaw;

namespace {

RunResult run_of(std::map<std::string, std::vector<std::string>> preds) {
    RunResult r;
    r.run_tag = "t";
    for (auto& [q, list] : preds)
        for (auto& c : list) r.per_query[q].push_back({c, std::nullopt, 1.0});
    return r;
}

} // namespace

TEST_CASE("micro-averaged precision, recall and F1", "[evaluation]") {
    auto report = evaluate(run_of({{"q1", {"a", "b"}}, {"q2", {"c"}}}), LabelSet{{"q1", {"a"}}, {"q2", {"c", "d"}}});
    CHECK(report.correct == 2);
    CHECK(report.retrieved == 3);
    CHECK(report.relevant == 3);
    CHECK(report.precision == 2.0 / 3.0);
    CHECK(report.recall == 2.0 / 3.0);
    CHECK(report.f1 == Catch::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(report.per_query.at("q1") == QueryCounts{1, 2, 1});

    auto perfect = evaluate(run_of({{"q1", {"a"}}, {"q2", {"c", "d"}}}), LabelSet{{"q1", {"a"}}, {"q2", {"c", "d"}}});
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    auto empty = evaluate(RunResult{}, LabelSet{{"q1", {"a"}}});
    CHECK(empty.precision == 0.0);
    CHECK(empty.recall == 0.0);
    CHECK(empty.f1 == 0.0);
    CHECK(empty.relevant == 1);
}

TEST_CASE("evaluate rejects unlabelled queries and dedupes predictions", "[evaluation]") {
    CHECK_THROWS_WITH(evaluate(run_of({{"qx", {"a"}}}), LabelSet{{"q1", {"a"}}}), Catch::Matchers::ContainsSubstring("qx"));

    std::vector<std::string> warnings;
    auto old = set_warning_sink([&](std::string_view m) { warnings.emplace_back(m); });
    auto r = evaluate(run_of({{"q1", {"a", "a", "b"}}}), LabelSet{{"q1", {"a"}}});
    set_warning_sink(old);
    CHECK(r.retrieved == 2);
    CHECK(r.correct == 1);
    CHECK(warnings.size() == 1);
}

TEST_CASE("metric properties", "[evaluation][property]") {
    std::mt19937 rng(8);
    for (int iter = 0; iter < 500; ++iter) {
        LabelSet gold;
        std::map<std::string, std::vector<std::string>> preds;
        int nq = 1 + static_cast<int>(rng() % 6);
        for (int q = 0; q < nq; ++q) {
            auto qid = "q" + std::to_string(q);
            int ng = 1 + static_cast<int>(rng() % 4);
            for (int g = 0; g < ng; ++g) gold[qid].insert("c" + std::to_string(rng() % 10));
            int np = static_cast<int>(rng() % 6);
            for (int p = 0; p < np; ++p) preds[qid].push_back("c" + std::to_string(rng() % 10));
            std::sort(preds[qid].begin(), preds[qid].end());
            preds[qid].erase(std::unique(preds[qid].begin(), preds[qid].end()), preds[qid].end());
        }
        auto r = evaluate(run_of(preds), gold);
        CHECK(r.f1 >= std::min(r.precision, r.recall) - 1e-15);
        CHECK(r.f1 <= std::max(r.precision, r.recall) + 1e-15);
        if (r.precision == r.recall) CHECK(r.f1 == Catch::Approx(r.precision).margin(1e-15));

        std::size_t c = 0, ret = 0, rel = 0;
        for (const auto& [_, qc] : r.per_query) {
            c += qc.correct;
            ret += qc.retrieved;
            rel += qc.relevant;
        }
        CHECK(c == r.correct);
        CHECK(ret == r.retrieved);
        CHECK(rel == r.relevant);

        auto reversed = preds;
        for (auto& [_, l] : reversed) std::reverse(l.begin(), l.end());
        auto rr = evaluate(run_of(reversed), gold);
        CHECK(rr.precision == r.precision);
        CHECK(rr.recall == r.recall);

        // One more prediction for q0: a correct one never lowers recall, a wrong
        // one never raises precision.
        auto with_correct = preds;
        for (const auto& g : gold["q0"])
            if (std::find(with_correct["q0"].begin(), with_correct["q0"].end(), g) == with_correct["q0"].end()) {
                with_correct["q0"].push_back(g);
                break;
            }
        CHECK(evaluate(run_of(with_correct), gold).recall >= r.recall);
        auto with_wrong = preds;
        with_wrong["q0"].push_back("not-relevant");
        CHECK(evaluate(run_of(with_wrong), gold).precision <= r.precision);
    }
}

TEST_CASE("macro average differs from micro when queries are unbalanced", "[evaluation]") {
    auto r = evaluate(run_of({{"q1", {"a"}}, {"q2", {"x", "y", "z"}}}), LabelSet{{"q1", {"a"}}, {"q2", {"b"}}});
    auto macro = macro_average(r);
    CHECK(r.precision == 0.25);
    CHECK(macro.precision == 0.5);
}

TEST_CASE("per-query table and JSON report", "[evaluation]") {
    auto r = evaluate(run_of({{"q2", {"c"}}, {"q1", {"a", "b"}}}), LabelSet{{"q1", {"a"}}, {"q2", {"c", "d"}}});
    auto table = per_query_table(r);
    auto q1 = table.find("q1"), q2 = table.find("q2"), total = table.find("TOTAL");
    CHECK(q1 < q2);
    CHECK(q2 < total);
    CHECK(std::count(table.begin(), table.end(), '\n') == 4);
    CHECK(table.find("0.6667", total) != std::string::npos);

    auto j = report_to_json(r);
    CHECK(j["precision"].get<double>() == 0.6667);
    CHECK(j["recall"].get<double>() == 0.6667);
    CHECK(j["f1"].get<double>() == 0.6667);
    CHECK(j["per_query"]["q2"]["relevant"].get<int>() == 2);
    CHECK(j.dump().find("\"precision\":0.6667") != std::string::npos);
}

TEST_CASE("run files round-trip", "[evaluation]") {
    RunResult run;
    run.run_tag = "tag";
    run.per_query["q1"] = {{"c2", std::nullopt, 1.5}, {"c1", std::nullopt, 0.25}};
    run.per_query["q2"] = {{"004.txt", 4, 3.0}};
    auto text = format_run(run, {"k1=1.6"});
    CHECK(text == "# k1=1.6\nq1\tc2\t1\t1.500000\ttag\nq1\tc1\t2\t0.250000\ttag\nq2\t004.txt\t4\t1\t3.000000\ttag\n");
    auto back = parse_run(text);
    CHECK(back == run);
    CHECK_THROWS_WITH(parse_run("q1\tc1\t1\n"), Catch::Matchers::ContainsSubstring("line 1"));
    CHECK_THROWS_AS(parse_run("q1\tc1\tx\t0.5\ttag\n"), Error);
}
