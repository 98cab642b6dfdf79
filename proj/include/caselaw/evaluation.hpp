#pragma once

#include <caselaw/common.hpp>
#include <caselaw/corpus.hpp>
#include <caselaw/run.hpp>

#include <json.hpp>

#include <cmath>
#include <map>
#include <set>
#include <string>

namespace caselaw {

struct QueryCounts {
    std::size_t correct = 0;
    std::size_t retrieved = 0;
    std::size_t relevant = 0;

    friend bool operator==(const QueryCounts&, const QueryCounts&) = default;
};

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Zero denominators give zero.
inline PRF prf(std::size_t correct, std::size_t retrieved, std::size_t relevant) {
    PRF m;
    m.precision = retrieved ? static_cast<double>(correct) / static_cast<double>(retrieved) : 0.0;
    m.recall = relevant ? static_cast<double>(correct) / static_cast<double>(relevant) : 0.0;
    double s = m.precision + m.recall;
    m.f1 = s > 0.0 ? 2.0 * m.precision * m.recall / s : 0.0;
    return m;
}

struct EvalReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t correct = 0;
    std::size_t retrieved = 0;
    std::size_t relevant = 0;
    std::map<std::string, QueryCounts> per_query;
};

/// Micro-averaged precision, recall and F-measure: counts are pooled over
/// every labelled query before dividing. Predictions are treated as a set per
/// query, so order is irrelevant and duplicates count once.
inline EvalReport evaluate(const RunResult& run, const LabelSet& labels) {
    EvalReport r;
    for (const auto& [qid, preds] : run.per_query)
        if (!labels.count(qid)) throw Error("run contains query '" + qid + "' which has no labels");
    for (const auto& [qid, gold] : labels) {
        QueryCounts c;
        c.relevant = gold.size();
        if (auto it = run.per_query.find(qid); it != run.per_query.end()) {
            std::set<std::string> seen;
            for (const auto& p : it->second) {
                if (!seen.insert(p.candidate_id).second) {
                    warn("query '" + qid + "': duplicate prediction '" + p.candidate_id + "' counted once");
                    continue;
                }
                if (gold.count(p.candidate_id)) ++c.correct;
            }
            c.retrieved = seen.size();
        }
        r.correct += c.correct;
        r.retrieved += c.retrieved;
        r.relevant += c.relevant;
        r.per_query.emplace(qid, c);
    }
    auto m = prf(r.correct, r.retrieved, r.relevant);
    r.precision = m.precision;
    r.recall = m.recall;
    r.f1 = m.f1;
    return r;
}

/// Mean of per-query P/R/F1. Diagnostic only; the headline numbers are micro.
inline PRF macro_average(const EvalReport& report) {
    PRF sum;
    for (const auto& [_, c] : report.per_query) {
        auto m = prf(c.correct, c.retrieved, c.relevant);
        sum.precision += m.precision;
        sum.recall += m.recall;
        sum.f1 += m.f1;
    }
    if (auto n = static_cast<double>(report.per_query.size()); n > 0) {
        sum.precision /= n;
        sum.recall /= n;
        sum.f1 /= n;
    }
    return sum;
}

inline std::string per_query_table(const EvalReport& report) {
    char line[256];
    std::string out;
    auto row = [&](const std::string& id, std::size_t c, std::size_t ret, std::size_t rel) {
        auto m = prf(c, ret, rel);
        std::snprintf(line, sizeof line, "%-24s %8zu %10zu %9zu %9.4f %9.4f %9.4f\n", id.c_str(), c, ret, rel, m.precision,
                      m.recall, m.f1);
        out += line;
    };
    std::snprintf(line, sizeof line, "%-24s %8s %10s %9s %9s %9s %9s\n", "query", "correct", "retrieved", "relevant",
                  "precision", "recall", "f1");
    out += line;
    for (const auto& [qid, c] : report.per_query) row(qid, c.correct, c.retrieved, c.relevant);
    row("TOTAL (micro)", report.correct, report.retrieved, report.relevant);
    return out;
}

inline double round4(double x) { return std::round(x * 1e4) / 1e4; }

inline nlohmann::ordered_json report_to_json(const EvalReport& report, bool include_per_query = true) {
    nlohmann::ordered_json j;
    j["precision"] = round4(report.precision);
    j["recall"] = round4(report.recall);
    j["f1"] = round4(report.f1);
    j["correct"] = report.correct;
    j["retrieved"] = report.retrieved;
    j["relevant"] = report.relevant;
    if (include_per_query) {
        auto& pq = j["per_query"] = nlohmann::ordered_json::object();
        for (const auto& [qid, c] : report.per_query)
            pq[qid] = {{"correct", c.correct}, {"retrieved", c.retrieved}, {"relevant", c.relevant}};
    }
    return j;
}

} // namespace caselaw
