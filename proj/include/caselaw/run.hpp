#pragma once

#include <caselaw/common.hpp>
#include <caselaw/lexical.hpp>

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace caselaw {

struct Prediction {
    std::string candidate_id;
    std::optional<int> paragraph_index; // entailment runs only
    double score = 0.0;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Ranked predictions per query; list position is the rank.
struct RunResult {
    std::string run_tag;
    std::map<std::string, std::vector<Prediction>> per_query;

    friend bool operator==(const RunResult&, const RunResult&) = default;
};

/// One line per prediction:
///   query_id TAB candidate_id [TAB paragraph_index] TAB rank TAB score TAB run_tag
/// Ranks start at 1, scores carry 6 decimals. `header` lines are written first
/// as '#' comments.
inline std::string format_run(const RunResult& run, const std::vector<std::string>& header = {}) {
    std::string out;
    for (const auto& h : header) out += "# " + h + "\n";
    for (const auto& [qid, preds] : run.per_query) {
        for (std::size_t r = 0; r < preds.size(); ++r) {
            const auto& p = preds[r];
            out += qid + "\t" + p.candidate_id;
            if (p.paragraph_index) out += "\t" + std::to_string(*p.paragraph_index);
            out += "\t" + std::to_string(r + 1) + "\t" + format_fixed(p.score, 6) + "\t" + run.run_tag + "\n";
        }
    }
    return out;
}

inline RunResult parse_run(std::string_view text) {
    RunResult run;
    std::map<std::string, std::vector<std::pair<int, Prediction>>> ranked;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty() || line.front() == '#') continue;
        auto f = detail::split(line, '\t');
        if (f.size() != 5 && f.size() != 6)
            throw Error("run line " + std::to_string(line_no) + ": expected 5 or 6 tab-separated fields, found " + std::to_string(f.size()));
        Prediction p;
        p.candidate_id = std::string(f[1]);
        std::size_t i = 2;
        try {
            if (f.size() == 6) p.paragraph_index = detail::parse_int<int>(f[i++]);
            int rank = detail::parse_int<int>(f[i++]);
            p.score = std::stod(std::string(f[i++]));
            if (run.run_tag.empty()) run.run_tag = std::string(f[i]);
            ranked[std::string(f[0])].emplace_back(rank, std::move(p));
        } catch (const std::exception& e) {
            throw Error("run line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    for (auto& [qid, list] : ranked) {
        std::stable_sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        auto& preds = run.per_query[qid];
        for (auto& [_, p] : list) preds.push_back(std::move(p));
    }
    return run;
}

} // namespace caselaw
