#pragma once

#include <caselaw/aggregation.hpp>
#include <caselaw/common.hpp>
#include <caselaw/corpus.hpp>
#include <caselaw/embedding.hpp>
#include <caselaw/evaluation.hpp>
#include <caselaw/lexical.hpp>
#include <caselaw/run.hpp>

#include <array>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace caselaw {

// ---------------------------------------------------------------------------
// Configuration

enum class Task { task1, task2 };
enum class ProviderKind { none, averaged_ngram, precomputed };
enum class Granularity { paragraph, document };

struct QueryMode {
    enum class Kind { fragment_only, base_window };
    Kind kind = Kind::fragment_only;
    std::size_t before = 0;
    std::size_t after = 0;

    static QueryMode fragment_only() { return {}; }
    static QueryMode base_window(std::size_t before, std::size_t after) { return {Kind::base_window, before, after}; }
};

struct PipelineConfig {
    Task task = Task::task1;
    BM25Params stage1;
    std::size_t reduce_to = 100;
    ProviderKind provider = ProviderKind::none;
    bool use_bigrams = true;
    std::size_t predict_k = 5;
    QueryMode query_mode;
    Granularity granularity = Granularity::paragraph;
    ContextOptions context;
    double match_threshold = 0.6; // Jaccard cutoff for locating fragment sentences in the base case
    std::size_t matrix_cap = 1 << 20;
    std::string run_tag = "run";

    void validate() const {
        stage1.validate();
        if (predict_k < 1) throw Error("predict_k must be >= 1");
        if (task == Task::task1 && reduce_to < predict_k) throw Error("reduce_to must be >= predict_k");
        if (!(match_threshold > 0.0 && match_threshold <= 1.0)) throw Error("match_threshold must lie in (0, 1]");
        if (context.marker.empty()) throw Error("marker must be non-empty");
        if (run_tag.empty() || run_tag.find_first_of("\t\n") != std::string::npos) throw Error("run_tag must be non-empty without tabs");
    }

    /// Applies one key=value override.
    void set(std::string_view key, std::string_view value);

    /// Fully resolved settings in a fixed order.
    [[nodiscard]] std::vector<std::pair<std::string, std::string>> describe() const;
};

inline std::string_view to_string(Task t) { return t == Task::task1 ? "task1" : "task2"; }
inline std::string_view to_string(Granularity g) { return g == Granularity::paragraph ? "paragraph" : "document"; }
inline std::string_view to_string(ProviderKind p) {
    switch (p) {
    case ProviderKind::averaged_ngram: return "averaged-ngram";
    case ProviderKind::precomputed: return "precomputed";
    default: return "none";
    }
}
inline std::string_view to_string(QueryMode::Kind k) { return k == QueryMode::Kind::fragment_only ? "fragment_only" : "base_window"; }

namespace detail {

inline bool parse_bool(std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw Error("expected a boolean, got '" + std::string(v) + "'");
}

inline double parse_real(std::string_view v) {
    double x = 0;
    auto t = trim(v);
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) throw Error("expected a number, got '" + std::string(v) + "'");
    return x;
}

inline std::string real_string(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

} // namespace detail

inline void PipelineConfig::set(std::string_view key, std::string_view raw) {
    auto value = trim(raw);
    auto size = [&] { return detail::parse_int<std::size_t>(value); };
    try {
        if (key == "task") {
            if (value == "task1") task = Task::task1;
            else if (value == "task2") task = Task::task2;
            else throw Error("expected task1 or task2");
        } else if (key == "k1") stage1.k1 = detail::parse_real(value);
        else if (key == "b") stage1.b = detail::parse_real(value);
        else if (key == "ngram_min") stage1.ngram_min = detail::parse_int<int>(value);
        else if (key == "ngram_max") stage1.ngram_max = detail::parse_int<int>(value);
        else if (key == "ngram_range") {
            auto parts = detail::split(value, ',');
            if (parts.size() != 2) throw Error("expected lo,hi");
            stage1.ngram_min = detail::parse_int<int>(trim(parts[0]));
            stage1.ngram_max = detail::parse_int<int>(trim(parts[1]));
        } else if (key == "max_df") stage1.max_df = DfThreshold::parse(value);
        else if (key == "min_df") stage1.min_df = DfThreshold::parse(value);
        else if (key == "remove_stopwords") stage1.remove_stopwords = detail::parse_bool(value);
        else if (key == "norm") stage1.norm = parse_norm(value);
        else if (key == "reduce_to") reduce_to = size();
        else if (key == "predict_k") predict_k = size();
        else if (key == "provider") {
            if (value == "none") provider = ProviderKind::none;
            else if (value == "averaged-ngram") provider = ProviderKind::averaged_ngram;
            else if (value == "precomputed") provider = ProviderKind::precomputed;
            else throw Error("expected none, averaged-ngram or precomputed");
        } else if (key == "use_bigrams") use_bigrams = detail::parse_bool(value);
        else if (key == "query_mode") {
            if (value == "fragment_only") query_mode.kind = QueryMode::Kind::fragment_only;
            else if (value == "base_window") query_mode.kind = QueryMode::Kind::base_window;
            else throw Error("expected fragment_only or base_window");
        } else if (key == "window_before") query_mode.before = size();
        else if (key == "window_after") query_mode.after = size();
        else if (key == "granularity") {
            if (value == "paragraph") granularity = Granularity::paragraph;
            else if (value == "document") granularity = Granularity::document;
            else throw Error("expected paragraph or document");
        } else if (key == "context_before") context.before = size();
        else if (key == "context_after") context.after = size();
        else if (key == "marker") context.marker = std::string(value);
        else if (key == "match_threshold") match_threshold = detail::parse_real(value);
        else if (key == "matrix_cap") matrix_cap = size();
        else if (key == "run_tag") run_tag = std::string(value);
        else throw Error("unknown configuration key");
    } catch (const Error& e) {
        throw Error("config '" + std::string(key) + "=" + std::string(raw) + "': " + e.what());
    }
}

inline std::vector<std::pair<std::string, std::string>> PipelineConfig::describe() const {
    return {
        {"task", std::string(to_string(task))},
        {"k1", detail::real_string(stage1.k1)},
        {"b", detail::real_string(stage1.b)},
        {"ngram_range", std::to_string(stage1.ngram_min) + "," + std::to_string(stage1.ngram_max)},
        {"max_df", stage1.max_df.to_string()},
        {"min_df", stage1.min_df.to_string()},
        {"remove_stopwords", stage1.remove_stopwords ? "true" : "false"},
        {"norm", std::string(to_string(stage1.norm))},
        {"reduce_to", std::to_string(reduce_to)},
        {"provider", std::string(to_string(provider))},
        {"use_bigrams", use_bigrams ? "true" : "false"},
        {"predict_k", std::to_string(predict_k)},
        {"query_mode", std::string(to_string(query_mode.kind))},
        {"window_before", std::to_string(query_mode.before)},
        {"window_after", std::to_string(query_mode.after)},
        {"granularity", std::string(to_string(granularity))},
        {"context_before", std::to_string(context.before)},
        {"context_after", std::to_string(context.after)},
        {"marker", context.marker},
        {"match_threshold", detail::real_string(match_threshold)},
        {"matrix_cap", std::to_string(matrix_cap)},
        {"run_tag", run_tag},
    };
}

/// Case retrieval defaults: stopwords removed, max_df=0.90, min_df=1,
/// b=0.99, k1=1.6, n-grams 2..6, top-5 out of a top-100 reduced space.
inline PipelineConfig task1_defaults() {
    PipelineConfig c;
    c.task = Task::task1;
    c.stage1.k1 = 1.6;
    c.stage1.b = 0.99;
    c.stage1.ngram_min = 2;
    c.stage1.ngram_max = 6;
    c.stage1.max_df = DfThreshold::fraction(0.90);
    c.stage1.min_df = DfThreshold::count(1);
    c.stage1.remove_stopwords = true;
    c.reduce_to = 100;
    c.predict_k = 5;
    return c;
}

/// Entailment defaults: stopwords kept, max_df=0.65, min_df=1, b=0.7, k1=1.6,
/// unigrams, one prediction per query.
inline PipelineConfig task2_defaults() {
    PipelineConfig c;
    c.task = Task::task2;
    c.stage1.k1 = 1.6;
    c.stage1.b = 0.7;
    c.stage1.ngram_min = 1;
    c.stage1.ngram_max = 1;
    c.stage1.max_df = DfThreshold::fraction(0.65);
    c.stage1.min_df = DfThreshold::count(1);
    c.stage1.remove_stopwords = false;
    c.predict_k = 1;
    return c;
}

inline constexpr std::array<std::string_view, 5> kPresetNames = {
    "task1-bm25", "task1-reduced-sent2vec", "task1-reduced-sbert", "task2-fragment", "task2-basewindow",
};

inline PipelineConfig preset(std::string_view name) {
    PipelineConfig c;
    if (name == "task1-bm25") {
        c = task1_defaults();
    } else if (name == "task1-reduced-sent2vec") {
        c = task1_defaults();
        c.provider = ProviderKind::averaged_ngram;
    } else if (name == "task1-reduced-sbert") {
        c = task1_defaults();
        c.provider = ProviderKind::precomputed;
    } else if (name == "task2-fragment") {
        c = task2_defaults();
    } else if (name == "task2-basewindow") {
        c = task2_defaults();
        c.query_mode = QueryMode::base_window(1, 1);
    } else {
        std::string valid;
        for (auto n : kPresetNames) valid += (valid.empty() ? "" : ", ") + std::string(n);
        throw Error("unknown preset '" + std::string(name) + "' (valid presets: " + valid + ")");
    }
    c.run_tag = std::string(name);
    return c;
}

// ---------------------------------------------------------------------------
// Units

/// Indexing units for candidates: one per paragraph, or one per document
/// (unit_index -1). Documents without paragraphs are skipped with a warning.
inline std::vector<TextUnit> candidate_units(std::span<const Document> candidates, Granularity g) {
    std::vector<TextUnit> units;
    for (const auto& d : candidates) {
        if (d.paragraphs.empty()) {
            warn("candidate '" + d.id + "' has no non-empty paragraphs; excluded");
            continue;
        }
        if (g == Granularity::document) {
            units.push_back({d.id, -1, d.raw_text});
        } else {
            for (const auto& p : d.paragraphs) units.push_back({d.id, p.index, p.text});
        }
    }
    return units;
}

inline std::vector<TextUnit> paragraph_units(const Document& d) {
    std::vector<TextUnit> units;
    for (const auto& p : d.paragraphs) units.push_back({d.id, p.index, p.text});
    return units;
}

/// Query-side units for re-ranking: the marker context blocks, or the
/// query's own paragraphs when it carries no marker.
inline std::vector<TextUnit> query_units(const QueryCase& q) {
    if (q.fragment_contexts.empty()) return paragraph_units(q.document);
    std::vector<TextUnit> units;
    for (std::size_t i = 0; i < q.fragment_contexts.size(); ++i)
        units.push_back({q.id, static_cast<int>(i), q.fragment_contexts[i].text()});
    return units;
}

/// Lexical query text: the context blocks joined, else the whole document.
inline std::string stage1_query_text(const QueryCase& q) {
    if (q.fragment_contexts.empty()) return q.document.raw_text;
    std::string text;
    for (const auto& block : q.fragment_contexts) {
        if (!text.empty()) text += ' ';
        text += block.text();
    }
    return text;
}

// ---------------------------------------------------------------------------
// Case retrieval

using RankedDocs = std::map<std::string, std::vector<DocScore>>;

struct Task1Output {
    RunResult run;
    RankedDocs stage1; // top reduce_to per query, lexical scores
    RankedDocs stage2; // re-ranked retained candidates (empty for lexical-only runs)
};

inline LexicalIndex build_task1_index(std::span<const Document> candidates, const PipelineConfig& config, unsigned threads = 1) {
    auto units = candidate_units(candidates, config.granularity);
    if (units.empty()) throw Error("no indexable candidate documents");
    return LexicalIndex::build(units, config.stage1, threads);
}

/// Document-level lexical ranking: a candidate's score is its best unit.
inline std::vector<DocScore> stage1_rank(const QueryCase& q, const LexicalIndex& index, std::size_t reduce_to) {
    auto terms = analyze(stage1_query_text(q), index.params());
    auto scores = index.score_all(terms);
    std::unordered_map<std::string_view, std::size_t> slot;
    std::vector<DocScore> docs;
    const auto& units = index.docs();
    for (std::size_t i = 0; i < units.size(); ++i) {
        if (units[i].doc_id == q.id) continue;
        auto [it, inserted] = slot.emplace(units[i].doc_id, docs.size());
        auto unit_pos = static_cast<std::size_t>(std::max(units[i].unit_index, 0));
        if (inserted) {
            docs.push_back({units[i].doc_id, scores[i], {0, unit_pos}});
        } else if (scores[i] > docs[it->second].score) {
            docs[it->second].score = scores[i];
            docs[it->second].argmax_pair = {0, unit_pos};
        }
    }
    return top_k(std::move(docs), reduce_to);
}

/// Lexical candidate generation followed, when a provider is configured, by
/// paragraph-pair cosine re-ranking of the retained candidates with
/// max-pooling. `index` may be passed in to reuse a cached build.
inline Task1Output run_task1_detailed(std::span<const QueryCase> queries, std::span<const Document> candidates,
                                      const PipelineConfig& config, const EmbeddingProvider* provider = nullptr,
                                      const LexicalIndex* index = nullptr, unsigned threads = 1) {
    config.validate();
    if (config.provider != ProviderKind::none && !provider) throw Error("configured provider requires embeddings");
    LexicalIndex built;
    if (!index) {
        built = build_task1_index(candidates, config, threads);
        index = &built;
    }
    const auto k_stage1 = config.provider == ProviderKind::none ? std::max(config.reduce_to, config.predict_k) : config.reduce_to;

    std::vector<std::vector<DocScore>> stage1(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) { stage1[i] = stage1_rank(queries[i], *index, k_stage1); });

    Task1Output out;
    out.run.run_tag = config.run_tag;
    for (std::size_t i = 0; i < queries.size(); ++i) out.stage1[queries[i].id] = stage1[i];

    if (config.provider == ProviderKind::none) {
        for (std::size_t i = 0; i < queries.size(); ++i) {
            auto& preds = out.run.per_query[queries[i].id];
            for (std::size_t r = 0; r < std::min(config.predict_k, stage1[i].size()); ++r)
                preds.push_back({stage1[i][r].candidate_id, std::nullopt, stage1[i][r].score});
        }
        return out;
    }

    // Embed each retained candidate once.
    std::map<std::string_view, const Document*> by_id;
    for (const auto& d : candidates) by_id[d.id] = &d;
    std::set<std::string_view> needed;
    for (const auto& list : stage1)
        for (const auto& s : list) needed.insert(s.candidate_id);
    std::vector<std::string_view> needed_ids(needed.begin(), needed.end());
    std::vector<std::vector<Vector>> cand_vectors(needed_ids.size());
    parallel_for(needed_ids.size(), threads, [&](std::size_t i) {
        auto it = by_id.find(needed_ids[i]);
        if (it == by_id.end()) throw Error("index references candidate '" + std::string(needed_ids[i]) + "' which is not loaded");
        for (const auto& u : paragraph_units(*it->second)) cand_vectors[i].push_back(provider->embed(u, UnitRole::candidate));
    });
    std::unordered_map<std::string_view, std::size_t> vec_slot;
    for (std::size_t i = 0; i < needed_ids.size(); ++i) vec_slot[needed_ids[i]] = i;

    std::vector<std::vector<DocScore>> reranked(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        std::vector<Vector> qvecs;
        for (const auto& u : query_units(queries[i])) qvecs.push_back(provider->embed(u, UnitRole::query));
        if (qvecs.empty()) {
            warn("query '" + queries[i].id + "' has no text units; no predictions");
            return;
        }
        std::vector<DocScore> scored;
        for (const auto& s : stage1[i]) {
            const auto& cv = cand_vectors[vec_slot.at(s.candidate_id)];
            if (cv.empty()) continue;
            scored.push_back(score_candidate(qvecs, cv, s.candidate_id, config.matrix_cap));
        }
        std::sort(scored.begin(), scored.end(), doc_ranks_before);
        reranked[i] = std::move(scored);
    });
    for (std::size_t i = 0; i < queries.size(); ++i) {
        auto& preds = out.run.per_query[queries[i].id];
        for (std::size_t r = 0; r < std::min(config.predict_k, reranked[i].size()); ++r)
            preds.push_back({reranked[i][r].candidate_id, std::nullopt, reranked[i][r].score});
        out.stage2[queries[i].id] = std::move(reranked[i]);
    }
    return out;
}

inline RunResult run_task1(std::span<const QueryCase> queries, std::span<const Document> candidates, const PipelineConfig& config,
                           const EmbeddingProvider* provider = nullptr, unsigned threads = 1) {
    return run_task1_detailed(queries, candidates, config, provider, nullptr, threads).run;
}

/// Micro recall of the top-k prefix of each ranked list against the labels.
inline double recall_at_k(const RankedDocs& ranked, const LabelSet& labels, std::size_t k) {
    if (k < 1) throw Error("recall_at_k: k must be >= 1");
    std::size_t hit = 0, relevant = 0;
    for (const auto& [qid, gold] : labels) {
        relevant += gold.size();
        auto it = ranked.find(qid);
        if (it == ranked.end()) continue;
        std::set<std::string_view> seen;
        for (std::size_t r = 0; r < std::min(k, it->second.size()); ++r) {
            const auto& id = it->second[r].candidate_id;
            if (seen.insert(id).second && gold.count(id)) ++hit;
        }
    }
    return relevant ? static_cast<double>(hit) / static_cast<double>(relevant) : 0.0;
}

// ---------------------------------------------------------------------------
// Paragraph entailment

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    if (a.empty() && b.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline std::set<std::string> token_set(std::string_view text) {
    auto toks = tokenize(text);
    return {toks.begin(), toks.end()};
}

/// Query sentences for one entailment query. In base-window mode each
/// fragment sentence is located in the base case (best Jaccard token overlap
/// at or above `threshold`, all tied best kept) and the window
/// [pos - before, pos + after] around every match is taken, clamped and
/// deduplicated in document order.
inline std::vector<std::string> build_task2_query(const Task2Query& q, const QueryMode& mode, double threshold = 0.6) {
    std::vector<std::string> fragment;
    for (auto& s : segment_sentences(q.fragment_text)) fragment.push_back(std::move(s.text));
    if (fragment.empty()) throw Error("query '" + q.id + "': entailed fragment is empty");
    if (mode.kind == QueryMode::Kind::fragment_only) return fragment;

    auto base = q.base_case.sentences();
    std::vector<std::set<std::string>> base_sets;
    base_sets.reserve(base.size());
    for (const auto& s : base) base_sets.push_back(token_set(s.text));

    std::set<std::size_t> matches;
    for (const auto& f : fragment) {
        auto fs = token_set(f);
        double best = -1.0;
        std::vector<std::size_t> best_pos;
        for (std::size_t i = 0; i < base.size(); ++i) {
            double j = jaccard(fs, base_sets[i]);
            if (j < threshold) continue;
            if (j > best) {
                best = j;
                best_pos.clear();
            }
            if (j == best) best_pos.push_back(i);
        }
        matches.insert(best_pos.begin(), best_pos.end());
    }
    if (matches.empty()) {
        warn("query '" + q.id + "': fragment not found in base case; using fragment text only");
        return fragment;
    }
    std::set<std::size_t> window;
    for (auto pos : matches) {
        std::size_t lo = pos >= mode.before ? pos - mode.before : 0;
        std::size_t hi = std::min(base.size() - 1, pos + mode.after);
        for (std::size_t k = lo; k <= hi; ++k) window.insert(k);
    }
    std::vector<std::string> out;
    for (auto k : window) out.push_back(base[k].text);
    return out;
}

/// Ranks one query's own paragraph pool with BM25 built over that pool.
inline std::vector<Prediction> entail_query(const Task2Query& q, const PipelineConfig& config) {
    if (q.pool.empty()) throw Error("query '" + q.id + "' has an empty paragraph pool");
    std::vector<TextUnit> units;
    units.reserve(q.pool.size());
    for (const auto& p : q.pool) units.push_back({q.id, p.index, p.text});
    std::map<int, const PoolParagraph*> by_index;
    for (const auto& p : q.pool) by_index[p.index] = &p;

    std::vector<ScoredUnit> ranked;
    try {
        auto index = LexicalIndex::build(units, config.stage1);
        std::string text;
        for (const auto& s : build_task2_query(q, config.query_mode, config.match_threshold)) {
            if (!text.empty()) text += ' ';
            text += s;
        }
        ranked = index.rank(analyze(text, config.stage1), config.predict_k);
    } catch (const VocabularyFilterError& e) {
        warn("query '" + q.id + "': " + e.what() + "; ranking by pool order");
        for (const auto& u : units) ranked.push_back({u.doc_id, u.unit_index, 0.0});
        ranked = select_top(std::move(ranked), config.predict_k);
    }
    std::vector<Prediction> preds;
    for (const auto& r : ranked) {
        const auto* p = by_index.at(r.unit_index);
        preds.push_back({p->name, p->index, r.score});
    }
    return preds;
}

inline RunResult run_task2(std::span<const Task2Query> queries, const PipelineConfig& config, unsigned threads = 1) {
    config.validate();
    std::vector<std::vector<Prediction>> preds(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) { preds[i] = entail_query(queries[i], config); });
    RunResult run;
    run.run_tag = config.run_tag;
    for (std::size_t i = 0; i < queries.size(); ++i) run.per_query[queries[i].id] = std::move(preds[i]);
    return run;
}

} // namespace caselaw
