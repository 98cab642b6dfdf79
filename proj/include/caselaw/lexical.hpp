#pragma once

#include <caselaw/common.hpp>
#include <caselaw/stopwords.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace caselaw {

// ---------------------------------------------------------------------------
// Tokenization

namespace detail {
inline bool is_word_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}
inline bool is_utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }
} // namespace detail

/// Lowercased runs of at least two word characters. Word characters are ASCII
/// letters and digits plus any non-ASCII code point; length is measured in
/// code points.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!detail::is_word_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t start = i;
        std::size_t code_points = 0;
        while (i < text.size() && detail::is_word_byte(static_cast<unsigned char>(text[i]))) {
            if (!detail::is_utf8_continuation(static_cast<unsigned char>(text[i]))) ++code_points;
            ++i;
        }
        if (code_points >= 2) {
            std::string tok(text.substr(start, i - start));
            for (auto& c : tok)
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            out.push_back(std::move(tok));
        }
    }
    return out;
}

/// Contiguous n-grams for n in [lo, hi], grouped by n and then by position.
inline std::vector<std::string> ngrams(std::span<const std::string> tokens, int lo, int hi) {
    if (lo < 1 || hi < lo) throw Error("ngram range must satisfy 1 <= lo <= hi");
    std::vector<std::string> out;
    for (int n = lo; n <= hi; ++n) {
        auto un = static_cast<std::size_t>(n);
        if (tokens.size() < un) break;
        for (std::size_t start = 0; start + un <= tokens.size(); ++start) {
            std::string term = tokens[start];
            for (std::size_t k = 1; k < un; ++k) {
                term += ' ';
                term += tokens[start + k];
            }
            out.push_back(std::move(term));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Parameters

/// A document-frequency cutoff: either a proportion of the corpus or an
/// absolute document count.
struct DfThreshold {
    enum class Kind { fraction, count };
    Kind kind = Kind::fraction;
    double value = 1.0;

    static DfThreshold fraction(double v) { return {Kind::fraction, v}; }
    static DfThreshold count(long v) { return {Kind::count, static_cast<double>(v)}; }

    /// "0.9" is a fraction, "1" is an absolute count.
    static DfThreshold parse(std::string_view text) {
        auto t = trim(text);
        bool fractional = t.find_first_of(".eE") != std::string_view::npos;
        double v = 0;
        auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
        if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
            throw Error("invalid document-frequency threshold '" + std::string(text) + "'");
        if (!fractional) return count(static_cast<long>(v));
        return fraction(v);
    }

    [[nodiscard]] std::string to_string() const {
        if (kind == Kind::count) return std::to_string(static_cast<long>(value));
        char buf[32];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
        std::string s(buf, ptr);
        if (s.find_first_of(".eE") == std::string::npos) s += ".0";
        return s;
    }

    friend bool operator==(const DfThreshold&, const DfThreshold&) = default;
};

enum class VectorNorm { none, l1, l2 };

inline std::string_view to_string(VectorNorm n) {
    switch (n) {
    case VectorNorm::l1: return "l1";
    case VectorNorm::l2: return "l2";
    default: return "none";
    }
}

inline VectorNorm parse_norm(std::string_view s) {
    if (s == "none") return VectorNorm::none;
    if (s == "l1") return VectorNorm::l1;
    if (s == "l2") return VectorNorm::l2;
    throw Error("unknown norm '" + std::string(s) + "' (expected none, l1 or l2)");
}

struct BM25Params {
    double k1 = 1.6;
    double b = 0.75;
    int ngram_min = 1;
    int ngram_max = 1;
    DfThreshold max_df = DfThreshold::fraction(1.0);
    DfThreshold min_df = DfThreshold::count(1);
    bool remove_stopwords = false;
    VectorNorm norm = VectorNorm::l2;

    void validate() const {
        if (!(k1 >= 0.0)) throw Error("k1 must be >= 0");
        if (!(b >= 0.0 && b <= 1.0)) throw Error("b must lie in [0, 1]");
        if (ngram_min < 1 || ngram_max < ngram_min) throw Error("ngram range must satisfy 1 <= ngram_min <= ngram_max");
        if (max_df.kind == DfThreshold::Kind::fraction && !(max_df.value > 0.0 && max_df.value <= 1.0))
            throw Error("fractional max_df must lie in (0, 1]");
        if (max_df.kind == DfThreshold::Kind::count && max_df.value < 1) throw Error("absolute max_df must be >= 1");
        if (min_df.kind == DfThreshold::Kind::fraction && !(min_df.value >= 0.0 && min_df.value < 1.0))
            throw Error("fractional min_df must lie in [0, 1)");
        if (min_df.kind == DfThreshold::Kind::count && min_df.value < 1) throw Error("absolute min_df must be >= 1");
    }

    [[nodiscard]] std::size_t resolved_max_df(std::size_t n_docs) const {
        if (max_df.kind == DfThreshold::Kind::count) return static_cast<std::size_t>(max_df.value);
        return static_cast<std::size_t>(std::floor(max_df.value * static_cast<double>(n_docs)));
    }

    [[nodiscard]] std::size_t resolved_min_df(std::size_t n_docs) const {
        if (min_df.kind == DfThreshold::Kind::count) return static_cast<std::size_t>(min_df.value);
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(min_df.value * static_cast<double>(n_docs))));
    }
};

/// Stopword filtering (when enabled) followed by n-gram formation. This is the
/// single analysis path shared by documents and queries.
inline std::vector<std::string> analyze_tokens(std::span<const std::string> tokens, const BM25Params& params) {
    if (!params.remove_stopwords) return ngrams(tokens, params.ngram_min, params.ngram_max);
    std::vector<std::string> kept;
    kept.reserve(tokens.size());
    for (const auto& t : tokens)
        if (!is_stopword(t)) kept.push_back(t);
    return ngrams(kept, params.ngram_min, params.ngram_max);
}

inline std::vector<std::string> analyze(std::string_view text, const BM25Params& params) {
    auto tokens = tokenize(text);
    return analyze_tokens(tokens, params);
}

/// Unigram token count after stopword filtering; this is |D|.
inline std::size_t retained_length(std::span<const std::string> tokens, const BM25Params& params) {
    if (!params.remove_stopwords) return tokens.size();
    return static_cast<std::size_t>(std::count_if(tokens.begin(), tokens.end(), [](const std::string& t) { return !is_stopword(t); }));
}

// ---------------------------------------------------------------------------
// Vocabulary

inline double bm25_idf(std::size_t n_docs, std::size_t df) {
    auto n = static_cast<double>(n_docs);
    auto d = static_cast<double>(df);
    return std::log((n - d + 0.5) / (d + 0.5) + 1.0);
}

using TermId = std::uint32_t;

struct TermStats {
    std::size_t df = 0;
    double idf = 0.0;
};

class Vocabulary {
public:
    Vocabulary() = default;

    /// Terms must be sorted and unique; ids follow that order.
    Vocabulary(std::vector<std::string> terms, std::vector<TermStats> stats, std::size_t doc_count, double avgdl)
        : terms_(std::move(terms)), stats_(std::move(stats)), doc_count_(doc_count), avgdl_(avgdl) {
        if (terms_.size() != stats_.size()) throw Error("vocabulary term/stat size mismatch");
        ids_.reserve(terms_.size());
        for (std::size_t i = 0; i < terms_.size(); ++i) {
            if (!ids_.emplace(terms_[i], static_cast<TermId>(i)).second) throw Error("duplicate vocabulary term '" + terms_[i] + "'");
        }
    }

    [[nodiscard]] std::optional<TermId> find(std::string_view term) const {
        auto it = ids_.find(std::string(term));
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }
    [[nodiscard]] bool contains(std::string_view term) const { return find(term).has_value(); }

    [[nodiscard]] const std::string& term(TermId id) const { return terms_.at(id); }
    [[nodiscard]] const TermStats& stats(TermId id) const { return stats_.at(id); }
    [[nodiscard]] const TermStats* stats(std::string_view term) const {
        auto id = find(term);
        return id ? &stats_[*id] : nullptr;
    }
    [[nodiscard]] std::size_t size() const { return terms_.size(); }
    [[nodiscard]] std::size_t doc_count() const { return doc_count_; }
    [[nodiscard]] double avgdl() const { return avgdl_; }
    [[nodiscard]] const std::vector<std::string>& terms() const { return terms_; }

    [[nodiscard]] std::vector<TermId> lookup(std::span<const std::string> query_terms) const {
        std::vector<TermId> ids;
        ids.reserve(query_terms.size());
        for (const auto& t : query_terms)
            if (auto id = find(t)) ids.push_back(*id);
        return ids;
    }

private:
    std::vector<std::string> terms_;
    std::vector<TermStats> stats_;
    std::unordered_map<std::string, TermId> ids_;
    std::size_t doc_count_ = 0;
    double avgdl_ = 0.0;
};

/// The df bounds leave no usable vocabulary for the given corpus size.
class VocabularyFilterError : public Error {
public:
    using Error::Error;
};

namespace detail {

struct CountedDoc {
    std::unordered_map<std::string, std::uint32_t> counts;
    std::size_t length = 0;
};

inline CountedDoc count_terms(std::span<const std::string> tokens, const BM25Params& params) {
    CountedDoc doc;
    doc.length = retained_length(tokens, params);
    for (auto& term : analyze_tokens(tokens, params)) ++doc.counts[std::move(term)];
    return doc;
}

inline std::string describe_filters(const BM25Params& p, std::size_t n) {
    return "min_df=" + p.min_df.to_string() + " (>= " + std::to_string(p.resolved_min_df(n)) + " docs), max_df=" +
           p.max_df.to_string() + " (<= " + std::to_string(p.resolved_max_df(n)) + " docs), ngram_range=(" +
           std::to_string(p.ngram_min) + "," + std::to_string(p.ngram_max) +
           "), stopwords=" + (p.remove_stopwords ? "removed" : "kept");
}

inline Vocabulary vocabulary_from_counts(std::span<const CountedDoc> docs, const BM25Params& params) {
    params.validate();
    if (docs.empty()) throw Error("cannot build a vocabulary from an empty corpus");
    const std::size_t n = docs.size();
    const std::size_t lo = params.resolved_min_df(n);
    const std::size_t hi = params.resolved_max_df(n);
    if (lo > hi)
        throw VocabularyFilterError("document-frequency bounds are inconsistent for " + std::to_string(n) + " documents: " + describe_filters(params, n));

    std::unordered_map<std::string_view, std::size_t> df;
    std::size_t total_length = 0;
    for (const auto& d : docs) {
        total_length += d.length;
        for (const auto& [term, _] : d.counts) ++df[term];
    }
    std::vector<std::pair<std::string_view, std::size_t>> kept;
    for (const auto& [term, count] : df)
        if (count >= lo && count <= hi) kept.emplace_back(term, count);
    if (kept.empty()) throw VocabularyFilterError("vocabulary is empty after filtering: " + describe_filters(params, n));
    std::sort(kept.begin(), kept.end());

    std::vector<std::string> terms;
    std::vector<TermStats> stats;
    terms.reserve(kept.size());
    stats.reserve(kept.size());
    for (const auto& [term, count] : kept) {
        terms.emplace_back(term);
        stats.push_back({count, bm25_idf(n, count)});
    }
    double avgdl = static_cast<double>(total_length) / static_cast<double>(n);
    return Vocabulary(std::move(terms), std::move(stats), n, avgdl);
}

} // namespace detail

/// Builds the filtered n-gram vocabulary over tokenized documents. Stopwords
/// are removed before n-grams are formed; a term survives iff its document
/// frequency lies within the resolved [min_df, max_df] bounds.
inline Vocabulary build_vocabulary(std::span<const std::vector<std::string>> docs, const BM25Params& params) {
    std::vector<detail::CountedDoc> counted;
    counted.reserve(docs.size());
    for (const auto& d : docs) counted.push_back(detail::count_terms(d, params));
    return detail::vocabulary_from_counts(counted, params);
}

// ---------------------------------------------------------------------------
// Indexed documents and scoring

struct IndexedDoc {
    std::string doc_id;
    int unit_index = -1; // -1 denotes the whole document
    std::vector<std::pair<TermId, std::uint32_t>> term_freqs; // sorted by term id
    std::size_t length = 0;

    [[nodiscard]] std::uint32_t frequency(TermId id) const {
        auto it = std::lower_bound(term_freqs.begin(), term_freqs.end(), id,
                                   [](const auto& p, TermId v) { return p.first < v; });
        return (it != term_freqs.end() && it->first == id) ? it->second : 0;
    }
};

namespace detail {
inline IndexedDoc index_counts(const CountedDoc& counted, const Vocabulary& vocab, std::string doc_id, int unit_index) {
    IndexedDoc doc{std::move(doc_id), unit_index, {}, counted.length};
    for (const auto& [term, count] : counted.counts)
        if (auto id = vocab.find(term)) doc.term_freqs.emplace_back(*id, count);
    std::sort(doc.term_freqs.begin(), doc.term_freqs.end());
    return doc;
}
} // namespace detail

inline IndexedDoc index_document(std::span<const std::string> tokens, const Vocabulary& vocab, const BM25Params& params,
                                 std::string doc_id, int unit_index = -1) {
    return detail::index_counts(detail::count_terms(tokens, params), vocab, std::move(doc_id), unit_index);
}

/// Per-document factor k1 * (1 - b + b * |D| / avgdl).
inline double bm25_length_norm(std::size_t length, double avgdl, const BM25Params& params) {
    double ratio = avgdl > 0.0 ? static_cast<double>(length) / avgdl : 0.0;
    return params.k1 * (1.0 - params.b + params.b * ratio);
}

inline double bm25_term_weight(double idf, std::uint32_t freq, double length_norm, const BM25Params& params) {
    auto f = static_cast<double>(freq);
    return idf * (f * (params.k1 + 1.0) / (f + length_norm));
}

/// Okapi BM25 of one indexed unit. Each query position contributes its own
/// summand; out-of-vocabulary terms contribute nothing.
inline double bm25_score(std::span<const std::string> query_terms, const IndexedDoc& doc, const Vocabulary& vocab,
                         const BM25Params& params) {
    const double norm = bm25_length_norm(doc.length, vocab.avgdl(), params);
    double score = 0.0;
    for (const auto& t : query_terms) {
        auto id = vocab.find(t);
        if (!id) continue;
        auto f = doc.frequency(*id);
        if (f == 0) continue;
        score += bm25_term_weight(vocab.stats(*id).idf, f, norm, params);
    }
    return score;
}

struct ScoredUnit {
    std::string doc_id;
    int unit_index = -1;
    double score = 0.0;

    friend bool operator==(const ScoredUnit&, const ScoredUnit&) = default;
};

/// Descending score, then ascending (doc_id, unit_index).
inline bool ranks_before(const ScoredUnit& a, const ScoredUnit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    return a.unit_index < b.unit_index;
}

inline std::vector<ScoredUnit> select_top(std::vector<ScoredUnit> all, std::size_t top_k) {
    auto k = std::min(top_k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), ranks_before);
    all.resize(k);
    return all;
}

/// Exhaustive doc-at-a-time ranking over a sequence of indexed units. Units
/// whose doc_id equals `exclude_doc_id` are skipped.
inline std::vector<ScoredUnit> bm25_rank(std::span<const std::string> query_terms, std::span<const IndexedDoc> index,
                                         const Vocabulary& vocab, const BM25Params& params, std::size_t top_k,
                                         std::string_view exclude_doc_id = {}) {
    if (top_k < 1) throw Error("top_k must be >= 1");
    std::vector<ScoredUnit> all;
    all.reserve(index.size());
    for (const auto& doc : index) {
        if (!exclude_doc_id.empty() && doc.doc_id == exclude_doc_id) continue;
        all.push_back({doc.doc_id, doc.unit_index, bm25_score(query_terms, doc, vocab, params)});
    }
    return select_top(std::move(all), top_k);
}

// ---------------------------------------------------------------------------
// TF-IDF view

using SparseVector = std::vector<std::pair<TermId, double>>;

inline SparseVector tfidf_vector(const IndexedDoc& doc, const Vocabulary& vocab, VectorNorm norm) {
    SparseVector v;
    v.reserve(doc.term_freqs.size());
    for (const auto& [id, f] : doc.term_freqs) v.emplace_back(id, static_cast<double>(f) * vocab.stats(id).idf);
    double scale = 0.0;
    if (norm == VectorNorm::l1) {
        for (const auto& [_, w] : v) scale += std::abs(w);
    } else if (norm == VectorNorm::l2) {
        for (const auto& [_, w] : v) scale += w * w;
        scale = std::sqrt(scale);
    }
    if (norm != VectorNorm::none && scale > 0.0)
        for (auto& [_, w] : v) w /= scale;
    return v;
}

// ---------------------------------------------------------------------------
// Inverted index

struct TextUnit {
    std::string doc_id;
    int unit_index = -1;
    std::string text;
};

/// Vocabulary, indexed units and term postings for one collection.
/// Immutable once built; scoring is safe from multiple threads.
class LexicalIndex {
public:
    LexicalIndex() = default;

    static LexicalIndex build(std::span<const TextUnit> units, const BM25Params& params, unsigned threads = 1) {
        params.validate();
        std::vector<detail::CountedDoc> counted(units.size());
        parallel_for(units.size(), threads, [&](std::size_t i) {
            auto tokens = tokenize(units[i].text);
            counted[i] = detail::count_terms(tokens, params);
        });
        LexicalIndex index;
        index.params_ = params;
        index.vocab_ = detail::vocabulary_from_counts(counted, params);
        index.docs_.resize(units.size());
        parallel_for(units.size(), threads, [&](std::size_t i) {
            index.docs_[i] = detail::index_counts(counted[i], index.vocab_, units[i].doc_id, units[i].unit_index);
        });
        index.finalize();
        return index;
    }

    static LexicalIndex from_parts(BM25Params params, Vocabulary vocab, std::vector<IndexedDoc> docs) {
        LexicalIndex index;
        index.params_ = std::move(params);
        index.vocab_ = std::move(vocab);
        index.docs_ = std::move(docs);
        index.finalize();
        return index;
    }

    [[nodiscard]] const Vocabulary& vocabulary() const { return vocab_; }
    [[nodiscard]] const std::vector<IndexedDoc>& docs() const { return docs_; }
    [[nodiscard]] const BM25Params& params() const { return params_; }

    /// BM25 score of every unit, in index order. Summation per unit follows
    /// query position order, matching bm25_score exactly.
    [[nodiscard]] std::vector<double> score_all(std::span<const std::string> query_terms) const {
        std::vector<double> scores(docs_.size(), 0.0);
        for (const auto& t : query_terms) {
            auto id = vocab_.find(t);
            if (!id) continue;
            const double idf = vocab_.stats(*id).idf;
            for (const auto& [unit, f] : postings_[*id])
                scores[unit] += bm25_term_weight(idf, f, length_norms_[unit], params_);
        }
        return scores;
    }

    [[nodiscard]] std::vector<ScoredUnit> rank(std::span<const std::string> query_terms, std::size_t top_k,
                                               std::string_view exclude_doc_id = {}) const {
        if (top_k < 1) throw Error("top_k must be >= 1");
        auto scores = score_all(query_terms);
        std::vector<ScoredUnit> all;
        all.reserve(docs_.size());
        for (std::size_t i = 0; i < docs_.size(); ++i) {
            if (!exclude_doc_id.empty() && docs_[i].doc_id == exclude_doc_id) continue;
            all.push_back({docs_[i].doc_id, docs_[i].unit_index, scores[i]});
        }
        return select_top(std::move(all), top_k);
    }

private:
    void finalize() {
        postings_.assign(vocab_.size(), {});
        length_norms_.resize(docs_.size());
        for (std::size_t i = 0; i < docs_.size(); ++i) {
            length_norms_[i] = bm25_length_norm(docs_[i].length, vocab_.avgdl(), params_);
            for (const auto& [id, f] : docs_[i].term_freqs) {
                if (id >= postings_.size()) throw Error("indexed term id out of vocabulary range");
                postings_[id].emplace_back(static_cast<std::uint32_t>(i), f);
            }
        }
    }

    BM25Params params_;
    Vocabulary vocab_;
    std::vector<IndexedDoc> docs_;
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> postings_;
    std::vector<double> length_norms_;
};

// ---------------------------------------------------------------------------
// Serialization

inline constexpr std::string_view kIndexMagic = "CASELAW-BM25-INDEX";
inline constexpr int kIndexFormatVersion = 1;

namespace detail {

inline std::string hexfloat(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
    return std::string(buf, ptr);
}

inline double parse_hexfloat(std::string_view s) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw Error("bad hex float '" + std::string(s) + "'");
    return v;
}

template <typename Int>
Int parse_int(std::string_view s) {
    Int v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) throw Error("bad integer '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

class LineReader {
public:
    explicit LineReader(std::string_view text) : text_(text) {}
    std::string_view next(std::string_view what) {
        if (pos_ > text_.size()) throw Error("index truncated: expected " + std::string(what));
        auto end = text_.find('\n', pos_);
        if (end == std::string_view::npos) end = text_.size();
        auto line = text_.substr(pos_, end - pos_);
        pos_ = end + 1;
        ++line_no_;
        return line;
    }
    std::string_view field(std::string_view key) {
        auto line = next(key);
        auto tab = line.find('\t');
        if (tab == std::string_view::npos || line.substr(0, tab) != key)
            throw Error("index line " + std::to_string(line_no_) + ": expected '" + std::string(key) + "'");
        return line.substr(tab + 1);
    }
    [[nodiscard]] std::size_t line_no() const { return line_no_; }

private:
    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_no_ = 0;
};

} // namespace detail

inline std::string params_signature(const BM25Params& p) {
    return "k1=" + detail::hexfloat(p.k1) + ";b=" + detail::hexfloat(p.b) + ";ngram=" + std::to_string(p.ngram_min) + "," +
           std::to_string(p.ngram_max) + ";max_df=" + p.max_df.to_string() + ";min_df=" + p.min_df.to_string() +
           ";stopwords=" + (p.remove_stopwords ? "remove" : "keep") + ";norm=" + std::string(to_string(p.norm));
}

/// Line-oriented dump: magic, version, free-form fingerprint, parameters,
/// (term, df, idf) triples and per-unit postings. Reals are written as hex
/// floats so a reload scores bit-identically.
inline std::string serialize_index(const LexicalIndex& index, std::string_view fingerprint = {}) {
    const auto& p = index.params();
    const auto& v = index.vocabulary();
    std::string out;
    out += kIndexMagic;
    out += "\nversion\t" + std::to_string(kIndexFormatVersion) + "\n";
    out += "fingerprint\t" + std::string(fingerprint) + "\n";
    out += "k1\t" + detail::hexfloat(p.k1) + "\n";
    out += "b\t" + detail::hexfloat(p.b) + "\n";
    out += "ngram_range\t" + std::to_string(p.ngram_min) + "\t" + std::to_string(p.ngram_max) + "\n";
    out += "max_df\t" + p.max_df.to_string() + "\n";
    out += "min_df\t" + p.min_df.to_string() + "\n";
    out += "remove_stopwords\t" + std::string(p.remove_stopwords ? "1" : "0") + "\n";
    out += "norm\t" + std::string(to_string(p.norm)) + "\n";
    out += "doc_count\t" + std::to_string(v.doc_count()) + "\n";
    out += "avgdl\t" + detail::hexfloat(v.avgdl()) + "\n";
    out += "terms\t" + std::to_string(v.size()) + "\n";
    for (TermId id = 0; id < v.size(); ++id) {
        const auto& s = v.stats(id);
        out += v.term(id) + "\t" + std::to_string(s.df) + "\t" + detail::hexfloat(s.idf) + "\n";
    }
    out += "units\t" + std::to_string(index.docs().size()) + "\n";
    for (const auto& d : index.docs()) {
        out += d.doc_id + "\t" + std::to_string(d.unit_index) + "\t" + std::to_string(d.length) + "\t";
        bool first = true;
        for (const auto& [id, f] : d.term_freqs) {
            if (!first) out += ' ';
            first = false;
            out += std::to_string(id) + ":" + std::to_string(f);
        }
        out += "\n";
    }
    return out;
}

struct LoadedIndex {
    LexicalIndex index;
    std::string fingerprint;
};

inline LoadedIndex deserialize_index(std::string_view text) {
    detail::LineReader r(text);
    if (r.next("magic") != kIndexMagic) throw Error("not a caselaw index (bad magic header)");
    auto version = detail::parse_int<int>(r.field("version"));
    if (version != kIndexFormatVersion)
        throw Error("unsupported index format version " + std::to_string(version) + " (expected " + std::to_string(kIndexFormatVersion) + ")");
    LoadedIndex out;
    out.fingerprint = std::string(r.field("fingerprint"));
    BM25Params p;
    p.k1 = detail::parse_hexfloat(r.field("k1"));
    p.b = detail::parse_hexfloat(r.field("b"));
    auto range = detail::split(r.field("ngram_range"), '\t');
    if (range.size() != 2) throw Error("index: malformed ngram_range");
    p.ngram_min = detail::parse_int<int>(range[0]);
    p.ngram_max = detail::parse_int<int>(range[1]);
    p.max_df = DfThreshold::parse(r.field("max_df"));
    p.min_df = DfThreshold::parse(r.field("min_df"));
    p.remove_stopwords = r.field("remove_stopwords") == "1";
    p.norm = parse_norm(r.field("norm"));
    p.validate();
    auto doc_count = detail::parse_int<std::size_t>(r.field("doc_count"));
    auto avgdl = detail::parse_hexfloat(r.field("avgdl"));
    auto n_terms = detail::parse_int<std::size_t>(r.field("terms"));
    std::vector<std::string> terms;
    std::vector<TermStats> stats;
    terms.reserve(n_terms);
    stats.reserve(n_terms);
    for (std::size_t i = 0; i < n_terms; ++i) {
        auto parts = detail::split(r.next("term"), '\t');
        if (parts.size() != 3) throw Error("index line " + std::to_string(r.line_no()) + ": malformed term row");
        terms.emplace_back(parts[0]);
        stats.push_back({detail::parse_int<std::size_t>(parts[1]), detail::parse_hexfloat(parts[2])});
    }
    Vocabulary vocab(std::move(terms), std::move(stats), doc_count, avgdl);
    auto n_units = detail::parse_int<std::size_t>(r.field("units"));
    std::vector<IndexedDoc> docs;
    docs.reserve(n_units);
    for (std::size_t i = 0; i < n_units; ++i) {
        auto parts = detail::split(r.next("unit"), '\t');
        if (parts.size() != 4) throw Error("index line " + std::to_string(r.line_no()) + ": malformed unit row");
        IndexedDoc d;
        d.doc_id = std::string(parts[0]);
        d.unit_index = detail::parse_int<int>(parts[1]);
        d.length = detail::parse_int<std::size_t>(parts[2]);
        if (!parts[3].empty()) {
            for (auto pair : detail::split(parts[3], ' ')) {
                auto colon = pair.find(':');
                if (colon == std::string_view::npos) throw Error("index line " + std::to_string(r.line_no()) + ": malformed posting");
                d.term_freqs.emplace_back(detail::parse_int<TermId>(pair.substr(0, colon)),
                                          detail::parse_int<std::uint32_t>(pair.substr(colon + 1)));
            }
        }
        docs.push_back(std::move(d));
    }
    out.index = LexicalIndex::from_parts(p, std::move(vocab), std::move(docs));
    return out;
}

} // namespace caselaw
