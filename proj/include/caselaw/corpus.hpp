#pragma once

#include <caselaw/common.hpp>
#include <caselaw/lexical.hpp>

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace caselaw {

inline constexpr std::string_view kDefaultMarker = "FRAGMENT_SUPPRESSED";

struct Sentence {
    int paragraph_index = 0;
    int index = 0; // position within its paragraph
    std::string text;

    friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Paragraph {
    std::string doc_id;
    int index = 0;
    std::vector<Sentence> sentences;
    std::string text;

    friend bool operator==(const Paragraph&, const Paragraph&) = default;
};

struct Document {
    std::string id;
    std::string raw_text;
    std::vector<Paragraph> paragraphs;

    /// Sentences of all paragraphs in reading order.
    [[nodiscard]] std::vector<Sentence> sentences() const {
        std::vector<Sentence> out;
        for (const auto& p : paragraphs) out.insert(out.end(), p.sentences.begin(), p.sentences.end());
        return out;
    }
};

// ---------------------------------------------------------------------------
// Sentence segmentation

namespace detail {

inline constexpr std::array<std::string_view, 13> kAbbreviations = {
    "s.", "ss.", "v.", "No.", "Mr.", "Mrs.", "Dr.", "Inc.", "Ltd.", "cf.", "e.g.", "i.e.", "para.",
};

inline bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

// Length of a closing quote or bracket at pos, 0 if none.
inline std::size_t closer_length(std::string_view text, std::size_t pos) {
    if (pos >= text.size()) return 0;
    char c = text[pos];
    if (c == '"' || c == '\'' || c == ')') return 1;
    // U+2019 and U+201D
    if (text.substr(pos, 3) == "\xE2\x80\x99" || text.substr(pos, 3) == "\xE2\x80\x9D") return 3;
    return 0;
}

inline bool is_abbreviation(std::string_view text, std::size_t terminator_pos) {
    std::size_t start = terminator_pos;
    while (start > 0 && !is_space(text[start - 1])) --start;
    auto word = text.substr(start, terminator_pos - start + 1);
    while (!word.empty() && (word.front() == '(' || word.front() == '"' || word.front() == '\'' || word.front() == '['))
        word.remove_prefix(1);
    return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

inline bool starts_with_numbering(std::string_view s) {
    if (s.size() < 3 || s[0] != '[') return false;
    std::size_t i = 1;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
    return i > 1 && i < s.size() && s[i] == ']';
}

} // namespace detail

/// Rule-based splitter: a sentence ends after '.', '!' or '?' (plus any
/// closing quotes or parentheses) when whitespace and then an uppercase ASCII
/// letter or '[' follow, unless the terminating word is a known abbreviation.
inline std::vector<Sentence> segment_sentences(std::string_view text) {
    std::vector<Sentence> out;
    auto emit = [&](std::string_view piece) {
        auto t = trim(piece);
        if (!t.empty()) out.push_back({0, static_cast<int>(out.size()), std::string(t)});
    };
    std::size_t start = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!detail::is_terminator(text[i])) {
            ++i;
            continue;
        }
        std::size_t last = i;
        while (last + 1 < text.size() && detail::is_terminator(text[last + 1])) ++last;
        std::size_t end = last + 1;
        while (auto n = detail::closer_length(text, end)) end += n;
        std::size_t next = end;
        while (next < text.size() && is_space(text[next])) ++next;
        bool boundary = next > end && next < text.size() &&
                        ((text[next] >= 'A' && text[next] <= 'Z') || text[next] == '[') &&
                        !(last == i && text[i] == '.' && detail::is_abbreviation(text, i));
        if (boundary) {
            emit(text.substr(start, end - start));
            start = next;
            i = next;
        } else {
            i = end;
        }
    }
    if (start < text.size()) emit(text.substr(start));
    return out;
}

// ---------------------------------------------------------------------------
// Paragraph segmentation

/// Splits on blank lines, on lines opening with "[n]" numbering, and before
/// any sentence that opens with "[n]". Paragraph text is its sentences joined
/// by single spaces.
inline std::vector<Paragraph> segment_paragraphs(std::string_view text, std::string_view doc_id = {}) {
    // Blocks delimited by blank lines or numbered line starts.
    std::vector<std::string_view> blocks;
    std::size_t block_start = std::string_view::npos;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        auto content = trim(line);
        if (content.empty()) {
            if (block_start != std::string_view::npos) blocks.push_back(text.substr(block_start, pos - block_start));
            block_start = std::string_view::npos;
        } else {
            if (block_start != std::string_view::npos && detail::starts_with_numbering(content)) {
                blocks.push_back(text.substr(block_start, pos - block_start));
                block_start = std::string_view::npos;
            }
            if (block_start == std::string_view::npos) block_start = pos;
        }
        pos = eol + 1;
    }
    if (block_start != std::string_view::npos && block_start < text.size()) blocks.push_back(text.substr(block_start));

    std::vector<Paragraph> out;
    auto flush = [&](std::vector<Sentence>& sentences) {
        if (sentences.empty()) return;
        Paragraph p;
        p.doc_id = std::string(doc_id);
        p.index = static_cast<int>(out.size());
        for (std::size_t k = 0; k < sentences.size(); ++k) {
            sentences[k].paragraph_index = p.index;
            sentences[k].index = static_cast<int>(k);
            if (k) p.text += ' ';
            p.text += sentences[k].text;
        }
        p.sentences = std::move(sentences);
        sentences.clear();
        out.push_back(std::move(p));
    };
    for (auto block : blocks) {
        std::vector<Sentence> current;
        for (auto& s : segment_sentences(block)) {
            if (!current.empty() && detail::starts_with_numbering(s.text)) flush(current);
            current.push_back(std::move(s));
        }
        flush(current);
    }
    return out;
}

inline Document make_document(std::string id, std::string raw_text) {
    if (id.empty()) throw Error("document id must be non-empty");
    Document d;
    d.paragraphs = segment_paragraphs(raw_text, id);
    d.id = std::move(id);
    d.raw_text = std::move(raw_text);
    return d;
}

// ---------------------------------------------------------------------------
// Citation-marker contexts

struct ContextBlock {
    std::size_t marker_sentence = 0; // index into Document::sentences()
    std::size_t first_sentence = 0;
    std::vector<Sentence> sentences;

    [[nodiscard]] std::string text() const {
        std::string t;
        for (const auto& s : sentences) {
            if (!t.empty()) t += ' ';
            t += s.text;
        }
        return t;
    }
};

/// One block per sentence containing the marker, spanning `before` sentences
/// ahead of it and `after` sentences behind it, clamped to the document.
/// Overlapping blocks stay separate.
inline std::vector<ContextBlock> extract_fragment_contexts(const Document& doc, std::size_t before, std::size_t after,
                                                           std::string_view marker = kDefaultMarker) {
    if (marker.empty()) throw Error("fragment marker must be non-empty");
    auto sentences = doc.sentences();
    std::vector<ContextBlock> out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        if (sentences[i].text.find(marker) == std::string::npos) continue;
        ContextBlock block;
        block.marker_sentence = i;
        block.first_sentence = i >= before ? i - before : 0;
        std::size_t last = std::min(sentences.size() - 1, i + after);
        block.sentences.assign(sentences.begin() + static_cast<std::ptrdiff_t>(block.first_sentence),
                               sentences.begin() + static_cast<std::ptrdiff_t>(last) + 1);
        out.push_back(std::move(block));
    }
    return out;
}

struct QueryCase {
    std::string id;
    Document document;
    std::vector<ContextBlock> fragment_contexts;
};

struct ContextOptions {
    std::size_t before = 3;
    std::size_t after = 3;
    std::string marker = std::string(kDefaultMarker);
};

inline QueryCase make_query_case(Document doc, const ContextOptions& ctx = {}) {
    QueryCase q;
    q.fragment_contexts = extract_fragment_contexts(doc, ctx.before, ctx.after, ctx.marker);
    q.id = doc.id;
    q.document = std::move(doc);
    return q;
}

// ---------------------------------------------------------------------------
// Labels

/// Query id mapped to the ids of its relevant items: candidate case ids for
/// case retrieval, paragraph file names for entailment.
using LabelSet = std::map<std::string, std::set<std::string>>;

inline std::string strip_txt(std::string s) {
    if (s.size() > 4 && s.compare(s.size() - 4, 4, ".txt") == 0) s.resize(s.size() - 4);
    return s;
}

struct LabelOptions {
    bool strip_key_extension = true;
    bool strip_value_extension = true;
};

/// Parses {"query": ["relevant", ...], ...}. A trailing ".txt" is removed
/// from keys and values as configured so ids line up with file stems.
inline LabelSet parse_labels(std::string_view json_text, const LabelOptions& opts = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(std::string("labels: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error("labels: top-level JSON value must be an object");
    LabelSet labels;
    for (const auto& [key, value] : j.items()) {
        std::string qid = opts.strip_key_extension ? strip_txt(key) : key;
        if (!value.is_array()) throw Error("labels: value for '" + key + "' must be an array");
        auto& rel = labels[qid];
        for (const auto& item : value) {
            if (!item.is_string()) throw Error("labels: entries for '" + key + "' must be strings");
            auto id = item.get<std::string>();
            rel.insert(opts.strip_value_extension ? strip_txt(id) : id);
        }
        if (rel.empty()) throw Error("labels: relevant set for '" + qid + "' is empty");
    }
    return labels;
}

inline LabelSet load_labels(const std::filesystem::path& path, const LabelOptions& opts = {}) {
    return parse_labels(read_file(path), opts);
}

// ---------------------------------------------------------------------------
// Corpus loading

inline std::vector<std::filesystem::path> list_txt_files(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error("not a directory: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

inline std::vector<Document> load_documents(const std::filesystem::path& dir) {
    std::vector<Document> docs;
    for (const auto& f : list_txt_files(dir)) docs.push_back(make_document(f.stem().string(), read_file(f)));
    return docs;
}

struct Task1Corpus {
    std::vector<QueryCase> queries;
    std::vector<Document> candidates;
};

inline Task1Corpus load_task1(const std::filesystem::path& queries_dir, const std::filesystem::path& candidates_dir,
                              const ContextOptions& ctx = {}) {
    Task1Corpus c;
    for (auto& d : load_documents(queries_dir)) c.queries.push_back(make_query_case(std::move(d), ctx));
    c.candidates = load_documents(candidates_dir);
    return c;
}

struct PoolParagraph {
    std::string name; // file name, e.g. "013.txt"
    int index = 0;    // numeric file stem when it is one, else position in the pool
    std::string text;
};

struct Task2Query {
    std::string id;
    std::string fragment_text;
    Document base_case;
    std::vector<PoolParagraph> pool;
};

inline std::optional<int> numeric_stem(const std::string& stem) {
    if (stem.empty() || stem.size() > 9) return std::nullopt;
    for (char c : stem)
        if (c < '0' || c > '9') return std::nullopt;
    return std::stoi(stem);
}

/// One directory per query holding entailed_fragment.txt, base_case.txt and
/// paragraphs/<k>.txt.
inline Task2Query load_task2_query(const std::filesystem::path& dir) {
    Task2Query q;
    q.id = dir.filename().string();
    q.fragment_text = read_file(dir / "entailed_fragment.txt");
    q.base_case = make_document(q.id, read_file(dir / "base_case.txt"));
    auto files = list_txt_files(dir / "paragraphs");
    for (std::size_t i = 0; i < files.size(); ++i) {
        auto stem = files[i].stem().string();
        q.pool.push_back({files[i].filename().string(), numeric_stem(stem).value_or(static_cast<int>(i)), read_file(files[i])});
    }
    std::stable_sort(q.pool.begin(), q.pool.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    for (std::size_t i = 1; i < q.pool.size(); ++i)
        if (q.pool[i].index == q.pool[i - 1].index)
            throw Error("query '" + q.id + "': paragraphs '" + q.pool[i - 1].name + "' and '" + q.pool[i].name + "' share index " +
                        std::to_string(q.pool[i].index));
    return q;
}

inline std::vector<Task2Query> load_task2(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw Error("not a directory: " + root.string());
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<Task2Query> out;
    for (const auto& d : dirs) out.push_back(load_task2_query(d));
    return out;
}

// ---------------------------------------------------------------------------
// Statistics

struct CorpusStats {
    std::size_t query_count = 0;
    std::size_t candidate_count = 0;
    double avg_relevant = 0.0;
    double avg_query_words = 0.0;
    double avg_candidate_words = 0.0;
    std::optional<double> avg_candidate_paragraphs_per_query; // entailment corpora only
};

inline std::size_t word_count(std::string_view text) { return tokenize(text).size(); }

namespace detail {
inline double mean(double total, std::size_t n) { return n ? total / static_cast<double>(n) : 0.0; }

inline double avg_relevant(const LabelSet& labels) {
    double total = 0;
    for (const auto& [_, rel] : labels) total += static_cast<double>(rel.size());
    return mean(total, labels.size());
}
} // namespace detail

/// Throws naming the first label id that does not resolve.
template <typename QueryPred, typename CandidatePred>
void validate_labels(const LabelSet& labels, QueryPred&& has_query, CandidatePred&& has_candidate) {
    for (const auto& [qid, rel] : labels) {
        if (!has_query(qid)) throw Error("label references unknown query id '" + qid + "'");
        if (rel.empty()) throw Error("label set for query '" + qid + "' is empty");
        for (const auto& cid : rel)
            if (!has_candidate(qid, cid)) throw Error("label for query '" + qid + "' references unknown id '" + cid + "'");
    }
}

inline CorpusStats compute_stats(std::span<const QueryCase> queries, std::span<const Document> candidates, const LabelSet& labels) {
    std::set<std::string_view> qids, cids;
    for (const auto& q : queries) qids.insert(q.id);
    for (const auto& c : candidates) cids.insert(c.id);
    validate_labels(labels, [&](const std::string& q) { return qids.count(q) > 0; },
                    [&](const std::string&, const std::string& c) { return cids.count(c) > 0; });
    CorpusStats s;
    s.query_count = queries.size();
    s.candidate_count = candidates.size();
    s.avg_relevant = detail::avg_relevant(labels);
    double qw = 0, cw = 0;
    for (const auto& q : queries) qw += static_cast<double>(word_count(q.document.raw_text));
    for (const auto& c : candidates) cw += static_cast<double>(word_count(c.raw_text));
    s.avg_query_words = detail::mean(qw, queries.size());
    s.avg_candidate_words = detail::mean(cw, candidates.size());
    return s;
}

/// Entailment statistics: candidates are pool paragraphs, query length is the
/// base case length.
inline CorpusStats compute_stats(std::span<const Task2Query> queries, const LabelSet& labels) {
    std::map<std::string_view, const Task2Query*> by_id;
    for (const auto& q : queries) by_id[q.id] = &q;
    validate_labels(
        labels, [&](const std::string& q) { return by_id.count(q) > 0; },
        [&](const std::string& q, const std::string& p) {
            const auto& pool = by_id.at(q)->pool;
            return std::any_of(pool.begin(), pool.end(), [&](const PoolParagraph& pp) { return pp.name == p; });
        });
    CorpusStats s;
    s.query_count = queries.size();
    double qw = 0, cw = 0;
    for (const auto& q : queries) {
        s.candidate_count += q.pool.size();
        qw += static_cast<double>(word_count(q.base_case.raw_text));
        for (const auto& p : q.pool) cw += static_cast<double>(word_count(p.text));
    }
    s.avg_relevant = detail::avg_relevant(labels);
    s.avg_query_words = detail::mean(qw, queries.size());
    s.avg_candidate_words = detail::mean(cw, s.candidate_count);
    s.avg_candidate_paragraphs_per_query = detail::mean(static_cast<double>(s.candidate_count), queries.size());
    return s;
}

} // namespace caselaw
