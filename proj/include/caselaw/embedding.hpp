#pragma once

#include <caselaw/common.hpp>
#include <caselaw/lexical.hpp>

#include <charconv>
#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace caselaw {

using Vector = std::vector<double>;

struct WordVectorTable {
    std::size_t dimension = 0;
    std::unordered_map<std::string, std::vector<float>> vectors;

    [[nodiscard]] const std::vector<float>* find(const std::string& term) const {
        auto it = vectors.find(term);
        return it == vectors.end() ? nullptr : &it->second;
    }
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_space(line[i])) ++i;
        std::size_t start = i;
        while (i < line.size() && !is_space(line[i])) ++i;
        if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
}

inline float parse_float(std::string_view s, std::size_t line_no, std::string_view source) {
    float v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(std::string(source) + " line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
    return v;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        fn(line, ++line_no);
        pos = eol + 1;
    }
}

} // namespace detail

/// word2vec text format: a "count dim" header, then one "term v1 .. vdim" row
/// per term. Bigram terms join their words with '_'.
inline WordVectorTable parse_word_vectors(std::string_view text, std::string_view source = "word vectors") {
    WordVectorTable table;
    std::size_t declared = 0;
    bool have_header = false;
    detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        auto fields = detail::split_ws(line);
        if (!have_header) {
            if (fields.size() != 2) throw Error(std::string(source) + " line 1: expected header 'count dim'");
            declared = detail::parse_int<std::size_t>(fields[0]);
            table.dimension = detail::parse_int<std::size_t>(fields[1]);
            if (table.dimension == 0) throw Error(std::string(source) + " line 1: dimension must be > 0");
            have_header = true;
            return;
        }
        if (fields.empty()) return;
        if (fields.size() != table.dimension + 1)
            throw Error(std::string(source) + " line " + std::to_string(line_no) + ": expected " + std::to_string(table.dimension) +
                        " values, found " + std::to_string(fields.size() - 1));
        std::vector<float> v(table.dimension);
        for (std::size_t k = 0; k < table.dimension; ++k) v[k] = detail::parse_float(fields[k + 1], line_no, source);
        if (!table.vectors.emplace(std::string(fields[0]), std::move(v)).second)
            throw Error(std::string(source) + " line " + std::to_string(line_no) + ": duplicate term '" + std::string(fields[0]) + "'");
    });
    if (!have_header) throw Error(std::string(source) + ": missing header");
    if (table.vectors.size() != declared)
        throw Error(std::string(source) + ": header declares " + std::to_string(declared) + " rows but " +
                    std::to_string(table.vectors.size()) + " were read");
    if (table.vectors.empty()) throw Error(std::string(source) + ": table is empty");
    return table;
}

inline WordVectorTable load_word_vectors(const std::filesystem::path& path) {
    return parse_word_vectors(read_file(path), path.string());
}

/// Terms in sorted order, values with round-trip precision.
inline std::string format_word_vectors(const WordVectorTable& table) {
    std::vector<const std::string*> keys;
    for (const auto& [k, _] : table.vectors) keys.push_back(&k);
    std::sort(keys.begin(), keys.end(), [](auto* a, auto* b) { return *a < *b; });
    std::string out = std::to_string(keys.size()) + " " + std::to_string(table.dimension) + "\n";
    char buf[32];
    for (auto* k : keys) {
        out += *k;
        for (float x : table.vectors.at(*k)) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
            out += ' ';
            out.append(buf, ptr);
        }
        out += '\n';
    }
    return out;
}

/// Seeded pseudo-random table for hermetic tests and demos. Each term's
/// vector depends only on (seed, term).
inline WordVectorTable demo_word_vectors(std::span<const std::string> terms, std::size_t dimension, std::uint64_t seed = 42) {
    WordVectorTable table;
    table.dimension = dimension;
    for (const auto& t : terms) {
        Fnv1a h;
        h.update(t);
        std::mt19937_64 rng(seed ^ h.digest());
        std::uniform_real_distribution<float> dist(-1.0F, 1.0F);
        std::vector<float> v(dimension);
        for (auto& x : v) x = dist(rng);
        table.vectors.emplace(t, std::move(v));
    }
    return table;
}

/// Mean of the vectors of in-vocabulary unigrams and, when enabled,
/// in-vocabulary adjacent bigrams ("a_b"). Zero vector if nothing matches.
inline Vector embed_average(std::span<const std::string> tokens, const WordVectorTable& table, bool use_bigrams) {
    Vector sum(table.dimension, 0.0);
    std::size_t count = 0;
    auto add = [&](const std::vector<float>& v) {
        for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += static_cast<double>(v[k]);
        ++count;
    };
    for (const auto& t : tokens)
        if (auto* v = table.find(t)) add(*v);
    if (use_bigrams) {
        for (std::size_t i = 0; i + 1 < tokens.size(); ++i)
            if (auto* v = table.find(tokens[i] + "_" + tokens[i + 1])) add(*v);
    }
    if (count)
        for (auto& x : sum) x /= static_cast<double>(count);
    return sum;
}

// ---------------------------------------------------------------------------
// Precomputed paragraph vectors

using UnitKey = std::pair<std::string, int>;

struct ParagraphEmbeddingStore {
    std::size_t dimension = 0;
    std::map<UnitKey, std::vector<float>> vectors;

    [[nodiscard]] const std::vector<float>* find(const std::string& doc_id, int unit_index) const {
        auto it = vectors.find({doc_id, unit_index});
        return it == vectors.end() ? nullptr : &it->second;
    }
};

/// One record per line: doc_id, unit_index, then the vector components, all
/// tab-separated. The first record fixes the dimension.
inline ParagraphEmbeddingStore parse_paragraph_embeddings(std::string_view text, std::string_view source = "embeddings") {
    ParagraphEmbeddingStore store;
    detail::for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (trim(line).empty()) return;
        auto fields = detail::split(line, '\t');
        auto where = std::string(source) + " line " + std::to_string(line_no);
        if (fields.size() < 3) throw Error(where + ": expected doc_id, unit_index and at least one value");
        std::size_t dim = fields.size() - 2;
        if (store.dimension == 0) store.dimension = dim;
        if (dim != store.dimension)
            throw Error(where + ": expected " + std::to_string(store.dimension) + " values, found " + std::to_string(dim));
        int unit = 0;
        try {
            unit = detail::parse_int<int>(fields[1]);
        } catch (const Error&) {
            throw Error(where + ": bad unit index '" + std::string(fields[1]) + "'");
        }
        std::vector<float> v(dim);
        for (std::size_t k = 0; k < dim; ++k) v[k] = detail::parse_float(trim(fields[k + 2]), line_no, source);
        UnitKey key{std::string(fields[0]), unit};
        if (!store.vectors.emplace(key, std::move(v)).second)
            throw Error(where + ": duplicate key (" + key.first + ", " + std::to_string(key.second) + ")");
    });
    return store;
}

inline ParagraphEmbeddingStore load_paragraph_embeddings(const std::filesystem::path& path) {
    return parse_paragraph_embeddings(read_file(path), path.string());
}

inline std::string format_paragraph_embeddings(const ParagraphEmbeddingStore& store) {
    std::string out;
    char buf[32];
    for (const auto& [key, v] : store.vectors) {
        out += key.first + "\t" + std::to_string(key.second);
        for (float x : v) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
            out += '\t';
            out.append(buf, ptr);
        }
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Providers

enum class UnitRole { query, candidate };

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    [[nodiscard]] virtual Vector embed(const TextUnit& unit, UnitRole role) const = 0;
    [[nodiscard]] virtual std::size_t dimension() const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

/// Sentence vector as the average of word and bigram vectors.
class AveragedNgramProvider final : public EmbeddingProvider {
public:
    explicit AveragedNgramProvider(std::shared_ptr<const WordVectorTable> table, bool use_bigrams = true)
        : table_(std::move(table)), use_bigrams_(use_bigrams) {
        if (!table_ || table_->dimension == 0) throw Error("averaged provider needs a loaded word-vector table");
    }

    [[nodiscard]] Vector embed(const TextUnit& unit, UnitRole) const override {
        auto tokens = tokenize(unit.text);
        return embed_average(tokens, *table_, use_bigrams_);
    }
    [[nodiscard]] std::size_t dimension() const override { return table_->dimension; }
    [[nodiscard]] std::string name() const override { return use_bigrams_ ? "averaged-ngram" : "averaged-unigram"; }

private:
    std::shared_ptr<const WordVectorTable> table_;
    bool use_bigrams_;
};

/// Looks vectors up by (doc_id, unit_index) in externally produced stores,
/// one for query units and one for candidate paragraphs.
class PrecomputedProvider final : public EmbeddingProvider {
public:
    PrecomputedProvider(std::shared_ptr<const ParagraphEmbeddingStore> queries,
                        std::shared_ptr<const ParagraphEmbeddingStore> candidates)
        : queries_(std::move(queries)), candidates_(std::move(candidates)) {
        if (!queries_ || !candidates_) throw Error("precomputed provider needs both query and candidate stores");
        if (queries_->dimension != candidates_->dimension && !queries_->vectors.empty() && !candidates_->vectors.empty())
            throw Error("query and candidate embedding dimensions differ (" + std::to_string(queries_->dimension) + " vs " +
                        std::to_string(candidates_->dimension) + ")");
    }

    [[nodiscard]] Vector embed(const TextUnit& unit, UnitRole role) const override {
        const auto& store = role == UnitRole::query ? *queries_ : *candidates_;
        auto* v = store.find(unit.doc_id, unit.unit_index);
        if (!v)
            throw Error(std::string("missing ") + (role == UnitRole::query ? "query" : "candidate") + " embedding for (" +
                        unit.doc_id + ", " + std::to_string(unit.unit_index) + ")");
        return Vector(v->begin(), v->end());
    }
    [[nodiscard]] std::size_t dimension() const override {
        return queries_->dimension ? queries_->dimension : candidates_->dimension;
    }
    [[nodiscard]] std::string name() const override { return "precomputed"; }

private:
    std::shared_ptr<const ParagraphEmbeddingStore> queries_;
    std::shared_ptr<const ParagraphEmbeddingStore> candidates_;
};

// ---------------------------------------------------------------------------

/// u.v / (|u| |v|), clamped to [-1, 1]; 0 when either vector is zero.
inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw Error("cosine_similarity: dimension mismatch (" + std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
    double dot = 0, nu = 0, nv = 0;
    for (std::size_t k = 0; k < u.size(); ++k) {
        dot += u[k] * v[k];
        nu += u[k] * u[k];
        nv += v[k] * v[k];
    }
    if (nu == 0.0 || nv == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

} // namespace caselaw
