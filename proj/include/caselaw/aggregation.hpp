#pragma once

#include <caselaw/common.hpp>
#include <caselaw/embedding.hpp>

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace caselaw {

/// Cosine scores between every query unit (rows) and candidate paragraph
/// (columns), stored row-major.
struct SimilarityMatrix {
    std::string query_id;
    std::string candidate_id;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    [[nodiscard]] double at(std::size_t r, std::size_t c) const { return values.at(r * cols + c); }

    [[nodiscard]] SimilarityMatrix transposed() const {
        SimilarityMatrix t{candidate_id, query_id, cols, rows, std::vector<double>(values.size())};
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) t.values[c * rows + r] = values[r * cols + c];
        return t;
    }
};

struct DocScore {
    std::string candidate_id;
    double score = 0.0;
    std::pair<std::size_t, std::size_t> argmax_pair{0, 0};

    friend bool operator==(const DocScore&, const DocScore&) = default;
};

namespace detail {
inline void check_units(std::span<const Vector> query_units, std::span<const Vector> cand_units) {
    if (query_units.empty() || cand_units.empty()) throw Error("pair_matrix: both sides need at least one unit");
}
} // namespace detail

inline SimilarityMatrix pair_matrix(std::span<const Vector> query_units, std::span<const Vector> cand_units,
                                    std::string query_id = {}, std::string candidate_id = {}) {
    detail::check_units(query_units, cand_units);
    SimilarityMatrix m{std::move(query_id), std::move(candidate_id), query_units.size(), cand_units.size(), {}};
    m.values.reserve(m.rows * m.cols);
    for (const auto& q : query_units)
        for (const auto& c : cand_units) m.values.push_back(cosine_similarity(q, c));
    return m;
}

/// Global maximum; the first maximizer in row-major order wins ties.
inline DocScore max_pool(const SimilarityMatrix& m) {
    if (m.values.empty()) throw Error("max_pool: empty matrix");
    std::size_t best = 0;
    for (std::size_t k = 1; k < m.values.size(); ++k)
        if (m.values[k] > m.values[best]) best = k;
    return {m.candidate_id, m.values[best], {best / m.cols, best % m.cols}};
}

/// Same result as max_pool(pair_matrix(...)) without materializing the matrix.
inline DocScore streaming_max_pool(std::span<const Vector> query_units, std::span<const Vector> cand_units,
                                   std::string candidate_id = {}) {
    detail::check_units(query_units, cand_units);
    DocScore best{std::move(candidate_id), 0.0, {0, 0}};
    bool first = true;
    for (std::size_t r = 0; r < query_units.size(); ++r) {
        for (std::size_t c = 0; c < cand_units.size(); ++c) {
            double s = cosine_similarity(query_units[r], cand_units[c]);
            if (first || s > best.score) {
                best.score = s;
                best.argmax_pair = {r, c};
                first = false;
            }
        }
    }
    return best;
}

/// Materializes the matrix while rows*cols stays within `matrix_cap`,
/// otherwise streams.
inline DocScore score_candidate(std::span<const Vector> query_units, std::span<const Vector> cand_units,
                                std::string candidate_id, std::size_t matrix_cap) {
    if (query_units.size() * cand_units.size() <= matrix_cap)
        return max_pool(pair_matrix(query_units, cand_units, {}, std::move(candidate_id)));
    return streaming_max_pool(query_units, cand_units, std::move(candidate_id));
}

inline bool doc_ranks_before(const DocScore& a, const DocScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.candidate_id < b.candidate_id;
}

inline std::vector<DocScore> top_k(std::vector<DocScore> scores, std::size_t k) {
    if (k < 1) throw Error("top_k: k must be >= 1");
    auto n = std::min(k, scores.size());
    std::partial_sort(scores.begin(), scores.begin() + static_cast<std::ptrdiff_t>(n), scores.end(), doc_ranks_before);
    scores.resize(n);
    return scores;
}

/// candidate_id, score, argmax_row, argmax_col per line.
inline std::string format_diagnostics(std::span<const DocScore> scores) {
    std::string out = "# candidate_id\tscore\targmax_row\targmax_col\n";
    for (const auto& s : scores)
        out += s.candidate_id + "\t" + format_fixed(s.score, 6) + "\t" + std::to_string(s.argmax_pair.first) + "\t" +
               std::to_string(s.argmax_pair.second) + "\n";
    return out;
}

} // namespace caselaw
