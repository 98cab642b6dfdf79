#include <catch_amalgamated.hpp>

#include <caselaw/embedding.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

using namespace caselaw;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

WordVectorTable table_of(std::size_t dim, std::initializer_list<std::pair<std::string, std::vector<float>>> rows) {
    WordVectorTable t;
    t.dimension = dim;
    for (const auto& [k, v] : rows) t.vectors.emplace(k, v);
    return t;
}

double norm(const Vector& v) {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

TEST_CASE("word2vec text parsing", "[embedding]") {
    auto t = parse_word_vectors("2 3\naa 1 0 0\nbb 0 1 0");
    CHECK(t.dimension == 3);
    CHECK(t.vectors.size() == 2);
    CHECK(t.find("bb")->at(1) == 1.0F);

    CHECK_THROWS_WITH(parse_word_vectors("3 3\naa 1 0 0\nbb 0 1 0\n"), ContainsSubstring("declares 3 rows"));
    CHECK_THROWS_WITH(parse_word_vectors("2 3\naa 1 0 0\nbb 0 1\n"), ContainsSubstring("line 3"));
    CHECK_THROWS_WITH(parse_word_vectors("2 3\naa 1 0 x\nbb 0 1 0\n"), ContainsSubstring("line 2"));
    CHECK_THROWS_AS(parse_word_vectors("aa 1 0 0\n"), Error);
    CHECK_THROWS_AS(parse_word_vectors(""), Error);
    CHECK_THROWS_WITH(parse_word_vectors("2 2\naa 1 0\naa 0 1\n"), ContainsSubstring("duplicate"));

    // Trailing spaces and CRLF as some exporters write them.
    auto crlf = parse_word_vectors("1 2\r\naa_bb 0.5 -0.25 \r\n");
    CHECK(crlf.find("aa_bb")->at(1) == -0.25F);
}

TEST_CASE("word2vec text round-trips through format_word_vectors", "[embedding]") {
    std::vector<std::string> terms{"court", "appeal", "court_appeal", "costs"};
    auto table = demo_word_vectors(terms, 8, 1234);
    auto back = parse_word_vectors(format_word_vectors(table));
    CHECK(back.dimension == 8);
    CHECK(back.vectors == table.vectors);
}

TEST_CASE("demo table is deterministic per term", "[embedding]") {
    std::vector<std::string> a{"one", "two"}, b{"two", "three"};
    auto ta = demo_word_vectors(a, 16, 5);
    auto tb = demo_word_vectors(b, 16, 5);
    CHECK(ta.vectors.at("two") == tb.vectors.at("two"));
    CHECK(demo_word_vectors(a, 16, 6).vectors.at("two") != ta.vectors.at("two"));
}

TEST_CASE("embed_average", "[embedding]") {
    auto single = table_of(2, {{"aa", {2, 0}}});
    CHECK(embed_average(std::vector<std::string>{"aa"}, single, false) == Vector{2, 0});

    auto t = table_of(2, {{"aa", {1, 0}}, {"bb", {0, 1}}, {"aa_bb", {1, 1}}});
    auto v = embed_average(std::vector<std::string>{"aa", "bb"}, t, true);
    CHECK_THAT(v[0], WithinAbs(2.0 / 3.0, 1e-15));
    CHECK_THAT(v[1], WithinAbs(2.0 / 3.0, 1e-15));
    CHECK(embed_average(std::vector<std::string>{"aa", "bb"}, t, false) == Vector{0.5, 0.5});
    CHECK(embed_average(std::vector<std::string>{"zz", "yy"}, t, true) == Vector{0, 0});
    CHECK(embed_average(std::vector<std::string>{}, t, true) == Vector{0, 0});
}

TEST_CASE("embed_average properties", "[embedding][property]") {
    std::mt19937 rng(3);
    std::vector<std::string> vocab;
    for (int i = 0; i < 30; ++i) vocab.push_back("w" + std::to_string(i));
    for (int i = 0; i + 1 < 30; i += 2) vocab.push_back("w" + std::to_string(i) + "_w" + std::to_string(i + 1));
    auto table = demo_word_vectors(vocab, 12);
    double max_norm = 0;
    for (const auto& [_, v] : table.vectors) max_norm = std::max(max_norm, norm(Vector(v.begin(), v.end())));
    std::uniform_int_distribution<int> word(0, 34), len(0, 20);
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<std::string> tokens;
        for (int k = len(rng); k > 0; --k) tokens.push_back("w" + std::to_string(word(rng)));
        auto base = embed_average(tokens, table, false);
        auto shuffled = tokens;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto perm = embed_average(shuffled, table, false);
        for (std::size_t k = 0; k < base.size(); ++k) CHECK_THAT(perm[k], WithinAbs(base[k], 1e-12));
        CHECK(norm(embed_average(tokens, table, true)) <= max_norm + 1e-12);
        CHECK(embed_average(tokens, table, true) == embed_average(tokens, table, true));
    }
}

TEST_CASE("paragraph embedding TSV", "[embedding]") {
    auto store = parse_paragraph_embeddings("c1\t0\t0.1\t0.2\t0.3\t0.4\n");
    CHECK(store.dimension == 4);
    CHECK(store.vectors.size() == 1);
    CHECK(store.find("c1", 0) != nullptr);
    CHECK(store.find("c1", 1) == nullptr);

    CHECK_THROWS_WITH(parse_paragraph_embeddings("c1\t0\t1\t2\nc1\t0\t3\t4\n"), ContainsSubstring("(c1, 0)"));
    CHECK_THROWS_WITH(parse_paragraph_embeddings("c1\t0\t1\t2\nc1\t1\t3\n"), ContainsSubstring("line 2"));
    CHECK_THROWS_WITH(parse_paragraph_embeddings("c1\tx\t1\t2\n"), ContainsSubstring("unit index"));
    CHECK_THROWS_AS(parse_paragraph_embeddings("c1\t0\n"), Error);

    auto back = parse_paragraph_embeddings(format_paragraph_embeddings(store));
    CHECK(back.vectors == store.vectors);
}

TEST_CASE("providers", "[embedding]") {
    auto table = std::make_shared<const WordVectorTable>(table_of(2, {{"aa", {1, 0}}, {"bb", {0, 1}}, {"aa_bb", {1, 1}}}));
    AveragedNgramProvider avg(table);
    CHECK(avg.dimension() == 2);
    TextUnit u{"d", 0, "AA bb"};
    auto v = avg.embed(u, UnitRole::query);
    CHECK_THAT(v[0], WithinAbs(2.0 / 3.0, 1e-15));
    CHECK(avg.embed(u, UnitRole::candidate) == v);

    auto q = std::make_shared<ParagraphEmbeddingStore>(parse_paragraph_embeddings("q1\t0\t1\t0\n"));
    auto c = std::make_shared<ParagraphEmbeddingStore>(parse_paragraph_embeddings("q1\t0\t0\t1\nc1\t2\t1\t1\n"));
    PrecomputedProvider pre(q, c);
    CHECK(pre.embed({"q1", 0, ""}, UnitRole::query) == Vector{1, 0});
    CHECK(pre.embed({"q1", 0, ""}, UnitRole::candidate) == Vector{0, 1});
    CHECK_THROWS_WITH(pre.embed({"c1", 3, ""}, UnitRole::candidate), ContainsSubstring("(c1, 3)"));

    auto wide = std::make_shared<ParagraphEmbeddingStore>(parse_paragraph_embeddings("x\t0\t1\t2\t3\n"));
    CHECK_THROWS_AS(PrecomputedProvider(q, wide), Error);
}

TEST_CASE("cosine_similarity", "[embedding]") {
    Vector u{0.3, -1.2, 4.0};
    CHECK_THAT(cosine_similarity(u, u), WithinAbs(1.0, 1e-15));
    CHECK(cosine_similarity(Vector{1, 0}, Vector{0, 1}) == 0.0);
    CHECK_THAT(cosine_similarity(Vector{1, 1}, Vector{1, 0}), WithinAbs(1.0 / std::sqrt(2.0), 1e-15));
    CHECK_THAT(cosine_similarity(Vector{1, 1}, Vector{1, 0}), WithinAbs(0.707107, 1e-6));
    CHECK(cosine_similarity(Vector{0, 0}, Vector{1, 0}) == 0.0);
    CHECK_THROWS_AS(cosine_similarity(Vector{1}, Vector{1, 2}), Error);
}

TEST_CASE("cosine symmetry, scale invariance and range", "[embedding][property]") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int iter = 0; iter < 2000; ++iter) {
        std::size_t dim = 1 + rng() % 32;
        Vector u(dim), v(dim);
        for (auto& x : u) x = g(rng);
        for (auto& x : v) x = g(rng);
        double c = cosine_similarity(u, v);
        CHECK(c == cosine_similarity(v, u));
        CHECK(c >= -1.0);
        CHECK(c <= 1.0);
        double a = scale(rng);
        Vector su = u;
        for (auto& x : su) x *= a;
        CHECK_THAT(cosine_similarity(su, v), WithinAbs(c, 1e-12));
    }
}
