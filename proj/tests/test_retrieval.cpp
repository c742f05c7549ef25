#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "langlab/retrieval.hpp"
#include "oracles.hpp"

using namespace langlab;
using namespace langlab::retrieval;

namespace {

Corpus cats_corpus() {
    return Corpus::build({{"d1", "cat cat"}, {"d2", "cat"}, {"d3", "dog"}});
}

std::vector<Doc> random_docs(Rng& rng, std::size_t max_docs) {
    static const char* vocab[] = {"cat", "dog", "fish", "bird", "tree", "sky",
                                  "blue", "red", "runs", "jumps", "sleeps", "sings"};
    std::size_t n = 1 + rng.below(max_docs);
    std::vector<Doc> docs;
    for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        std::size_t words = 1 + rng.below(12);
        for (std::size_t w = 0; w < words; ++w) {
            if (w) text += " ";
            text += vocab[rng.below(12)];
        }
        docs.push_back(Doc{"doc" + std::to_string(i), text});
    }
    return docs;
}

}  // namespace

TEST_CASE("tokenizer lowercases and splits on non-alphanumerics") {
    auto terms = tokenize("Cat, cat! dog-house");
    REQUIRE(terms.size() == 4);
    CHECK(terms[0] == "cat");
    CHECK(terms[1] == "cat");
    CHECK(terms[2] == "dog");
    CHECK(terms[3] == "house");
}

TEST_CASE("term frequencies follow the tokenizer definition") {
    auto corpus = Corpus::build({{"d1", "Cat cat"}});
    CHECK(corpus.term_frequency("cat", "d1") == 2);
}

TEST_CASE("empty corpus and empty query are errors") {
    CHECK_THROWS_AS(Corpus::build({}), ContractError);
    auto corpus = cats_corpus();
    CHECK_THROWS_AS(corpus.search("!!!", 1), ContractError);
    CHECK_THROWS_AS(corpus.search("cat", 0), ContractError);
}

TEST_CASE("punctuation-only document indexes with zero terms") {
    auto corpus = Corpus::build({{"d1", "?!..."}, {"d2", "cat"}});
    CHECK(corpus.size() == 2);
    auto hits = corpus.search("cat", 5);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].doc_id == "d2");
    CHECK(hits[1].score == 0.0);
}

TEST_CASE("rebuilding from the same docs reproduces identical results") {
    auto corpus = cats_corpus();
    auto rebuilt = Corpus::build(corpus.docs());
    for (const char* q : {"cat", "dog", "cat dog"}) {
        auto a = corpus.search(q, 3);
        auto b = rebuilt.search(q, 3);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].doc_id == b[i].doc_id);
            CHECK(a[i].score == b[i].score);
        }
    }
}

TEST_CASE("frequent term ranks the heavier document first") {
    auto corpus = cats_corpus();
    auto hits = corpus.search("cat", 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].doc_id == "d1");
    CHECK(hits[1].doc_id == "d2");

    auto oracle = oracles::bm25_brute_force(corpus.docs(), "cat", 2);
    for (std::size_t i = 0; i < hits.size(); ++i) {
        CHECK(hits[i].doc_id == oracle[i].doc_id);
        CHECK(hits[i].score == doctest::Approx(oracle[i].score).epsilon(1e-12));
    }
}

TEST_CASE("k beyond the corpus returns every doc, best first") {
    auto corpus = cats_corpus();
    auto hits = corpus.search("dog", 5);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].doc_id == "d3");
    auto oracle = oracles::bm25_brute_force(corpus.docs(), "dog", 5);
    CHECK(hits[0].score == doctest::Approx(oracle[0].score).epsilon(1e-12));
}

TEST_CASE("single matching doc with k=1") {
    auto corpus = Corpus::build({{"only", "blue sky"}});
    auto hits = corpus.search("sky", 1);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].doc_id == "only");
}

TEST_CASE("search(k) is a prefix of search(k') for k <= k'") {
    Rng rng(99);
    for (int round = 0; round < 20; ++round) {
        auto corpus = Corpus::build(random_docs(rng, 20));
        auto small = corpus.search("cat dog tree", 3);
        auto large = corpus.search("cat dog tree", 10);
        for (std::size_t i = 0; i < small.size(); ++i) {
            CHECK(small[i].doc_id == large[i].doc_id);
            CHECK(small[i].score == large[i].score);
        }
    }
}

TEST_CASE("scores are invariant to corpus insertion order") {
    Rng rng(7);
    auto docs = random_docs(rng, 20);
    auto corpus = Corpus::build(docs);
    auto shuffled_docs = docs;
    deterministic_shuffle(shuffled_docs, 5);
    auto shuffled = Corpus::build(shuffled_docs);
    auto a = corpus.search("cat tree", docs.size());
    auto b = shuffled.search("cat tree", docs.size());
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].doc_id == b[i].doc_id);  // tie-break depends only on doc_id
        CHECK(a[i].score == doctest::Approx(b[i].score).epsilon(1e-12));
    }
}

TEST_CASE("implementation matches the brute-force oracle on random corpora") {
    Rng rng(2024);
    for (int round = 0; round < 100; ++round) {
        auto docs = random_docs(rng, 100);
        auto corpus = Corpus::build(docs);
        std::string query = round % 2 ? "cat dog" : "tree sky blue";
        auto got = corpus.search(query, docs.size());
        auto expected = oracles::bm25_brute_force(docs, query, docs.size());
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].doc_id == expected[i].doc_id);
            CHECK(std::abs(got[i].score - expected[i].score) < 1e-9);
        }
    }
}

TEST_CASE("corpus loads from JSONL and rejects duplicates") {
    auto path = std::filesystem::temp_directory_path() / "langlab_corpus_test.jsonl";
    {
        std::ofstream out(path);
        out << R"({"id": "a", "text": "cat"})" << "\n";
        out << R"({"id": "b", "text": "dog"})" << "\n";
    }
    auto corpus = Corpus::load_jsonl(path.string());
    CHECK(corpus.size() == 2);
    CHECK(corpus.find("a") != nullptr);

    {
        std::ofstream out(path);
        out << R"({"id": "a", "text": "cat"})" << "\n";
        out << R"({"id": "a", "text": "dog"})" << "\n";
    }
    CHECK_THROWS_AS(Corpus::load_jsonl(path.string()), ContractError);
    std::filesystem::remove(path);
}
