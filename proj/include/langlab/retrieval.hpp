#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "langlab/common.hpp"

namespace langlab::retrieval {

struct Doc {
    std::string id;
    std::string text;
};

struct Posting {
    std::size_t doc_index;
    std::int64_t term_frequency;
};

struct SearchHit {
    std::string doc_id;
    double score;
};

/// Tokenization for both documents and queries: lowercase, split on
/// non-alphanumeric characters.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

/// Immutable BM25 index over a document corpus. k1=1.5, b=0.75,
/// idf = ln(1 + (N - df + 0.5) / (df + 0.5)). Scores depend only on corpus
/// content; insertion order matters only through the doc_id tie-break.
class Corpus {
public:
    static constexpr double kK1 = 1.5;
    static constexpr double kB = 0.75;

    static Corpus build(std::vector<Doc> docs) {
        if (docs.empty()) throw ContractError("build_index: corpus must be non-empty");
        Corpus c;
        c.docs_ = std::move(docs);
        std::map<std::string, bool> seen_ids;
        std::int64_t total_len = 0;
        c.doc_lengths_.resize(c.docs_.size());
        for (std::size_t i = 0; i < c.docs_.size(); ++i) {
            const Doc& d = c.docs_[i];
            if (seen_ids.count(d.id))
                throw ContractError("build_index: duplicate doc_id '" + d.id + "'");
            seen_ids[d.id] = true;
            auto terms = tokenize(d.text);
            c.doc_lengths_[i] = static_cast<std::int64_t>(terms.size());
            total_len += c.doc_lengths_[i];
            std::map<std::string, std::int64_t> tf;
            for (const auto& t : terms) ++tf[t];
            for (const auto& [term, count] : tf)
                c.index_[term].push_back(Posting{i, count});
        }
        c.avg_doc_length_ =
            static_cast<double>(total_len) / static_cast<double>(c.docs_.size());
        return c;
    }

    /// Corpus loaded from JSONL: one {"id": ..., "text": ...} object per line.
    static Corpus load_jsonl(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open corpus '" + path + "'");
        std::vector<Doc> docs;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            try {
                auto j = nlohmann::ordered_json::parse(line);
                docs.push_back(Doc{j.at("id").get<std::string>(), j.at("text").get<std::string>()});
            } catch (const std::exception& e) {
                throw ConfigError("corpus '" + path + "' line " + std::to_string(line_no) + ": " +
                                  e.what());
            }
        }
        return build(std::move(docs));
    }

    std::size_t size() const { return docs_.size(); }
    const std::vector<Doc>& docs() const { return docs_; }

    const Doc* find(const std::string& doc_id) const {
        for (const auto& d : docs_)
            if (d.id == doc_id) return &d;
        return nullptr;
    }

    std::int64_t term_frequency(const std::string& term, const std::string& doc_id) const {
        auto it = index_.find(term);
        if (it == index_.end()) return 0;
        for (const auto& p : it->second)
            if (docs_[p.doc_index].id == doc_id) return p.term_frequency;
        return 0;
    }

    /// Top-k docs by BM25, descending score, ties broken by ascending doc_id.
    /// Returns min(k, N) results. Query terms contribute with multiplicity.
    std::vector<SearchHit> search(const std::string& query, std::size_t k) const {
        if (k < 1) throw ContractError("search: k must be >= 1");
        auto terms = tokenize(query);
        if (terms.empty())
            throw ContractError("search: query has no terms after tokenization: '" + query + "'");

        std::vector<double> scores(docs_.size(), 0.0);
        const double n = static_cast<double>(docs_.size());
        for (const auto& term : terms) {
            auto it = index_.find(term);
            if (it == index_.end()) continue;
            const double df = static_cast<double>(it->second.size());
            const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
            for (const auto& p : it->second) {
                const double tf = static_cast<double>(p.term_frequency);
                const double norm =
                    kK1 * (1.0 - kB + kB * static_cast<double>(doc_lengths_[p.doc_index]) /
                                          avg_doc_length_);
                scores[p.doc_index] += idf * tf * (kK1 + 1.0) / (tf + norm);
            }
        }

        std::vector<std::size_t> order(docs_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return docs_[a].id < docs_[b].id;
        });

        std::vector<SearchHit> hits;
        const std::size_t count = std::min(k, docs_.size());
        hits.reserve(count);
        for (std::size_t i = 0; i < count; ++i)
            hits.push_back(SearchHit{docs_[order[i]].id, scores[order[i]]});
        return hits;
    }

private:
    std::vector<Doc> docs_;
    std::map<std::string, std::vector<Posting>> index_;
    std::vector<std::int64_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
};

}  // namespace langlab::retrieval
