#pragma once

#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "langlab/common.hpp"
#include "langlab/core.hpp"

namespace langlab::metrics {

/// Every metric maps (prediction, gold) to a score in [0, 1].
struct MetricResult {
    double score = 0.0;
    std::string detail;  // judge rationale, extraction used, failure flags
};

// ---------------------------------------------------------------------------
// exact_match
// ---------------------------------------------------------------------------

/// Normalization: casefold (ASCII), trim, collapse internal whitespace,
/// strip terminal punctuation.
inline std::string normalize_answer(std::string_view s) {
    std::string folded = to_lower(s);
    std::string collapsed;
    bool pending_space = false;
    for (char c : folded) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !collapsed.empty();
        } else {
            if (pending_space) collapsed.push_back(' ');
            pending_space = false;
            collapsed.push_back(c);
        }
    }
    static const std::string terminal = ".!?,;:";
    while (!collapsed.empty() &&
           (terminal.find(collapsed.back()) != std::string::npos || collapsed.back() == ' '))
        collapsed.pop_back();
    return collapsed;
}

inline MetricResult exact_match(const std::string& pred, const std::string& gold) {
    bool eq = normalize_answer(pred) == normalize_answer(gold);
    return MetricResult{eq ? 1.0 : 0.0, ""};
}

// ---------------------------------------------------------------------------
// numeric_match
// ---------------------------------------------------------------------------

/// Extracts the last number token (optionally comma-grouped, optionally
/// decimal) from the text. Answers conventionally end solutions.
inline std::optional<long double> extract_last_number(const std::string& text) {
    static const std::regex number_re(
        R"([-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?)");
    std::optional<std::string> last;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), number_re);
         it != std::sregex_iterator(); ++it)
        last = it->str();
    if (!last) return std::nullopt;
    std::string cleaned;
    for (char c : *last)
        if (c != ',') cleaned.push_back(c);
    return std::strtold(cleaned.c_str(), nullptr);
}

inline MetricResult numeric_match(const std::string& pred, const std::string& gold) {
    auto p = extract_last_number(pred);
    auto g = extract_last_number(gold);
    if (!p || !g) return MetricResult{0.0, "no extractable number"};
    MetricResult r;
    r.score = (*p == *g) ? 1.0 : 0.0;
    r.detail = "extracted " + std::to_string(static_cast<double>(*p));
    return r;
}

// ---------------------------------------------------------------------------
// boxed_match
// ---------------------------------------------------------------------------

/// Innermost balanced \boxed{...} content, or nullopt when no box exists.
inline std::optional<std::string> extract_boxed(const std::string& text) {
    static const std::string tag = "\\boxed{";
    auto pos = text.find(tag);
    if (pos == std::string::npos) return std::nullopt;
    std::size_t start = pos + tag.size();
    int depth = 1;
    for (std::size_t i = start; i < text.size(); ++i) {
        if (text[i] == '{') ++depth;
        if (text[i] == '}') {
            --depth;
            if (depth == 0) {
                std::string content = text.substr(start, i - start);
                if (auto inner = extract_boxed(content)) return inner;
                return content;
            }
        }
    }
    return std::nullopt;  // unbalanced
}

inline std::string strip_whitespace(std::string_view s) {
    std::string out;
    for (char c : s)
        if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
    return out;
}

/// String equivalence on whitespace-stripped box contents. Deliberately not
/// numeric: \boxed{0.75} does not match a gold of 3/4.
inline MetricResult boxed_match(const std::string& pred, const std::string& gold) {
    auto box = extract_boxed(pred);
    if (!box) return MetricResult{0.0, "no \\boxed tag found"};
    bool eq = strip_whitespace(*box) == strip_whitespace(gold);
    return MetricResult{eq ? 1.0 : 0.0, "boxed content: " + *box};
}

// ---------------------------------------------------------------------------
// rank_precision
// ---------------------------------------------------------------------------

/// RP = |top-R(ranked) ∩ gold| / R with R = |gold|.
inline MetricResult rank_precision(const std::vector<std::string>& ranked,
                                   const std::set<std::string>& gold) {
    if (gold.empty()) throw ContractError("rank_precision: gold set must be non-empty");
    const std::size_t r = gold.size();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranked.size() && i < r; ++i)
        if (gold.count(ranked[i])) ++hits;
    return MetricResult{static_cast<double>(hits) / static_cast<double>(r), ""};
}

// ---------------------------------------------------------------------------
// semantic_f1
// ---------------------------------------------------------------------------

/// Judge callback: takes a rubric prompt, returns the raw completion text.
/// The caller owns backend wiring and usage metering.
using JudgeFn = std::function<std::string(const std::string& prompt)>;

inline std::string semantic_f1_prompt(const std::string& pred, const std::string& gold) {
    return "You are grading a predicted answer against a gold answer.\n"
           "Report precision (the fraction of the prediction supported by the gold answer) "
           "and recall (the fraction of the gold answer covered by the prediction), each as a "
           "number between 0 and 1.\n\n"
           "Gold Answer: " + gold + "\n"
           "Predicted Answer: " + pred + "\n\n"
           "Respond with exactly two lines:\n"
           "Precision: <value>\n"
           "Recall: <value>";
}

/// One judge call with a fixed rubric; F1 is the harmonic mean of the
/// judge's parsed precision/recall (0 when both are 0). A judge completion
/// that cannot be parsed scores 0 with a detail flag.
inline MetricResult semantic_f1(const std::string& pred, const std::string& gold,
                                const JudgeFn& judge) {
    if (!judge) throw ConfigError("semantic_f1: no judge configured");
    Signature rubric{"semantic_f1_rubric",
                     "",
                     {{"gold_answer", ""}, {"predicted_answer", ""}},
                     {{"precision", ""}, {"recall", ""}}};
    const std::string completion = judge(semantic_f1_prompt(pred, gold));
    Prediction parsed = parse_completion(rubric, completion);
    if (!parsed.parse_ok) return MetricResult{0.0, "judge parse failure"};

    auto read_unit = [](const std::string& text) -> std::optional<double> {
        const char* begin = text.c_str();
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin || std::isnan(v)) return std::nullopt;
        return std::clamp(v, 0.0, 1.0);
    };
    auto p = read_unit(parsed.outputs.at("precision"));
    auto r = read_unit(parsed.outputs.at("recall"));
    if (!p || !r) return MetricResult{0.0, "judge parse failure"};
    double f1 = (*p + *r == 0.0) ? 0.0 : 2.0 * (*p) * (*r) / (*p + *r);
    return MetricResult{f1, "precision=" + std::to_string(*p) + " recall=" + std::to_string(*r)};
}

// ---------------------------------------------------------------------------
// hover_retrieval
// ---------------------------------------------------------------------------

/// 1.0 iff, for every supporting document, at least one of its facts appears
/// in the concatenation of the retrieved strings.
inline MetricResult hover_retrieval(const std::vector<std::string>& retrieved,
                                    const std::map<std::string, std::vector<std::string>>& supporting) {
    if (supporting.empty()) throw ContractError("hover_retrieval: supporting map must be non-empty");
    std::string joined;
    for (const auto& r : retrieved) {
        joined += r;
        joined += "\n";
    }
    for (const auto& [doc, facts] : supporting) {
        bool covered = false;
        for (const auto& fact : facts)
            if (contains(joined, fact)) {
                covered = true;
                break;
            }
        if (!covered) return MetricResult{0.0, "uncovered document: " + doc};
    }
    return MetricResult{1.0, ""};
}

// ---------------------------------------------------------------------------
// Scorer: binds a metric id to a task's answer field
// ---------------------------------------------------------------------------

/// Custom metrics plug in as callables with the same shape; code-execution
/// style verifiers are expected to arrive through this hook rather than being
/// built in.
using CustomMetricFn =
    std::function<MetricResult(const std::string& pred, const std::string& gold)>;

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    for (auto& part : split(text, ',')) {
        std::string t = trim(part);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

class Scorer {
public:
    Scorer(std::string metric_id, std::string answer_field)
        : metric_id_(std::move(metric_id)), answer_field_(std::move(answer_field)) {
        if (!is_known(metric_id_))
            throw ConfigError("unknown metric '" + metric_id_ + "'");
    }

    static Scorer custom(std::string id, std::string answer_field, CustomMetricFn fn) {
        Scorer s;
        s.metric_id_ = std::move(id);
        s.answer_field_ = std::move(answer_field);
        s.custom_ = std::move(fn);
        return s;
    }

    static bool is_known(const std::string& id) {
        return id == "exact_match" || id == "numeric_match" || id == "boxed_match" ||
               id == "rank_precision" || id == "semantic_f1" || id == "hover_retrieval";
    }

    const std::string& id() const { return metric_id_; }
    const std::string& answer_field() const { return answer_field_; }

    /// True when the metric yields graded scores rather than {0, 1}; used to
    /// pick the default bootstrap pass threshold.
    bool is_continuous() const { return metric_id_ == "semantic_f1" || metric_id_ == "rank_precision"; }

    MetricResult score_texts(const std::string& pred, const std::string& gold,
                             const JudgeFn* judge = nullptr) const {
        if (custom_) return custom_(pred, gold);
        if (metric_id_ == "exact_match") return exact_match(pred, gold);
        if (metric_id_ == "numeric_match") return numeric_match(pred, gold);
        if (metric_id_ == "boxed_match") return boxed_match(pred, gold);
        if (metric_id_ == "rank_precision") {
            auto gold_list = split_list(gold);
            return rank_precision(split_list(pred),
                                  std::set<std::string>(gold_list.begin(), gold_list.end()));
        }
        if (metric_id_ == "semantic_f1") {
            if (!judge || !*judge) throw ConfigError("semantic_f1 requires a judge LM");
            return semantic_f1(pred, gold, *judge);
        }
        if (metric_id_ == "hover_retrieval") {
            std::map<std::string, std::vector<std::string>> supporting;
            try {
                auto j = nlohmann::ordered_json::parse(gold);
                for (auto it = j.begin(); it != j.end(); ++it)
                    for (const auto& fact : it.value())
                        supporting[it.key()].push_back(fact.get<std::string>());
            } catch (const std::exception& e) {
                throw ConfigError(std::string("hover_retrieval gold must be a JSON map "
                                              "{doc: [facts]}: ") + e.what());
            }
            return hover_retrieval({pred}, supporting);
        }
        throw ConfigError("unknown metric '" + metric_id_ + "'");
    }

    /// Scores a program's output map against a gold example. A missing answer
    /// field (e.g. after a parse failure) scores 0.
    MetricResult score(const std::map<std::string, std::string>& pred_outputs,
                       const Example& gold, const JudgeFn* judge = nullptr) const {
        auto pred_it = pred_outputs.find(answer_field_);
        if (pred_it == pred_outputs.end())
            return MetricResult{0.0, "missing output field '" + answer_field_ + "'"};
        const std::string* gold_value = gold.get(answer_field_);
        if (!gold_value)
            throw ConfigError("gold example is missing field '" + answer_field_ + "'");
        return score_texts(pred_it->second, *gold_value, judge);
    }

private:
    Scorer() = default;

    std::string metric_id_;
    std::string answer_field_;
    CustomMetricFn custom_;
};

}  // namespace langlab::metrics
