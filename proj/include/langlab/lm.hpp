#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "langlab/common.hpp"
#include "langlab/core.hpp"
#include "langlab/money.hpp"

namespace langlab::lm {

struct LmRequest {
    std::string model_id;
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 512;
    std::int64_t seed = 0;

    void validate() const {
        if (max_tokens < 1) throw ContractError("LmRequest: max_tokens must be >= 1");
        if (temperature < 0.0) throw ContractError("LmRequest: temperature must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Pricing
// ---------------------------------------------------------------------------

struct PriceEntry {
    Money input_per_1m;   // currency per 1M input tokens
    Money output_per_1m;  // currency per 1M output tokens
};

/// Prices are external configuration, never hard-coded.
/// File format: {"model_id": {"input_per_1m": 2.5, "output_per_1m": 10}}.
/// Values may be JSON numbers or decimal strings; at most 6 fractional digits.
class PriceTable {
public:
    PriceTable() = default;

    void set(const std::string& model_id, PriceEntry entry) {
        if (entry.input_per_1m < Money{} || entry.output_per_1m < Money{})
            throw ConfigError("price for '" + model_id + "' must be nonnegative");
        entries_[model_id] = entry;
    }

    std::optional<PriceEntry> find(const std::string& model_id) const {
        auto it = entries_.find(model_id);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    PriceEntry require(const std::string& model_id) const {
        auto e = find(model_id);
        if (!e) throw ConfigError("no price entry for model '" + model_id + "'");
        return *e;
    }

    static Money parse_price(const nlohmann::ordered_json& v) {
        if (v.is_string()) return Money::parse(v.get<std::string>(), 6);
        if (v.is_number_integer()) return Money::from_units(v.get<std::int64_t>());
        if (v.is_number_float()) return Money::from_double_micro(v.get<double>());
        throw ConfigError("price value must be a number or decimal string");
    }

    static PriceTable from_json(const nlohmann::ordered_json& j) {
        PriceTable t;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& e = it.value();
            if (!e.contains("input_per_1m") || !e.contains("output_per_1m"))
                throw ConfigError("price entry for '" + it.key() +
                                  "' needs input_per_1m and output_per_1m");
            t.set(it.key(), PriceEntry{parse_price(e["input_per_1m"]),
                                       parse_price(e["output_per_1m"])});
        }
        return t;
    }

    static PriceTable load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open price table '" + path + "'");
        nlohmann::ordered_json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ConfigError("price table '" + path + "': " + e.what());
        }
        return from_json(j);
    }

private:
    std::map<std::string, PriceEntry> entries_;
};

/// Linear token pricing: input_tokens*in_price/1e6 + output_tokens*out_price/1e6,
/// exact decimal arithmetic.
inline Money compute_cost(const TokenUsage& usage, const PriceEntry& price) {
    return scale_price(usage.input_tokens, price.input_per_1m) +
           scale_price(usage.output_tokens, price.output_per_1m);
}

// ---------------------------------------------------------------------------
// Cost ledger
// ---------------------------------------------------------------------------

enum class Phase { optimization, evaluation };

inline const char* to_string(Phase p) {
    return p == Phase::optimization ? "optimization" : "evaluation";
}

struct PhaseTotals {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
    Money cost;
};

struct LedgerSnapshot {
    PhaseTotals optimization;
    PhaseTotals evaluation;
    std::int64_t call_count = 0;

    PhaseTotals& phase(Phase p) { return p == Phase::optimization ? optimization : evaluation; }
    const PhaseTotals& phase(Phase p) const {
        return p == Phase::optimization ? optimization : evaluation;
    }
    Money total_cost() const { return optimization.cost + evaluation.cost; }
};

struct CallRecord {
    Phase phase;
    std::string model_id;
    TokenUsage usage;
    Money cost;
};

/// Accepts concurrent records; snapshots are linearizable and totals always
/// equal the sum of the logged calls. Models without a price entry are
/// metered at zero cost (recording never fails).
class CostLedger {
public:
    CostLedger() = default;
    explicit CostLedger(PriceTable prices) : prices_(std::move(prices)) {}

    Money record(Phase phase, const std::string& model_id, const TokenUsage& usage) {
        Money cost;
        if (auto price = prices_.find(model_id)) cost = compute_cost(usage, *price);
        std::lock_guard<std::mutex> lock(mu_);
        PhaseTotals& t = totals_.phase(phase);
        t.input_tokens += usage.input_tokens;
        t.output_tokens += usage.output_tokens;
        t.cost += cost;
        totals_.call_count += 1;
        log_.push_back(CallRecord{phase, model_id, usage, cost});
        return cost;
    }

    LedgerSnapshot snapshot() const {
        std::lock_guard<std::mutex> lock(mu_);
        return totals_;
    }

    std::vector<CallRecord> call_log() const {
        std::lock_guard<std::mutex> lock(mu_);
        return log_;
    }

    const PriceTable& prices() const { return prices_; }

private:
    PriceTable prices_;
    mutable std::mutex mu_;
    LedgerSnapshot totals_;
    std::vector<CallRecord> log_;
};

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

/// A backend returns the completion text plus exact token usage in a
/// Prediction (outputs stay empty until the caller parses them against a
/// signature). Mock backends are deterministic given (prompt, seed,
/// temperature) and safe for unbounded concurrent callers.
class LmBackend {
public:
    virtual ~LmBackend() = default;
    virtual Prediction complete(const LmRequest& req) = 0;
};

inline Prediction make_mock_prediction(const LmRequest& req, std::string completion) {
    Prediction p;
    p.usage.input_tokens = word_count(req.prompt);
    p.usage.output_tokens = word_count(completion);
    p.raw_completion = std::move(completion);
    return p;
}

/// Table-driven mock. Resolution order: exact prompt match, then ordered
/// substring rules, then the configured default. Unmapped prompts return the
/// default, never an error, so optimizers can probe freely.
class ScriptedMock : public LmBackend {
public:
    struct Script {
        std::map<std::string, std::string> exact;
        std::vector<std::pair<std::string, std::string>> contains;  // checked in order
        std::string default_completion;

        std::optional<std::string> resolve(const std::string& prompt) const {
            if (auto it = exact.find(prompt); it != exact.end()) return it->second;
            for (const auto& [needle, completion] : contains)
                if (langlab::contains(prompt, needle)) return completion;
            return std::nullopt;
        }
    };

    ScriptedMock() = default;
    explicit ScriptedMock(Script script) : script_(std::move(script)) {}
    ScriptedMock(std::map<std::string, std::string> exact, std::string default_completion) {
        script_.exact = std::move(exact);
        script_.default_completion = std::move(default_completion);
    }

    Prediction complete(const LmRequest& req) override {
        req.validate();
        if (auto by_model = model_scripts_.find(req.model_id); by_model != model_scripts_.end()) {
            if (auto r = by_model->second.resolve(req.prompt))
                return make_mock_prediction(req, *r);
            if (!by_model->second.default_completion.empty())
                return make_mock_prediction(req, by_model->second.default_completion);
        }
        if (auto r = script_.resolve(req.prompt)) return make_mock_prediction(req, *r);
        return make_mock_prediction(req, script_.default_completion);
    }

    void set_model_script(const std::string& model_id, Script script) {
        model_scripts_[model_id] = std::move(script);
    }

    static Script script_from_json(const nlohmann::ordered_json& j) {
        Script s;
        if (j.contains("default")) s.default_completion = j["default"].get<std::string>();
        if (j.contains("exact"))
            for (auto it = j["exact"].begin(); it != j["exact"].end(); ++it)
                s.exact[it.key()] = it.value().get<std::string>();
        if (j.contains("contains"))
            for (const auto& rule : j["contains"])
                s.contains.emplace_back(rule.at("needle").get<std::string>(),
                                        rule.at("completion").get<std::string>());
        return s;
    }

    /// File format: the Script fields plus optional "by_model" overrides.
    static std::shared_ptr<ScriptedMock> load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open mock script '" + path + "'");
        nlohmann::ordered_json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ConfigError("mock script '" + path + "': " + e.what());
        }
        auto mock = std::make_shared<ScriptedMock>(script_from_json(j));
        if (j.contains("by_model"))
            for (auto it = j["by_model"].begin(); it != j["by_model"].end(); ++it)
                mock->set_model_script(it.key(), script_from_json(it.value()));
        return mock;
    }

private:
    Script script_;
    std::map<std::string, Script> model_scripts_;
};

/// Mock defined by an arbitrary pure function of the request. The function
/// must be deterministic for program determinism to hold.
class FunctionalMock : public LmBackend {
public:
    using Fn = std::function<std::string(const LmRequest&)>;
    explicit FunctionalMock(Fn fn) : fn_(std::move(fn)) {}

    Prediction complete(const LmRequest& req) override {
        req.validate();
        return make_mock_prediction(req, fn_(req));
    }

private:
    Fn fn_;
};

/// Maps model ids to backends. A default backend, when set, serves every
/// model id without an explicit route; otherwise unknown models are a
/// configuration error.
class LmRouter {
public:
    LmRouter() = default;
    explicit LmRouter(std::shared_ptr<LmBackend> default_backend)
        : default_backend_(std::move(default_backend)) {}

    void set_default(std::shared_ptr<LmBackend> backend) { default_backend_ = std::move(backend); }
    void route(const std::string& model_id, std::shared_ptr<LmBackend> backend) {
        routes_[model_id] = std::move(backend);
    }

    Prediction complete(const LmRequest& req) {
        if (auto it = routes_.find(req.model_id); it != routes_.end())
            return it->second->complete(req);
        if (default_backend_) return default_backend_->complete(req);
        throw ConfigError("no backend configured for model '" + req.model_id + "'");
    }

private:
    std::map<std::string, std::shared_ptr<LmBackend>> routes_;
    std::shared_ptr<LmBackend> default_backend_;
};

}  // namespace langlab::lm
