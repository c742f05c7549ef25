#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <thread>
#include <vector>

#include "langlab/common.hpp"
#include "langlab/core.hpp"
#include "langlab/lm.hpp"
#include "langlab/metrics.hpp"
#include "langlab/programs.hpp"

namespace langlab::harness {

/// Runs fn(0..n-1) on up to `concurrency` workers pulling from a shared
/// counter. fn must not throw.
template <typename Fn>
void parallel_for(std::size_t n, int concurrency, Fn&& fn) {
    if (n == 0) return;
    std::size_t workers = std::min(static_cast<std::size_t>(std::max(concurrency, 1)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& t : threads) t.join();
}

/// Execution wiring shared by every call a run makes.
struct RunEnv {
    lm::LmRouter* router = nullptr;
    lm::CostLedger* ledger = nullptr;
    const retrieval::Corpus* corpus = nullptr;
    const programs::ToolSet* tools = nullptr;
    double temperature = 0.0;
    int max_tokens = 512;
};

struct EvalOptions {
    std::string model_id;
    int concurrency = 1;
    int max_errors = 5000;
    lm::Phase phase = lm::Phase::evaluation;
    std::uint64_t seed = 0;
};

struct EvalResult {
    std::vector<double> per_example_scores;  // indexed by example position
    double aggregate = 0.0;                  // 100 x mean score
    Money cost;                              // ledger delta for this evaluation
    std::int64_t lm_calls = 0;
    int errors = 0;
};

/// The judge used by LM-graded metrics is the model under evaluation itself;
/// its calls are metered in the same phase as the evaluation.
inline metrics::JudgeFn make_judge(const RunEnv& env, const EvalOptions& opts,
                                   std::uint64_t call_seed) {
    return [&env, opts, call_seed](const std::string& prompt) {
        lm::LmRequest req;
        req.model_id = opts.model_id;
        req.prompt = prompt;
        req.temperature = env.temperature;
        req.max_tokens = env.max_tokens;
        req.seed = static_cast<std::int64_t>(call_seed);
        Prediction p = env.router->complete(req);
        if (env.ledger) env.ledger->record(opts.phase, opts.model_id, p.usage);
        return p.raw_completion;
    };
}

/// Scores a program over an example set on a bounded worker pool.
///
/// Per-example failures (backend exceptions, metric errors) score 0 and
/// count toward max_errors; exceeding the cap aborts with a diagnostic. The
/// aggregate is the unweighted mean scaled to [0, 100] and is independent of
/// worker count and completion order.
inline EvalResult evaluate(const programs::Program& prog, const std::vector<Example>& examples,
                           const metrics::Scorer& scorer, const RunEnv& env,
                           const EvalOptions& opts) {
    if (examples.empty()) throw ContractError("evaluate: example set must be non-empty");
    if (!env.router) throw ConfigError("evaluate: no LM router configured");

    const lm::LedgerSnapshot before =
        env.ledger ? env.ledger->snapshot() : lm::LedgerSnapshot{};

    EvalResult result;
    result.per_example_scores.assign(examples.size(), 0.0);
    std::atomic<int> errors{0};
    std::atomic<bool> aborted{false};
    std::string first_error;
    std::mutex first_error_mu;

    parallel_for(examples.size(), opts.concurrency, [&](std::size_t i) {
        if (aborted.load()) return;
        const Example& ex = examples[i];
        try {
            programs::ExecutionContext ctx;
            ctx.router = env.router;
            ctx.ledger = env.ledger;
            ctx.phase = opts.phase;
            ctx.model_id = opts.model_id;
            ctx.seed = mix_seed(opts.seed, i);
            ctx.temperature = env.temperature;
            ctx.max_tokens = env.max_tokens;
            ctx.corpus = env.corpus;
            ctx.tools = env.tools;

            std::map<std::string, std::string> inputs;
            for (const auto& f : prog.task.input_fields) {
                const std::string* v = ex.get(f.name);
                if (!v) throw ContractError("example is missing input field '" + f.name + "'");
                inputs[f.name] = *v;
            }
            programs::ProgramOutput out = programs::run_program(prog, inputs, ctx);
            metrics::JudgeFn judge = make_judge(env, opts, mix_seed(opts.seed, i * 2 + 1));
            result.per_example_scores[i] = scorer.score(out.outputs, ex, &judge).score;
        } catch (const std::exception& e) {
            result.per_example_scores[i] = 0.0;
            int seen = errors.fetch_add(1) + 1;
            {
                std::lock_guard<std::mutex> lock(first_error_mu);
                if (first_error.empty()) first_error = e.what();
            }
            if (seen > opts.max_errors) aborted.store(true);
        }
    });

    if (aborted.load())
        throw std::runtime_error("evaluate: error count exceeded max_errors=" +
                                 std::to_string(opts.max_errors) + " (first error: " +
                                 first_error + ")");

    result.errors = errors.load();
    double sum = 0.0;
    for (double s : result.per_example_scores) sum += s;
    result.aggregate = 100.0 * sum / static_cast<double>(examples.size());

    if (env.ledger) {
        const lm::LedgerSnapshot after = env.ledger->snapshot();
        result.cost = after.phase(opts.phase).cost - before.phase(opts.phase).cost;
        result.lm_calls = after.call_count - before.call_count;
    }
    return result;
}

}  // namespace langlab::harness
