#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "langlab/common.hpp"
#include "langlab/core.hpp"
#include "langlab/evaluate.hpp"
#include "langlab/lm.hpp"
#include "langlab/metrics.hpp"
#include "langlab/programs.hpp"

namespace langlab::optimizers {

struct OptimizerConfig {
    int max_bootstrapped_demos = 4;
    int max_labeled_demos = 2;
    int num_candidates = 8;  // N: search width / loop bound
    int num_trials = 50;
    int num_rules = 20;
    int max_errors = 5000;
    std::optional<std::string> teacher_model;
    std::uint64_t seed = 0;
    int concurrency = 1;

    /// Bootstrapping keeps traces whose metric score passes this bar.
    /// Negative means derive from the metric: 1.0 for binary metrics,
    /// 0.9 for continuous ones.
    double pass_threshold = -1.0;

    int batch_size = 35;
    int batch_full_eval_steps = 5;
    bool exhaustive_fallback = true;

    void validate() const {
        if (max_bootstrapped_demos < 0 || max_labeled_demos < 0 || num_trials < 0 ||
            num_rules < 0 || max_errors < 0)
            throw ContractError("optimizer counts must be nonnegative");
        if (num_candidates < 1) throw ContractError("num_candidates must be >= 1");
    }
};

inline double resolve_pass_threshold(const OptimizerConfig& cfg, const metrics::Scorer& scorer) {
    if (cfg.pass_threshold >= 0.0) return cfg.pass_threshold;
    return scorer.is_continuous() ? 0.9 : 1.0;
}

/// Default configurations per optimizer id.
inline OptimizerConfig preset_config(const std::string& optimizer_id) {
    OptimizerConfig cfg;
    if (optimizer_id == "none") return cfg;
    if (optimizer_id == "bootstrap_fewshot") {
        cfg.max_labeled_demos = 2;
        return cfg;
    }
    if (optimizer_id == "bootstrap_random_search") {
        cfg.max_labeled_demos = 2;
        cfg.num_candidates = 8;
        cfg.concurrency = 16;
        return cfg;
    }
    if (optimizer_id == "mipro") {
        cfg.num_candidates = 12;
        cfg.num_trials = 50;
        cfg.max_bootstrapped_demos = 4;
        cfg.max_labeled_demos = 2;
        cfg.batch_size = 35;
        cfg.batch_full_eval_steps = 5;
        cfg.concurrency = 16;
        return cfg;
    }
    if (optimizer_id == "mipro_lite") {
        cfg.num_candidates = 12;
        cfg.num_trials = 20;
        cfg.max_bootstrapped_demos = 4;
        cfg.max_labeled_demos = 2;
        cfg.batch_size = 35;
        cfg.batch_full_eval_steps = 5;
        cfg.concurrency = 16;
        return cfg;
    }
    if (optimizer_id == "rule_infer") {
        cfg.num_candidates = 10;
        cfg.num_rules = 20;
        cfg.concurrency = 8;
        return cfg;
    }
    if (optimizer_id == "rule_infer_lite") {
        cfg.num_candidates = 10;
        cfg.num_rules = 10;
        cfg.concurrency = 8;
        return cfg;
    }
    throw ConfigError("unknown optimizer '" + optimizer_id + "'");
}

inline bool is_known_optimizer(const std::string& id) {
    return id == "none" || id == "bootstrap_fewshot" || id == "bootstrap_random_search" ||
           id == "mipro" || id == "mipro_lite" || id == "rule_infer" || id == "rule_infer_lite";
}

struct CandidateRecord {
    int index = 0;
    double validation_score = 0.0;  // mean metric score in [0, 1]
    Money cost;                     // optimization spend up to this candidate's evaluation
    std::string provenance;
};

struct OptimizationResult {
    programs::Program program;
    std::string optimizer_id;
    double validation_score = -1.0;  // [0,1]; negative when never measured
    Money optimization_cost;
    std::uint64_t seed = 0;
    std::vector<CandidateRecord> candidates;
};

// ---------------------------------------------------------------------------
// shared pieces
// ---------------------------------------------------------------------------

namespace detail {

inline Money ledger_cost(const harness::RunEnv& env) {
    return env.ledger ? env.ledger->snapshot().total_cost() : Money{};
}

inline std::map<std::string, std::string> example_inputs(const programs::Program& prog,
                                                         const Example& ex) {
    std::map<std::string, std::string> inputs;
    for (const auto& f : prog.task.input_fields) {
        const std::string* v = ex.get(f.name);
        if (!v) throw ContractError("example is missing input field '" + f.name + "'");
        inputs[f.name] = *v;
    }
    return inputs;
}

/// Mean metric score of the program on an example set, in [0, 1]. All spend
/// lands in the optimization ledger phase.
inline double validation_score(const programs::Program& prog, const std::vector<Example>& examples,
                               const metrics::Scorer& scorer, const harness::RunEnv& env,
                               const std::string& model_id, const OptimizerConfig& cfg,
                               std::uint64_t eval_seed) {
    harness::EvalOptions opts;
    opts.model_id = model_id;
    opts.concurrency = cfg.concurrency;
    opts.max_errors = cfg.max_errors;
    opts.phase = lm::Phase::optimization;
    opts.seed = eval_seed;
    return harness::evaluate(prog, examples, scorer, env, opts).aggregate / 100.0;
}

/// Attaches up to max_labeled raw labeled examples, in trainset order, to
/// every predictor whose signature they fully cover.
inline void attach_labeled_demos(programs::Program& prog, const std::vector<Example>& trainset,
                                 int max_labeled) {
    if (max_labeled <= 0) return;
    for (auto& p : prog.predictors) {
        int added = 0;
        for (const auto& ex : trainset) {
            if (added >= max_labeled) break;
            if (!covers_signature(ex, p.signature)) continue;
            Demo d = ex;
            d.origin = ExampleOrigin::labeled;
            p.demos.push_back(std::move(d));
            ++added;
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// BootstrapFewShot
// ---------------------------------------------------------------------------

/// Runs the teacher (the same program, on the teacher model when configured)
/// over the trainset in order; every trace whose final metric score passes
/// the threshold contributes each of its module (inputs, outputs) steps as a
/// bootstrapped demo, until every module holds max_bootstrapped_demos or the
/// trainset is exhausted. Up to max_labeled_demos raw labeled examples are
/// then attached per module. Failures beyond max_errors abort.
inline OptimizationResult bootstrap_fewshot(const programs::Program& program,
                                            const std::vector<Example>& trainset,
                                            const metrics::Scorer& scorer,
                                            const harness::RunEnv& env,
                                            const std::string& model_id,
                                            const OptimizerConfig& cfg) {
    cfg.validate();
    const Money cost_before = detail::ledger_cost(env);
    const std::string teacher = cfg.teacher_model.value_or(model_id);
    const double threshold = resolve_pass_threshold(cfg, scorer);

    OptimizationResult result;
    result.optimizer_id = "bootstrap_fewshot";
    result.seed = cfg.seed;
    result.program = program;

    auto all_full = [&]() {
        for (const auto& p : result.program.predictors)
            if (static_cast<int>(p.demos.size()) < cfg.max_bootstrapped_demos) return false;
        return true;
    };

    int errors = 0;
    if (cfg.max_bootstrapped_demos > 0) {
        for (std::size_t i = 0; i < trainset.size() && !all_full(); ++i) {
            const Example& ex = trainset[i];
            try {
                programs::ExecutionContext ctx;
                ctx.router = env.router;
                ctx.ledger = env.ledger;
                ctx.phase = lm::Phase::optimization;
                ctx.model_id = teacher;
                ctx.seed = mix_seed(cfg.seed, i);
                ctx.temperature = env.temperature;
                ctx.max_tokens = env.max_tokens;
                ctx.corpus = env.corpus;
                ctx.tools = env.tools;
                programs::ProgramOutput out =
                    programs::run_program(program, detail::example_inputs(program, ex), ctx);

                harness::EvalOptions judge_opts;
                judge_opts.model_id = teacher;
                judge_opts.phase = lm::Phase::optimization;
                metrics::JudgeFn judge =
                    harness::make_judge(env, judge_opts, mix_seed(cfg.seed, i * 2 + 1));
                double score = scorer.score(out.outputs, ex, &judge).score;
                if (score < threshold) continue;

                for (const TraceStep& step : out.trace.steps) {
                    if (!step.prediction.parse_ok) continue;
                    auto& p = result.program.predictor(step.module_id);
                    if (static_cast<int>(p.demos.size()) >= cfg.max_bootstrapped_demos) continue;
                    Demo d;
                    d.values = step.inputs;
                    for (const auto& [k, v] : step.prediction.outputs) d.values[k] = v;
                    d.origin = ExampleOrigin::bootstrapped;
                    d.split = Split::train;
                    if (covers_signature(d, p.signature)) p.demos.push_back(std::move(d));
                }
            } catch (const std::exception& e) {
                if (++errors > cfg.max_errors)
                    throw std::runtime_error(
                        "bootstrap_fewshot: failures exceeded max_errors=" +
                        std::to_string(cfg.max_errors) + " (last: " + e.what() + ")");
            }
        }
    }

    detail::attach_labeled_demos(result.program, trainset, cfg.max_labeled_demos);
    result.optimization_cost = detail::ledger_cost(env) - cost_before;
    return result;
}

// ---------------------------------------------------------------------------
// BootstrapFewShotRandomSearch
// ---------------------------------------------------------------------------

/// Candidates: the zero-shot program, the labeled-demos-only program, and
/// num_candidates-2 bootstrapped variants built from distinct seed-derived
/// shuffles of the trainset. Each is scored on the validation set; the
/// highest score wins, earliest candidate on ties.
inline OptimizationResult bootstrap_random_search(const programs::Program& program,
                                                  const std::vector<Example>& trainset,
                                                  const std::vector<Example>& valset,
                                                  const metrics::Scorer& scorer,
                                                  const harness::RunEnv& env,
                                                  const std::string& model_id,
                                                  const OptimizerConfig& cfg) {
    cfg.validate();
    if (valset.empty()) throw ContractError("bootstrap_random_search: valset must be non-empty");
    const Money cost_before = detail::ledger_cost(env);

    std::vector<std::pair<programs::Program, std::string>> candidates;
    candidates.emplace_back(program, "zero-shot");
    {
        programs::Program labeled_only = program;
        detail::attach_labeled_demos(labeled_only, trainset, cfg.max_labeled_demos);
        candidates.emplace_back(std::move(labeled_only), "labeled-only");
    }
    for (int j = 2; j < cfg.num_candidates; ++j) {
        auto shuffled = shuffled_copy(trainset, mix_seed(cfg.seed, static_cast<std::uint64_t>(j)));
        auto boot = bootstrap_fewshot(program, shuffled, scorer, env, model_id, cfg);
        candidates.emplace_back(std::move(boot.program),
                                "bootstrap shuffle seed " + std::to_string(j));
    }

    OptimizationResult result;
    result.optimizer_id = "bootstrap_random_search";
    result.seed = cfg.seed;

    const std::uint64_t eval_seed = mix_seed(cfg.seed, 0xBF5EED);
    int best_index = -1;
    double best_score = -1.0;
    for (std::size_t idx = 0; idx < candidates.size(); ++idx) {
        double mu = detail::validation_score(candidates[idx].first, valset, scorer, env, model_id,
                                             cfg, eval_seed);
        result.candidates.push_back(CandidateRecord{static_cast<int>(idx), mu,
                                                    detail::ledger_cost(env) - cost_before,
                                                    candidates[idx].second});
        if (mu > best_score) {  // strict: earliest candidate wins ties
            best_score = mu;
            best_index = static_cast<int>(idx);
        }
    }

    result.program = candidates[static_cast<std::size_t>(best_index)].first;
    result.validation_score = best_score;
    result.optimization_cost = detail::ledger_cost(env) - cost_before;
    return result;
}

// ---------------------------------------------------------------------------
// Instruction proposal (MIPROv2 building block)
// ---------------------------------------------------------------------------

/// Per-candidate demo materialization: module name -> demo list.
using DemoSet = std::map<std::string, std::vector<Demo>>;
using DemoSets = std::vector<DemoSet>;

/// For every module, produces exactly num_candidates instruction texts.
/// Candidate 0 is always the module's original instruction; the rest come
/// from one proposer LM call each, conditioned on the module signature and a
/// sampled demo set. A proposer slot that yields nothing reuses the original.
inline std::vector<std::vector<std::string>> propose_instructions(
    const programs::Program& program, const DemoSets& demo_sets, const harness::RunEnv& env,
    const std::string& proposer_model, int num_candidates, const OptimizerConfig& cfg) {
    if (num_candidates < 1) throw ContractError("propose_instructions: num_candidates must be >= 1");

    Signature proposer_sig{"instruction_proposer",
                           "Propose one improved instruction for the module described below. "
                           "Answer with the instruction text only.",
                           {{"module", ""}, {"examples", ""}},
                           {{"instruction", ""}}};

    std::vector<std::vector<std::string>> out;
    Rng sampler(mix_seed(cfg.seed, 0x9120905EULL));
    for (std::size_t m = 0; m < program.predictors.size(); ++m) {
        const auto& p = program.predictors[m];
        const Signature sig = p.effective_signature();
        std::vector<std::string> cands{sig.instruction};

        std::string module_desc = "name: " + sig.name + "\ninstruction: " + sig.instruction;
        module_desc += "\ninputs:";
        for (const auto& f : sig.input_fields) module_desc += " " + f.name;
        module_desc += "\noutputs:";
        for (const auto& f : sig.output_fields) module_desc += " " + f.name;

        for (int c = 1; c < num_candidates; ++c) {
            std::string examples_text;
            if (!demo_sets.empty()) {
                const DemoSet& ds = demo_sets[sampler.below(demo_sets.size())];
                if (auto it = ds.find(p.name); it != ds.end()) {
                    for (const auto& d : it->second) {
                        examples_text += render_demo_block(p.signature, d);
                        examples_text += "\n";
                    }
                }
            }
            std::string prompt = render_prompt(
                proposer_sig, {}, {{"module", module_desc}, {"examples", examples_text}}, {});
            lm::LmRequest req;
            req.model_id = proposer_model;
            req.prompt = prompt;
            req.temperature = env.temperature;
            req.max_tokens = env.max_tokens;
            req.seed = static_cast<std::int64_t>(
                mix_seed(cfg.seed, 0xA110'0000ULL + m * 4096 + static_cast<std::uint64_t>(c)));
            Prediction raw = env.router->complete(req);
            if (env.ledger) env.ledger->record(lm::Phase::optimization, proposer_model, raw.usage);
            Prediction parsed = parse_completion(proposer_sig, raw.raw_completion);
            std::string proposal =
                parsed.parse_ok ? trim(parsed.outputs.at("instruction")) : std::string{};
            cands.push_back(proposal.empty() ? sig.instruction : proposal);
        }
        out.push_back(std::move(cands));
    }
    return out;
}

// ---------------------------------------------------------------------------
// MIPROv2-style search
// ---------------------------------------------------------------------------

namespace detail {

struct MiproChoice {
    int instruction = 0;
    int demo_set = 0;
    friend bool operator<(const MiproChoice& a, const MiproChoice& b) {
        return std::tie(a.instruction, a.demo_set) < std::tie(b.instruction, b.demo_set);
    }
    friend bool operator==(const MiproChoice& a, const MiproChoice& b) {
        return a.instruction == b.instruction && a.demo_set == b.demo_set;
    }
};

using MiproConfig = std::vector<MiproChoice>;

inline programs::Program apply_mipro_config(const programs::Program& base,
                                            const std::vector<std::vector<std::string>>& instructions,
                                            const DemoSets& demo_sets, const MiproConfig& config) {
    programs::Program out = base;
    for (std::size_t m = 0; m < out.predictors.size(); ++m) {
        auto& p = out.predictors[m];
        const auto& choice = config[m];
        if (choice.instruction > 0)
            p.instruction_override = instructions[m][static_cast<std::size_t>(choice.instruction)];
        p.demos.clear();
        if (choice.demo_set > 0) {
            const DemoSet& ds = demo_sets[static_cast<std::size_t>(choice.demo_set)];
            if (auto it = ds.find(p.name); it != ds.end()) p.demos = it->second;
        }
    }
    return out;
}

inline std::string mipro_config_id(const MiproConfig& config) {
    std::string id;
    for (const auto& c : config)
        id += "(" + std::to_string(c.instruction) + "," + std::to_string(c.demo_set) + ")";
    return id;
}

}  // namespace detail

/// Search space: a per-module categorical choice of (instruction candidate x
/// demo-set candidate). Trials sample configurations from weights
/// proportional to exp(mean observed minibatch score per choice) and score
/// them on seed-fixed valset minibatches; the best minibatch configuration
/// is fully evaluated every batch_full_eval_steps trials. When the whole
/// grid fits within num_trials and exhaustive_fallback is set, every
/// configuration is fully evaluated instead. Returns the configuration with
/// the best observed full-valset score (the evaluated baseline always
/// participates, so the result is never validation-dominated by it).
inline OptimizationResult mipro(const programs::Program& program,
                                const std::vector<Example>& trainset,
                                const std::vector<Example>& valset,
                                const metrics::Scorer& scorer, const harness::RunEnv& env,
                                const std::string& model_id, const OptimizerConfig& cfg,
                                const std::string& optimizer_id = "mipro") {
    cfg.validate();
    if (valset.empty()) throw ContractError("mipro: valset must be non-empty");
    const Money cost_before = detail::ledger_cost(env);
    const std::string proposer_model = cfg.teacher_model.value_or(model_id);
    const std::size_t module_count = program.predictors.size();

    OptimizationResult result;
    result.optimizer_id = optimizer_id;
    result.seed = cfg.seed;

    // Demo-set candidates: index 0 is empty (zero-shot); the rest come from
    // bootstrap runs over distinct trainset shuffles.
    DemoSets demo_sets;
    demo_sets.push_back({});
    for (int j = 1; j < cfg.num_candidates; ++j) {
        auto shuffled =
            shuffled_copy(trainset, mix_seed(cfg.seed, 0x4D0ULL + static_cast<std::uint64_t>(j)));
        auto boot = bootstrap_fewshot(program, shuffled, scorer, env, model_id, cfg);
        DemoSet ds;
        for (const auto& p : boot.program.predictors) ds[p.name] = p.demos;
        demo_sets.push_back(std::move(ds));
    }

    const auto instructions =
        propose_instructions(program, demo_sets, env, proposer_model, cfg.num_candidates, cfg);

    const int choices_per_module = cfg.num_candidates * cfg.num_candidates;
    double grid_size = 1.0;
    for (std::size_t m = 0; m < module_count; ++m) grid_size *= choices_per_module;

    const std::uint64_t full_eval_seed = mix_seed(cfg.seed, 0xF011EABCULL);
    std::map<detail::MiproConfig, double> full_scores;
    int candidate_index = 0;
    auto full_eval = [&](const detail::MiproConfig& config, const std::string& label) {
        auto it = full_scores.find(config);
        if (it != full_scores.end()) return it->second;
        programs::Program cand =
            detail::apply_mipro_config(program, instructions, demo_sets, config);
        double mu =
            detail::validation_score(cand, valset, scorer, env, model_id, cfg, full_eval_seed);
        full_scores[config] = mu;
        result.candidates.push_back(CandidateRecord{candidate_index++, mu,
                                                    detail::ledger_cost(env) - cost_before,
                                                    label + " " + detail::mipro_config_id(config)});
        return mu;
    };

    const detail::MiproConfig baseline(module_count, detail::MiproChoice{0, 0});
    detail::MiproConfig best_config = baseline;
    double best_full = full_eval(baseline, "baseline");

    auto consider = [&](const detail::MiproConfig& config, double mu) {
        if (mu > best_full) {  // strict: earliest evaluated wins ties
            best_full = mu;
            best_config = config;
        }
    };

    if (cfg.exhaustive_fallback && grid_size <= static_cast<double>(cfg.num_trials)) {
        // Enumerate the whole grid, full evaluation each.
        std::vector<detail::MiproConfig> all{detail::MiproConfig{}};
        for (std::size_t m = 0; m < module_count; ++m) {
            std::vector<detail::MiproConfig> next;
            for (const auto& prefix : all)
                for (int ii = 0; ii < cfg.num_candidates; ++ii)
                    for (int di = 0; di < cfg.num_candidates; ++di) {
                        auto ext = prefix;
                        ext.push_back(detail::MiproChoice{ii, di});
                        next.push_back(std::move(ext));
                    }
            all = std::move(next);
        }
        for (const auto& config : all) consider(config, full_eval(config, "exhaustive"));
    } else if (cfg.num_trials > 0) {
        // Categorical surrogate: weights proportional to exp(mean minibatch
        // score per per-module choice).
        std::vector<std::map<detail::MiproChoice, std::pair<double, int>>> stats(module_count);
        Rng rng(mix_seed(cfg.seed, 0x5EEDULL));
        detail::MiproConfig best_mini_config = baseline;
        double best_mini = -1.0;
        int trial_errors = 0;

        for (int t = 1; t <= cfg.num_trials; ++t) {
            detail::MiproConfig config;
            for (std::size_t m = 0; m < module_count; ++m) {
                std::vector<detail::MiproChoice> options;
                std::vector<double> weights;
                double total = 0.0;
                for (int ii = 0; ii < cfg.num_candidates; ++ii)
                    for (int di = 0; di < cfg.num_candidates; ++di) {
                        detail::MiproChoice c{ii, di};
                        double mean = 0.0;
                        if (auto it = stats[m].find(c); it != stats[m].end() && it->second.second > 0)
                            mean = it->second.first / it->second.second;
                        double w = std::exp(mean);
                        options.push_back(c);
                        weights.push_back(w);
                        total += w;
                    }
                double draw = rng.unit() * total;
                std::size_t pick = 0;
                for (; pick + 1 < options.size(); ++pick) {
                    draw -= weights[pick];
                    if (draw <= 0.0) break;
                }
                config.push_back(options[pick]);
            }

            // Seed-fixed minibatch of the validation set.
            std::vector<Example> batch;
            if (static_cast<int>(valset.size()) <= cfg.batch_size) {
                batch = valset;
            } else {
                std::vector<std::size_t> idx(valset.size());
                for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
                deterministic_shuffle(idx, mix_seed(cfg.seed, 0xB47CULL + static_cast<std::uint64_t>(t)));
                idx.resize(static_cast<std::size_t>(cfg.batch_size));
                for (auto i : idx) batch.push_back(valset[i]);
            }

            double mu_mini = 0.0;
            try {
                programs::Program cand =
                    detail::apply_mipro_config(program, instructions, demo_sets, config);
                mu_mini = detail::validation_score(cand, batch, scorer, env, model_id, cfg,
                                                   mix_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(t)));
            } catch (const std::exception& e) {
                mu_mini = 0.0;
                if (++trial_errors > cfg.max_errors)
                    throw std::runtime_error("mipro: trial failures exceeded max_errors (last: " +
                                             std::string(e.what()) + ")");
            }

            for (std::size_t m = 0; m < module_count; ++m) {
                auto& s = stats[m][config[m]];
                s.first += mu_mini;
                s.second += 1;
            }
            if (mu_mini > best_mini) {
                best_mini = mu_mini;
                best_mini_config = config;
            }
            if (cfg.batch_full_eval_steps > 0 && t % cfg.batch_full_eval_steps == 0)
                consider(best_mini_config, full_eval(best_mini_config, "periodic"));
        }
        consider(best_mini_config, full_eval(best_mini_config, "final"));
    }

    result.program = detail::apply_mipro_config(program, instructions, demo_sets, best_config);
    result.validation_score = best_full;
    result.optimization_cost = detail::ledger_cost(env) - cost_before;
    return result;
}

// ---------------------------------------------------------------------------
// Rule induction (RuleInfer building block)
// ---------------------------------------------------------------------------

/// One inducer call over the pooled successful demos; returns up to
/// num_rules texts parsed from numbered lines of the completion. Prose
/// without numbering yields an empty list.
inline std::vector<std::string> induce_rules(const std::vector<Demo>& demos,
                                             const std::string& instruction,
                                             const harness::RunEnv& env,
                                             const std::string& inducer_model, int num_rules,
                                             std::uint64_t seed, int max_tokens = 512) {
    if (demos.empty()) throw ContractError("induce_rules: demos must be non-empty");

    std::string demo_text;
    for (const auto& d : demos) {
        for (const auto& [k, v] : d.values)
            demo_text += field_label(k) + ": " + langlab::detail::escape_value(v) + "\n";
        demo_text += "\n";
    }

    std::string prompt =
        "Derive general rules from the following successful examples.\n\n"
        "Instruction: " + instruction + "\n\nExamples:\n" + demo_text +
        "List up to " + std::to_string(num_rules) +
        " concise rules, one per line, numbered like '1. ...'.";

    lm::LmRequest req;
    req.model_id = inducer_model;
    req.prompt = prompt;
    req.temperature = env.temperature;
    req.max_tokens = max_tokens;
    req.seed = static_cast<std::int64_t>(seed);
    Prediction raw = env.router->complete(req);
    if (env.ledger) env.ledger->record(lm::Phase::optimization, inducer_model, raw.usage);

    static const std::regex rule_re(R"(^\s*\d+[.)]\s+(.*\S)\s*$)");
    std::vector<std::string> rules;
    for (const auto& line : split_lines(raw.raw_completion)) {
        std::smatch m;
        if (std::regex_match(line, m, rule_re)) {
            rules.push_back(m[1]);
            if (static_cast<int>(rules.size()) >= num_rules) break;
        }
    }
    return rules;
}

// ---------------------------------------------------------------------------
// RuleInfer
// ---------------------------------------------------------------------------

/// Few-shot baseline first, then N candidates, each appending freshly
/// induced rules (seed n) to every module; the best program is replaced only
/// on strict validation improvement.
inline OptimizationResult rule_infer(const programs::Program& program,
                                     const std::vector<Example>& trainset,
                                     const std::vector<Example>& valset,
                                     const metrics::Scorer& scorer, const harness::RunEnv& env,
                                     const std::string& model_id, const OptimizerConfig& cfg,
                                     const std::string& optimizer_id = "rule_infer") {
    cfg.validate();
    if (valset.empty()) throw ContractError("rule_infer: valset must be non-empty");
    const Money cost_before = detail::ledger_cost(env);
    const std::string inducer_model = cfg.teacher_model.value_or(model_id);

    OptimizationResult result;
    result.optimizer_id = optimizer_id;
    result.seed = cfg.seed;

    auto baseline = bootstrap_fewshot(program, trainset, scorer, env, model_id, cfg);
    programs::Program star = baseline.program;
    const std::uint64_t eval_seed = mix_seed(cfg.seed, 0x10FE12ULL);
    double mu_star = detail::validation_score(star, valset, scorer, env, model_id, cfg, eval_seed);
    result.candidates.push_back(CandidateRecord{0, mu_star,
                                                detail::ledger_cost(env) - cost_before,
                                                "few-shot baseline"});

    std::vector<Demo> pooled;
    for (const auto& p : star.predictors)
        for (const auto& d : p.demos)
            if (d.origin == ExampleOrigin::bootstrapped) pooled.push_back(d);

    if (!pooled.empty()) {
        for (int n = 1; n <= cfg.num_candidates; ++n) {
            std::vector<std::string> rules =
                induce_rules(pooled, program.task.instruction, env, inducer_model, cfg.num_rules,
                             mix_seed(cfg.seed, static_cast<std::uint64_t>(n)), env.max_tokens);
            programs::Program candidate = star;
            for (auto& p : candidate.predictors) p.rules = rules;
            double mu_n =
                detail::validation_score(candidate, valset, scorer, env, model_id, cfg, eval_seed);
            result.candidates.push_back(CandidateRecord{n, mu_n,
                                                        detail::ledger_cost(env) - cost_before,
                                                        "rules seed " + std::to_string(n)});
            if (mu_n > mu_star) {  // strict improvement only
                star = candidate;
                mu_star = mu_n;
            }
        }
    }

    result.program = std::move(star);
    result.validation_score = mu_star;
    result.optimization_cost = detail::ledger_cost(env) - cost_before;
    return result;
}

// ---------------------------------------------------------------------------
// Dispatch + serialization
// ---------------------------------------------------------------------------

inline OptimizationResult run_optimizer(const std::string& optimizer_id,
                                        const programs::Program& program,
                                        const std::vector<Example>& trainset,
                                        const std::vector<Example>& valset,
                                        const metrics::Scorer& scorer, const harness::RunEnv& env,
                                        const std::string& model_id, const OptimizerConfig& cfg) {
    if (optimizer_id == "none") {
        OptimizationResult r;
        r.optimizer_id = "none";
        r.seed = cfg.seed;
        r.program = program;
        return r;
    }
    if (optimizer_id == "bootstrap_fewshot")
        return bootstrap_fewshot(program, trainset, scorer, env, model_id, cfg);
    if (optimizer_id == "bootstrap_random_search")
        return bootstrap_random_search(program, trainset, valset, scorer, env, model_id, cfg);
    if (optimizer_id == "mipro" || optimizer_id == "mipro_lite")
        return mipro(program, trainset, valset, scorer, env, model_id, cfg, optimizer_id);
    if (optimizer_id == "rule_infer" || optimizer_id == "rule_infer_lite")
        return rule_infer(program, trainset, valset, scorer, env, model_id, cfg, optimizer_id);
    throw ConfigError("unknown optimizer '" + optimizer_id + "'");
}

inline nlohmann::ordered_json to_json(const OptimizationResult& r) {
    nlohmann::ordered_json candidates = nlohmann::ordered_json::array();
    for (const auto& c : r.candidates)
        candidates.push_back(nlohmann::ordered_json{{"index", c.index},
                                                    {"validation_score", c.validation_score},
                                                    {"cost", c.cost.to_string()},
                                                    {"provenance", c.provenance}});
    nlohmann::ordered_json j = programs::to_json(r.program);
    j["provenance"] = nlohmann::ordered_json{{"optimizer", r.optimizer_id},
                                             {"seed", r.seed},
                                             {"validation_score", r.validation_score},
                                             {"optimization_cost", r.optimization_cost.to_string()},
                                             {"candidates", candidates}};
    return j;
}

}  // namespace langlab::optimizers
