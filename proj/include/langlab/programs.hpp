#pragma once

#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "langlab/common.hpp"
#include "langlab/core.hpp"
#include "langlab/lm.hpp"
#include "langlab/retrieval.hpp"

namespace langlab::programs {

// ---------------------------------------------------------------------------
// Program model
// ---------------------------------------------------------------------------

enum class Architecture {
    predict,
    chain_of_thought,
    generator_critic_ranker,
    generator_critic_fuser,
    rag,
    simplified_baleen,
    simplified_baleen_with_inst,
    multihop_summarize,
    rag_based_rank,
    cot_based_vote,
    react,
};

inline const char* architecture_id(Architecture a) {
    switch (a) {
        case Architecture::predict: return "predict";
        case Architecture::chain_of_thought: return "chain_of_thought";
        case Architecture::generator_critic_ranker: return "generator_critic_ranker";
        case Architecture::generator_critic_fuser: return "generator_critic_fuser";
        case Architecture::rag: return "rag";
        case Architecture::simplified_baleen: return "simplified_baleen";
        case Architecture::simplified_baleen_with_inst: return "simplified_baleen_with_inst";
        case Architecture::multihop_summarize: return "multihop_summarize";
        case Architecture::rag_based_rank: return "rag_based_rank";
        case Architecture::cot_based_vote: return "cot_based_vote";
        default: return "react";
    }
}

inline std::optional<Architecture> architecture_from_id(std::string_view id) {
    static const std::pair<const char*, Architecture> table[] = {
        {"predict", Architecture::predict},
        {"baseline", Architecture::predict},  // the zero-shot structured call
        {"chain_of_thought", Architecture::chain_of_thought},
        {"generator_critic_ranker", Architecture::generator_critic_ranker},
        {"generator_critic_fuser", Architecture::generator_critic_fuser},
        {"rag", Architecture::rag},
        {"simplified_baleen", Architecture::simplified_baleen},
        {"simplified_baleen_with_inst", Architecture::simplified_baleen_with_inst},
        {"multihop_summarize", Architecture::multihop_summarize},
        {"rag_based_rank", Architecture::rag_based_rank},
        {"cot_based_vote", Architecture::cot_based_vote},
        {"react", Architecture::react},
    };
    for (const auto& [name, arch] : table)
        if (id == name) return arch;
    return std::nullopt;
}

struct ArchitectureParams {
    int n_candidates = 5;
    int hops = 2;
    int voters = 3;
    int max_steps = 40;
    int top_k = 3;

    void validate() const {
        if (n_candidates < 1 || hops < 1 || voters < 1 || max_steps < 1 || top_k < 1)
            throw ContractError("architecture parameters must all be >= 1");
    }
};

/// One LM-backed step: its prompt contract plus the optimizable state
/// (demos, appended rules, instruction override).
struct Predictor {
    std::string name;
    Signature signature;
    std::vector<Demo> demos;
    std::vector<std::string> rules;
    std::optional<std::string> instruction_override;

    Signature effective_signature() const {
        Signature s = signature;
        if (instruction_override) s.instruction = *instruction_override;
        return s;
    }
};

/// An immutable-once-built composition of predictors. Optimizers copy a
/// Program and rewrite predictor state; executions never mutate it.
struct Program {
    Architecture architecture = Architecture::predict;
    ArchitectureParams params;
    Signature task;  // dataset-level contract; first output field is the answer
    std::vector<Predictor> predictors;

    const std::string& answer_field() const { return task.output_fields.front().name; }

    Predictor& predictor(const std::string& name) {
        for (auto& p : predictors)
            if (p.name == name) return p;
        throw ContractError("program has no predictor '" + name + "'");
    }
    const Predictor& predictor(const std::string& name) const {
        for (const auto& p : predictors)
            if (p.name == name) return p;
        throw ContractError("program has no predictor '" + name + "'");
    }

    void validate() const {
        task.validate();
        params.validate();
        std::vector<std::string> names;
        for (const auto& p : predictors) {
            p.signature.validate();
            for (const auto& n : names)
                if (n == p.name) throw ContractError("duplicate predictor name '" + p.name + "'");
            names.push_back(p.name);
        }
    }
};

struct ProgramOutput {
    std::map<std::string, std::string> outputs;
    Trace trace;
    int lm_calls = 0;  // always equals trace.steps.size()
    bool parse_ok = true;
    int parse_incidents = 0;  // recoverable fallbacks (ranker order, majority vote, ...)
};

struct Tool {
    std::function<std::string(const std::string&)> fn;
    std::string description;
};
using ToolSet = std::map<std::string, Tool>;

struct ExecutionContext {
    lm::LmRouter* router = nullptr;
    lm::CostLedger* ledger = nullptr;  // optional; calls are metered when present
    lm::Phase phase = lm::Phase::evaluation;
    std::string model_id;
    std::uint64_t seed = 0;
    double temperature = 0.0;
    int max_tokens = 512;
    const retrieval::Corpus* corpus = nullptr;
    const ToolSet* tools = nullptr;
};

inline bool requires_retrieval(Architecture a) {
    switch (a) {
        case Architecture::rag:
        case Architecture::simplified_baleen:
        case Architecture::simplified_baleen_with_inst:
        case Architecture::multihop_summarize:
        case Architecture::rag_based_rank: return true;
        default: return false;
    }
}

inline bool requires_tools(Architecture a) { return a == Architecture::react; }

// The manually written conditional-formatting instruction that
// simplified_baleen_with_inst pins onto its answer predictor.
inline const char* kConditionalFormatInstruction =
    "When the answer is a person, respond entirely in lowercase.  When the answer is a place, "
    "ensure your response contains no punctuation.  When the answer is a date, end your response "
    "with “Peace!”. Never end your response with \"Peace!\" under other circumstances.  "
    "When the answer is none of the above categories respond in all caps.";

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Field> with_reasoning(const std::vector<Field>& outputs) {
    for (const auto& f : outputs)
        if (f.name == "reasoning") return outputs;
    std::vector<Field> out;
    out.push_back(Field{"reasoning", "step-by-step explanation"});
    out.insert(out.end(), outputs.begin(), outputs.end());
    return out;
}

inline std::vector<Field> prepend(const Field& f, const std::vector<Field>& fields) {
    std::vector<Field> out{f};
    out.insert(out.end(), fields.begin(), fields.end());
    return out;
}

inline std::vector<Field> append(const std::vector<Field>& fields, const Field& f) {
    std::vector<Field> out = fields;
    out.push_back(f);
    return out;
}

}  // namespace detail

inline Program make_program(Architecture arch, const Signature& task,
                            ArchitectureParams params = {}) {
    task.validate();
    params.validate();
    Program prog;
    prog.architecture = arch;
    prog.params = params;
    prog.task = task;

    const Field context{"context", "retrieved passages"};
    auto add = [&](std::string name, std::vector<Field> inputs, std::vector<Field> outputs,
                   std::string instruction) {
        Predictor p;
        p.name = std::move(name);
        p.signature =
            Signature{prog.task.name + "." + p.name, std::move(instruction), std::move(inputs),
                      std::move(outputs)};
        prog.predictors.push_back(std::move(p));
    };

    switch (arch) {
        case Architecture::predict:
            add("predict", task.input_fields, task.output_fields, task.instruction);
            break;
        case Architecture::chain_of_thought:
            add("cot", task.input_fields, detail::with_reasoning(task.output_fields),
                task.instruction);
            break;
        case Architecture::generator_critic_ranker:
            add("generator", task.input_fields, task.output_fields, task.instruction);
            add("critic", detail::append(task.input_fields, Field{"response", "candidate response"}),
                {Field{"critique", "strengths and weaknesses"}},
                "Critique the candidate response.");
            add("ranker",
                detail::append(task.input_fields,
                               Field{"candidates", "numbered candidate responses with critiques"}),
                {Field{"ranking", "comma-separated candidate indices, best first"}},
                "Rank the candidates from best to worst.");
            break;
        case Architecture::generator_critic_fuser:
            add("generator", task.input_fields, task.output_fields, task.instruction);
            add("critic", detail::append(task.input_fields, Field{"response", "candidate response"}),
                {Field{"critique", "strengths and weaknesses"}},
                "Critique the candidate response.");
            add("fuser",
                detail::append(task.input_fields,
                               Field{"candidates", "numbered candidate responses with critiques"}),
                task.output_fields, "Fuse the candidates into a single response.");
            break;
        case Architecture::rag:
            add("answer", detail::prepend(context, task.input_fields),
                detail::with_reasoning(task.output_fields), task.instruction);
            break;
        case Architecture::simplified_baleen:
        case Architecture::simplified_baleen_with_inst:
            add("generate_query", detail::prepend(context, task.input_fields),
                {Field{"query", "next search query"}},
                "Write a search query that fills gaps in the context.");
            add("answer", detail::prepend(context, task.input_fields),
                detail::with_reasoning(task.output_fields), task.instruction);
            if (arch == Architecture::simplified_baleen_with_inst)
                prog.predictor("answer").instruction_override = kConditionalFormatInstruction;
            break;
        case Architecture::multihop_summarize:
            add("summarize", detail::prepend(context, task.input_fields),
                {Field{"summary", "summary of the retrieved passages"},
                 Field{"next_query", "refined query for the next hop"}},
                task.instruction.empty() ? "Summarize the passages and refine the query."
                                         : task.instruction);
            break;
        case Architecture::rag_based_rank:
            add("generate_query", task.input_fields, {Field{"query", "retrieval query"}},
                "Write a retrieval query for the input.");
            add("rerank",
                detail::append(task.input_fields,
                               Field{"candidates", "numbered candidate labels"}),
                {Field{"ranking", "comma-separated candidate indices, best first"}},
                "Re-rank the candidate labels by relevance.");
            break;
        case Architecture::cot_based_vote:
            add("voter", task.input_fields, detail::with_reasoning(task.output_fields),
                task.instruction);
            add("consolidate",
                detail::append(task.input_fields, Field{"votes", "numbered independent votes"}),
                detail::with_reasoning(task.output_fields),
                "Consolidate the votes into a final answer.");
            break;
        case Architecture::react:
            add("react",
                {Field{"task", "the task to solve"}, Field{"tools", "available tools"},
                 Field{"history", "previous thoughts, actions and observations"}},
                {Field{"thought", "reasoning about the next step"},
                 Field{"action", "tool[argument] or finish[answer]"}},
                task.instruction);
            break;
    }
    prog.validate();
    return prog;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

namespace detail {

class Executor {
public:
    Executor(const Program& prog, ExecutionContext& ctx) : prog_(prog), ctx_(ctx) {
        if (!ctx.router) throw ConfigError("execution context has no LM router");
        if (requires_retrieval(prog.architecture) && !ctx.corpus)
            throw ConfigError(std::string("program '") + architecture_id(prog.architecture) +
                              "' requires a retrieval corpus");
        if (requires_tools(prog.architecture) && !ctx.tools)
            throw ConfigError("react program requires a tool set");
    }

    Prediction call(const Predictor& p, const std::map<std::string, std::string>& inputs) {
        Signature sig = p.effective_signature();
        std::string prompt = render_prompt(sig, p.demos, inputs, p.rules);
        lm::LmRequest req;
        req.model_id = ctx_.model_id;
        req.prompt = prompt;
        req.temperature = ctx_.temperature;
        req.max_tokens = ctx_.max_tokens;
        req.seed = static_cast<std::int64_t>(mix_seed(ctx_.seed, call_index_++));
        Prediction raw = ctx_.router->complete(req);
        if (ctx_.ledger) ctx_.ledger->record(ctx_.phase, ctx_.model_id, raw.usage);
        Prediction parsed = parse_completion(sig, raw.raw_completion);
        parsed.usage = raw.usage;
        out_.trace.steps.push_back(TraceStep{p.name, std::move(prompt), inputs, parsed});
        return parsed;
    }

    ProgramOutput finish(std::map<std::string, std::string> outputs, bool parse_ok) {
        out_.outputs = std::move(outputs);
        out_.parse_ok = parse_ok;
        out_.lm_calls = static_cast<int>(out_.trace.steps.size());
        return std::move(out_);
    }

    void incident() { ++out_.parse_incidents; }

    const Program& prog_;
    ExecutionContext& ctx_;
    ProgramOutput out_;
    std::uint64_t call_index_ = 0;
};

inline std::string join_docs(const std::vector<retrieval::Doc>& docs) {
    std::string out;
    for (size_t i = 0; i < docs.size(); ++i) {
        if (i) out += "\n";
        out += docs[i].text;
    }
    return out;
}

inline void merge_hits(std::vector<retrieval::Doc>& docs, const retrieval::Corpus& corpus,
                       const std::vector<retrieval::SearchHit>& hits) {
    for (const auto& h : hits) {
        bool present = false;
        for (const auto& d : docs)
            if (d.id == h.doc_id) {
                present = true;
                break;
            }
        if (!present) docs.push_back(*corpus.find(h.doc_id));
    }
}

/// A usable query both trims non-empty and survives tokenization.
inline bool usable_query(const std::string& q) {
    return !retrieval::tokenize(q).empty();
}

/// Parses "2,1,3" into 0-based indices; must be a permutation of 0..n-1.
inline std::optional<std::vector<std::size_t>> parse_permutation(const std::string& text,
                                                                 std::size_t n) {
    std::vector<std::size_t> out;
    std::vector<bool> seen(n, false);
    for (const auto& part : split(text, ',')) {
        const std::string t = trim(part);
        if (t.empty()) return std::nullopt;
        for (char c : t)
            if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        std::size_t idx = 0;
        try {
            idx = static_cast<std::size_t>(std::stoull(t));
        } catch (const std::exception&) {
            return std::nullopt;
        }
        if (idx < 1 || idx > n || seen[idx - 1]) return std::nullopt;
        seen[idx - 1] = true;
        out.push_back(idx - 1);
    }
    if (out.size() != n) return std::nullopt;
    return out;
}

inline std::string numbered_list(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += "\n";
        out += std::to_string(i + 1) + ". " + items[i];
    }
    return out;
}

}  // namespace detail

ProgramOutput run_program(const Program& prog, const std::map<std::string, std::string>& inputs,
                          ExecutionContext& ctx);

namespace detail {

inline ProgramOutput run_single_call(Executor& ex, const std::string& predictor_name,
                                     const std::map<std::string, std::string>& inputs) {
    Prediction p = ex.call(ex.prog_.predictor(predictor_name), inputs);
    return ex.finish(p.outputs, p.parse_ok);
}

inline ProgramOutput run_generator_critic(Executor& ex,
                                          const std::map<std::string, std::string>& inputs,
                                          bool ranker) {
    const Program& prog = ex.prog_;
    const int n = prog.params.n_candidates;
    const std::string& answer_field = prog.answer_field();

    std::vector<std::string> candidates;
    for (int i = 0; i < n; ++i) {
        Prediction p = ex.call(prog.predictor("generator"), inputs);
        std::string text;
        if (p.parse_ok) {
            text = p.outputs.count(answer_field) ? p.outputs.at(answer_field) : "";
        } else {
            ex.incident();
        }
        candidates.push_back(std::move(text));
    }

    std::vector<std::string> critiques;
    for (const auto& cand : candidates) {
        auto critic_inputs = inputs;
        critic_inputs["response"] = cand;
        Prediction p = ex.call(prog.predictor("critic"), critic_inputs);
        critiques.push_back(p.parse_ok ? p.outputs.at("critique") : "");
    }

    std::vector<std::string> listing;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        listing.push_back(candidates[i] + " | critique: " + critiques[i]);
    auto final_inputs = inputs;
    final_inputs["candidates"] = numbered_list(listing);

    if (ranker) {
        Prediction p = ex.call(prog.predictor("ranker"), final_inputs);
        std::vector<std::size_t> order(candidates.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        bool ranked = false;
        if (p.parse_ok) {
            if (auto perm = parse_permutation(p.outputs.at("ranking"), candidates.size())) {
                order = *perm;
                ranked = true;
            }
        }
        if (!ranked) ex.incident();  // fall back to generation order

        std::map<std::string, std::string> outputs;
        outputs[answer_field] = candidates[order.front()];
        std::string ranking;
        for (std::size_t i = 0; i < order.size(); ++i)
            ranking += (i ? "," : "") + std::to_string(order[i] + 1);
        outputs["ranking"] = ranking;
        return ex.finish(std::move(outputs), true);
    }

    Prediction p = ex.call(prog.predictor("fuser"), final_inputs);
    return ex.finish(p.outputs, p.parse_ok);
}

inline ProgramOutput run_rag(Executor& ex, const std::map<std::string, std::string>& inputs) {
    const Program& prog = ex.prog_;
    const std::string& query_field = prog.task.input_fields.front().name;
    auto hits = ex.ctx_.corpus->search(inputs.at(query_field),
                                       static_cast<std::size_t>(prog.params.top_k));
    std::vector<retrieval::Doc> docs;
    merge_hits(docs, *ex.ctx_.corpus, hits);

    auto call_inputs = inputs;
    call_inputs["context"] = join_docs(docs);
    Prediction p = ex.call(prog.predictor("answer"), call_inputs);
    return ex.finish(p.outputs, p.parse_ok);
}

inline ProgramOutput run_baleen(Executor& ex, const std::map<std::string, std::string>& inputs) {
    const Program& prog = ex.prog_;
    const std::string& question_field = prog.task.input_fields.front().name;
    const std::string& question = inputs.at(question_field);
    const auto k = static_cast<std::size_t>(prog.params.top_k);

    // Hop 1 retrieves with the raw question; hops 2..H each spend one LM call
    // on a refined query; the final LM call answers. Total calls = hops.
    std::vector<retrieval::Doc> docs;
    merge_hits(docs, *ex.ctx_.corpus, ex.ctx_.corpus->search(question, k));
    for (int hop = 2; hop <= prog.params.hops; ++hop) {
        auto q_inputs = inputs;
        q_inputs["context"] = join_docs(docs);
        Prediction p = ex.call(prog.predictor("generate_query"), q_inputs);
        std::string query = p.parse_ok ? p.outputs.at("query") : "";
        if (!usable_query(query)) {
            ex.incident();
            query = question;
        }
        merge_hits(docs, *ex.ctx_.corpus, ex.ctx_.corpus->search(query, k));
    }

    auto a_inputs = inputs;
    a_inputs["context"] = join_docs(docs);
    Prediction p = ex.call(prog.predictor("answer"), a_inputs);
    return ex.finish(p.outputs, p.parse_ok);
}

inline ProgramOutput run_multihop_summarize(Executor& ex,
                                            const std::map<std::string, std::string>& inputs) {
    const Program& prog = ex.prog_;
    const std::string& claim_field = prog.task.input_fields.front().name;
    const std::string& claim = inputs.at(claim_field);
    const auto k = static_cast<std::size_t>(prog.params.top_k);

    std::vector<retrieval::Doc> docs;
    std::string query = claim;
    for (int hop = 1; hop <= prog.params.hops; ++hop) {
        merge_hits(docs, *ex.ctx_.corpus, ex.ctx_.corpus->search(query, k));
        auto s_inputs = inputs;
        s_inputs["context"] = join_docs(docs);
        Prediction p = ex.call(prog.predictor("summarize"), s_inputs);
        std::string next = p.parse_ok ? p.outputs.at("next_query") : "";
        if (!usable_query(next)) {
            if (hop < prog.params.hops) ex.incident();
            next = claim;
        }
        query = next;
    }

    // The answer is the retrieved documents concatenated as one string, so
    // retrieval-coverage metrics can score it directly.
    std::map<std::string, std::string> outputs;
    outputs[prog.answer_field()] = join_docs(docs);
    return ex.finish(std::move(outputs), true);
}

inline ProgramOutput run_rag_based_rank(Executor& ex,
                                        const std::map<std::string, std::string>& inputs) {
    const Program& prog = ex.prog_;
    const std::string& text_field = prog.task.input_fields.front().name;
    const auto k = static_cast<std::size_t>(prog.params.top_k);

    Prediction qp = ex.call(prog.predictor("generate_query"), inputs);
    std::string query = qp.parse_ok ? qp.outputs.at("query") : "";
    if (!usable_query(query)) {
        ex.incident();
        query = inputs.at(text_field);
    }

    auto hits = ex.ctx_.corpus->search(query, k);
    std::vector<std::string> labels;
    std::vector<std::string> listing;
    for (const auto& h : hits) {
        labels.push_back(h.doc_id);
        listing.push_back(h.doc_id + ": " + ex.ctx_.corpus->find(h.doc_id)->text);
    }

    auto r_inputs = inputs;
    r_inputs["candidates"] = numbered_list(listing);
    Prediction rp = ex.call(prog.predictor("rerank"), r_inputs);
    std::vector<std::size_t> order(labels.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    bool ranked = false;
    if (rp.parse_ok) {
        if (auto perm = parse_permutation(rp.outputs.at("ranking"), labels.size())) {
            order = *perm;
            ranked = true;
        }
    }
    if (!ranked) ex.incident();  // retriever order

    std::string joined;
    for (std::size_t i = 0; i < order.size(); ++i) joined += (i ? ", " : "") + labels[order[i]];
    std::map<std::string, std::string> outputs;
    outputs[prog.answer_field()] = joined;
    return ex.finish(std::move(outputs), true);
}

inline ProgramOutput run_cot_based_vote(Executor& ex,
                                        const std::map<std::string, std::string>& inputs) {
    const Program& prog = ex.prog_;
    const std::string& answer_field = prog.answer_field();

    std::vector<std::string> votes;
    std::vector<std::string> listing;
    for (int v = 0; v < prog.params.voters; ++v) {
        Prediction p = ex.call(prog.predictor("voter"), inputs);
        std::string answer;
        std::string reasoning;
        if (p.parse_ok) {
            answer = p.outputs.count(answer_field) ? p.outputs.at(answer_field) : "";
            reasoning = p.outputs.count("reasoning") ? p.outputs.at("reasoning") : "";
        } else {
            ex.incident();
        }
        votes.push_back(answer);
        listing.push_back(answer + (reasoning.empty() ? "" : " | " + reasoning));
    }

    auto c_inputs = inputs;
    c_inputs["votes"] = numbered_list(listing);
    Prediction p = ex.call(prog.predictor("consolidate"), c_inputs);
    if (p.parse_ok) return ex.finish(p.outputs, true);

    // Majority fallback; ties broken by voter order.
    ex.incident();
    std::string winner;
    std::size_t best = 0;
    for (std::size_t i = 0; i < votes.size(); ++i) {
        std::size_t count = 0;
        for (const auto& v : votes)
            if (v == votes[i]) ++count;
        if (count > best) {
            best = count;
            winner = votes[i];
        }
    }
    std::map<std::string, std::string> outputs;
    outputs[answer_field] = winner;
    return ex.finish(std::move(outputs), true);
}

inline ProgramOutput run_react(Executor& ex, const std::map<std::string, std::string>& inputs) {
    const Program& prog = ex.prog_;
    static const std::regex action_re(R"(^([A-Za-z_][A-Za-z0-9_]*)\[([\s\S]*)\]$)");

    std::string task_text;
    for (const auto& f : prog.task.input_fields) {
        if (!task_text.empty()) task_text += "\n";
        task_text += field_label(f.name) + ": " + inputs.at(f.name);
    }
    std::string tools_text;
    for (const auto& [name, tool] : *ex.ctx_.tools) {
        if (!tools_text.empty()) tools_text += "\n";
        tools_text += name + ": " + tool.description;
    }

    std::string history;
    for (int step = 0; step < prog.params.max_steps; ++step) {
        std::map<std::string, std::string> call_inputs{
            {"task", task_text}, {"tools", tools_text}, {"history", history}};
        Prediction p = ex.call(prog.predictor("react"), call_inputs);

        std::string thought;
        std::string action;
        std::string observation;
        if (!p.parse_ok) {
            ex.incident();
            observation = "Error: could not parse the action.";
        } else {
            thought = p.outputs.at("thought");
            action = trim(p.outputs.at("action"));
            std::smatch m;
            if (!std::regex_match(action, m, action_re)) {
                ex.incident();
                observation = "Error: could not parse action '" + action + "'.";
            } else if (m[1] == "finish") {
                std::map<std::string, std::string> outputs;
                outputs[prog.answer_field()] = m[2];
                return ex.finish(std::move(outputs), true);
            } else if (auto it = ex.ctx_.tools->find(m[1]); it == ex.ctx_.tools->end()) {
                observation = "Error: unknown tool '" + std::string(m[1]) + "'.";
            } else {
                try {
                    observation = it->second.fn(m[2]);
                } catch (const std::exception& e) {
                    observation = std::string("Error: tool failed: ") + e.what();
                }
            }
        }
        history += "Thought: " + thought + "\nAction: " + action + "\nObservation: " +
                   observation + "\n";
    }

    // Step budget exhausted without a finish action.
    std::map<std::string, std::string> outputs;
    outputs[prog.answer_field()] = "";
    return ex.finish(std::move(outputs), true);
}

}  // namespace detail

/// Executes a program on one input. Deterministic under mock backends with a
/// fixed seed; distinct inputs may run concurrently.
inline ProgramOutput run_program(const Program& prog,
                                 const std::map<std::string, std::string>& inputs,
                                 ExecutionContext& ctx) {
    for (const auto& f : prog.task.input_fields)
        if (!inputs.count(f.name))
            throw ContractError("run_program: missing task input '" + f.name + "'");

    detail::Executor ex(prog, ctx);
    switch (prog.architecture) {
        case Architecture::predict: return detail::run_single_call(ex, "predict", inputs);
        case Architecture::chain_of_thought: return detail::run_single_call(ex, "cot", inputs);
        case Architecture::generator_critic_ranker:
            return detail::run_generator_critic(ex, inputs, /*ranker=*/true);
        case Architecture::generator_critic_fuser:
            return detail::run_generator_critic(ex, inputs, /*ranker=*/false);
        case Architecture::rag: return detail::run_rag(ex, inputs);
        case Architecture::simplified_baleen:
        case Architecture::simplified_baleen_with_inst: return detail::run_baleen(ex, inputs);
        case Architecture::multihop_summarize: return detail::run_multihop_summarize(ex, inputs);
        case Architecture::rag_based_rank: return detail::run_rag_based_rank(ex, inputs);
        case Architecture::cot_based_vote: return detail::run_cot_based_vote(ex, inputs);
        default: return detail::run_react(ex, inputs);
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json signature_to_json(const Signature& sig) {
    auto fields = [](const std::vector<Field>& fs) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& f : fs)
            arr.push_back(nlohmann::ordered_json{{"name", f.name}, {"description", f.description}});
        return arr;
    };
    return nlohmann::ordered_json{{"name", sig.name},
                                  {"instruction", sig.instruction},
                                  {"inputs", fields(sig.input_fields)},
                                  {"outputs", fields(sig.output_fields)}};
}

inline Signature signature_from_json(const nlohmann::ordered_json& j) {
    auto fields = [](const nlohmann::ordered_json& arr) {
        std::vector<Field> out;
        for (const auto& f : arr)
            out.push_back(Field{f.at("name").get<std::string>(),
                                f.value("description", std::string{})});
        return out;
    };
    return Signature{j.at("name").get<std::string>(), j.value("instruction", std::string{}),
                     fields(j.at("inputs")), fields(j.at("outputs"))};
}

inline nlohmann::ordered_json example_to_json(const Example& ex) {
    nlohmann::ordered_json values = nlohmann::ordered_json::object();
    for (const auto& [k, v] : ex.values) values[k] = v;
    return nlohmann::ordered_json{
        {"values", values}, {"origin", to_string(ex.origin)}, {"split", to_string(ex.split)}};
}

inline Example example_from_json(const nlohmann::ordered_json& j) {
    Example ex;
    for (auto it = j.at("values").begin(); it != j.at("values").end(); ++it)
        ex.values[it.key()] = it.value().get<std::string>();
    ex.origin = j.value("origin", std::string{"labeled"}) == "bootstrapped"
                    ? ExampleOrigin::bootstrapped
                    : ExampleOrigin::labeled;
    std::string split = j.value("split", std::string{"train"});
    ex.split = split == "validation" ? Split::validation
                                     : (split == "test" ? Split::test : Split::train);
    return ex;
}

inline nlohmann::ordered_json to_json(const Program& prog) {
    nlohmann::ordered_json preds = nlohmann::ordered_json::array();
    for (const auto& p : prog.predictors) {
        nlohmann::ordered_json demos = nlohmann::ordered_json::array();
        for (const auto& d : p.demos) demos.push_back(example_to_json(d));
        nlohmann::ordered_json rules = nlohmann::ordered_json::array();
        for (const auto& r : p.rules) rules.push_back(r);
        preds.push_back(nlohmann::ordered_json{
            {"name", p.name},
            {"signature", signature_to_json(p.signature)},
            {"instruction",
             p.instruction_override ? *p.instruction_override : p.signature.instruction},
            {"instruction_override",
             p.instruction_override ? nlohmann::ordered_json(*p.instruction_override)
                                    : nlohmann::ordered_json(nullptr)},
            {"rules", rules},
            {"demos", demos}});
    }
    return nlohmann::ordered_json{
        {"architecture", architecture_id(prog.architecture)},
        {"params",
         nlohmann::ordered_json{{"n_candidates", prog.params.n_candidates},
                                {"hops", prog.params.hops},
                                {"voters", prog.params.voters},
                                {"max_steps", prog.params.max_steps},
                                {"top_k", prog.params.top_k}}},
        {"task", signature_to_json(prog.task)},
        {"predictors", preds}};
}

inline Program program_from_json(const nlohmann::ordered_json& j) {
    Program prog;
    auto arch = architecture_from_id(j.at("architecture").get<std::string>());
    if (!arch) throw ConfigError("unknown architecture '" +
                                 j.at("architecture").get<std::string>() + "'");
    prog.architecture = *arch;
    const auto& params = j.at("params");
    prog.params.n_candidates = params.value("n_candidates", 5);
    prog.params.hops = params.value("hops", 2);
    prog.params.voters = params.value("voters", 3);
    prog.params.max_steps = params.value("max_steps", 40);
    prog.params.top_k = params.value("top_k", 3);
    prog.task = signature_from_json(j.at("task"));
    for (const auto& pj : j.at("predictors")) {
        Predictor p;
        p.name = pj.at("name").get<std::string>();
        p.signature = signature_from_json(pj.at("signature"));
        if (pj.contains("instruction_override") && !pj.at("instruction_override").is_null())
            p.instruction_override = pj.at("instruction_override").get<std::string>();
        for (const auto& r : pj.at("rules")) p.rules.push_back(r.get<std::string>());
        for (const auto& d : pj.at("demos")) p.demos.push_back(example_from_json(d));
        prog.predictors.push_back(std::move(p));
    }
    prog.validate();
    return prog;
}

}  // namespace langlab::programs
