#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "langlab/common.hpp"

namespace langlab {

// ---------------------------------------------------------------------------
// Signatures and examples
// ---------------------------------------------------------------------------

struct Field {
    std::string name;         // identifier, e.g. "search_query"
    std::string description;  // optional human hint
};

/// A typed prompt contract: an instruction plus named input/output fields.
/// Field names must be unique across inputs and outputs, and both sides must
/// be non-empty. The instruction may be empty only before optimization
/// assigns one.
struct Signature {
    std::string name;
    std::string instruction;
    std::vector<Field> input_fields;
    std::vector<Field> output_fields;

    void validate() const {
        if (input_fields.empty() || output_fields.empty())
            throw ContractError("signature '" + name +
                                "' needs at least one input and one output field");
        std::vector<std::string> seen;
        auto check = [&](const Field& f) {
            for (const auto& s : seen)
                if (s == f.name)
                    throw ContractError("signature '" + name + "' has duplicate field '" +
                                        f.name + "'");
            seen.push_back(f.name);
        };
        for (const auto& f : input_fields) check(f);
        for (const auto& f : output_fields) check(f);
    }
};

/// Canonical prompt label for a field name: snake_case words, each
/// capitalized, joined by spaces ("search_query" -> "Search Query").
/// Label matching at parse time is case-sensitive on this form.
inline std::string field_label(std::string_view field_name) {
    std::string out;
    bool word_start = true;
    for (char c : field_name) {
        if (c == '_') {
            out.push_back(' ');
            word_start = true;
        } else {
            out.push_back(word_start ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                                     : c);
            word_start = false;
        }
    }
    return out;
}

enum class ExampleOrigin { labeled, bootstrapped };
enum class Split { train, validation, test };

inline const char* to_string(ExampleOrigin o) {
    return o == ExampleOrigin::labeled ? "labeled" : "bootstrapped";
}
inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        default: return "test";
    }
}

/// One data point: a map from field name to text value. An Example usable as
/// a demo has every input and output field of the owning signature populated.
struct Example {
    std::map<std::string, std::string> values;
    ExampleOrigin origin = ExampleOrigin::labeled;
    Split split = Split::train;

    const std::string* get(const std::string& field) const {
        auto it = values.find(field);
        return it == values.end() ? nullptr : &it->second;
    }
};

/// A demo is a fully populated example attached to a module's prompt.
using Demo = Example;

inline bool covers_signature(const Example& ex, const Signature& sig) {
    for (const auto& f : sig.input_fields)
        if (!ex.values.count(f.name)) return false;
    for (const auto& f : sig.output_fields)
        if (!ex.values.count(f.name)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Predictions and traces
// ---------------------------------------------------------------------------

struct TokenUsage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

/// Result of one LM call. parse_ok=false implies outputs is empty; a parse
/// failure is a value, never an exception, so the harness can score it 0.
struct Prediction {
    std::map<std::string, std::string> outputs;
    std::string raw_completion;
    TokenUsage usage;
    bool parse_ok = false;
};

/// One module invocation inside a program execution.
struct TraceStep {
    std::string module_id;
    std::string rendered_prompt;
    std::map<std::string, std::string> inputs;  // live input values for the call
    Prediction prediction;
};

/// Ordered record of every LM call a program made on one input.
struct Trace {
    std::vector<TraceStep> steps;
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {

/// Demo values are escaped (newline -> literal "\n") so parsing stays
/// line-based and invertible. Live inputs are rendered raw.
inline std::string escape_value(std::string_view v) {
    std::string out;
    out.reserve(v.size());
    for (char c : v) {
        if (c == '\n')
            out += "\\n";
        else
            out.push_back(c);
    }
    return out;
}

inline void append_field_line(std::string& out, const Field& f, const std::string& value,
                              bool escape) {
    out += field_label(f.name);
    out += ": ";
    out += escape ? escape_value(value) : value;
    out += "\n";
}

}  // namespace detail

/// Renders one demo as an input/output field block, one `Label: value` line
/// per field, values newline-escaped.
inline std::string render_demo_block(const Signature& sig, const Demo& demo) {
    std::string out;
    auto value_of = [&](const Field& f) -> const std::string& {
        const std::string* v = demo.get(f.name);
        if (!v)
            throw ContractError("demo for signature '" + sig.name + "' is missing field '" +
                                f.name + "'");
        return *v;
    };
    for (const auto& f : sig.input_fields) detail::append_field_line(out, f, value_of(f), true);
    for (const auto& f : sig.output_fields) detail::append_field_line(out, f, value_of(f), true);
    return out;
}

/// Deterministic prompt rendering. Layout, in order:
///   1. instruction block (omitted when the instruction is empty),
///   2. rules block: "Rules:" followed by numbered lines (omitted when empty),
///   3. each demo as an input/output field block,
///   4. the live input block, ending with the first output field's label.
/// Identical arguments yield byte-identical prompts.
inline std::string render_prompt(const Signature& sig, const std::vector<Demo>& demos,
                                 const std::map<std::string, std::string>& inputs,
                                 const std::vector<std::string>& rules) {
    for (const auto& f : sig.input_fields) {
        if (!inputs.count(f.name))
            throw ContractError("render_prompt: missing input field '" + f.name +
                                "' for signature '" + sig.name + "'");
    }
    std::string out;
    if (!sig.instruction.empty()) {
        out += sig.instruction;
        out += "\n\n";
    }
    if (!rules.empty()) {
        out += "Rules:\n";
        for (size_t i = 0; i < rules.size(); ++i) {
            out += std::to_string(i + 1);
            out += ". ";
            out += rules[i];
            out += "\n";
        }
        out += "\n";
    }
    for (const auto& demo : demos) {
        out += render_demo_block(sig, demo);
        out += "\n";
    }
    for (const auto& f : sig.input_fields)
        detail::append_field_line(out, f, inputs.at(f.name), false);
    out += field_label(sig.output_fields.front().name);
    out += ":";
    return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Scans a completion for the signature's output field labels, one
/// `Label: value` per line (first occurrence wins). All output fields found
/// -> parse_ok=true. Single-output fallback: when the signature has exactly
/// one output field and its label is absent, the whole completion (trimmed)
/// is taken as that field. Otherwise parse_ok=false with empty outputs.
inline Prediction parse_completion(const Signature& sig, const std::string& completion) {
    Prediction pred;
    pred.raw_completion = completion;

    std::map<std::string, std::string> found;
    std::vector<std::string> lines = split_lines(completion);
    for (const auto& f : sig.output_fields) {
        std::string label = field_label(f.name) + ":";
        for (const auto& line : lines) {
            if (starts_with(line, label)) {
                std::string value = line.substr(label.size());
                if (!value.empty() && value.front() == ' ') value.erase(value.begin());
                found[f.name] = value;
                break;
            }
        }
    }

    if (found.size() == sig.output_fields.size()) {
        pred.outputs = std::move(found);
        pred.parse_ok = true;
    } else if (sig.output_fields.size() == 1 && found.empty()) {
        pred.outputs[sig.output_fields.front().name] = trim(completion);
        pred.parse_ok = true;
    }
    return pred;
}

}  // namespace langlab
