#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "langlab/common.hpp"
#include "langlab/core.hpp"

namespace langlab::harness {

struct SplitSpec {
    std::size_t train = 0;
    std::size_t validation = 0;
    std::size_t test = 0;

    std::size_t total() const { return train + validation + test; }
};

/// A task dataset: examples plus the task signature implied by their fields
/// and the metric used to score predictions. Split membership is a
/// deterministic function of the seed.
struct Dataset {
    std::string name;
    Signature task;
    std::vector<Example> examples;  // shuffled, split-assigned
    std::string metric_id;
    SplitSpec split_spec;
    std::uint64_t seed = 0;

    std::vector<Example> split(Split s) const {
        std::vector<Example> out;
        for (const auto& ex : examples)
            if (ex.split == s) out.push_back(ex);
        return out;
    }

    const std::string& answer_field() const { return task.output_fields.front().name; }
};

/// Loads JSONL ({"inputs": {...}, "outputs": {...}} per line), shuffles
/// deterministically by seed and assigns splits in train/validation/test
/// order. Duplicate lines are preserved. Every line must carry the same
/// field names as the first.
inline Dataset load_dataset(const std::string& path, const std::string& name,
                            const std::string& metric_id, const std::string& instruction,
                            const SplitSpec& split_spec, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open dataset '" + path + "'");

    Dataset ds;
    ds.name = name;
    ds.metric_id = metric_id;
    ds.split_spec = split_spec;
    ds.seed = seed;

    std::string line;
    std::size_t line_no = 0;
    bool have_signature = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ConfigError("dataset '" + path + "' line " + std::to_string(line_no) + ": " +
                              e.what());
        }
        if (!j.contains("inputs") || !j.contains("outputs"))
            throw ConfigError("dataset '" + path + "' line " + std::to_string(line_no) +
                              ": expected {\"inputs\": ..., \"outputs\": ...}");

        if (!have_signature) {
            ds.task.name = name;
            ds.task.instruction = instruction;
            for (auto it = j["inputs"].begin(); it != j["inputs"].end(); ++it)
                ds.task.input_fields.push_back(Field{it.key(), ""});
            for (auto it = j["outputs"].begin(); it != j["outputs"].end(); ++it)
                ds.task.output_fields.push_back(Field{it.key(), ""});
            ds.task.validate();
            have_signature = true;
        }

        Example ex;
        auto read_side = [&](const nlohmann::ordered_json& side, const std::vector<Field>& fields) {
            for (const auto& f : fields) {
                if (!side.contains(f.name))
                    throw ConfigError("dataset '" + path + "' line " + std::to_string(line_no) +
                                      ": missing field '" + f.name + "'");
                ex.values[f.name] = side.at(f.name).get<std::string>();
            }
            if (side.size() != fields.size())
                throw ConfigError("dataset '" + path + "' line " + std::to_string(line_no) +
                                  ": field names differ from the first line");
        };
        read_side(j["inputs"], ds.task.input_fields);
        read_side(j["outputs"], ds.task.output_fields);
        ds.examples.push_back(std::move(ex));
    }
    if (!have_signature) throw ConfigError("dataset '" + path + "' is empty");
    if (split_spec.total() > ds.examples.size())
        throw ConfigError("dataset '" + path + "': split sizes (" +
                          std::to_string(split_spec.total()) + ") exceed dataset size (" +
                          std::to_string(ds.examples.size()) + ")");

    deterministic_shuffle(ds.examples, seed);
    ds.examples.resize(split_spec.total());  // examples beyond the requested splits are dropped
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        if (i < split_spec.train)
            ds.examples[i].split = Split::train;
        else if (i < split_spec.train + split_spec.validation)
            ds.examples[i].split = Split::validation;
        else
            ds.examples[i].split = Split::test;
    }
    return ds;
}

}  // namespace langlab::harness
