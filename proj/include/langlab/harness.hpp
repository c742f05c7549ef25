#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "langlab/analysis.hpp"
#include "langlab/common.hpp"
#include "langlab/dataset.hpp"
#include "langlab/evaluate.hpp"
#include "langlab/lm.hpp"
#include "langlab/metrics.hpp"
#include "langlab/optimizers.hpp"
#include "langlab/programs.hpp"

namespace langlab::harness {

// ---------------------------------------------------------------------------
// Matrix configuration
// ---------------------------------------------------------------------------

struct ProgramSpec {
    std::string id;  // registry id; "baseline" is the zero-shot predict call
    programs::ArchitectureParams params;
};

struct OptimizerSpec {
    std::string id;
    nlohmann::ordered_json overrides = nlohmann::ordered_json::object();

    optimizers::OptimizerConfig materialize(std::uint64_t seed, int concurrency) const {
        optimizers::OptimizerConfig cfg = optimizers::preset_config(id);
        auto set_int = [&](const char* key, int& field) {
            if (overrides.contains(key)) field = overrides.at(key).get<int>();
        };
        set_int("max_bootstrapped_demos", cfg.max_bootstrapped_demos);
        set_int("max_labeled_demos", cfg.max_labeled_demos);
        set_int("num_candidates", cfg.num_candidates);
        set_int("num_trials", cfg.num_trials);
        set_int("num_rules", cfg.num_rules);
        set_int("max_errors", cfg.max_errors);
        set_int("batch_size", cfg.batch_size);
        set_int("batch_full_eval_steps", cfg.batch_full_eval_steps);
        if (overrides.contains("teacher_model"))
            cfg.teacher_model = overrides.at("teacher_model").get<std::string>();
        if (overrides.contains("pass_threshold"))
            cfg.pass_threshold = overrides.at("pass_threshold").get<double>();
        if (overrides.contains("exhaustive_fallback"))
            cfg.exhaustive_fallback = overrides.at("exhaustive_fallback").get<bool>();
        cfg.seed = seed;
        if (concurrency > 0) cfg.concurrency = concurrency;
        return cfg;
    }
};

struct DatasetSpec {
    std::string name;
    std::string path;
    std::string metric_id;
    std::string instruction;
    SplitSpec splits;
    std::string corpus_path;  // optional; required by retrieval programs
};

struct MatrixConfig {
    std::vector<std::string> models;
    std::vector<ProgramSpec> programs;
    std::vector<OptimizerSpec> optimizers;
    std::vector<DatasetSpec> datasets;
    std::string price_table_path;
    std::string backend;  // "mock:<script.json>" or "http:<base_url>"
    std::string api_key_env = "OPENAI_API_KEY";
    std::string out_dir = "runs";
    std::uint64_t seed = 0;
    int concurrency = 1;
    double temperature = 0.0;
    int max_tokens = 512;

    static MatrixConfig from_json(const nlohmann::ordered_json& j, const std::string& base_dir);
    static MatrixConfig load(const std::string& path);
};

inline std::string resolve_path(const std::string& base_dir, const std::string& path) {
    if (path.empty()) return path;
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).string();
}

inline MatrixConfig MatrixConfig::from_json(const nlohmann::ordered_json& j,
                                            const std::string& base_dir) {
    MatrixConfig cfg;
    for (const auto& m : j.at("models")) cfg.models.push_back(m.get<std::string>());
    for (const auto& p : j.at("programs")) {
        ProgramSpec spec;
        spec.id = p.at("id").get<std::string>();
        if (!programs::architecture_from_id(spec.id))
            throw ConfigError("unknown program id '" + spec.id + "'");
        if (p.contains("n_candidates")) spec.params.n_candidates = p.at("n_candidates").get<int>();
        if (p.contains("hops")) spec.params.hops = p.at("hops").get<int>();
        if (p.contains("voters")) spec.params.voters = p.at("voters").get<int>();
        if (p.contains("max_steps")) spec.params.max_steps = p.at("max_steps").get<int>();
        if (p.contains("top_k")) spec.params.top_k = p.at("top_k").get<int>();
        cfg.programs.push_back(std::move(spec));
    }
    for (const auto& o : j.at("optimizers")) {
        OptimizerSpec spec;
        spec.id = o.at("id").get<std::string>();
        if (!optimizers::is_known_optimizer(spec.id))
            throw ConfigError("unknown optimizer id '" + spec.id + "'");
        spec.overrides = o;
        spec.overrides.erase("id");
        cfg.optimizers.push_back(std::move(spec));
    }
    for (const auto& d : j.at("datasets")) {
        DatasetSpec spec;
        spec.name = d.at("name").get<std::string>();
        spec.path = resolve_path(base_dir, d.at("path").get<std::string>());
        spec.metric_id = d.at("metric").get<std::string>();
        if (!metrics::Scorer::is_known(spec.metric_id))
            throw ConfigError("unknown metric '" + spec.metric_id + "'");
        spec.instruction = d.value("instruction", std::string{});
        const auto& s = d.at("splits");
        spec.splits.train = s.at("train").get<std::size_t>();
        spec.splits.validation = s.at("validation").get<std::size_t>();
        spec.splits.test = s.at("test").get<std::size_t>();
        if (d.contains("corpus"))
            spec.corpus_path = resolve_path(base_dir, d.at("corpus").get<std::string>());
        cfg.datasets.push_back(std::move(spec));
    }
    if (j.contains("price_table"))
        cfg.price_table_path = resolve_path(base_dir, j.at("price_table").get<std::string>());
    if (j.contains("backend")) {
        cfg.backend = j.at("backend").get<std::string>();
        if (cfg.backend.rfind("mock:", 0) == 0)
            cfg.backend = "mock:" + resolve_path(base_dir, cfg.backend.substr(5));
    }
    if (j.contains("api_key_env")) cfg.api_key_env = j.at("api_key_env").get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = resolve_path(base_dir, j.at("out_dir").get<std::string>());
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("concurrency")) cfg.concurrency = j.at("concurrency").get<int>();
    if (j.contains("temperature")) cfg.temperature = j.at("temperature").get<double>();
    if (j.contains("max_tokens")) cfg.max_tokens = j.at("max_tokens").get<int>();
    return cfg;
}

inline MatrixConfig MatrixConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open matrix config '" + path + "'");
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError("matrix config '" + path + "': " + e.what());
    }
    try {
        return from_json(j, std::filesystem::path(path).parent_path().string());
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        // missing/mistyped fields are user errors, same as unparseable JSON
        throw ConfigError("matrix config '" + path + "': " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Run records
// ---------------------------------------------------------------------------

struct RunRecord {
    std::string config_id;  // stable hash; also the record file name
    std::string model_id;
    std::string program_id;
    programs::ArchitectureParams program_params;
    std::string optimizer_id;
    std::string dataset;
    std::string status = "ok";  // "ok" | "failed"
    std::string error;
    std::vector<double> per_example_scores;
    double aggregate = 0.0;  // 100 x mean per-example score
    Money optimization_cost;
    Money inference_cost;
    std::int64_t lm_calls = 0;
    std::uint64_t seed = 0;
    double optimizer_validation_score = -1.0;
    std::string started_at;
    std::string finished_at;

    /// Config identity shared across datasets; the analysis group key.
    std::string analysis_config_id() const {
        return model_id + "/" + program_id + "/" + optimizer_id;
    }
};

inline nlohmann::ordered_json to_json(const RunRecord& r) {
    nlohmann::ordered_json scores = nlohmann::ordered_json::array();
    for (double s : r.per_example_scores) scores.push_back(s);
    return nlohmann::ordered_json{
        {"config_id", r.config_id},
        {"model", r.model_id},
        {"program",
         nlohmann::ordered_json{{"id", r.program_id},
                                {"params",
                                 nlohmann::ordered_json{{"n_candidates", r.program_params.n_candidates},
                                                        {"hops", r.program_params.hops},
                                                        {"voters", r.program_params.voters},
                                                        {"max_steps", r.program_params.max_steps},
                                                        {"top_k", r.program_params.top_k}}}}},
        {"optimizer", nlohmann::ordered_json{{"id", r.optimizer_id}}},
        {"dataset", r.dataset},
        {"status", r.status},
        {"error", r.error},
        {"seed", r.seed},
        {"aggregate", r.aggregate},
        {"per_example_scores", scores},
        {"optimization_cost", r.optimization_cost.to_string()},
        {"inference_cost", r.inference_cost.to_string()},
        {"lm_calls", r.lm_calls},
        {"optimizer_validation_score", r.optimizer_validation_score},
        {"started_at", r.started_at},
        {"finished_at", r.finished_at}};
}

inline RunRecord record_from_json(const nlohmann::ordered_json& j) {
    RunRecord r;
    r.config_id = j.at("config_id").get<std::string>();
    r.model_id = j.at("model").get<std::string>();
    r.program_id = j.at("program").at("id").get<std::string>();
    const auto& params = j.at("program").at("params");
    r.program_params.n_candidates = params.value("n_candidates", 5);
    r.program_params.hops = params.value("hops", 2);
    r.program_params.voters = params.value("voters", 3);
    r.program_params.max_steps = params.value("max_steps", 40);
    r.program_params.top_k = params.value("top_k", 3);
    r.optimizer_id = j.at("optimizer").at("id").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.status = j.value("status", std::string{"ok"});
    r.error = j.value("error", std::string{});
    r.seed = j.value("seed", std::uint64_t{0});
    r.aggregate = j.value("aggregate", 0.0);
    if (j.contains("per_example_scores"))
        for (const auto& s : j.at("per_example_scores")) r.per_example_scores.push_back(s.get<double>());
    r.optimization_cost = Money::parse(j.value("optimization_cost", std::string{"0"}), 12);
    r.inference_cost = Money::parse(j.value("inference_cost", std::string{"0"}), 12);
    r.lm_calls = j.value("lm_calls", std::int64_t{0});
    r.optimizer_validation_score = j.value("optimizer_validation_score", -1.0);
    r.started_at = j.value("started_at", std::string{});
    r.finished_at = j.value("finished_at", std::string{});
    return r;
}

inline std::string utc_timestamp() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

/// Write-temp-then-rename so records are never observed half-written.
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Matrix execution
// ---------------------------------------------------------------------------

/// Pure toy tool environment standing in for real agent backends.
inline programs::ToolSet toy_tools() {
    programs::ToolSet tools;
    tools["echo"] = programs::Tool{[](const std::string& arg) { return arg; },
                                   "repeats its argument"};
    tools["length"] = programs::Tool{
        [](const std::string& arg) { return std::to_string(arg.size()); },
        "returns the length of its argument"};
    return tools;
}

inline std::string config_hash(const std::string& model, const ProgramSpec& prog,
                               const OptimizerSpec& opt, const std::string& dataset,
                               std::uint64_t seed) {
    std::string canonical = model + "|" + prog.id + "|" +
                            std::to_string(prog.params.n_candidates) + "," +
                            std::to_string(prog.params.hops) + "," +
                            std::to_string(prog.params.voters) + "," +
                            std::to_string(prog.params.max_steps) + "," +
                            std::to_string(prog.params.top_k) + "|" + opt.id + "|" +
                            opt.overrides.dump() + "|" + dataset + "|" + std::to_string(seed);
    return hex64(fnv1a64(canonical));
}

struct MatrixOutcome {
    std::vector<RunRecord> records;  // every record now present in out_dir
    int new_runs = 0;
    int resumed = 0;  // configs skipped because a record already existed
    std::vector<std::string> skipped_invalid;
    bool any_failed = false;
};

/// Runs the full Cartesian product of datasets x models x programs x
/// optimizers. One RunRecord per valid combination, written incrementally
/// (atomic rename) and keyed by the config hash, so a rerun resumes by
/// skipping completed configs. Invalid combinations (a retrieval program on
/// a dataset without a corpus) are skipped with a reason. Individual config
/// failures produce status="failed" records and never abort the matrix.
inline MatrixOutcome run_matrix(const MatrixConfig& cfg, lm::LmRouter& router,
                                std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);

    lm::PriceTable prices;
    if (!cfg.price_table_path.empty()) prices = lm::PriceTable::load(cfg.price_table_path);

    const programs::ToolSet tools = toy_tools();
    MatrixOutcome outcome;

    for (const auto& dataset_spec : cfg.datasets) {
        Dataset dataset = load_dataset(dataset_spec.path, dataset_spec.name,
                                       dataset_spec.metric_id, dataset_spec.instruction,
                                       dataset_spec.splits, cfg.seed);
        std::optional<retrieval::Corpus> corpus;
        if (!dataset_spec.corpus_path.empty())
            corpus = retrieval::Corpus::load_jsonl(dataset_spec.corpus_path);

        const std::vector<Example> trainset = dataset.split(Split::train);
        const std::vector<Example> valset = dataset.split(Split::validation);
        const std::vector<Example> testset = dataset.split(Split::test);
        const metrics::Scorer scorer(dataset.metric_id, dataset.answer_field());

        for (const auto& model : cfg.models) {
            for (const auto& prog_spec : cfg.programs) {
                const auto arch = *programs::architecture_from_id(prog_spec.id);
                if (programs::requires_retrieval(arch) && !corpus) {
                    std::string reason = "skip " + model + "/" + prog_spec.id + "/" +
                                         dataset_spec.name + ": program needs a corpus";
                    outcome.skipped_invalid.push_back(reason);
                    if (log) *log << reason << "\n";
                    continue;
                }
                for (const auto& opt_spec : cfg.optimizers) {
                    const std::string id =
                        config_hash(model, prog_spec, opt_spec, dataset_spec.name, cfg.seed);
                    const fs::path record_path = fs::path(cfg.out_dir) / (id + ".json");
                    if (fs::exists(record_path)) {
                        ++outcome.resumed;
                        std::ifstream in(record_path);
                        nlohmann::ordered_json j;
                        in >> j;
                        outcome.records.push_back(record_from_json(j));
                        continue;
                    }

                    RunRecord record;
                    record.config_id = id;
                    record.model_id = model;
                    record.program_id = prog_spec.id;
                    record.program_params = prog_spec.params;
                    record.optimizer_id = opt_spec.id;
                    record.dataset = dataset_spec.name;
                    record.seed = cfg.seed;
                    record.started_at = utc_timestamp();

                    lm::CostLedger ledger(prices);
                    RunEnv env;
                    env.router = &router;
                    env.ledger = &ledger;
                    env.corpus = corpus ? &*corpus : nullptr;
                    env.tools = &tools;
                    env.temperature = cfg.temperature;
                    env.max_tokens = cfg.max_tokens;

                    try {
                        const std::uint64_t run_seed = mix_seed(cfg.seed, fnv1a64(id));
                        programs::Program program =
                            programs::make_program(arch, dataset.task, prog_spec.params);
                        auto opt_cfg = opt_spec.materialize(run_seed, cfg.concurrency);
                        auto optimized =
                            optimizers::run_optimizer(opt_spec.id, program, trainset, valset,
                                                      scorer, env, model, opt_cfg);
                        record.optimizer_validation_score = optimized.validation_score;

                        EvalOptions eval_opts;
                        eval_opts.model_id = model;
                        eval_opts.concurrency = cfg.concurrency;
                        eval_opts.phase = lm::Phase::evaluation;
                        eval_opts.seed = mix_seed(run_seed, 0xE7A1ULL);
                        EvalResult eval =
                            evaluate(optimized.program, testset, scorer, env, eval_opts);
                        record.per_example_scores = eval.per_example_scores;
                        record.aggregate = eval.aggregate;
                    } catch (const std::exception& e) {
                        record.status = "failed";
                        record.error = e.what();
                        outcome.any_failed = true;
                    }

                    const lm::LedgerSnapshot snap = ledger.snapshot();
                    record.optimization_cost = snap.optimization.cost;
                    record.inference_cost = snap.evaluation.cost;
                    record.lm_calls = snap.call_count;
                    record.finished_at = utc_timestamp();

                    atomic_write_file(record_path, to_json(record).dump(2) + "\n");
                    outcome.records.push_back(std::move(record));
                    ++outcome.new_runs;
                    if (log)
                        *log << "ran " << model << "/" << prog_spec.id << "/" << opt_spec.id << "/"
                             << dataset_spec.name << " -> " << id << "\n";
                }
            }
        }
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// Record loading and report assembly
// ---------------------------------------------------------------------------

inline std::vector<RunRecord> load_records(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir)) throw ConfigError("records directory '" + dir + "' does not exist");
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    std::vector<RunRecord> out;
    for (const auto& p : paths) {
        std::ifstream in(p);
        nlohmann::ordered_json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ConfigError("record '" + p + "': " + e.what());
        }
        out.push_back(record_from_json(j));
    }
    return out;
}

struct ReportData {
    analysis::AggregateResult aggregate;
    std::map<std::string, analysis::RankCounts> ranking;
    std::map<std::string, analysis::Percentiles> percentiles;
    std::vector<analysis::GainSample> gains;
};

/// Projects ok-status records into the analysis inputs: aggregated Pareto
/// points, ranking counts over optimizer records, and relative-gain
/// percentiles against the matching unoptimized baseline.
inline ReportData build_report(const std::vector<RunRecord>& records) {
    std::vector<analysis::RecordPoint> points;
    for (const auto& r : records) {
        if (r.status != "ok") continue;
        points.push_back(analysis::RecordPoint{r.analysis_config_id(), r.dataset, r.model_id,
                                               r.program_id, r.optimizer_id, r.aggregate,
                                               r.inference_cost.to_double()});
    }
    if (points.empty()) throw ConfigError("no usable records");

    ReportData report;
    report.aggregate = analysis::aggregate(points);

    std::vector<analysis::RecordPoint> optimizer_points;
    for (const auto& p : points)
        if (p.optimizer_id != "none") optimizer_points.push_back(p);
    report.ranking = analysis::optimizer_ranking(optimizer_points);

    // Baseline lookup: same (dataset, program, model) with optimizer none.
    std::map<std::string, double> baseline_scores;
    for (const auto& p : points)
        if (p.optimizer_id == "none")
            baseline_scores[p.dataset + "\x1f" + p.program_id + "\x1f" + p.model_id] = p.score;
    for (const auto& p : optimizer_points) {
        auto it = baseline_scores.find(p.dataset + "\x1f" + p.program_id + "\x1f" + p.model_id);
        if (it == baseline_scores.end()) continue;
        if (auto gain = analysis::relative_gain(it->second, p.score))
            report.gains.push_back(analysis::GainSample{
                p.optimizer_id, *gain, p.dataset + "/" + p.program_id + "/" + p.model_id});
    }
    if (!report.gains.empty()) report.percentiles = analysis::gain_percentiles(report.gains);
    return report;
}

}  // namespace langlab::harness
