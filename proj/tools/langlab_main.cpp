// langlab command-line entry point: wires config files to the harness,
// optimizers and analysis.
//
// Exit codes: 0 success, 1 empty/no-op, 2 user error, 3 internal error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "langlab/analysis.hpp"
#include "langlab/harness.hpp"
#include "langlab/http_backend.hpp"
#include "langlab/lm.hpp"
#include "langlab/optimizers.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitEmpty = 1;
constexpr int kExitUserError = 2;
constexpr int kExitInternalError = 3;

using langlab::ConfigError;

std::shared_ptr<langlab::lm::LmBackend> make_backend(const std::string& spec,
                                                     const std::string& api_key_env) {
    if (spec.empty()) throw ConfigError("no backend configured (use --backend or the config file)");
    if (spec.rfind("mock:", 0) == 0) return langlab::lm::ScriptedMock::load(spec.substr(5));
    std::string url;
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0)
        url = spec;
    else if (spec.rfind("http:", 0) == 0)
        url = spec.substr(5);
    else
        throw ConfigError("backend must be mock:<script.json> or http:<base_url>, got '" + spec +
                          "'");
    langlab::lm::HttpBackend::Config cfg;
    cfg.base_url = url;
    cfg.api_key_env = api_key_env;
    return std::make_shared<langlab::lm::HttpBackend>(cfg);
}

struct CommonFlags {
    std::string config_path;
    std::string out;
    std::string backend;
    std::string price_table;
    std::string model;
    std::int64_t seed = -1;
    int concurrency = -1;
};

langlab::harness::MatrixConfig load_config(const CommonFlags& flags) {
    if (flags.config_path.empty()) throw ConfigError("--config is required");
    auto cfg = langlab::harness::MatrixConfig::load(flags.config_path);
    if (!flags.out.empty()) cfg.out_dir = flags.out;
    if (!flags.backend.empty()) cfg.backend = flags.backend;
    if (!flags.price_table.empty()) cfg.price_table_path = flags.price_table;
    if (flags.seed >= 0) cfg.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.concurrency >= 0) cfg.concurrency = flags.concurrency;
    return cfg;
}

const langlab::harness::DatasetSpec& find_dataset(const langlab::harness::MatrixConfig& cfg,
                                                  const std::string& name) {
    for (const auto& d : cfg.datasets)
        if (d.name == name) return d;
    throw ConfigError("dataset '" + name + "' is not defined in the config");
}

langlab::harness::ProgramSpec find_program(const langlab::harness::MatrixConfig& cfg,
                                           const std::string& id) {
    for (const auto& p : cfg.programs)
        if (p.id == id) return p;
    if (!langlab::programs::architecture_from_id(id))
        throw ConfigError("unknown program id '" + id + "'");
    langlab::harness::ProgramSpec spec;
    spec.id = id;
    return spec;
}

std::string pick_model(const langlab::harness::MatrixConfig& cfg, const std::string& flag_model) {
    if (!flag_model.empty()) return flag_model;
    if (cfg.models.empty()) throw ConfigError("config lists no models (use --model)");
    return cfg.models.front();
}

struct TaskSetup {
    langlab::harness::Dataset dataset;
    std::optional<langlab::retrieval::Corpus> corpus;
    langlab::programs::ToolSet tools;
    langlab::lm::LmRouter router;
    langlab::lm::CostLedger ledger;

    TaskSetup(const langlab::harness::MatrixConfig& cfg, const langlab::harness::DatasetSpec& spec)
        : dataset(langlab::harness::load_dataset(spec.path, spec.name, spec.metric_id,
                                                 spec.instruction, spec.splits, cfg.seed)),
          tools(langlab::harness::toy_tools()),
          router(make_backend(cfg.backend, cfg.api_key_env)),
          ledger(cfg.price_table_path.empty()
                     ? langlab::lm::PriceTable{}
                     : langlab::lm::PriceTable::load(cfg.price_table_path)) {
        if (!spec.corpus_path.empty())
            corpus = langlab::retrieval::Corpus::load_jsonl(spec.corpus_path);
    }

    langlab::harness::RunEnv env(const langlab::harness::MatrixConfig& cfg) {
        langlab::harness::RunEnv e;
        e.router = &router;
        e.ledger = &ledger;
        e.corpus = corpus ? &*corpus : nullptr;
        e.tools = &tools;
        e.temperature = cfg.temperature;
        e.max_tokens = cfg.max_tokens;
        return e;
    }
};

int cmd_run(const CommonFlags& flags) {
    auto cfg = load_config(flags);
    langlab::lm::LmRouter router(make_backend(cfg.backend, cfg.api_key_env));
    auto outcome = langlab::harness::run_matrix(cfg, router, &std::cout);
    std::cout << "records: " << outcome.records.size() << " (new: " << outcome.new_runs
              << ", resumed: " << outcome.resumed << ", invalid combinations skipped: "
              << outcome.skipped_invalid.size() << ")\n";
    if (outcome.any_failed) {
        std::cerr << "some configurations failed; see their records in " << cfg.out_dir << "\n";
        return kExitInternalError;
    }
    return kExitOk;
}

int cmd_optimize(const CommonFlags& flags, const std::string& program_id,
                 const std::string& optimizer_id, const std::string& dataset_name) {
    auto cfg = load_config(flags);
    if (!langlab::optimizers::is_known_optimizer(optimizer_id))
        throw ConfigError("unknown optimizer '" + optimizer_id + "'");
    const auto& dataset_spec = find_dataset(cfg, dataset_name);
    const auto program_spec = find_program(cfg, program_id);
    const std::string model = pick_model(cfg, flags.model);

    TaskSetup setup(cfg, dataset_spec);
    auto env = setup.env(cfg);
    const auto arch = *langlab::programs::architecture_from_id(program_spec.id);
    auto program =
        langlab::programs::make_program(arch, setup.dataset.task, program_spec.params);
    langlab::metrics::Scorer scorer(setup.dataset.metric_id, setup.dataset.answer_field());

    langlab::harness::OptimizerSpec opt_spec;
    opt_spec.id = optimizer_id;
    auto opt_cfg = opt_spec.materialize(cfg.seed, cfg.concurrency);
    auto result = langlab::optimizers::run_optimizer(
        optimizer_id, program, setup.dataset.split(langlab::Split::train),
        setup.dataset.split(langlab::Split::validation), scorer, env, model, opt_cfg);

    std::string out_path = flags.out.empty() ? "optimized_program.json" : flags.out;
    langlab::harness::atomic_write_file(out_path,
                                        langlab::optimizers::to_json(result).dump(2) + "\n");
    std::cout << "optimized program written to " << out_path << "\n";
    std::cout << "validation_score: " << result.validation_score << "\n";
    std::cout << "optimization_cost: " << result.optimization_cost.to_string() << "\n";
    return kExitOk;
}

int cmd_evaluate(const CommonFlags& flags, const std::string& program_id,
                 const std::string& dataset_name, const std::string& optimized_path) {
    auto cfg = load_config(flags);
    const auto& dataset_spec = find_dataset(cfg, dataset_name);
    const std::string model = pick_model(cfg, flags.model);

    TaskSetup setup(cfg, dataset_spec);
    auto env = setup.env(cfg);

    langlab::programs::Program program;
    if (!optimized_path.empty()) {
        std::ifstream in(optimized_path);
        if (!in) throw ConfigError("cannot open optimized program '" + optimized_path + "'");
        try {
            nlohmann::ordered_json j;
            in >> j;
            program = langlab::programs::program_from_json(j);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("optimized program '" + optimized_path + "': " + e.what());
        }
    } else {
        const auto program_spec = find_program(cfg, program_id);
        const auto arch = *langlab::programs::architecture_from_id(program_spec.id);
        program = langlab::programs::make_program(arch, setup.dataset.task, program_spec.params);
    }

    langlab::metrics::Scorer scorer(setup.dataset.metric_id, setup.dataset.answer_field());
    langlab::harness::EvalOptions opts;
    opts.model_id = model;
    opts.concurrency = cfg.concurrency;
    opts.seed = cfg.seed;
    auto result = langlab::harness::evaluate(program, setup.dataset.split(langlab::Split::test),
                                             scorer, env, opts);
    std::cout << "aggregate: " << result.aggregate << "\n";
    std::cout << "inference_cost: " << result.cost.to_string() << "\n";
    std::cout << "lm_calls: " << result.lm_calls << "\n";
    return kExitOk;
}

int cmd_report(const std::string& records_dir, const std::string& out_dir) {
    auto records = langlab::harness::load_records(records_dir);
    if (records.empty()) {
        std::cerr << "no records found in " << records_dir << "\n";
        return kExitEmpty;
    }
    auto report = langlab::harness::build_report(records);
    auto written = langlab::analysis::emit_plot_data(out_dir, report.aggregate, report.ranking,
                                                     report.percentiles);
    for (const auto& path : written) std::cout << "wrote " << path << "\n";
    for (const auto& skipped : report.aggregate.skipped)
        std::cout << "skipped from aggregate: " << skipped << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"langlab: build, optimize and benchmark modular language programs"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::string program_id;
    std::string optimizer_id;
    std::string dataset_name;
    std::string optimized_path;
    std::string records_dir;
    std::string report_out = "report";

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", flags.config_path, "matrix config file (JSON)");
        cmd->add_option("--out", flags.out, "output directory or file");
        cmd->add_option("--seed", flags.seed, "random seed override");
        cmd->add_option("--concurrency", flags.concurrency, "worker pool size override");
        cmd->add_option("--backend", flags.backend,
                        "mock:<script.json> or http:<base_url> backend override");
        cmd->add_option("--price-table", flags.price_table, "price table JSON override");
        cmd->add_option("--model", flags.model, "model id (defaults to the first configured)");
    };

    auto* run = app.add_subcommand("run", "run the configuration matrix and persist records");
    add_common(run);

    auto* optimize = app.add_subcommand("optimize", "optimize one program and save the artifact");
    add_common(optimize);
    optimize->add_option("--program", program_id, "program id")->required();
    optimize->add_option("--optimizer", optimizer_id, "optimizer id")->required();
    optimize->add_option("--dataset", dataset_name, "dataset name from the config")->required();

    auto* evaluate = app.add_subcommand("evaluate", "evaluate a program on a dataset test split");
    add_common(evaluate);
    evaluate->add_option("--program", program_id, "program id");
    evaluate->add_option("--optimized", optimized_path, "optimized program JSON to load");
    evaluate->add_option("--dataset", dataset_name, "dataset name from the config")->required();

    auto* report = app.add_subcommand("report", "emit analysis CSVs from run records");
    report->add_option("--records", records_dir, "directory of run records")->required();
    report->add_option("--out", report_out, "output directory for CSV files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUserError;
    }

    try {
        if (run->parsed()) return cmd_run(flags);
        if (optimize->parsed()) return cmd_optimize(flags, program_id, optimizer_id, dataset_name);
        if (evaluate->parsed()) {
            if (program_id.empty() && optimized_path.empty())
                throw ConfigError("evaluate needs --program or --optimized");
            return cmd_evaluate(flags, program_id, dataset_name, optimized_path);
        }
        if (report->parsed()) return cmd_report(records_dir, report_out);
        return kExitUserError;
    } catch (const langlab::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const langlab::ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUserError;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternalError;
    }
}
