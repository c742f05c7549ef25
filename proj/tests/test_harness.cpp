#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <memory>

#include "langlab/harness.hpp"
#include "synthetic.hpp"

using namespace langlab;
using namespace langlab::harness;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("langlab_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_qa_jsonl(const std::string& path, int n) {
    std::ofstream out(path);
    for (int i = 1; i <= n; ++i)
        out << R"({"inputs": {"question": "q)" << i << R"("}, "outputs": {"answer": "gq)" << i
            << R"("}})"
            << "\n";
}

std::shared_ptr<lm::FunctionalMock> always_correct_mock() {
    return std::make_shared<lm::FunctionalMock>([](const lm::LmRequest& req) {
        return "Reasoning: r\nAnswer: " + synthetic::gold_for(synthetic::live_question(req.prompt));
    });
}

}  // namespace

TEST_CASE("load_dataset shuffles and splits deterministically") {
    TempDir dir("dataset");
    write_qa_jsonl(dir.file("toy.jsonl"), 10);
    SplitSpec spec{6, 2, 2};

    auto a = load_dataset(dir.file("toy.jsonl"), "toy", "exact_match", "Answer.", spec, 7);
    auto b = load_dataset(dir.file("toy.jsonl"), "toy", "exact_match", "Answer.", spec, 7);
    REQUIRE(a.examples.size() == 10);
    CHECK(a.split(Split::train).size() == 6);
    CHECK(a.split(Split::validation).size() == 2);
    CHECK(a.split(Split::test).size() == 2);
    for (std::size_t i = 0; i < a.examples.size(); ++i) {
        CHECK(a.examples[i].values == b.examples[i].values);
        CHECK(a.examples[i].split == b.examples[i].split);
    }
    // a different seed moves members around but keeps the sizes
    auto c = load_dataset(dir.file("toy.jsonl"), "toy", "exact_match", "Answer.", spec, 8);
    CHECK(c.split(Split::train).size() == 6);

    CHECK(a.task.input_fields.front().name == "question");
    CHECK(a.answer_field() == "answer");
}

TEST_CASE("split sizes beyond the dataset are an error") {
    TempDir dir("split");
    write_qa_jsonl(dir.file("toy.jsonl"), 4);
    CHECK_THROWS_AS(
        load_dataset(dir.file("toy.jsonl"), "toy", "exact_match", "", SplitSpec{4, 1, 0}, 0),
        ConfigError);
}

TEST_CASE("duplicate dataset lines are preserved") {
    TempDir dir("dup");
    {
        std::ofstream out(dir.file("dup.jsonl"));
        out << R"({"inputs": {"question": "same"}, "outputs": {"answer": "x"}})" << "\n";
        out << R"({"inputs": {"question": "same"}, "outputs": {"answer": "x"}})" << "\n";
    }
    auto ds = load_dataset(dir.file("dup.jsonl"), "dup", "exact_match", "", SplitSpec{2, 0, 0}, 1);
    CHECK(ds.examples.size() == 2);
    CHECK(ds.examples[0].values == ds.examples[1].values);
}

TEST_CASE("malformed lines report their line number") {
    TempDir dir("malformed");
    {
        std::ofstream out(dir.file("bad.jsonl"));
        out << R"({"inputs": {"question": "ok"}, "outputs": {"answer": "y"}})" << "\n";
        out << "{not json\n";
    }
    CHECK_THROWS_WITH_AS(
        load_dataset(dir.file("bad.jsonl"), "bad", "exact_match", "", SplitSpec{1, 0, 0}, 0),
        doctest::Contains("line 2"), ConfigError);
}

TEST_CASE("evaluate on an always-correct mock scores 100 with exact costs") {
    lm::PriceTable prices;
    prices.set("m", lm::PriceEntry{Money::parse("2.00"), Money::parse("12.00")});
    lm::LmRouter router(always_correct_mock());
    lm::CostLedger ledger(prices);
    RunEnv env;
    env.router = &router;
    env.ledger = &ledger;

    auto prog = programs::make_program(programs::Architecture::predict, synthetic::qa_task());
    auto examples = synthetic::qa_examples("q", 10);
    metrics::Scorer scorer("exact_match", "answer");

    EvalOptions opts;
    opts.model_id = "m";
    auto result = evaluate(prog, examples, scorer, env, opts);
    CHECK(result.aggregate == doctest::Approx(100.0));
    CHECK(result.lm_calls == 10);

    Money from_log;
    for (const auto& call : ledger.call_log()) from_log += call.cost;
    CHECK(result.cost == from_log);
    CHECK(result.cost > Money{});
}

TEST_CASE("evaluate aggregate is identical at concurrency 1 and 16") {
    // correct on even question indices only
    auto mock = std::make_shared<lm::FunctionalMock>([](const lm::LmRequest& req) {
        auto q = synthetic::live_question(req.prompt);
        if (synthetic::question_index(q, "q") % 2 == 0)
            return synthetic::correct_answer_line(q);
        return std::string{"Answer: wrong"};
    });
    lm::LmRouter router(mock);
    lm::CostLedger ledger;
    RunEnv env;
    env.router = &router;
    env.ledger = &ledger;

    auto prog = programs::make_program(programs::Architecture::predict, synthetic::qa_task());
    auto examples = synthetic::qa_examples("q", 100);
    metrics::Scorer scorer("exact_match", "answer");

    EvalOptions serial;
    serial.model_id = "m";
    serial.concurrency = 1;
    auto a = evaluate(prog, examples, scorer, env, serial);

    EvalOptions parallel = serial;
    parallel.concurrency = 16;
    auto b = evaluate(prog, examples, scorer, env, parallel);

    CHECK(a.aggregate == b.aggregate);
    CHECK(a.per_example_scores == b.per_example_scores);
    CHECK(a.aggregate == doctest::Approx(50.0));
}

TEST_CASE("a parse-failing example scores zero") {
    Signature task{"t", "", {{"question", ""}}, {{"answer", ""}, {"basis", ""}}};
    auto mock = std::make_shared<lm::FunctionalMock>([](const lm::LmRequest& req) {
        auto q = synthetic::live_question(req.prompt);
        if (q == "q2") return std::string{"Answer: only-half"};  // missing basis
        return "Answer: g" + q + "\nBasis: b";
    });
    lm::LmRouter router(mock);
    lm::CostLedger ledger;
    RunEnv env;
    env.router = &router;
    env.ledger = &ledger;

    auto prog = programs::make_program(programs::Architecture::predict, task);
    std::vector<Example> examples;
    for (int i = 1; i <= 3; ++i) {
        Example ex;
        ex.values = {{"question", "q" + std::to_string(i)},
                     {"answer", "gq" + std::to_string(i)},
                     {"basis", "b"}};
        examples.push_back(ex);
    }
    metrics::Scorer scorer("exact_match", "answer");
    EvalOptions opts;
    opts.model_id = "m";
    auto result = evaluate(prog, examples, scorer, env, opts);
    CHECK(result.per_example_scores[0] == 1.0);
    CHECK(result.per_example_scores[1] == 0.0);
    CHECK(result.per_example_scores[2] == 1.0);
}

TEST_CASE("semantic_f1 runs the judge on the evaluated model and meters it") {
    auto mock = std::make_shared<lm::FunctionalMock>([](const lm::LmRequest& req) {
        if (contains(req.prompt, "Precision:")) return std::string{"Precision: 1.0\nRecall: 0.5"};
        return std::string{"Answer: some response"};
    });
    lm::LmRouter router(mock);
    lm::CostLedger ledger;
    RunEnv env;
    env.router = &router;
    env.ledger = &ledger;

    auto prog = programs::make_program(programs::Architecture::predict, synthetic::qa_task());
    auto examples = synthetic::qa_examples("q", 4);
    metrics::Scorer scorer("semantic_f1", "answer");
    EvalOptions opts;
    opts.model_id = "m";
    auto result = evaluate(prog, examples, scorer, env, opts);
    CHECK(result.aggregate == doctest::Approx(100.0 * 2.0 / 3.0));
    // one program call plus one judge call per example, all metered
    CHECK(result.lm_calls == 8);
    CHECK(ledger.snapshot().call_count == 8);
}

TEST_CASE("a retrieval program scores through rank_precision end to end") {
    auto corpus = retrieval::Corpus::build(
        {{"fr", "paris france europe"}, {"it", "rome italy europe"}, {"de", "berlin germany europe"}});
    auto mock = std::make_shared<lm::FunctionalMock>([](const lm::LmRequest& req) {
        if (contains(req.prompt, "Candidates:")) return std::string{"Ranking: 2,1,3"};
        return std::string{"Query: europe"};
    });
    lm::LmRouter router(mock);
    lm::CostLedger ledger;
    RunEnv env;
    env.router = &router;
    env.ledger = &ledger;
    env.corpus = &corpus;

    Signature task{"labels", "Rank the relevant labels.", {{"question", ""}}, {{"labels", ""}}};
    programs::ArchitectureParams params;
    params.top_k = 3;
    auto prog = programs::make_program(programs::Architecture::rag_based_rank, task, params);

    Example gold;  // retrieval order for "europe" is de,fr,it; "2,1,3" swaps the first two
    gold.values = {{"question", "which countries"}, {"labels", "fr, de"}};
    metrics::Scorer scorer("rank_precision", "labels");
    EvalOptions opts;
    opts.model_id = "m";
    auto result = evaluate(prog, {gold}, scorer, env, opts);
    CHECK(result.per_example_scores[0] == doctest::Approx(1.0));  // top-2 = {fr, de}
    CHECK(result.lm_calls == 2);
}

TEST_CASE("exceeding max_errors aborts the evaluation") {
    auto mock = std::make_shared<lm::FunctionalMock>(
        [](const lm::LmRequest&) -> std::string { throw std::runtime_error("backend down"); });
    lm::LmRouter router(mock);
    lm::CostLedger ledger;
    RunEnv env;
    env.router = &router;
    env.ledger = &ledger;
    auto prog = programs::make_program(programs::Architecture::predict, synthetic::qa_task());
    metrics::Scorer scorer("exact_match", "answer");
    EvalOptions opts;
    opts.model_id = "m";
    opts.max_errors = 2;
    CHECK_THROWS_WITH_AS(evaluate(prog, synthetic::qa_examples("q", 10), scorer, env, opts),
                         doctest::Contains("max_errors"), std::runtime_error);
}

namespace {

MatrixConfig toy_matrix(const TempDir& dir) {
    write_qa_jsonl(dir.file("toy.jsonl"), 10);
    {
        std::ofstream out(dir.file("prices.json"));
        out << R"({"m1": {"input_per_1m": 2.0, "output_per_1m": 8.0},
                   "m2": {"input_per_1m": 1.0, "output_per_1m": 4.0}})";
    }
    MatrixConfig cfg;
    cfg.models = {"m1", "m2"};
    cfg.programs = {ProgramSpec{"baseline", {}}, ProgramSpec{"chain_of_thought", {}}};
    cfg.optimizers = {OptimizerSpec{"none", nlohmann::ordered_json::object()},
                      OptimizerSpec{"bootstrap_fewshot", nlohmann::ordered_json::object()}};
    DatasetSpec ds;
    ds.name = "toy";
    ds.path = dir.file("toy.jsonl");
    ds.metric_id = "exact_match";
    ds.instruction = "Answer the question.";
    ds.splits = SplitSpec{4, 3, 3};
    cfg.datasets = {ds};
    cfg.price_table_path = dir.file("prices.json");
    cfg.out_dir = dir.file("runs");
    cfg.seed = 42;
    cfg.concurrency = 2;
    return cfg;
}

}  // namespace

TEST_CASE("run_matrix produces one record per combination and resumes cleanly") {
    TempDir dir("matrix");
    auto cfg = toy_matrix(dir);
    lm::LmRouter router(always_correct_mock());

    auto first = run_matrix(cfg, router);
    CHECK(first.records.size() == 8);  // 2 models x 2 programs x 2 optimizers x 1 dataset
    CHECK(first.new_runs == 8);
    CHECK(first.resumed == 0);
    CHECK_FALSE(first.any_failed);

    for (const auto& r : first.records) {
        CHECK(r.status == "ok");
        CHECK(r.aggregate == doctest::Approx(100.0));
        CHECK(r.per_example_scores.size() == 3);
        CHECK(r.lm_calls > 0);
        if (r.optimizer_id == "none") CHECK(r.optimization_cost == Money{});
        if (r.optimizer_id == "bootstrap_fewshot") CHECK(r.optimization_cost > Money{});
        CHECK(r.inference_cost > Money{});
        // exact decimal round-trip
        CHECK(Money::parse(r.inference_cost.to_string(), 12) == r.inference_cost);
    }

    // resume: byte-identical records, zero new evaluations
    auto a_record = fs::path(cfg.out_dir) / (first.records[0].config_id + ".json");
    std::ifstream before_in(a_record, std::ios::binary);
    std::string before((std::istreambuf_iterator<char>(before_in)), {});

    auto second = run_matrix(cfg, router);
    CHECK(second.new_runs == 0);
    CHECK(second.resumed == 8);
    std::ifstream after_in(a_record, std::ios::binary);
    std::string after((std::istreambuf_iterator<char>(after_in)), {});
    CHECK(before == after);
}

TEST_CASE("a config that raises at optimize time records status=failed") {
    TempDir dir("failconfig");
    auto cfg = toy_matrix(dir);
    // random search needs a validation split; give it none
    cfg.datasets[0].splits = SplitSpec{5, 0, 3};
    cfg.optimizers = {OptimizerSpec{"bootstrap_random_search", nlohmann::ordered_json::object()}};
    cfg.models = {"m1"};
    cfg.programs = {ProgramSpec{"baseline", {}}};
    lm::LmRouter router(always_correct_mock());

    auto outcome = run_matrix(cfg, router);
    REQUIRE(outcome.records.size() == 1);
    CHECK(outcome.records[0].status == "failed");
    CHECK_FALSE(outcome.records[0].error.empty());
    CHECK(outcome.any_failed);
    CHECK(outcome.records[0].per_example_scores.empty());
}

TEST_CASE("retrieval programs without a corpus are skipped with a reason") {
    TempDir dir("skipmatrix");
    auto cfg = toy_matrix(dir);
    cfg.programs = {ProgramSpec{"rag", {}}};
    cfg.models = {"m1"};
    cfg.optimizers = {OptimizerSpec{"none", nlohmann::ordered_json::object()}};
    lm::LmRouter router(always_correct_mock());
    auto outcome = run_matrix(cfg, router);
    CHECK(outcome.records.empty());
    REQUIRE(outcome.skipped_invalid.size() == 1);
    CHECK(outcome.skipped_invalid[0].find("corpus") != std::string::npos);
}

TEST_CASE("run records round-trip through JSON") {
    RunRecord r;
    r.config_id = "abc";
    r.model_id = "m";
    r.program_id = "chain_of_thought";
    r.optimizer_id = "mipro";
    r.dataset = "toy";
    r.per_example_scores = {1.0, 0.5};
    r.aggregate = 75.0;
    r.optimization_cost = Money::parse("0.000123");
    r.inference_cost = Money::parse("1.25");
    r.lm_calls = 17;
    r.seed = 9;
    r.started_at = "2026-01-01T00:00:00Z";
    r.finished_at = "2026-01-01T00:00:01Z";

    auto back = record_from_json(to_json(r));
    CHECK(to_json(back) == to_json(r));
    CHECK(back.analysis_config_id() == "m/chain_of_thought/mipro");
}

TEST_CASE("matrix config parses from JSON with path resolution") {
    TempDir dir("cfg");
    write_qa_jsonl(dir.file("toy.jsonl"), 4);
    {
        std::ofstream out(dir.file("cfg.json"));
        out << R"({
            "models": ["m1"],
            "programs": [{"id": "baseline"}, {"id": "cot_based_vote", "voters": 5}],
            "optimizers": [{"id": "none"}, {"id": "rule_infer", "num_rules": 3}],
            "datasets": [{"name": "toy", "path": "toy.jsonl", "metric": "exact_match",
                          "splits": {"train": 2, "validation": 1, "test": 1}}],
            "seed": 5,
            "concurrency": 3
        })";
    }
    auto cfg = MatrixConfig::load(dir.file("cfg.json"));
    CHECK(cfg.models == std::vector<std::string>{"m1"});
    REQUIRE(cfg.programs.size() == 2);
    CHECK(cfg.programs[1].params.voters == 5);
    REQUIRE(cfg.optimizers.size() == 2);
    auto opt_cfg = cfg.optimizers[1].materialize(5, cfg.concurrency);
    CHECK(opt_cfg.num_rules == 3);
    CHECK(opt_cfg.concurrency == 3);
    CHECK(cfg.datasets[0].path == dir.file("toy.jsonl"));
    CHECK(cfg.seed == 5);

    {
        std::ofstream out(dir.file("bad.json"));
        out << R"({"models": [], "programs": [{"id": "nope"}], "optimizers": [], "datasets": []})";
    }
    CHECK_THROWS_AS(MatrixConfig::load(dir.file("bad.json")), ConfigError);
}
