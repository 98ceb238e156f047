#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "flipaudit/report.hpp"
#include "flipaudit/runner.hpp"

using namespace flipaudit;
namespace fs = std::filesystem;

namespace {

const std::string kSource = FLIPAUDIT_SOURCE_DIR;

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() /
           ("flipaudit_run_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string path(const std::string& name) const { return (root / name).string(); }
};

std::string make_corpus(const Workspace& ws, int per_area,
                        const std::vector<Domain>& domains,
                        const std::vector<BiasType>& bias_types) {
  auto templates = load_templates(kSource + "/data/templates.json");
  auto pools = load_swap_pools(kSource + "/data/swap_pools.jsonl");
  auto corpus = generate_corpus(templates, pools, domains, bias_types, per_area);
  std::string path = ws.path("corpus.jsonl");
  save_corpus(path, corpus);
  return path;
}

SyntheticJudgeConfig shipped_judge(double authority_prob = 0.0) {
  SyntheticJudgeConfig judge =
      judge_config_from_json_file(kSource + "/data/judge.json");
  judge.bias[BiasType::Authority].flip_prob = authority_prob;
  return judge;
}

RunConfig base_config(const Workspace& ws, const std::string& corpus) {
  RunConfig config;
  config.corpus_path = corpus;
  config.endpoints = {shipped_judge()};
  config.n_per_area = 5;
  config.seed = 11;
  config.output_dir = ws.path("runs");
  config.cache_dir = ws.path("cache");
  return config;
}

}  // namespace

TEST_CASE("config file parsing round trips the documented keys") {
  Workspace ws;
  std::string config_path = ws.path("run.conf");
  {
    std::ofstream out(config_path);
    out << "# comment line\n";
    out << "corpus = corpus.jsonl\n";
    out << "mode = structured\n";
    out << "bias_types = authority,framing\n";
    out << "domains = lending,finance\n";
    out << "n_per_area = 25\n";
    out << "seed = 99\n";
    out << "parallelism = 3\n";
    out << "fdr_q = 0.1\n";
    out << "rubric = r.json\n";
    out << "endpoint.judge.kind = synthetic\n";
    out << "endpoint.judge.config = " << kSource << "/data/judge.json\n";
    out << "endpoint.judge.seed = 77\n";
    out << "endpoint.gpt.kind = remote\n";
    out << "endpoint.gpt.base_url = http://localhost:8080/v1\n";
    out << "endpoint.gpt.api_key_env = TEST_KEY\n";
    out << "endpoint.gpt.temperature = 0.05\n";
    out << "endpoint.gpt.max_tokens = 256\n";
  }
  RunConfig config = load_run_config(config_path);
  CHECK(config.mode == RunMode::Structured);
  CHECK(config.bias_types ==
        std::vector<BiasType>{BiasType::Authority, BiasType::Framing});
  CHECK(config.domains == std::vector<Domain>{Domain::Lending, Domain::Finance});
  CHECK(config.n_per_area == 25);
  CHECK(config.seed == 99);
  CHECK(config.parallelism == 3);
  CHECK(config.fdr_q == doctest::Approx(0.1));
  REQUIRE(config.endpoints.size() == 2);
  const auto& judge = std::get<SyntheticJudgeConfig>(config.endpoints[0]);
  CHECK(judge.seed == 77);
  CHECK(!judge.policy.empty());
  const auto& remote = std::get<ModelEndpointConfig>(config.endpoints[1]);
  CHECK(remote.name == "gpt");
  CHECK(remote.temperature == doctest::Approx(0.05));
  CHECK(remote.max_tokens == 256);
}

TEST_CASE("config validation fails before any network is touched") {
  RunConfig config;
  CHECK_THROWS_AS(validate(config), std::invalid_argument);  // no corpus
  config.corpus_path = "x.jsonl";
  CHECK_THROWS_AS(validate(config), std::invalid_argument);  // no endpoints
  config.endpoints = {SyntheticJudgeConfig{}};
  config.fdr_q = 1.5;
  CHECK_THROWS_AS(validate(config), std::invalid_argument);
  config.fdr_q = 0.05;
  config.n_per_area = 0;
  CHECK_THROWS_AS(validate(config), std::invalid_argument);
  config.n_per_area = 5;
  CHECK_NOTHROW(validate(config));
}

TEST_CASE("freeform run with a fixed seed is reproducible byte for byte") {
  Workspace ws;
  std::string corpus =
      make_corpus(ws, 5, {Domain::Lending, Domain::Finance}, {BiasType::Authority});
  RunConfig config = base_config(ws, corpus);
  config.domains = {Domain::Lending, Domain::Finance};
  config.bias_types = {BiasType::Authority};
  config.endpoints = {shipped_judge(0.3)};

  RunOutcome first = cmd_run(config);
  CHECK(first.exit_code == 0);
  auto read_file = [](const fs::path& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
  };
  std::string cells_first = read_file(first.run_dir / "cell_stats.csv");
  std::string decisions_first = read_file(first.run_dir / "decisions.jsonl");

  RunOutcome second = cmd_run(config);
  CHECK(second.run_dir == first.run_dir);  // content-addressed
  CHECK(read_file(second.run_dir / "cell_stats.csv") == cells_first);
  CHECK(read_file(second.run_dir / "decisions.jsonl") == decisions_first);
}

TEST_CASE("freeform run produces cells, manifest and verifiable report") {
  Workspace ws;
  std::string corpus = make_corpus(ws, 6, {Domain::Lending}, {BiasType::Authority});
  RunConfig config = base_config(ws, corpus);
  config.domains = {Domain::Lending};
  config.bias_types = {BiasType::Authority};
  config.n_per_area = 6;
  config.endpoints = {shipped_judge(1.0)};

  RunOutcome outcome = cmd_run(config);
  CHECK(outcome.exit_code == 0);

  LoadedRun run = load_run(outcome.run_dir);
  REQUIRE(run.cells.size() == 1);
  CHECK(run.cells[0].n == 6);
  CHECK(run.cells[0].k == 6);  // flip probability 1 on every trigger pair
  CHECK(run.manifest.at("mode") == "freeform");
  CHECK(run.manifest.at("noise_baseline").at("source") == "default");
  CHECK(run.manifest.at("parse_methods").contains("letter_prefix"));

  CHECK(verify_report(outcome.run_dir).empty());

  // Tampering with a stored statistic is caught.
  {
    std::ifstream in(outcome.run_dir / "cell_stats.json");
    nlohmann::json cells;
    in >> cells;
    in.close();
    cells[0]["k"] = 0;
    cells[0]["flip_rate"] = 0.0;
    std::ofstream out(outcome.run_dir / "cell_stats.json");
    out << cells.dump(2);
  }
  CHECK(!verify_report(outcome.run_dir).empty());
}

TEST_CASE("structured run writes features and excludes nothing for the clean judge") {
  Workspace ws;
  std::string corpus = make_corpus(ws, 4, {Domain::Lending},
                                   {BiasType::Authority, BiasType::Demographic});
  RunConfig config = base_config(ws, corpus);
  config.mode = RunMode::Structured;
  config.rubric_path = kSource + "/data/rubrics/lending.json";
  config.domains = {Domain::Lending};
  config.n_per_area = 4;

  RunOutcome outcome = cmd_run(config);
  CHECK(outcome.exit_code == 0);
  LoadedRun run = load_run(outcome.run_dir);
  CHECK(run.manifest.at("invalid_extractions") == 0);
  for (const auto& c : run.cells) CHECK(c.k == 0);  // zero-bias judge
  CHECK(fs::exists(outcome.run_dir / "structured_decisions.jsonl"));
  CHECK(verify_report(outcome.run_dir).empty());
}

TEST_CASE("controls run measures a zero baseline for the deterministic judge") {
  Workspace ws;
  std::string corpus = make_corpus(ws, 4, {Domain::Lending, Domain::Hiring},
                                   {BiasType::Authority});
  RunConfig config = base_config(ws, corpus);
  config.mode = RunMode::Controls;
  config.domains = {Domain::Lending, Domain::Hiring};
  config.synonyms_path = kSource + "/data/synonyms.jsonl";
  config.controls_per_domain = 4;

  RunOutcome outcome = cmd_run(config);
  CHECK(outcome.exit_code == 0);
  std::ifstream in(outcome.run_dir / "baseline.json");
  REQUIRE(in.good());
  nlohmann::json baseline;
  in >> baseline;
  CHECK(baseline.at("pooled_n") == 8);
  CHECK(baseline.at("pooled_rate") == 0.0);
  CHECK(baseline.at("per_domain").size() == 2);

  // The measured baseline feeds the next run's p0 (degenerate zero falls
  // back to the documented default).
  RunConfig follow = base_config(ws, corpus);
  follow.baseline_path = (outcome.run_dir / "baseline.json").string();
  BaselineChoice choice = resolve_baseline(follow);
  CHECK(choice.p0 == 0.05);
  CHECK(choice.source.rfind("default", 0) == 0);
}

TEST_CASE("baseline resolution prefers override, then file, then default") {
  Workspace ws;
  RunConfig config;
  config.baseline_override = 0.07;
  BaselineChoice o = resolve_baseline(config);
  CHECK(o.p0 == 0.07);
  CHECK(o.source == "override");

  std::string baseline_path = ws.path("baseline.json");
  {
    std::ofstream out(baseline_path);
    out << R"({"pooled_rate": 0.04, "pooled_n": 300, "pooled_k": 12})";
  }
  RunConfig with_file;
  with_file.baseline_path = baseline_path;
  BaselineChoice m = resolve_baseline(with_file);
  CHECK(m.p0 == doctest::Approx(0.04));
  CHECK(m.source == "measured");

  CHECK(resolve_baseline(RunConfig{}).source == "default");
}

TEST_CASE("winrate run separates a marker-sensitive judge from noise") {
  Workspace ws;
  std::string corpus = make_corpus(ws, 12, {Domain::Lending}, {BiasType::Authority});
  RunConfig config = base_config(ws, corpus);
  config.mode = RunMode::Winrate;
  config.domains = {Domain::Lending};
  config.bias_types = {BiasType::Authority};
  config.n_per_area = 12;
  config.controls_per_vignette = 8;
  config.vocabulary_path = kSource + "/data/vocabulary.txt";
  config.swap_pools_path = kSource + "/data/swap_pools.jsonl";
  config.endpoints = {shipped_judge(1.0)};

  RunOutcome outcome = cmd_run(config);
  CHECK(outcome.exit_code == 0);
  std::ifstream in(outcome.run_dir / "winrate.json");
  nlohmann::json wr;
  in >> wr;
  CHECK(wr.at("n") == 12);
  CHECK(wr.at("m") == 8);
  CHECK(wr.at("win_rate").get<double>() == 1.0);  // targeted always flips, controls never
  CHECK(wr.at("p_value").get<double>() < 0.01);
}

TEST_CASE("validate mode classifies judge flips as spurious") {
  Workspace ws;
  std::string corpus = make_corpus(ws, 6, {Domain::Lending}, {BiasType::Authority});
  RunConfig config = base_config(ws, corpus);
  config.mode = RunMode::Validate;
  config.domains = {Domain::Lending};
  config.bias_types = {BiasType::Authority};
  config.n_per_area = 6;
  config.endpoints = {shipped_judge(1.0)};

  RunOutcome outcome = cmd_run(config);
  CHECK(outcome.exit_code == 0);
  std::ifstream in(outcome.run_dir / "classification_summary.json");
  REQUIRE(in.good());
  nlohmann::json summary;
  in >> summary;
  CHECK(summary.at("total") == 6);
  // The judge writes identical rationales for both sides, so every flip is
  // spurious under the keyword stub.
  CHECK(summary.at("spurious") == 6);
}

TEST_CASE("loop mode is delegated to the explicit subcommands") {
  Workspace ws;
  std::string corpus = make_corpus(ws, 2, {Domain::Lending}, {BiasType::Authority});
  RunConfig config = base_config(ws, corpus);
  config.mode = RunMode::Loop;
  CHECK_THROWS_WITH_AS(cmd_run(config), doctest::Contains("loop"),
                       std::invalid_argument);
}

TEST_CASE("select_pairs filters subsets and honors n_per_area with shortfall") {
  Workspace ws;
  std::string corpus_path = make_corpus(ws, 5, {Domain::Lending, Domain::Finance},
                                        {BiasType::Authority, BiasType::Framing});
  auto corpus = load_corpus(corpus_path);
  RunConfig config;
  config.domains = {Domain::Lending};
  config.bias_types = {BiasType::Authority};
  config.n_per_area = 3;
  auto selected = select_pairs(corpus, config);
  CHECK(selected.size() == 3);
  for (const auto& p : selected) {
    CHECK(p.domain == Domain::Lending);
    CHECK(p.bias_type == BiasType::Authority);
  }
  // Requesting more than available yields what exists.
  config.n_per_area = 50;
  CHECK(select_pairs(corpus, config).size() == 5);
}

TEST_CASE("thirty controls per domain over ten domains yield three hundred") {
  Workspace ws;
  auto templates = load_templates(kSource + "/data/templates.json");
  auto pools = load_swap_pools(kSource + "/data/swap_pools.jsonl");
  auto corpus = generate_corpus(templates, pools,
                                {kAllDomains.begin(), kAllDomains.end()},
                                {BiasType::Authority}, 2);
  auto synonyms = load_synonym_table(kSource + "/data/synonyms.jsonl");
  auto controls = generate_noise_controls(corpus, 30, synonyms, 3);
  CHECK(controls.size() == 300);
  for (const auto& c : controls) validate(c);
}

TEST_CASE("manifest flags cells with fewer pairs than requested") {
  Workspace ws;
  std::string corpus = make_corpus(ws, 5, {Domain::Lending}, {BiasType::Authority});
  RunConfig config = base_config(ws, corpus);
  config.domains = {Domain::Lending};
  config.bias_types = {BiasType::Authority};
  config.n_per_area = 50;  // corpus only holds 5

  RunOutcome outcome = cmd_run(config);
  LoadedRun run = load_run(outcome.run_dir);
  REQUIRE(run.manifest.at("shortfall").size() == 1);
  CHECK(run.manifest.at("shortfall")[0].at("available") == 5);
  CHECK(run.manifest.at("shortfall")[0].at("requested") == 50);
}

TEST_CASE("report pools runs and refuses mismatched corpora") {
  Workspace ws;
  std::string corpus = make_corpus(ws, 4, {Domain::Lending, Domain::Finance},
                                   {BiasType::Authority, BiasType::Framing});
  RunConfig config = base_config(ws, corpus);
  config.domains = {Domain::Lending, Domain::Finance};
  config.n_per_area = 4;
  config.endpoints = {shipped_judge(1.0)};
  RunOutcome freeform = cmd_run(config);

  RunConfig structured_config = config;
  structured_config.mode = RunMode::Structured;
  structured_config.rubric_path = kSource + "/data/rubrics/lending.json";
  RunOutcome structured = cmd_run(structured_config);

  ReportTables tables =
      cmd_report({freeform.run_dir, structured.run_dir}, ws.path("report"));
  REQUIRE(tables.model_bias.size() == 1);
  CHECK(tables.model_bias[0].at("model") == "synthetic-judge");
  // Authority column: 8 pairs (2 domains x 4), all flipped.
  CHECK(tables.model_bias[0].at("authority").get<double>() == 100.0);
  REQUIRE(tables.reduction.size() == 1);
  // Free-form pools authority (all flips) with framing (none): 8/16.
  CHECK(tables.reduction[0].at("free").get<double>() == 50.0);
  CHECK(tables.reduction[0].at("structured").get<double>() == 0.0);
  CHECK(tables.reduction[0].at("delta_display") == "-100%");
  CHECK(fs::exists(ws.path("report") + "/report_model_bias.csv"));
  CHECK(fs::exists(ws.path("report") + "/report_domain_bias.csv"));
  CHECK(fs::exists(ws.path("report") + "/report_reduction.csv"));

  // Different corpus, same shape: pooling must refuse.
  std::string other_corpus = make_corpus(ws, 3, {Domain::Lending}, {BiasType::Authority});
  RunConfig other = base_config(ws, other_corpus);
  other.domains = {Domain::Lending};
  other.n_per_area = 3;
  RunOutcome other_run = cmd_run(other);
  CHECK_THROWS_WITH_AS(cmd_report({freeform.run_dir, other_run.run_dir}, ws.path("r2")),
                       doctest::Contains("corpus hash"), std::runtime_error);
}

TEST_CASE("pooled rates are flips-over-pairs, not averages of rates") {
  // Two synthetic cell sets with different n: pooling 1/10 and 9/10 with
  // 10/90 and 0/10 must give k-sum over n-sum.
  Workspace ws;
  fs::path run_a = ws.root / "run-a";
  fs::path run_b = ws.root / "run-b";
  for (auto [dir, n, k] : {std::tuple<fs::path, int, int>{run_a, 90, 9},
                           std::tuple<fs::path, int, int>{run_b, 10, 9}}) {
    fs::create_directories(dir);
    nlohmann::json manifest{{"mode", "freeform"},
                            {"corpus_hash", "same-corpus"},
                            {"noise_baseline", {{"p0", 0.05}, {"source", "default"}}},
                            {"config", {{"fdr_q", 0.05}}}};
    std::ofstream(dir / "manifest.json") << manifest.dump();
    nlohmann::json cells = nlohmann::json::array();
    cells.push_back({{"domain", "lending"},
                     {"bias_type", "authority"},
                     {"model", "m"},
                     {"n", n},
                     {"k", k},
                     {"flip_rate", static_cast<double>(k) / n},
                     {"wilson_low", 0.0},
                     {"wilson_high", 1.0},
                     {"p_value", 0.5},
                     {"rejected_after_fdr", false},
                     {"excluded", 0}});
    std::ofstream(dir / "cell_stats.json") << cells.dump();
  }
  ReportTables tables = cmd_report({run_a, run_b}, ws.path("pool-report"));
  // Pooled: 18/100 = 18%, not the 55% a rate-average would give.
  CHECK(tables.model_bias[0].at("authority").get<double>() == doctest::Approx(18.0));
  CHECK(tables.model_bias[0].at("overall").get<double>() == doctest::Approx(18.0));
}

TEST_CASE("signed delta rendering") {
  CHECK(format_signed_percent(relative_delta_percent(5.5, 0.0)) == "-100%");
  CHECK(format_signed_percent(relative_delta_percent(3.7, 6.2)) == "+68%");
  CHECK(format_signed_percent(relative_delta_percent(1.3, 1.3)) == "0%");
  CHECK(format_signed_percent(relative_delta_percent(0.0, 2.0)) == "n/a");
  CHECK(format_signed_percent(relative_delta_percent(0.0, 0.0)) == "0%");
}
