#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "doctest.h"
#include "hyperfed/experiment.hpp"

using namespace hyperfed;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hyperfed_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const char* kMinimal = R"({
  "schema_version": 1,
  "task": "post_processing",
  "institutions": [{"id": 3, "preset": 2}]
})";

std::string toy_text(const std::string& strategy, int rounds, int institutions) {
  std::string insts;
  for (int i = 1; i <= institutions; ++i) {
    if (i > 1) insts += ",";
    insts += R"({"id": )" + std::to_string(i) + R"(, "preset": )" + std::to_string(2 * i - 1) + "}";
  }
  return R"({
    "schema_version": 1, "task": "post_processing", "seed": 5, "grid_size": 16,
    "network": {"channels": 3, "hyper_hidden": 8},
    "strategy": {"name": ")" + strategy + R"(", "local_epochs": 1, "rounds": )" +
         std::to_string(rounds) + R"(, "learning_rate": 0.001},
    "defaults": {"n_train": 3, "n_test": 2},
    "institutions": [)" + insts + "]}";
}

ExperimentConfig toy(const std::string& strategy, int rounds, int institutions, const fs::path& out) {
  auto cfg = parse_config_text(toy_text(strategy, rounds, institutions));
  cfg.output_dir = out.string();
  return cfg;
}

std::string config_error(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(slurp(p));
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("minimal config resolves documented defaults") {
  auto cfg = parse_config_text(kMinimal);
  CHECK(cfg.strategy.local_epochs == 3);
  CHECK(cfg.strategy.learning_rate == 1e-4);
  CHECK(cfg.strategy.strategy == Strategy::kHyperFed);
  CHECK(cfg.grid_size == 64);
  CHECK(cfg.network.kind == NetKind::kPostProcessing);
  REQUIRE(cfg.institutions.size() == 1);
  CHECK(cfg.institutions[0].reference == institution_presets(Task::kPostProcessing)[1]);
  CHECK(cfg.institution_config(0).geometry == desk_scale(institution_presets(Task::kPostProcessing)[1], 64));

  const auto echo = cfg.to_json();
  for (const char* key : {"schema_version", "task", "seed", "output_dir", "grid_size", "threads",
                          "checkpoint_rounds", "network", "strategy", "institutions"}) {
    CHECK_MESSAGE(echo.contains(key), key);
  }
  for (const char* key : {"name", "local_epochs", "rounds", "learning_rate", "fedprox_mu"}) {
    CHECK(echo["strategy"].contains(key));
  }
  for (const char* key : {"geometry", "n_train", "n_test", "seed", "mu_per_unit", "subsample_factor", "filter"}) {
    CHECK(echo["institutions"][0].contains(key));
  }
}

TEST_CASE("effective config round-trips") {
  auto first = parse_config_text(kMinimal).to_json();
  auto second = ExperimentConfig::from_json(first).to_json();
  CHECK(first.dump() == second.dump());
  auto toy_cfg = parse_config_text(toy_text("fedprox", 2, 3));
  CHECK(ExperimentConfig::from_json(toy_cfg.to_json()).to_json() == toy_cfg.to_json());
}

TEST_CASE("institution data seeds derive from the experiment seed") {
  auto cfg = parse_config_text(toy_text("fedavg", 1, 3));
  CHECK(cfg.data_seed(0) != cfg.data_seed(1));
  auto reseeded = cfg;
  reseeded.seed = 99;
  CHECK(reseeded.data_seed(0) != cfg.data_seed(0));
  auto explicit_seed = parse_config_text(R"({"schema_version": 1, "task": "reconstruction",
      "institutions": [{"id": 1, "preset": 1, "seed": 42}]})");
  CHECK(explicit_seed.data_seed(0) == 42);
  CHECK(explicit_seed.network.kind == NetKind::kUnrolled);
}

TEST_CASE("validation errors name the key path") {
  CHECK(config_error(R"({"schema_version": 1, "task": "post_processing",
      "strategy": {"learning_rate": -0.1}, "institutions": [{"id": 1, "preset": 1}]})")
            .find("strategy.learning_rate") != std::string::npos);
  CHECK(config_error(R"({"schema_version": 1, "task": "post_processing",
      "strategy": {"learnin_rate": 0.1}, "institutions": [{"id": 1, "preset": 1}]})")
            .find("strategy.learnin_rate") != std::string::npos);
  CHECK(config_error(R"({"schema_version": 1, "task": "post_processing", "colour": 1,
      "institutions": [{"id": 1, "preset": 1}]})")
            .find("colour") != std::string::npos);
  CHECK(config_error(R"({"schema_version": 1, "task": "post_processing",
      "institutions": [{"id": 1, "preset": 1}, {"id": 1, "preset": 2}]})")
            .find("institutions[1].id") != std::string::npos);
  CHECK(config_error(R"({"schema_version": 1, "task": "post_processing",
      "institutions": [{"id": 1, "preset": 9}]})")
            .find("institutions[0].preset") != std::string::npos);
  CHECK(config_error(R"({"schema_version": 1, "task": "post_processing",
      "institutions": [{"id": 1, "geometry": {"n_views": 10}}]})")
            .find("institutions[0].geometry") != std::string::npos);
  CHECK(config_error(R"({"schema_version": 1, "task": "post_processing",
      "network": {"channels": "many"}, "institutions": [{"id": 1, "preset": 1}]})")
            .find("network.channels") != std::string::npos);
  CHECK(config_error(R"({"schema_version": 2, "task": "post_processing",
      "institutions": [{"id": 1, "preset": 1}]})")
            .find("schema_version") != std::string::npos);
  CHECK(config_error(R"({"schema_version": 1, "task": "denoise",
      "institutions": [{"id": 1, "preset": 1}]})")
            .find("task") != std::string::npos);
  CHECK(config_error(R"({"schema_version": 1, "task": "post_processing", "grid_size": 64,
      "grid_scale": 0.5, "institutions": [{"id": 1, "preset": 1}]})")
            .find("grid_scale") != std::string::npos);
  CHECK(config_error("{not json") != "");
  CHECK_THROWS_AS(parse_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("bundled preset configs carry the table values verbatim") {
  const fs::path dir = fs::path(HYPERFED_SOURCE_DIR) / "configs";
  auto post = parse_config(dir / "table1_postproc.json");
  auto recon = parse_config(dir / "table1_recon.json");
  CHECK(post.grid_size == 64);
  CHECK(recon.grid_size == 64);
  REQUIRE(post.institutions.size() == 5);
  REQUIRE(recon.institutions.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(post.institutions[k].reference == institution_presets(Task::kPostProcessing)[k]);
    CHECK(recon.institutions[k].reference == institution_presets(Task::kReconstruction)[k]);
  }
  CHECK(recon.network.kind == NetKind::kUnrolled);
  CHECK_NOTHROW(parse_config(dir / "toy.json"));
  CHECK_NOTHROW(parse_config(dir / "directional_postproc.json"));
}

TEST_CASE("zero-round run writes baseline metrics and DONE") {
  const auto out = scratch("t0");
  auto cfg = toy("hyperfed", 0, 2, out);
  auto result = run_experiment(cfg);
  for (const char* f : {"DONE", "metrics.json", "metrics.csv", "samples.csv", "boxplot.csv", "history.jsonl",
                        "effective_config.json", "checkpoints/global_w.hfck", "checkpoints/institution_1_w.hfck",
                        "checkpoints/institution_1_xi.hfck", "profiles/institution_1.csv"}) {
    CHECK_MESSAGE(fs::exists(out / f), f);
  }
  CHECK(slurp(out / "history.jsonl").empty());
  CHECK(result.report.samples.size() == 4);
  const auto effective = parse_config(out / "effective_config.json");
  CHECK(effective.to_json() == cfg.to_json());
}

TEST_CASE("identical runs give byte-identical metrics") {
  const auto a = scratch("det_a"), b = scratch("det_b");
  run_experiment(toy("hyperfed", 2, 2, a));
  auto cfg = toy("hyperfed", 2, 2, b);
  run_experiment(cfg);
  CHECK(slurp(a / "metrics.json") == slurp(b / "metrics.json"));
  CHECK(slurp(a / "samples.csv") == slurp(b / "samples.csv"));
  CHECK(slurp(a / "checkpoints/global_w.hfck") == slurp(b / "checkpoints/global_w.hfck"));
  // Re-running into the same directory overwrites with identical content.
  run_experiment(cfg);
  CHECK(slurp(a / "metrics.json") == slurp(b / "metrics.json"));
  CHECK(fs::exists(b / "DONE"));
}

TEST_CASE("three-institution run: Overall equals the per-sample mean") {
  const auto out = scratch("three");
  auto result = run_experiment(toy("hyperfed", 2, 3, out));
  auto rows = read_csv(out / "metrics.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[1][0] == "1");
  CHECK(rows[3][0] == "3");
  CHECK(rows[4][0] == "Overall");
  auto samples = read_csv(out / "samples.csv");
  REQUIRE(samples.size() == 7);
  double sum = 0.0;
  for (std::size_t i = 1; i < samples.size(); ++i) sum += parse_number(samples[i][2]);
  CHECK(parse_number(rows[4][2]) == sum / 6.0);
  auto history = slurp(out / "history.jsonl");
  CHECK(std::count(history.begin(), history.end(), '\n') == 2);
  auto profile = read_csv(out / "profiles/institution_2.csv");
  CHECK(profile.size() == 17);
  CHECK(profile[0] == std::vector<std::string>{"column", "target", "input", "prediction"});
}

TEST_CASE("eval recomputes metrics from checkpoints") {
  const auto out = scratch("eval");
  auto cfg = toy("hyperfed", 2, 2, out);
  auto result = run_experiment(cfg);
  auto again = evaluate_run(cfg, out);
  CHECK(again.to_json() == result.report.to_json());
  CHECK_THROWS_AS(evaluate_run(cfg, scratch("empty")), IoError);
}

TEST_CASE("per-round checkpoints") {
  const auto out = scratch("rounds");
  auto cfg = toy("fedavg", 2, 2, out);
  cfg.checkpoint_rounds = true;
  run_experiment(cfg);
  CHECK(fs::exists(out / "checkpoints/round_1_w.hfck"));
  CHECK(fs::exists(out / "checkpoints/round_2_w.hfck"));
  CHECK(load_checkpoint(out / "checkpoints/round_2_w.hfck").blocks ==
        load_checkpoint(out / "checkpoints/global_w.hfck").blocks);
}

TEST_CASE("compare_strategies layout and degeneracies") {
  const auto out = scratch("cmp");
  auto base = toy("fedavg", 2, 3, out);
  auto single = compare_strategies(base, {Strategy::kFedAvg});
  REQUIRE(single.size() == 1);
  auto run = run_experiment(toy("fedavg", 2, 3, scratch("cmp_ref")));
  CHECK(single[0].report.to_json() == run.report.to_json());
  auto rows = read_csv(out / "comparison.csv");
  CHECK(rows.size() == 1 + 3 + 1);
  CHECK(rows[0] == std::vector<std::string>{"institution", "fedavg_psnr", "fedavg_ssim"});

  auto one = toy("fedavg", 2, 1, scratch("cmp_one"));
  auto cols = compare_strategies(one, {Strategy::kFedAvg, Strategy::kLocalOnly});
  CHECK(cols[0].report.overall_psnr == cols[1].report.overall_psnr);
  CHECK(cols[0].report.overall_ssim == cols[1].report.overall_ssim);
  auto table = read_csv(fs::path(one.output_dir) / "comparison.csv");
  REQUIRE(table.size() == 3);
  for (const auto& row : table) {
    if (row[0] == "institution") continue;
    CHECK(row[1] == row[3]);
    CHECK(row[2] == row[4]);
  }
  CHECK_THROWS_AS(compare_strategies(one, {}), ConfigError);
}

TEST_CASE("simulate writes loadable datasets") {
  const auto out = scratch("sim");
  auto cfg = toy("hyperfed", 1, 2, out);
  write_datasets(cfg, out / "data");
  auto train = load_dataset(out / "data/institution_2_train.hfds");
  CHECK(train.records.size() == 3);
  CHECK(train.institution_id == 2);
  auto clients = simulate_clients(cfg);
  CHECK(train.records[0].degraded_input == clients[1].train[0].degraded_input);
}

TEST_CASE("command-line exit codes") {
  const std::string cli = HYPERFED_CLI_PATH;
  const auto out = scratch("exe");
  const auto good = out / "good.json";
  const auto bad = out / "bad.json";
  {
    std::ofstream(good) << toy_text("hyperfed", 1, 2);
    std::ofstream(bad) << R"({"schema_version": 1, "task": "post_processing",
        "strategy": {"learning_rate": -1}, "institutions": [{"id": 1, "preset": 1}]})";
  }
  auto run = [](const std::string& cmd) {
    const int status = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run(cli + " run --config " + good.string() + " --out " + (out / "r").string()) == 0);
  CHECK(fs::exists(out / "r/DONE"));
  CHECK(run(cli + " run --config " + bad.string()) == 2);
  CHECK(run(cli + " inspect --config " + good.string() + " --file " + (out / "r/checkpoints/global_w.hfck").string()) == 0);
  CHECK(run(cli + " eval --config " + good.string() + " --run " + (out / "r").string()) == 0);
  CHECK(slurp(out / "r/eval_metrics.csv") == slurp(out / "r/metrics.csv"));
  CHECK(run(cli + " simulate --config " + good.string() + " --out " + (out / "d").string()) == 0);
  CHECK(run(cli + " run --config " + good.string() + " --strategy fedsgd") == 2);
  CHECK(run(cli + " eval --config " + good.string() + " --run " + (out / "missing").string()) == 3);
  CHECK(run(cli + " bogus") != 0);
}
