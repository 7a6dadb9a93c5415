#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "hyperfed/federation.hpp"
#include "hyperfed/metrics.hpp"

namespace hyperfed {

inline constexpr int kConfigSchemaVersion = 1;

// One institution as written in a config file. The geometry is given at the
// reference grid (preset values) and is desk-scaled to the experiment grid
// when the data are simulated.
struct InstitutionSpec {
  int id = 1;
  FanBeamGeometry reference;
  int n_train = 40;
  int n_test = 10;
  std::optional<std::uint64_t> seed;  // derived from the experiment seed when absent
  double mu_per_unit = 0.02;
  int subsample_factor = 0;
  FilterKind filter = FilterKind::kRamLak;
};

struct ExperimentConfig {
  Task task = Task::kPostProcessing;
  std::uint64_t seed = 0;
  std::string output_dir = "runs/experiment";
  int grid_size = 64;
  int threads = 1;
  bool checkpoint_rounds = false;
  NetworkConfig network;
  StrategyConfig strategy;
  std::vector<InstitutionSpec> institutions;

  // Throws ConfigError naming the offending key path.
  void validate() const;

  // Effective configuration with every default and derived seed spelled
  // out. Parsing this JSON yields the same effective configuration.
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);

  std::uint64_t data_seed(std::size_t k) const;
  InstitutionConfig institution_config(std::size_t k) const;
};

ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);

// Simulated train/test sets of every institution, in config order.
std::vector<ClientData> simulate_clients(const ExperimentConfig& cfg);

GeometryBounds experiment_bounds(const std::vector<ClientData>& clients);

struct ExperimentHooks {
  std::function<void(const std::string&)> log;
  std::function<void(const RoundRecord&)> on_round;
};

struct ExperimentResult {
  MetricReport report;
  FederationResult federation;
};

// Runs one strategy end to end and writes effective_config.json,
// metrics.json, metrics.csv, samples.csv, boxplot.csv, history.jsonl,
// profiles/*.csv, checkpoints/*.hfck and finally DONE into cfg.output_dir.
// Pre-simulated clients may be passed to share data between runs.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentHooks& hooks = {},
                                const std::vector<ClientData>* clients = nullptr);

// Recomputes metrics of a finished run from its checkpoints.
MetricReport evaluate_run(const ExperimentConfig& cfg, const std::filesystem::path& run_dir);

// Per-sample metrics of final models on every institution's test set.
MetricReport evaluate_models(const std::vector<ClientData>& clients,
                             const std::vector<PartitionedModel>& models,
                             const StrategyConfig& strategy, const NetworkConfig& net,
                             const GeometryBounds& bounds);

struct StrategyColumn {
  std::string name;
  MetricReport report;
};

// Wide table: one row per institution plus Overall, two columns per strategy.
std::string comparison_csv(const std::vector<StrategyColumn>& columns);

// Runs each strategy on the same simulated data into output_dir/<strategy>
// and writes output_dir/comparison.csv.
std::vector<StrategyColumn> compare_strategies(const ExperimentConfig& base,
                                               const std::vector<Strategy>& strategies,
                                               const ExperimentHooks& hooks = {});

// Writes every institution's train and test sets as HFDS files.
void write_datasets(const ExperimentConfig& cfg, const std::filesystem::path& dir);

nlohmann::json geometry_to_json(const FanBeamGeometry& g);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace hyperfed
