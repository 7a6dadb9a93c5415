// Command-line front end: simulate, run, compare, eval, inspect.

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hyperfed/experiment.hpp"

using namespace hyperfed;

namespace {

struct Overrides {
  std::string config;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string out;
  std::string strategy;
  int threads = 0;
};

void add_common(CLI::App* cmd, Overrides& o, bool with_strategy) {
  cmd->add_option("--config", o.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Override the experiment seed")->each([&](const std::string&) {
    o.has_seed = true;
  });
  cmd->add_option("--out", o.out, "Override the output directory");
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  if (with_strategy) cmd->add_option("--strategy", o.strategy, "local_only, fedavg, fedprox or hyperfed");
}

ExperimentConfig load(const Overrides& o) {
  ExperimentConfig cfg = parse_config(o.config);
  if (o.has_seed) cfg.seed = o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.threads > 0) cfg.threads = o.threads;
  if (!o.strategy.empty()) cfg.strategy.strategy = parse_strategy(o.strategy);
  cfg.validate();
  return cfg;
}

ExperimentHooks console_hooks() {
  ExperimentHooks h;
  h.log = [](const std::string& s) { std::cerr << s << "\n"; };
  h.on_round = [](const RoundRecord& r) {
    double p = 0.0;
    for (double v : r.test_psnr) p += v;
    if (!r.test_psnr.empty()) p /= static_cast<double>(r.test_psnr.size());
    std::fprintf(stderr, "round %d  mean test PSNR %.3f dB  (%.1f s)\n", r.round_index, p, r.wall_seconds);
  };
  return h;
}

void print_report(const MetricReport& r) { std::cout << r.to_csv(); }

void inspect_config(const ExperimentConfig& cfg) {
  std::vector<FanBeamGeometry> geoms;
  for (std::size_t k = 0; k < cfg.institutions.size(); ++k) geoms.push_back(cfg.institution_config(k).geometry);
  const auto bounds = GeometryBounds::from_geometries(geoms);
  std::cout << "task " << to_string(cfg.task) << ", grid " << cfg.grid_size << ", strategy "
            << to_string(cfg.strategy.strategy) << ", seed " << cfg.seed << "\n";
  for (std::size_t k = 0; k < cfg.institutions.size(); ++k) {
    const auto ic = cfg.institution_config(k);
    const auto& g = ic.geometry;
    std::printf("institution %d: views %d bins %d pixel %.4g mm bin %.4g mm SOD %.4g DOD %.4g I0 %.4g  train %d test %d\n",
                ic.id, g.n_views, g.n_bins, g.pixel_length_mm, g.bin_length_mm, g.source_to_center_mm,
                g.detector_to_center_mm, g.incident_intensity, ic.n_train, ic.n_test);
    const auto v = encode_geometry(g.raw_vector(), bounds);
    std::printf("  g =");
    for (double x : v.values) std::printf(" %.4f", x);
    std::printf("\n");
  }
}

void inspect_file(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".hfds") {
    const auto d = load_dataset(path);
    std::cout << "HFDS: task " << to_string(d.task) << ", institution " << d.institution_id << ", "
              << d.records.size() << " records, grid " << d.geometry.image_size << ", views "
              << d.geometry.n_views << ", bins " << d.geometry.n_bins << "\n";
    return;
  }
  const auto ck = load_checkpoint(path);
  std::size_t params = 0;
  for (const auto& b : ck.blocks) params += b.size();
  std::cout << "HFCK: " << (ck.content == CheckpointContent::kImaging ? "imaging" : "hypernetwork")
            << " parameters, " << ck.blocks.size() << " blocks, " << params << " values, "
            << ck.site_layout.site_count() << " FiLM sites\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated CT imaging experiments with geometry-conditioned FiLM"};
  app.require_subcommand(1);

  Overrides sim_o, run_o, cmp_o, eval_o;
  std::string inspect_config_path, inspect_path, eval_run;
  std::vector<std::string> cmp_strategies{"local_only", "fedavg", "fedprox", "hyperfed"};

  auto* sim = app.add_subcommand("simulate", "Simulate every institution and write HFDS datasets");
  add_common(sim, sim_o, false);
  auto* run = app.add_subcommand("run", "Train one strategy and write metrics and checkpoints");
  add_common(run, run_o, true);
  auto* cmp = app.add_subcommand("compare", "Train several strategies on the same data");
  add_common(cmp, cmp_o, false);
  cmp->add_option("--strategies", cmp_strategies, "Strategies to compare")->delimiter(',');
  auto* ev = app.add_subcommand("eval", "Recompute metrics from a finished run's checkpoints");
  add_common(ev, eval_o, true);
  ev->add_option("--run", eval_run, "Run directory (defaults to the config's output_dir)");
  auto* ins = app.add_subcommand("inspect", "Summarize a config, dataset or checkpoint");
  ins->add_option("--config", inspect_config_path, "Experiment config")->check(CLI::ExistingFile);
  ins->add_option("--file", inspect_path, "HFDS or HFCK file")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      auto cfg = load(sim_o);
      const std::filesystem::path dir = sim_o.out.empty()
                                            ? std::filesystem::path(cfg.output_dir) / "data"
                                            : std::filesystem::path(sim_o.out);
      write_datasets(cfg, dir);
      std::cerr << "wrote datasets to " << dir.string() << "\n";
    } else if (*run) {
      auto cfg = load(run_o);
      print_report(run_experiment(cfg, console_hooks()).report);
    } else if (*cmp) {
      auto cfg = load(cmp_o);
      std::vector<Strategy> strategies;
      for (const auto& s : cmp_strategies) strategies.push_back(parse_strategy(s));
      std::cout << comparison_csv(compare_strategies(cfg, strategies, console_hooks()));
    } else if (*ev) {
      auto cfg = load(eval_o);
      const std::filesystem::path dir = std::filesystem::path(eval_run.empty() ? cfg.output_dir : eval_run);
      const auto report = evaluate_run(cfg, dir);
      write_text_file(dir / "eval_metrics.json", report.to_json().dump(2) + "\n");
      write_text_file(dir / "eval_metrics.csv", report.to_csv());
      print_report(report);
    } else if (*ins) {
      if (inspect_config_path.empty() && inspect_path.empty()) {
        std::cerr << "inspect: give --config and/or --file\n";
        return 2;
      }
      if (!inspect_config_path.empty()) inspect_config(parse_config(inspect_config_path));
      if (!inspect_path.empty()) inspect_file(inspect_path);
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 3;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
