#include "hyperfed/experiment.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "hyperfed/rng.hpp"

namespace hyperfed {

using nlohmann::json;

namespace {

// Reads one JSON object, tracking which keys were consumed so leftovers can
// be reported as unknown. Every error names the full key path.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + ": expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(child(key), key_path(key));
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(key_path(key) + ": required key missing");
    return convert<T>(child(key), key_path(key));
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(key_path(item.key()) + ": unknown key");
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(path + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (v.is_number_unsigned()) return v.get<std::uint64_t>();
      throw ConfigError(path + ": expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
      const auto raw = v.get<std::int64_t>();
      if (raw < std::numeric_limits<T>::min() || raw > std::numeric_limits<T>::max()) {
        throw ConfigError(path + ": integer out of range");
      }
      return static_cast<T>(raw);
    } else {
      if (!v.is_number()) throw ConfigError(path + ": expected a number");
      return v.get<T>();
    }
  }

 private:
  std::string label() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto with_path(const std::string& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ConfigError(path + ": " + msg);
  }
}

FanBeamGeometry geometry_from_json(const json& j, const std::string& path) {
  ObjectReader r(j, path);
  FanBeamGeometry g;
  g.n_views = r.require<int>("n_views");
  g.n_bins = r.require<int>("n_bins");
  g.pixel_length_mm = r.require<double>("pixel_length_mm");
  g.bin_length_mm = r.require<double>("bin_length_mm");
  g.source_to_center_mm = r.require<double>("source_to_center_mm");
  g.detector_to_center_mm = r.require<double>("detector_to_center_mm");
  g.incident_intensity = r.require<double>("incident_intensity");
  g.image_size = r.get<int>("image_size", kReferenceGridSize);
  r.finish();
  return g;
}

struct InstitutionDefaults {
  int n_train = 40;
  int n_test = 10;
  double mu_per_unit = 0.02;
  int subsample_factor = 0;
  FilterKind filter = FilterKind::kRamLak;
};

FilterKind parse_filter_at(const std::string& name, const std::string& path) {
  return with_path(path, [&] { return parse_filter_kind(name); });
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

nlohmann::json geometry_to_json(const FanBeamGeometry& g) {
  json j;
  j["n_views"] = g.n_views;
  j["n_bins"] = g.n_bins;
  j["pixel_length_mm"] = g.pixel_length_mm;
  j["bin_length_mm"] = g.bin_length_mm;
  j["source_to_center_mm"] = g.source_to_center_mm;
  j["detector_to_center_mm"] = g.detector_to_center_mm;
  j["incident_intensity"] = g.incident_intensity;
  j["image_size"] = g.image_size;
  return j;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Config

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ObjectReader root(j, "");
  const int version = root.require<int>("schema_version");
  if (version != kConfigSchemaVersion) {
    throw ConfigError("schema_version: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  ExperimentConfig cfg;
  cfg.task = with_path("task", [&] { return parse_task(root.require<std::string>("task")); });
  cfg.seed = root.get<std::uint64_t>("seed", 0);
  cfg.output_dir = root.get<std::string>("output_dir", cfg.output_dir);
  cfg.threads = root.get<int>("threads", 1);
  cfg.checkpoint_rounds = root.get<bool>("checkpoint_rounds", false);
  if (root.has("grid_size") && root.has("grid_scale")) {
    const int size = root.require<int>("grid_size");
    const double scale = root.require<double>("grid_scale");
    if (std::lround(scale * kReferenceGridSize) != size) {
      throw ConfigError("grid_scale: " + format_number(scale) + " disagrees with grid_size " +
                        std::to_string(size));
    }
    cfg.grid_size = size;
  } else if (root.has("grid_scale")) {
    const double scale = root.require<double>("grid_scale");
    if (!(scale > 0) || !(scale <= 1)) throw ConfigError("grid_scale: must lie in (0, 1]");
    cfg.grid_size = static_cast<int>(std::lround(scale * kReferenceGridSize));
  } else {
    cfg.grid_size = root.get<int>("grid_size", cfg.grid_size);
  }

  cfg.network.kind = cfg.task == Task::kReconstruction ? NetKind::kUnrolled : NetKind::kPostProcessing;
  if (root.has("network")) {
    ObjectReader r(root.child("network"), "network");
    cfg.network.channels = r.get<int>("channels", cfg.network.channels);
    cfg.network.n_iterations = r.get<int>("n_iterations", cfg.network.n_iterations);
    cfg.network.reg_channels = r.get<int>("reg_channels", cfg.network.reg_channels);
    cfg.network.hyper_hidden = r.get<int>("hyper_hidden", cfg.network.hyper_hidden);
    if (r.has("init")) {
      cfg.network.init = with_path("network.init", [&] {
        return parse_unrolled_init(r.require<std::string>("init"));
      });
    }
    if (r.has("init_filter")) {
      cfg.network.init_filter = parse_filter_at(r.require<std::string>("init_filter"), "network.init_filter");
    }
    r.finish();
  }

  if (root.has("strategy")) {
    ObjectReader r(root.child("strategy"), "strategy");
    if (r.has("name")) {
      cfg.strategy.strategy = with_path("strategy.name", [&] {
        return parse_strategy(r.require<std::string>("name"));
      });
    }
    cfg.strategy.local_epochs = r.get<int>("local_epochs", cfg.strategy.local_epochs);
    cfg.strategy.rounds = r.get<int>("rounds", cfg.strategy.rounds);
    cfg.strategy.learning_rate = r.get<double>("learning_rate", cfg.strategy.learning_rate);
    cfg.strategy.fedprox_mu = r.get<double>("fedprox_mu", cfg.strategy.fedprox_mu);
    r.finish();
  }

  InstitutionDefaults defaults;
  if (root.has("defaults")) {
    ObjectReader r(root.child("defaults"), "defaults");
    defaults.n_train = r.get<int>("n_train", defaults.n_train);
    defaults.n_test = r.get<int>("n_test", defaults.n_test);
    defaults.mu_per_unit = r.get<double>("mu_per_unit", defaults.mu_per_unit);
    defaults.subsample_factor = r.get<int>("subsample_factor", defaults.subsample_factor);
    if (r.has("filter")) defaults.filter = parse_filter_at(r.require<std::string>("filter"), "defaults.filter");
    r.finish();
  }

  if (!root.has("institutions")) throw ConfigError("institutions: required key missing");
  const json& insts = root.child("institutions");
  if (!insts.is_array()) throw ConfigError("institutions: expected an array");
  const auto presets = institution_presets(cfg.task);
  for (std::size_t k = 0; k < insts.size(); ++k) {
    const std::string path = "institutions[" + std::to_string(k) + "]";
    ObjectReader r(insts[k], path);
    InstitutionSpec spec;
    spec.id = r.require<int>("id");
    if (r.has("preset") == r.has("geometry")) {
      throw ConfigError(path + ": give exactly one of 'preset' or 'geometry'");
    }
    if (r.has("preset")) {
      const int preset = r.require<int>("preset");
      if (preset < 1 || preset > static_cast<int>(presets.size())) {
        throw ConfigError(r.key_path("preset") + ": must be in [1, " +
                          std::to_string(presets.size()) + "]");
      }
      spec.reference = presets[static_cast<std::size_t>(preset - 1)];
    } else {
      spec.reference = geometry_from_json(r.child("geometry"), r.key_path("geometry"));
    }
    spec.n_train = r.get<int>("n_train", defaults.n_train);
    spec.n_test = r.get<int>("n_test", defaults.n_test);
    if (r.has("seed")) spec.seed = r.require<std::uint64_t>("seed");
    spec.mu_per_unit = r.get<double>("mu_per_unit", defaults.mu_per_unit);
    spec.subsample_factor = r.get<int>("subsample_factor", defaults.subsample_factor);
    spec.filter = r.has("filter") ? parse_filter_at(r.require<std::string>("filter"), r.key_path("filter"))
                                  : defaults.filter;
    r.finish();
    cfg.institutions.push_back(spec);
  }
  root.finish();
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (grid_size < 16) throw ConfigError("grid_size: must be >= 16");
  if (threads < 1) throw ConfigError("threads: must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir: must not be empty");
  strategy.validate();
  network.validate();
  const NetKind expected = task == Task::kReconstruction ? NetKind::kUnrolled : NetKind::kPostProcessing;
  if (network.kind != expected) throw ConfigError("network: kind does not match task " + to_string(task));
  if (institutions.empty()) throw ConfigError("institutions: at least one institution is required");
  std::set<int> ids;
  for (std::size_t k = 0; k < institutions.size(); ++k) {
    const std::string path = "institutions[" + std::to_string(k) + "]";
    if (!ids.insert(institutions[k].id).second) {
      throw ConfigError(path + ".id: duplicate institution id " + std::to_string(institutions[k].id));
    }
    with_path(path, [&] {
      institutions[k].reference.validate();
      institution_config(k).validate();
      return 0;
    });
    if (strategy.local_epochs > 0 && institutions[k].n_train == 0) {
      throw ConfigError(path + ".n_train: must be > 0 when training");
    }
  }
}

std::uint64_t ExperimentConfig::data_seed(std::size_t k) const {
  const auto& spec = institutions.at(k);
  if (spec.seed) return *spec.seed;
  return derive_seed(seed, "dataset", {static_cast<std::uint64_t>(spec.id)});
}

InstitutionConfig ExperimentConfig::institution_config(std::size_t k) const {
  const auto& spec = institutions.at(k);
  InstitutionConfig c;
  c.id = spec.id;
  c.geometry = desk_scale(spec.reference, grid_size);
  c.task = task;
  c.n_train = spec.n_train;
  c.n_test = spec.n_test;
  c.seed = data_seed(k);
  c.mu_per_unit = spec.mu_per_unit;
  c.filter = spec.filter;
  c.subsample_factor = spec.subsample_factor;
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["task"] = to_string(task);
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["grid_size"] = grid_size;
  j["threads"] = threads;
  j["checkpoint_rounds"] = checkpoint_rounds;
  j["network"] = {{"channels", network.channels},
                  {"n_iterations", network.n_iterations},
                  {"reg_channels", network.reg_channels},
                  {"hyper_hidden", network.hyper_hidden},
                  {"init", to_string(network.init)},
                  {"init_filter", to_string(network.init_filter)}};
  j["strategy"] = {{"name", to_string(strategy.strategy)},
                   {"local_epochs", strategy.local_epochs},
                   {"rounds", strategy.rounds},
                   {"learning_rate", strategy.learning_rate},
                   {"fedprox_mu", strategy.fedprox_mu}};
  json insts = json::array();
  for (std::size_t k = 0; k < institutions.size(); ++k) {
    const auto& s = institutions[k];
    json g = geometry_to_json(s.reference);
    insts.push_back({{"id", s.id},
                     {"geometry", g},
                     {"n_train", s.n_train},
                     {"n_test", s.n_test},
                     {"seed", data_seed(k)},
                     {"mu_per_unit", s.mu_per_unit},
                     {"subsample_factor", s.subsample_factor},
                     {"filter", to_string(s.filter)}});
  }
  j["institutions"] = insts;
  return j;
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return ExperimentConfig::from_json(j);
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  return parse_config_text(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Data

std::vector<ClientData> simulate_clients(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<ClientData> clients(cfg.institutions.size());
  auto simulate_one = [&](std::size_t k) {
    const InstitutionConfig ic = cfg.institution_config(k);
    auto split = simulate_dataset(ic);
    ClientData& c = clients[k];
    c.institution_id = ic.id;
    c.data_seed = ic.seed;
    c.geometry = ic.geometry;
    c.train = std::move(split.train);
    c.test = std::move(split.test);
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.threads), clients.size());
  if (workers <= 1) {
    for (std::size_t k = 0; k < clients.size(); ++k) simulate_one(k);
    return clients;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(clients.size());
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < clients.size(); k += workers) {
        try {
          simulate_one(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return clients;
}

GeometryBounds experiment_bounds(const std::vector<ClientData>& clients) {
  std::vector<FanBeamGeometry> g;
  for (const auto& c : clients) g.push_back(c.geometry);
  return GeometryBounds::from_geometries(g);
}

void write_datasets(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
  const auto clients = simulate_clients(cfg);
  std::filesystem::create_directories(dir);
  for (const auto& c : clients) {
    const std::string stem = "institution_" + std::to_string(c.institution_id);
    save_dataset(dir / (stem + "_train.hfds"), {cfg.task, c.geometry, c.institution_id, c.train});
    save_dataset(dir / (stem + "_test.hfds"), {cfg.task, c.geometry, c.institution_id, c.test});
  }
}

// ---------------------------------------------------------------------------
// Runs

namespace {

std::string checkpoint_name(int id, const char* what) {
  return "institution_" + std::to_string(id) + "_" + what + ".hfck";
}

json history_line(const RoundRecord& r) {
  json j;
  j["round"] = r.round_index;
  j["institutions"] = r.institution_ids;
  json loss = json::array(), p = json::array(), s = json::array();
  for (double v : r.train_loss) loss.push_back(number_to_json(v));
  for (double v : r.test_psnr) p.push_back(number_to_json(v));
  for (double v : r.test_ssim) s.push_back(number_to_json(v));
  j["train_loss"] = loss;
  j["test_psnr"] = p;
  j["test_ssim"] = s;
  j["wall_seconds"] = r.wall_seconds;
  return j;
}

// Horizontal profile through the middle row of the first test sample.
std::string profile_csv(const ClientData& c, Task task, const Tensor<float>& prediction,
                        FilterKind filter) {
  const auto& rec = c.test.front();
  const int row = static_cast<int>(rec.target.dim(0) / 2);
  const auto target = line_profile(rec.target, row);
  const auto pred = line_profile(prediction, row);
  std::vector<float> input;
  if (task == Task::kPostProcessing) {
    input = line_profile(rec.degraded_input, row);
  } else {
    Sinogram<float> sino{rec.degraded_input, c.geometry};
    input = line_profile(fbp_reconstruct(sino, filter), row);
  }
  std::string out = "column,target,input,prediction\n";
  for (std::size_t j = 0; j < target.size(); ++j) {
    out += std::to_string(j) + "," + format_number(target[j]) + "," + format_number(input[j]) + "," +
           format_number(pred[j]) + "\n";
  }
  return out;
}

void log_line(const ExperimentHooks& hooks, const std::string& text) {
  if (hooks.log) hooks.log(text);
}

}  // namespace

MetricReport evaluate_models(const std::vector<ClientData>& clients,
                             const std::vector<PartitionedModel>& models,
                             const StrategyConfig& strategy, const NetworkConfig& net,
                             const GeometryBounds& bounds) {
  std::vector<SampleMetric> samples;
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const auto ctx = make_client_context(clients[k], net, bounds);
    const auto ev = evaluate_client(models[k], ctx, strategy, net);
    for (std::size_t i = 0; i < ev.psnr.size(); ++i) {
      samples.push_back({clients[k].institution_id, static_cast<int>(i), ev.psnr[i], ev.ssim[i]});
    }
  }
  return MetricReport::from_samples(std::move(samples));
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentHooks& hooks,
                                const std::vector<ClientData>* shared_clients) {
  cfg.validate();
  namespace fs = std::filesystem;
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  fs::remove(out / "DONE");
  write_text_file(out / "effective_config.json", dump(cfg.to_json()));

  std::vector<ClientData> owned;
  if (shared_clients == nullptr) {
    log_line(hooks, "simulating " + std::to_string(cfg.institutions.size()) + " institutions");
    owned = simulate_clients(cfg);
  }
  const std::vector<ClientData>& clients = shared_clients != nullptr ? *shared_clients : owned;
  if (clients.size() != cfg.institutions.size()) {
    throw ContractError("run_experiment: client count does not match the config");
  }
  const GeometryBounds bounds = experiment_bounds(clients);

  std::ofstream history(out / "history.jsonl", std::ios::binary | std::ios::trunc);
  if (!history) throw IoError("cannot write " + (out / "history.jsonl").string());
  std::mutex writer;
  RunOptions options;
  options.threads = cfg.threads;
  options.on_round = [&](const RoundRecord& r) {
    std::lock_guard lock(writer);
    history << history_line(r).dump() << "\n";
    history.flush();
    if (hooks.on_round) hooks.on_round(r);
  };
  if (cfg.checkpoint_rounds) {
    fs::create_directories(out / "checkpoints");
    options.on_aggregate = [&](int t, const ImagingParams<float>& w) {
      std::lock_guard lock(writer);
      save_checkpoint(out / "checkpoints" / ("round_" + std::to_string(t) + "_w.hfck"), to_checkpoint(w));
    };
  }
  log_line(hooks, "training " + to_string(cfg.strategy.strategy) + " for " +
                      std::to_string(cfg.strategy.rounds) + " rounds");
  ExperimentResult result;
  result.federation = run_rounds(clients, cfg.strategy, cfg.network, bounds, cfg.seed, options);
  history.close();

  std::vector<SampleMetric> samples;
  fs::create_directories(out / "profiles");
  for (std::size_t k = 0; k < clients.size(); ++k) {
    const auto ctx = make_client_context(clients[k], cfg.network, bounds);
    const auto ev = evaluate_client(result.federation.models[k], ctx, cfg.strategy, cfg.network, true);
    for (std::size_t i = 0; i < ev.psnr.size(); ++i) {
      samples.push_back({clients[k].institution_id, static_cast<int>(i), ev.psnr[i], ev.ssim[i]});
    }
    if (!clients[k].test.empty()) {
      write_text_file(out / "profiles" / ("institution_" + std::to_string(clients[k].institution_id) + ".csv"),
                      profile_csv(clients[k], cfg.task, ev.predictions.front(), cfg.network.init_filter));
    }
  }
  result.report = MetricReport::from_samples(std::move(samples));

  json metrics = result.report.to_json();
  metrics["strategy"] = to_string(cfg.strategy.strategy);
  metrics["task"] = to_string(cfg.task);
  metrics["seed"] = cfg.seed;
  metrics["rounds"] = cfg.strategy.rounds;
  metrics["grid_size"] = cfg.grid_size;
  write_text_file(out / "metrics.json", dump(metrics));
  write_text_file(out / "metrics.csv", result.report.to_csv());
  write_text_file(out / "samples.csv", result.report.samples_csv());
  write_text_file(out / "boxplot.csv", result.report.boxplot_csv());

  const fs::path ck = out / "checkpoints";
  fs::create_directories(ck);
  save_checkpoint(ck / "global_w.hfck", to_checkpoint(result.federation.global_w));
  for (const auto& m : result.federation.models) {
    save_checkpoint(ck / checkpoint_name(m.institution_id, "w"), to_checkpoint(m.shared_w));
    save_checkpoint(ck / checkpoint_name(m.institution_id, "xi"),
                    to_checkpoint(m.private_xi, cfg.network.site_layout(), cfg.network.kind));
  }
  write_text_file(out / "DONE", "ok\n");
  log_line(hooks, "overall PSNR " + format_number(result.report.overall_psnr) + " dB, SSIM " +
                      format_number(result.report.overall_ssim));
  return result;
}

MetricReport evaluate_run(const ExperimentConfig& cfg, const std::filesystem::path& run_dir) {
  cfg.validate();
  const auto ck = run_dir / "checkpoints";
  if (!std::filesystem::exists(ck)) throw IoError("no checkpoints in " + run_dir.string());
  const auto clients = simulate_clients(cfg);
  std::vector<PartitionedModel> models;
  for (const auto& c : clients) {
    PartitionedModel m;
    m.institution_id = c.institution_id;
    m.shared_w = imaging_from_checkpoint(load_checkpoint(ck / checkpoint_name(c.institution_id, "w")),
                                         cfg.network);
    m.private_xi = hyper_from_checkpoint(load_checkpoint(ck / checkpoint_name(c.institution_id, "xi")),
                                         cfg.network);
    models.push_back(std::move(m));
  }
  return evaluate_models(clients, models, cfg.strategy, cfg.network, experiment_bounds(clients));
}

std::string comparison_csv(const std::vector<StrategyColumn>& columns) {
  if (columns.empty()) throw ContractError("comparison_csv: no strategies");
  std::string out = "institution";
  for (const auto& c : columns) out += "," + c.name + "_psnr," + c.name + "_ssim";
  out += "\n";
  const auto& first = columns.front().report;
  for (std::size_t k = 0; k < first.institutions.size(); ++k) {
    out += std::to_string(first.institutions[k].institution_id);
    for (const auto& c : columns) {
      if (c.report.institutions.size() != first.institutions.size() ||
          c.report.institutions[k].institution_id != first.institutions[k].institution_id) {
        throw ContractError("comparison_csv: reports cover different institutions");
      }
      out += "," + format_number(c.report.institutions[k].mean_psnr) + "," +
             format_number(c.report.institutions[k].mean_ssim);
    }
    out += "\n";
  }
  out += "Overall";
  for (const auto& c : columns) {
    out += "," + format_number(c.report.overall_psnr) + "," + format_number(c.report.overall_ssim);
  }
  out += "\n";
  return out;
}

std::vector<StrategyColumn> compare_strategies(const ExperimentConfig& base,
                                               const std::vector<Strategy>& strategies,
                                               const ExperimentHooks& hooks) {
  if (strategies.empty()) throw ConfigError("compare: at least one strategy is required");
  base.validate();
  log_line(hooks, "simulating " + std::to_string(base.institutions.size()) + " institutions");
  const auto clients = simulate_clients(base);
  std::vector<StrategyColumn> columns;
  for (Strategy s : strategies) {
    ExperimentConfig cfg = base;
    cfg.strategy.strategy = s;
    cfg.output_dir = (std::filesystem::path(base.output_dir) / to_string(s)).string();
    auto result = run_experiment(cfg, hooks, &clients);
    columns.push_back({to_string(s), std::move(result.report)});
  }
  write_text_file(std::filesystem::path(base.output_dir) / "comparison.csv", comparison_csv(columns));
  return columns;
}

}  // namespace hyperfed
