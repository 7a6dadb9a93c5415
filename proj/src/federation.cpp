#include "hyperfed/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "hyperfed/metrics.hpp"
#include "hyperfed/rng.hpp"

namespace hyperfed {

Strategy parse_strategy(std::string_view name) {
  if (name == "local_only") return Strategy::kLocalOnly;
  if (name == "fedavg") return Strategy::kFedAvg;
  if (name == "fedprox") return Strategy::kFedProx;
  if (name == "hyperfed") return Strategy::kHyperFed;
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected local_only, fedavg, fedprox or hyperfed)");
}

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kLocalOnly: return "local_only";
    case Strategy::kFedAvg: return "fedavg";
    case Strategy::kFedProx: return "fedprox";
    case Strategy::kHyperFed: return "hyperfed";
  }
  return "unknown";
}

void StrategyConfig::validate() const {
  if (local_epochs < 0) throw ConfigError("strategy.local_epochs must be >= 0");
  if (rounds < 0) throw ConfigError("strategy.rounds must be >= 0");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ConfigError("strategy.learning_rate must be > 0");
  }
  if (!(fedprox_mu >= 0) || !std::isfinite(fedprox_mu)) {
    throw ConfigError("strategy.fedprox_mu must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// Aggregation

std::vector<double> aggregation_weights(std::span<const std::size_t> sizes) {
  if (sizes.empty()) throw ContractError("aggregate: no clients");
  double total = 0.0;
  for (std::size_t s : sizes) {
    if (s == 0) throw ContractError("aggregate: client dataset sizes must be positive");
    total += static_cast<double>(s);
  }
  std::vector<double> w;
  w.reserve(sizes.size());
  for (std::size_t s : sizes) w.push_back(static_cast<double>(s) / total);
  return w;
}

template <typename T>
ImagingParams<T> aggregate(std::span<const ImagingParams<T>> client_ws,
                           std::span<const std::size_t> sizes) {
  if (client_ws.empty()) throw ContractError("aggregate: no clients");
  if (client_ws.size() != sizes.size()) {
    throw ContractError("aggregate: " + std::to_string(client_ws.size()) + " parameter sets but " +
                        std::to_string(sizes.size()) + " sizes");
  }
  const auto weights = aggregation_weights(sizes);
  const ImagingParams<T>& first = client_ws.front();
  for (const auto& w : client_ws) {
    bool congruent = w.blocks.size() == first.blocks.size() && w.site_layout == first.site_layout;
    for (std::size_t b = 0; congruent && b < first.blocks.size(); ++b) {
      congruent = w.blocks[b].shape() == first.blocks[b].shape();
    }
    if (!congruent) throw ContractError("aggregate: client parameter sets are not congruent");
  }
  ImagingParams<T> out = first;
  for (std::size_t b = 0; b < first.blocks.size(); ++b) {
    Tensor<T>& dst = out.blocks[b];
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double acc = 0.0;
      T lo = first.blocks[b][i], hi = lo;
      for (std::size_t k = 0; k < client_ws.size(); ++k) {
        const T v = client_ws[k].blocks[b][i];
        acc += weights[k] * static_cast<double>(v);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      dst[i] = std::clamp(static_cast<T>(acc), lo, hi);
    }
  }
  return out;
}

template <typename T>
Var<T> fedprox_penalty(const std::vector<Var<T>>& w, const std::vector<Tensor<T>>& anchor,
                       double mu) {
  if (w.empty() || w.size() != anchor.size()) {
    throw DimensionError("fedprox_penalty: " + std::to_string(w.size()) + " blocks vs " +
                         std::to_string(anchor.size()) + " anchors");
  }
  Var<T> total = squared_distance(w[0], anchor[0]);
  for (std::size_t i = 1; i < w.size(); ++i) total = add(total, squared_distance(w[i], anchor[i]));
  return scale(total, static_cast<T>(0.5 * mu));
}

template ImagingParams<float> aggregate<float>(std::span<const ImagingParams<float>>,
                                               std::span<const std::size_t>);
template ImagingParams<double> aggregate<double>(std::span<const ImagingParams<double>>,
                                                 std::span<const std::size_t>);
template Var<float> fedprox_penalty<float>(const std::vector<Var<float>>&,
                                           const std::vector<Tensor<float>>&, double);
template Var<double> fedprox_penalty<double>(const std::vector<Var<double>>&,
                                             const std::vector<Tensor<double>>&, double);

// ---------------------------------------------------------------------------
// Clients

ClientContext make_client_context(const ClientData& data, const NetworkConfig& net,
                                  const GeometryBounds& bounds) {
  ClientContext ctx;
  ctx.data = &data;
  ctx.g = encode_geometry(data.geometry.raw_vector(), bounds);
  if (net.kind == NetKind::kUnrolled) ctx.op = std::make_shared<const UnrolledOperator>(data.geometry);
  return ctx;
}

LocalTrainResult local_train(PartitionedModel model, const ClientContext& client,
                             const StrategyConfig& strategy, const NetworkConfig& net,
                             const ImagingParams<float>& global_w, int round) {
  const ClientData& data = *client.data;
  LocalTrainResult result;
  if (strategy.local_epochs > 0 && data.train.empty()) {
    throw ConfigError("institution " + std::to_string(data.institution_id) +
                      " has no training samples");
  }
  const bool hyper = strategy.uses_hypernet();
  const bool prox = strategy.strategy == Strategy::kFedProx && strategy.fedprox_mu > 0;
  const SiteLayout layout = net.site_layout();
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double last_epoch_loss = 0.0;

  for (int epoch = 0; epoch < strategy.local_epochs; ++epoch) {
    Rng rng(derive_seed(data.data_seed, "shuffle",
                        {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      const SampleRecord& rec = data.train[idx];
      Tape<float> tape;
      auto w = bind_blocks(tape, model.shared_w.blocks, true);
      FiLMVars<float> film;
      std::vector<Var<float>> xi;
      if (hyper) {
        xi = bind_blocks(tape, model.private_xi.blocks, true);
        film = hyper_forward(client.g, xi, layout);
      }
      auto pred = imaging_forward(tape, rec.degraded_input, w, net, film, client.op.get());
      auto data_loss = mse_loss(pred, tape.constant(rec.target));
      auto loss = prox ? add(data_loss, fedprox_penalty(w, global_w.blocks, strategy.fedprox_mu))
                       : data_loss;
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError("non-finite training loss at institution " +
                           std::to_string(data.institution_id));
      }
      tape.backward(loss);
      std::vector<Tensor<float>> gw;
      gw.reserve(w.size());
      for (const auto& v : w) gw.push_back(tape.grad(v));
      adam_step<float>(model.shared_w.blocks, gw, model.w_optimizer);
      if (hyper) {
        std::vector<Tensor<float>> gx;
        for (const auto& v : xi) gx.push_back(tape.grad(v));
        adam_step<float>(model.private_xi.blocks, gx, model.xi_optimizer);
      }
      epoch_loss += data_loss.value()[0];
    }
    last_epoch_loss = epoch_loss / static_cast<double>(order.size());
  }
  result.model = std::move(model);
  result.mean_loss = last_epoch_loss;
  return result;
}

Tensor<float> client_predict(const PartitionedModel& model, const ClientContext& client,
                             const StrategyConfig& strategy, const NetworkConfig& net,
                             const Tensor<float>& degraded_input) {
  if (strategy.uses_hypernet()) {
    const auto film = hyper_forward_values(client.g, model.private_xi, net.site_layout());
    return imaging_predict(degraded_input, model.shared_w, net, &film, client.op.get());
  }
  return imaging_predict<float>(degraded_input, model.shared_w, net, nullptr, client.op.get());
}

ClientEvaluation evaluate_client(const PartitionedModel& model, const ClientContext& client,
                                 const StrategyConfig& strategy, const NetworkConfig& net,
                                 bool keep_predictions) {
  ClientEvaluation ev;
  for (const auto& rec : client.data->test) {
    auto pred = client_predict(model, client, strategy, net, rec.degraded_input);
    ev.psnr.push_back(psnr(pred, rec.target, 1.0));
    ev.ssim.push_back(ssim(pred, rec.target));
    if (keep_predictions) ev.predictions.push_back(std::move(pred));
  }
  return ev;
}

// ---------------------------------------------------------------------------
// Server

std::vector<char> PayloadChannel::transmit(PayloadMessage message) {
  std::vector<char> delivered = message.bytes;
  std::lock_guard lock(mutex_);
  total_bytes_ += message.bytes.size();
  ++message_count_;
  if (keep_bytes_) messages_.push_back(std::move(message));
  return delivered;
}

namespace {

template <typename Fn>
void for_each_client(std::size_t count, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || count <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(workers, count); ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) {
        try {
          fn(k);
        } catch (...) {
          errors[k] = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

FederationResult run_rounds(const std::vector<ClientData>& clients, const StrategyConfig& strategy,
                            const NetworkConfig& net, const GeometryBounds& bounds,
                            std::uint64_t seed, const RunOptions& options) {
  if (clients.empty()) throw ConfigError("run_rounds: at least one institution is required");
  strategy.validate();
  net.validate();
  const SiteLayout layout = net.site_layout();

  FederationResult result;
  result.initial_w = init_imaging_params<float>(net, derive_seed(seed, "init", {0}));
  result.initial_xi = init_hyper_params<float>(layout, static_cast<std::size_t>(net.hyper_hidden),
                                               derive_seed(seed, "init", {1}));
  result.global_w = result.initial_w;

  std::vector<ClientContext> contexts;
  contexts.reserve(clients.size());
  std::vector<std::size_t> sizes;
  for (const auto& c : clients) {
    contexts.push_back(make_client_context(c, net, bounds));
    sizes.push_back(c.train.size());
    PartitionedModel m;
    m.institution_id = c.institution_id;
    m.shared_w = result.initial_w;
    m.private_xi = result.initial_xi;
    m.w_optimizer = make_adam_state<float>(strategy.learning_rate);
    m.xi_optimizer = make_adam_state<float>(strategy.learning_rate);
    result.models.push_back(std::move(m));
  }

  PayloadChannel fallback;
  PayloadChannel& channel = options.channel != nullptr ? *options.channel : fallback;
  const bool federated = strategy.communicates();

  for (int t = 1; t <= strategy.rounds; ++t) {
    const auto start = std::chrono::steady_clock::now();
    if (federated) {
      const auto payload = encode_checkpoint(to_checkpoint(result.global_w));
      for (auto& m : result.models) {
        const auto received = channel.transmit(
            {PayloadMessage::Direction::kBroadcast, t, m.institution_id, payload});
        m.shared_w = imaging_from_checkpoint(decode_checkpoint(received), net);
      }
    }

    std::vector<double> losses(clients.size(), 0.0);
    for_each_client(clients.size(), options.threads, [&](std::size_t k) {
      auto trained = local_train(std::move(result.models[k]), contexts[k], strategy, net,
                                 result.global_w, t);
      result.models[k] = std::move(trained.model);
      losses[k] = trained.mean_loss;
    });

    if (federated) {
      std::vector<ImagingParams<float>> uploads;
      for (const auto& m : result.models) {
        const auto received = channel.transmit({PayloadMessage::Direction::kUpload, t,
                                                m.institution_id,
                                                encode_checkpoint(to_checkpoint(m.shared_w))});
        uploads.push_back(imaging_from_checkpoint(decode_checkpoint(received), net));
      }
      result.global_w = aggregate<float>(uploads, sizes);
      if (options.on_aggregate) options.on_aggregate(t, result.global_w);
    }

    RoundRecord rec;
    rec.round_index = t;
    rec.train_loss = losses;
    for (const auto& c : clients) rec.institution_ids.push_back(c.institution_id);
    if (options.evaluate_rounds) {
      rec.test_psnr.assign(clients.size(), 0.0);
      rec.test_ssim.assign(clients.size(), 0.0);
      for_each_client(clients.size(), options.threads, [&](std::size_t k) {
        PartitionedModel view = result.models[k];
        if (federated) view.shared_w = result.global_w;
        const auto ev = evaluate_client(view, contexts[k], strategy, net);
        rec.test_psnr[k] = mean(ev.psnr);
        rec.test_ssim[k] = mean(ev.ssim);
      });
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.on_round) options.on_round(rec);
    result.history.push_back(std::move(rec));
  }

  if (federated) {
    for (auto& m : result.models) m.shared_w = result.global_w;
  }
  return result;
}

}  // namespace hyperfed
