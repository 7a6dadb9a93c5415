#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "hyperfed/adam.hpp"
#include "hyperfed/dataset.hpp"
#include "hyperfed/hypernet.hpp"
#include "hyperfed/imaging.hpp"

namespace hyperfed {

enum class Strategy { kLocalOnly, kFedAvg, kFedProx, kHyperFed };

Strategy parse_strategy(std::string_view name);
std::string to_string(Strategy s);

struct StrategyConfig {
  Strategy strategy = Strategy::kHyperFed;
  int local_epochs = 3;
  int rounds = 30;
  double learning_rate = 1e-4;
  double fedprox_mu = 0.01;

  void validate() const;
  // Only hyperfed trains the hypernetwork; the others run with identity FiLM.
  bool uses_hypernet() const { return strategy == Strategy::kHyperFed; }
  bool communicates() const { return strategy != Strategy::kLocalOnly; }

  friend bool operator==(const StrategyConfig&, const StrategyConfig&) = default;
};

// One institution's local data.
struct ClientData {
  int institution_id = 0;
  // Seeds the client's shuffling stream. Derived from the institution's data
  // seed so identical datasets see identical sample orders.
  std::uint64_t data_seed = 0;
  FanBeamGeometry geometry;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;
};

// Shared part w and private part xi of one institution's model, plus their
// optimizer state (which also never leaves the client).
struct PartitionedModel {
  int institution_id = 0;
  ImagingParams<float> shared_w;
  HyperParams<float> private_xi;
  AdamState<float> w_optimizer;
  AdamState<float> xi_optimizer;
};

// |D_k| / sum |D|, accumulated in double. Throws ContractError on an empty
// list or non-positive size.
std::vector<double> aggregation_weights(std::span<const std::size_t> sizes);

// Weighted average of congruent parameter sets. Each output element is
// clamped into [min_k, max_k] of its inputs so rounding never leaves the
// convex hull.
template <typename T>
ImagingParams<T> aggregate(std::span<const ImagingParams<T>> client_ws,
                           std::span<const std::size_t> sizes);

// (mu / 2) * sum_i ||w_i - anchor_i||^2.
template <typename T>
Var<T> fedprox_penalty(const std::vector<Var<T>>& w, const std::vector<Tensor<T>>& anchor,
                       double mu);

// Per-geometry data shared by training and evaluation.
struct ClientContext {
  const ClientData* data = nullptr;
  GeometryVector g;
  std::shared_ptr<const UnrolledOperator> op;  // reconstruction only
};

struct LocalTrainResult {
  PartitionedModel model;
  double mean_loss = 0.0;  // mean sample loss over the last epoch
};

// E epochs of per-sample Adam steps on the client's training set. `round`
// selects the shuffling stream.
LocalTrainResult local_train(PartitionedModel model, const ClientContext& client,
                             const StrategyConfig& strategy, const NetworkConfig& net,
                             const ImagingParams<float>& global_w, int round);

// Prediction for one degraded input with the model's w (and xi when the
// strategy uses the hypernetwork).
Tensor<float> client_predict(const PartitionedModel& model, const ClientContext& client,
                             const StrategyConfig& strategy, const NetworkConfig& net,
                             const Tensor<float>& degraded_input);

struct RoundRecord {
  int round_index = 0;
  std::vector<int> institution_ids;
  std::vector<double> train_loss;
  std::vector<double> test_psnr;  // per-institution mean
  std::vector<double> test_ssim;
  double wall_seconds = 0.0;  // excluded from equality

  friend bool operator==(const RoundRecord& a, const RoundRecord& b) {
    return a.round_index == b.round_index && a.institution_ids == b.institution_ids &&
           a.train_loss == b.train_loss && a.test_psnr == b.test_psnr &&
           a.test_ssim == b.test_ssim;
  }
};

// Every byte exchanged between server and clients passes through here.
struct PayloadMessage {
  enum class Direction { kBroadcast, kUpload };
  Direction direction = Direction::kBroadcast;
  int round = 0;
  int institution_id = 0;
  std::vector<char> bytes;
};

class PayloadChannel {
 public:
  explicit PayloadChannel(bool keep_bytes = false) : keep_bytes_(keep_bytes) {}

  // Stores a copy (when keeping bytes) and returns what the receiver sees.
  std::vector<char> transmit(PayloadMessage message);

  const std::vector<PayloadMessage>& messages() const { return messages_; }
  std::size_t total_bytes() const { return total_bytes_; }
  std::size_t message_count() const { return message_count_; }

 private:
  bool keep_bytes_;
  std::mutex mutex_;
  std::vector<PayloadMessage> messages_;
  std::size_t total_bytes_ = 0;
  std::size_t message_count_ = 0;
};

struct RunOptions {
  int threads = 1;
  bool evaluate_rounds = true;
  PayloadChannel* channel = nullptr;
  std::function<void(const RoundRecord&)> on_round;
  // Called with w^{t+1} after each aggregation (federated strategies only).
  std::function<void(int, const ImagingParams<float>&)> on_aggregate;
};

struct FederationResult {
  ImagingParams<float> initial_w;
  HyperParams<float> initial_xi;
  ImagingParams<float> global_w;  // w^T (w^init for local_only)
  std::vector<PartitionedModel> models;
  std::vector<RoundRecord> history;
};

// Server loop. w^init and xi^init are created once from `seed` and handed to
// every client; each round broadcasts w, trains clients (concurrently when
// threads > 1), collects their w and aggregates. After the last round each
// federated client's shared_w is the final global w.
FederationResult run_rounds(const std::vector<ClientData>& clients, const StrategyConfig& strategy,
                            const NetworkConfig& net, const GeometryBounds& bounds,
                            std::uint64_t seed, const RunOptions& options = {});

// Mean test PSNR/SSIM of one client under its model.
struct ClientEvaluation {
  std::vector<double> psnr;
  std::vector<double> ssim;
  std::vector<Tensor<float>> predictions;
};
ClientEvaluation evaluate_client(const PartitionedModel& model, const ClientContext& client,
                                 const StrategyConfig& strategy, const NetworkConfig& net,
                                 bool keep_predictions = false);

ClientContext make_client_context(const ClientData& data, const NetworkConfig& net,
                                  const GeometryBounds& bounds);

}  // namespace hyperfed
