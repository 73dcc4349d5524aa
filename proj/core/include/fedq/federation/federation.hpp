#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fedq/nn/batch.hpp"
#include "fedq/nn/loss.hpp"
#include "fedq/nn/network.hpp"
#include "fedq/nn/tensor.hpp"
#include "fedq/rng.hpp"

namespace fedq::federation {

enum class Algorithm { FedAvg, FedQ };

Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm algorithm);

struct FederationConfig {
  std::size_t rounds = 10;
  std::size_t clients_per_round = 10;
  std::size_t queue_length = 1;  // FedQ only
  std::size_t batch_size = 32;
  std::size_t local_epochs = 1;
  double learning_rate = 0.1;
  Algorithm algorithm = Algorithm::FedAvg;
  std::uint64_t seed = 0;
  // Run the queues of a round on worker threads. Aggregation still consumes
  // queue results in plan order, so results do not change.
  bool parallel_queues = false;

  // Queue length actually used: 1 for FedAvg.
  std::size_t effective_queue_length() const noexcept {
    return algorithm == Algorithm::FedAvg ? 1 : queue_length;
  }

  // Throws ConfigError naming the violated constraint. `eligible_clients` is
  // the number of clients with a non-empty local dataset.
  void validate(std::size_t eligible_clients) const;
};

struct RoundPlan {
  std::size_t round_index = 0;
  std::vector<std::size_t> selected;             // draw order
  std::vector<std::vector<std::size_t>> queues;  // consecutive chunks of `selected`

  friend bool operator==(const RoundPlan&, const RoundPlan&) = default;
};

// N clients drawn uniformly without replacement (partial Fisher-Yates), in
// draw order. Throws ConfigError if n exceeds the population.
std::vector<std::size_t> subsample_clients(const std::vector<std::size_t>& clients, std::size_t n, Rng& rng);

// Consecutive chunks of length L. Throws ConfigError unless L divides the
// selection size.
std::vector<std::vector<std::size_t>> make_queues(const std::vector<std::size_t>& selected, std::size_t L);

RoundPlan plan_round(std::size_t round_index, const FederationConfig& config,
                     const std::vector<std::size_t>& eligible_clients, Rng& selection_rng);

// Incremental weighted mean over a round's contributions. The server knows
// every weight up front, so each contribution is added pre-scaled by
// weight / weight_total_expected and its storage can go right away.
class AggregationState {
 public:
  AggregationState(const nn::ParameterSet& shape_template, double weight_total_expected);

  // Throws ConfigError on a non-positive weight or incongruent update and
  // InternalError when the accumulated weight would exceed the expected total.
  void accumulate(const nn::ParameterSet& update, double weight);

  double weight_accumulated() const noexcept { return weight_accumulated_; }
  double weight_total_expected() const noexcept { return weight_total_; }
  bool complete() const noexcept;

  // Weighted mean of the contributions so far (rescaled when incomplete).
  nn::ParameterSet current_mean() const;
  // The aggregate once complete; throws InternalError before.
  const nn::ParameterSet& result() const;

 private:
  nn::ParameterSet sum_;
  double weight_accumulated_ = 0.0;
  double weight_total_ = 0.0;
};

// Model and loss shared by every client.
struct LocalTrainer {
  const nn::Network* network = nullptr;
  nn::LossKind loss = nn::LossKind::SoftmaxCrossEntropy;
};

struct ClientUpdateResult {
  nn::ParameterSet params;
  std::size_t steps = 0;
  double mean_loss = 0.0;  // over all steps; 0 when no step ran
};

// E epochs over the rows in order, in ceil(|D| / B) consecutive batches of
// plain SGD. Nothing about the client's position in a queue is visible here.
ClientUpdateResult client_update(const LocalTrainer& trainer, const nn::ParameterSet& params,
                                 const nn::Batch& local_data, std::size_t epochs, std::size_t batch_size,
                                 double learning_rate);

std::size_t client_steps(std::size_t dataset_size, std::size_t epochs, std::size_t batch_size);

// Source of client datasets. client_batch materializes one client's data; the
// simulator holds it only while that client trains.
class ClientData {
 public:
  virtual ~ClientData() = default;
  virtual std::size_t num_clients() const = 0;
  virtual std::size_t client_size(std::size_t client) const = 0;
  virtual nn::Batch client_batch(std::size_t client) const = 0;

  // Clients with at least one sample, ascending.
  std::vector<std::size_t> eligible_clients() const;
};

// Client datasets as row subsets of one batch.
class BatchClientData final : public ClientData {
 public:
  BatchClientData(nn::Batch all, std::vector<std::vector<std::size_t>> clients);
  std::size_t num_clients() const override { return clients_.size(); }
  std::size_t client_size(std::size_t client) const override { return clients_.at(client).size(); }
  nn::Batch client_batch(std::size_t client) const override { return all_.gather(clients_.at(client)); }

 private:
  nn::Batch all_;
  std::vector<std::vector<std::size_t>> clients_;
};

// Model transport. transmit returns what the receiver reconstructs and the
// number of bytes on the wire. Must be safe to call from several threads.
class Channel {
 public:
  virtual ~Channel() = default;
  virtual nn::ParameterSet transmit(const nn::ParameterSet& params, std::uint64_t& bytes) const = 0;
};

// Lossless float32 wire format: 4 bytes per parameter, values passed through.
class IdentityChannel final : public Channel {
 public:
  nn::ParameterSet transmit(const nn::ParameterSet& params, std::uint64_t& bytes) const override;
};

// Instrumentation for the residency contract. Calls may come from worker
// threads in parallel-queue mode.
class RoundObserver {
 public:
  virtual ~RoundObserver() = default;
  virtual void client_loaded(std::size_t /*client*/) {}
  virtual void client_released(std::size_t /*client*/) {}
  virtual void contribution_absorbed(std::size_t /*queue*/, double /*weight*/) {}
};

struct RoundStats {
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::size_t local_steps = 0;       // summed over all clients
  std::size_t sequential_steps = 0;  // longest queue, i.e. the round's critical path
  double mean_client_loss = 0.0;

  friend bool operator==(const RoundStats&, const RoundStats&) = default;
};

struct RoundResult {
  nn::ParameterSet global;
  RoundStats stats;
};

// Every queue starts from the global model; within a queue each client
// continues from its predecessor's output. Queue k's final model enters the
// aggregate with weight s_k = sum of its clients' dataset sizes. Each model
// handed to a client counts as downstream traffic and each model a client
// returns as upstream traffic.
RoundResult run_round(const LocalTrainer& trainer, const nn::ParameterSet& global, const RoundPlan& plan,
                      const ClientData& data, const FederationConfig& config, const Channel& channel,
                      RoundObserver* observer = nullptr);

// run_round restricted to singleton queues; throws ConfigError otherwise.
RoundResult run_fedavg_round(const LocalTrainer& trainer, const nn::ParameterSet& global, const RoundPlan& plan,
                             const ClientData& data, const FederationConfig& config, const Channel& channel,
                             RoundObserver* observer = nullptr);

// run_round with queues of length config.queue_length.
RoundResult run_fedq_round(const LocalTrainer& trainer, const nn::ParameterSet& global, const RoundPlan& plan,
                           const ClientData& data, const FederationConfig& config, const Channel& channel,
                           RoundObserver* observer = nullptr);

// E * mean_i ceil(|D_i| / B) over the eligible clients, times L for FedQ: the
// sequential local steps one queue performs in a round, on average.
double expected_round_steps(const FederationConfig& config, const ClientData& data);

}  // namespace fedq::federation
