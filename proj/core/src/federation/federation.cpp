#include "fedq/federation/federation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>

#include "fedq/error.hpp"
#include "fedq/nn/training.hpp"

namespace fedq::federation {

Algorithm parse_algorithm(const std::string& name) {
  if (name == "fedavg") return Algorithm::FedAvg;
  if (name == "fedq") return Algorithm::FedQ;
  throw ConfigError("unknown algorithm '" + name + "' (expected fedavg or fedq)");
}

std::string to_string(Algorithm algorithm) { return algorithm == Algorithm::FedAvg ? "fedavg" : "fedq"; }

void FederationConfig::validate(std::size_t eligible_clients) const {
  if (clients_per_round < 1) throw ConfigError("federation.clients_per_round must be >= 1");
  if (clients_per_round > eligible_clients) {
    throw ConfigError("federation.clients_per_round (" + std::to_string(clients_per_round) +
                      ") exceeds the number of clients with data (" + std::to_string(eligible_clients) + ")");
  }
  if (algorithm == Algorithm::FedQ) {
    if (queue_length < 1) throw ConfigError("federation.queue_length must be >= 1");
    if (clients_per_round % queue_length != 0) {
      throw ConfigError("federation.queue_length (" + std::to_string(queue_length) +
                        ") must divide federation.clients_per_round (" + std::to_string(clients_per_round) + ")");
    }
  }
  if (batch_size < 1) throw ConfigError("federation.batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("federation.learning_rate must be finite and >= 0");
  }
}

std::vector<std::size_t> subsample_clients(const std::vector<std::size_t>& clients, std::size_t n, Rng& rng) {
  if (n > clients.size()) {
    throw ConfigError("cannot sub-sample " + std::to_string(n) + " of " + std::to_string(clients.size()) +
                      " clients");
  }
  std::vector<std::size_t> pool = clients;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  return pool;
}

std::vector<std::vector<std::size_t>> make_queues(const std::vector<std::size_t>& selected, std::size_t L) {
  if (L < 1 || selected.size() % L != 0) {
    throw ConfigError("queue length " + std::to_string(L) + " does not divide " + std::to_string(selected.size()) +
                      " selected clients");
  }
  std::vector<std::vector<std::size_t>> queues;
  for (std::size_t at = 0; at < selected.size(); at += L) {
    queues.emplace_back(selected.begin() + static_cast<std::ptrdiff_t>(at),
                        selected.begin() + static_cast<std::ptrdiff_t>(at + L));
  }
  return queues;
}

RoundPlan plan_round(std::size_t round_index, const FederationConfig& config,
                     const std::vector<std::size_t>& eligible_clients, Rng& selection_rng) {
  RoundPlan plan;
  plan.round_index = round_index;
  plan.selected = subsample_clients(eligible_clients, config.clients_per_round, selection_rng);
  plan.queues = make_queues(plan.selected, config.effective_queue_length());
  return plan;
}

AggregationState::AggregationState(const nn::ParameterSet& shape_template, double weight_total_expected)
    : sum_(shape_template.zeros_like()), weight_total_(weight_total_expected) {
  if (!(weight_total_expected > 0.0)) throw ConfigError("aggregation: expected total weight must be > 0");
}

void AggregationState::accumulate(const nn::ParameterSet& update, double weight) {
  if (!(weight > 0.0)) throw ConfigError("aggregation: contribution weight must be > 0");
  nn::require_congruent(sum_, update, "aggregation");
  const double next = weight_accumulated_ + weight;
  if (next > weight_total_ * (1.0 + 1e-12)) {
    throw InternalError("aggregation: accumulated weight " + std::to_string(next) + " exceeds expected total " +
                        std::to_string(weight_total_));
  }
  const double scale = weight / weight_total_;
  for (std::size_t e = 0; e < sum_.size(); ++e) {
    auto dst = sum_.entry(e).tensor.values();
    auto src = update.entry(e).tensor.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
  }
  weight_accumulated_ = next;
}

bool AggregationState::complete() const noexcept {
  return std::abs(weight_accumulated_ - weight_total_) <= 1e-12 * weight_total_;
}

nn::ParameterSet AggregationState::current_mean() const {
  if (weight_accumulated_ == 0.0) throw InternalError("aggregation: no contributions yet");
  nn::ParameterSet mean = sum_;
  if (complete()) return mean;
  const double scale = weight_total_ / weight_accumulated_;
  for (auto& e : mean) {
    for (double& v : e.tensor.values()) v *= scale;
  }
  return mean;
}

const nn::ParameterSet& AggregationState::result() const {
  if (!complete()) {
    throw InternalError("aggregation: result requested after weight " + std::to_string(weight_accumulated_) +
                        " of " + std::to_string(weight_total_));
  }
  return sum_;
}

std::size_t client_steps(std::size_t dataset_size, std::size_t epochs, std::size_t batch_size) {
  return epochs * ((dataset_size + batch_size - 1) / batch_size);
}

ClientUpdateResult client_update(const LocalTrainer& trainer, const nn::ParameterSet& params,
                                 const nn::Batch& local_data, std::size_t epochs, std::size_t batch_size,
                                 double learning_rate) {
  if (local_data.rows == 0) throw InternalError("client_update: empty local dataset");
  if (batch_size < 1) throw ConfigError("client_update: batch size must be >= 1");
  ClientUpdateResult out;
  out.params = params;
  double loss_sum = 0.0;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t begin = 0; begin < local_data.rows; begin += batch_size) {
      const std::size_t end = std::min(local_data.rows, begin + batch_size);
      const nn::Batch batch = local_data.slice(begin, end);
      auto lg = nn::compute_gradients(*trainer.network, out.params, batch, trainer.loss, nn::Mode::Train);
      nn::sgd_step_inplace(out.params, lg.grads, learning_rate);
      loss_sum += lg.loss;
      ++out.steps;
    }
  }
  out.mean_loss = out.steps ? loss_sum / static_cast<double>(out.steps) : 0.0;
  return out;
}

std::vector<std::size_t> ClientData::eligible_clients() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < num_clients(); ++c) {
    if (client_size(c) > 0) out.push_back(c);
  }
  return out;
}

BatchClientData::BatchClientData(nn::Batch all, std::vector<std::vector<std::size_t>> clients)
    : all_(std::move(all)), clients_(std::move(clients)) {
  for (const auto& c : clients_) {
    for (std::size_t r : c) {
      if (r >= all_.rows) throw DataError("client row " + std::to_string(r) + " outside the sample batch");
    }
  }
}

nn::ParameterSet IdentityChannel::transmit(const nn::ParameterSet& params, std::uint64_t& bytes) const {
  bytes = 4 * static_cast<std::uint64_t>(params.parameter_count());
  return params;
}

namespace {

struct QueueOutcome {
  nn::ParameterSet params;
  double weight = 0.0;  // s_k
  RoundStats stats;
  double loss_sum = 0.0;
};

QueueOutcome run_queue(const LocalTrainer& trainer, const nn::ParameterSet& global,
                       const std::vector<std::size_t>& queue, const ClientData& data,
                       const FederationConfig& config, const Channel& channel, RoundObserver* observer) {
  QueueOutcome out;
  out.params = global;
  for (std::size_t client : queue) {
    std::uint64_t down = 0;
    nn::ParameterSet received = channel.transmit(out.params, down);
    if (observer) observer->client_loaded(client);
    std::optional<nn::Batch> local = data.client_batch(client);
    out.weight += static_cast<double>(local->rows);
    auto update = client_update(trainer, received, *local, config.local_epochs, config.batch_size,
                                config.learning_rate);
    local.reset();
    received = nn::ParameterSet();
    std::uint64_t up = 0;
    out.params = channel.transmit(update.params, up);
    if (observer) observer->client_released(client);
    out.stats.bytes_down += down;
    out.stats.bytes_up += up;
    out.stats.local_steps += update.steps;
    out.loss_sum += update.mean_loss;
  }
  return out;
}

}  // namespace

RoundResult run_round(const LocalTrainer& trainer, const nn::ParameterSet& global, const RoundPlan& plan,
                      const ClientData& data, const FederationConfig& config, const Channel& channel,
                      RoundObserver* observer) {
  if (trainer.network == nullptr) throw ConfigError("run_round: trainer has no network");
  if (plan.queues.empty()) throw ConfigError("run_round: plan has no queues");
  double total = 0.0;
  for (const auto& q : plan.queues) {
    for (std::size_t c : q) {
      const std::size_t n = data.client_size(c);
      if (n == 0) throw InternalError("run_round: client " + std::to_string(c) + " has no data");
      total += static_cast<double>(n);
    }
  }
  AggregationState agg(global, total);
  RoundStats stats;
  double loss_sum = 0.0;
  std::size_t clients = 0;
  auto absorb = [&](std::size_t k, QueueOutcome& q) {
    agg.accumulate(q.params, q.weight);
    q.params = nn::ParameterSet();
    if (observer) observer->contribution_absorbed(k, q.weight);
    stats.bytes_up += q.stats.bytes_up;
    stats.bytes_down += q.stats.bytes_down;
    stats.local_steps += q.stats.local_steps;
    stats.sequential_steps = std::max(stats.sequential_steps, q.stats.local_steps);
    loss_sum += q.loss_sum;
    clients += plan.queues[k].size();
  };

  const std::size_t K = plan.queues.size();
  const std::size_t workers =
      config.parallel_queues ? std::min<std::size_t>(K, std::max(2u, std::thread::hardware_concurrency())) : 1;
  if (workers <= 1) {
    for (std::size_t k = 0; k < K; ++k) {
      QueueOutcome q = run_queue(trainer, global, plan.queues[k], data, config, channel, observer);
      absorb(k, q);
    }
  } else {
    // Results are absorbed strictly in plan order as soon as the prefix is done.
    std::vector<std::optional<QueueOutcome>> ready(K);
    std::size_t next_absorb = 0;
    std::atomic<std::size_t> next_queue{0};
    std::mutex mu;
    std::exception_ptr failure;
    auto work = [&] {
      for (;;) {
        const std::size_t k = next_queue.fetch_add(1);
        if (k >= K) return;
        try {
          QueueOutcome q = run_queue(trainer, global, plan.queues[k], data, config, channel, observer);
          std::lock_guard lock(mu);
          ready[k] = std::move(q);
          while (next_absorb < K && ready[next_absorb]) {
            absorb(next_absorb, *ready[next_absorb]);
            ready[next_absorb].reset();
            ++next_absorb;
          }
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next_queue = K;
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  stats.mean_client_loss = clients ? loss_sum / static_cast<double>(clients) : 0.0;
  return {agg.result(), stats};
}

RoundResult run_fedavg_round(const LocalTrainer& trainer, const nn::ParameterSet& global, const RoundPlan& plan,
                             const ClientData& data, const FederationConfig& config, const Channel& channel,
                             RoundObserver* observer) {
  for (const auto& q : plan.queues) {
    if (q.size() != 1) throw ConfigError("run_fedavg_round: FedAvg plans need singleton queues");
  }
  return run_round(trainer, global, plan, data, config, channel, observer);
}

RoundResult run_fedq_round(const LocalTrainer& trainer, const nn::ParameterSet& global, const RoundPlan& plan,
                           const ClientData& data, const FederationConfig& config, const Channel& channel,
                           RoundObserver* observer) {
  for (const auto& q : plan.queues) {
    if (q.size() != config.queue_length) {
      throw ConfigError("run_fedq_round: queue of " + std::to_string(q.size()) + " clients, expected " +
                        std::to_string(config.queue_length));
    }
  }
  return run_round(trainer, global, plan, data, config, channel, observer);
}

double expected_round_steps(const FederationConfig& config, const ClientData& data) {
  const auto eligible = data.eligible_clients();
  if (eligible.empty()) throw ConfigError("expected_round_steps: no client has data");
  double sum = 0.0;
  for (std::size_t c : eligible) {
    sum += static_cast<double>(client_steps(data.client_size(c), config.local_epochs, config.batch_size));
  }
  return static_cast<double>(config.effective_queue_length()) * sum / static_cast<double>(eligible.size());
}

}  // namespace fedq::federation
