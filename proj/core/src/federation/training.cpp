#include "fedq/federation/training.hpp"

#include <chrono>
#include <variant>

#include "fedq/binary_io.hpp"
#include "fedq/error.hpp"
#include "fedq/nn/layers.hpp"
#include "fedq/nn/serialize.hpp"

namespace fedq::federation {

TrainingState initial_training_state(const FederationConfig& config, nn::ParameterSet initial) {
  TrainingState s;
  s.global = std::move(initial);
  s.selection_rng_state = substream(config.seed, "selection").state();
  return s;
}

TrainingState run_training(const FederationConfig& config, const LocalTrainer& trainer, const ClientData& data,
                           TrainingState state, const Evaluator& evaluate, const Channel& channel,
                           const TrainingOptions& options) {
  if (trainer.network == nullptr) throw ConfigError("run_training: trainer has no network");
  for (const auto& layer : trainer.network->spec()) {
    if (std::holds_alternative<nn::BatchNorm>(layer)) {
      throw ConfigError("model.norm: batchnorm is not supported in federated training (use groupnorm)");
    }
  }
  const auto eligible = data.eligible_clients();
  config.validate(eligible.size());
  if (options.eval_every < 1) throw ConfigError("metrics.eval_every must be >= 1");
  if (state.rounds_done > config.rounds) {
    throw ConfigError("resume state is at round " + std::to_string(state.rounds_done) + " beyond rounds = " +
                      std::to_string(config.rounds));
  }
  using Clock = std::chrono::steady_clock;
  auto seconds_since = [](Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };

  if (state.history.empty()) {
    const auto t0 = Clock::now();
    RoundRecord r;
    r.round = 0;
    r.evaluated = true;
    r.metrics = evaluate(state.global);
    r.wall_seconds = seconds_since(t0);
    state.history.push_back(std::move(r));
  }
  Rng selection;
  selection.set_state(state.selection_rng_state);
  while (state.rounds_done < config.rounds) {
    const auto t0 = Clock::now();
    const std::size_t round = state.rounds_done + 1;
    const RoundPlan plan = plan_round(round, config, eligible, selection);
    RoundResult result = config.algorithm == Algorithm::FedAvg
                             ? run_fedavg_round(trainer, state.global, plan, data, config, channel, options.observer)
                             : run_fedq_round(trainer, state.global, plan, data, config, channel, options.observer);
    state.global = std::move(result.global);
    state.rounds_done = round;
    state.selection_rng_state = selection.state();
    RoundRecord r;
    r.round = round;
    r.stats = result.stats;
    if (round % options.eval_every == 0 || round == config.rounds) {
      r.evaluated = true;
      r.metrics = evaluate(state.global);
    }
    r.wall_seconds = seconds_since(t0);
    state.history.push_back(std::move(r));
    if (options.on_round_end) options.on_round_end(state);
  }
  return state;
}

namespace {
constexpr std::uint16_t kCheckpointVersion = 1;
}

std::vector<std::uint8_t> encode_checkpoint(const TrainingState& state) {
  ByteWriter w;
  w.magic("FQK1");
  w.u16(kCheckpointVersion);
  w.u64(state.rounds_done);
  w.string(state.selection_rng_state);
  w.u32(static_cast<std::uint32_t>(state.global.size()));
  for (const auto& e : state.global) {
    w.string(e.name);
    w.u32(static_cast<std::uint32_t>(e.tensor.rank()));
    for (auto d : e.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : e.tensor.values()) w.f64(v);
  }
  w.u32(static_cast<std::uint32_t>(state.history.size()));
  for (const auto& r : state.history) {
    w.u64(r.round);
    w.u8(r.evaluated ? 1 : 0);
    w.u64(r.stats.bytes_up);
    w.u64(r.stats.bytes_down);
    w.u64(r.stats.local_steps);
    w.u64(r.stats.sequential_steps);
    w.f64(r.stats.mean_client_loss);
    w.f64(r.wall_seconds);
    w.u32(static_cast<std::uint32_t>(r.metrics.size()));
    for (const auto& [name, value] : r.metrics) {
      w.string(name);
      w.f64(value);
    }
  }
  return w.take();
}

TrainingState decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("FQK1");
  const std::size_t version_at = r.offset();
  if (r.u16() != kCheckpointVersion) throw DecodingError("unsupported checkpoint version", version_at);
  TrainingState s;
  s.rounds_done = r.u64();
  s.selection_rng_state = r.string();
  const std::uint32_t entries = r.u32();
  for (std::uint32_t i = 0; i < entries; ++i) {
    std::string name = r.string();
    const std::uint32_t rank = r.u32();
    nn::Shape shape;
    std::size_t count = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(r.u32());
      count *= shape.back();
    }
    if (count > r.remaining() / 8) throw DecodingError("tensor '" + name + "' exceeds data", r.offset());
    std::vector<double> values(count);
    for (double& v : values) v = r.f64();
    s.global.add(std::move(name), nn::Tensor(std::move(shape), std::move(values)));
  }
  const std::uint32_t records = r.u32();
  for (std::uint32_t i = 0; i < records; ++i) {
    RoundRecord rec;
    rec.round = r.u64();
    rec.evaluated = r.u8() != 0;
    rec.stats.bytes_up = r.u64();
    rec.stats.bytes_down = r.u64();
    rec.stats.local_steps = r.u64();
    rec.stats.sequential_steps = r.u64();
    rec.stats.mean_client_loss = r.f64();
    rec.wall_seconds = r.f64();
    const std::uint32_t m = r.u32();
    for (std::uint32_t k = 0; k < m; ++k) {
      std::string name = r.string();
      const double value = r.f64();
      rec.metrics.emplace_back(std::move(name), value);
    }
    s.history.push_back(std::move(rec));
  }
  if (!r.at_end()) throw DecodingError("trailing bytes after checkpoint", r.offset());
  return s;
}

void save_checkpoint(const TrainingState& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save_parameters(state.global, dir / "global.fqs");
  write_file_bytes(dir / "state.fqk", encode_checkpoint(state));
}

TrainingState load_checkpoint(const std::filesystem::path& dir) {
  return decode_checkpoint(read_file_bytes(dir / "state.fqk"));
}

}  // namespace fedq::federation
