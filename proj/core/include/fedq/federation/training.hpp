#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedq/federation/federation.hpp"

namespace fedq::federation {

using MetricValues = std::vector<std::pair<std::string, double>>;

// One entry per round; round 0 describes the initial model.
struct RoundRecord {
  std::size_t round = 0;
  bool evaluated = false;
  MetricValues metrics;  // empty unless evaluated
  RoundStats stats;
  double wall_seconds = 0.0;  // not part of the deterministic record

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};
using MetricSeries = std::vector<RoundRecord>;

using Evaluator = std::function<MetricValues(const nn::ParameterSet&)>;

struct TrainingState {
  std::size_t rounds_done = 0;
  nn::ParameterSet global;
  std::string selection_rng_state;
  MetricSeries history;
};

// Fresh state: selection stream derived from config.seed under "selection".
TrainingState initial_training_state(const FederationConfig& config, nn::ParameterSet initial);

struct TrainingOptions {
  std::size_t eval_every = 1;  // rounds; the last round is always evaluated
  RoundObserver* observer = nullptr;
  std::function<void(const TrainingState&)> on_round_end;
};

// Runs rounds state.rounds_done + 1 .. config.rounds (evaluating the initial
// model first when starting from scratch). Validation errors surface before
// any round runs. BatchNorm models are rejected: their batch statistics do
// not federate.
TrainingState run_training(const FederationConfig& config, const LocalTrainer& trainer, const ClientData& data,
                           TrainingState state, const Evaluator& evaluate, const Channel& channel,
                           const TrainingOptions& options = {});

// Checkpoint file: "FQK1", u16 version, u64 rounds done, selection rng state
// string, float64 parameters (u32 count; per entry name, u32 rank, dims,
// values) and the metric history. Resuming from it continues bit-exactly.
std::vector<std::uint8_t> encode_checkpoint(const TrainingState& state);
TrainingState decode_checkpoint(std::span<const std::uint8_t> bytes);

// Writes <dir>/global.fqs (float32 parameter file) and <dir>/state.fqk.
void save_checkpoint(const TrainingState& state, const std::filesystem::path& dir);
TrainingState load_checkpoint(const std::filesystem::path& dir);

}  // namespace fedq::federation
