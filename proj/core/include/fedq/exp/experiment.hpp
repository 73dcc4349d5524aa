#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "fedq/data/corpus.hpp"
#include "fedq/data/io.hpp"
#include "fedq/exp/config.hpp"
#include "fedq/federation/training.hpp"
#include "fedq/nn/network.hpp"

namespace fedq::exp {

// Samples of the configured model type with their split and client
// partition, plus the table sizes of the corpus they came from.
struct PreparedData {
  data::SampleFile samples;
  data::PreparedSplit split;
  std::size_t num_users = 0;
  std::size_t num_movies = 0;
  std::size_t num_genres = 0;

  ModelKind kind() const;
  std::size_t sample_count() const;
};

// Synthetic or MovieLens corpus named by the data section.
data::Corpus load_corpus(const DataSection& section);

// Builds samples, split and partition from the configured source. The
// random ordering, the split and the iid partition draw from the master
// seed's "ordering", "split" and "partition" streams. For the prepared
// source the files are loaded and must match the configured model type.
PreparedData prepare_data(const ExperimentConfig& config);

// Directory layout: samples.fqd, split.fqp, dataset.json (table sizes).
void save_prepared_data(const PreparedData& data, const std::filesystem::path& dir);
PreparedData load_prepared_data(const std::filesystem::path& dir);

// Copy of the model section with sizes left at 0 taken from the data.
// Throws ConfigError when explicit sizes cannot hold the data.
ModelSection resolve_model(const ModelSection& model, const PreparedData& data);

// Model rows for the given sample indices.
nn::Batch make_batch(const PreparedData& data, std::span<const std::size_t> samples);

// Validation metrics of one parameter set. Candidate generator:
// top_k_accuracy and loss. Ranker: accuracy, mse (argmax class rating
// against the true rating) and loss. Rows are processed in chunks.
federation::MetricValues evaluate_model(const ModelSection& model, const nn::Network& net,
                                        const nn::ParameterSet& params, const nn::Batch& batch, std::size_t top_k,
                                        const nn::ParameterSet* buffers = nullptr);

struct RunResult {
  ExperimentConfig resolved;  // model sizes filled in
  federation::MetricSeries series;
  nn::ParameterSet params;
  nn::ParameterSet buffers;  // BatchNorm running statistics (central runs)
  federation::TrainingState state;  // federated runs
};

// Seeds: model init from "init", federation (selection) from "federation".
// Compression, when enabled, applies to both directions of every transfer.
RunResult run_federated(const ExperimentConfig& config, const PreparedData& data,
                        federation::TrainingOptions options = {});
// Continues a saved run up to config.federation.rounds.
RunResult resume_federated(const ExperimentConfig& config, const PreparedData& data,
                           federation::TrainingState state, federation::TrainingOptions options = {});

// Plain minibatch SGD over the training split, shuffled each epoch from the
// "shuffle" stream. Record r holds the validation metrics after epoch r
// (r = 0: initial model) and, for r >= 1, the epoch's mean train_loss.
RunResult run_central(const ExperimentConfig& config, const PreparedData& data);

// Validation metrics of a parameter set for the configured model.
federation::MetricValues evaluate_parameters(const ExperimentConfig& config, const PreparedData& data,
                                             const nn::ParameterSet& params);

struct SweepPoint {
  int qp = 0;
  double step = 0.0;
  std::uint64_t bytes = 0;  // FQC1 container size
  std::uint64_t uncompressed_bytes = 0;
  double space_saving = 0.0;
  double entropy_bits = 0.0;  // per parameter, over the pooled indices
  federation::MetricValues metrics;  // of the dequantized model
};

// Quantizes and codes `params` at each qp (other settings from the
// compression section) and evaluates the reconstruction.
std::vector<SweepPoint> compression_sweep(const ExperimentConfig& config, const PreparedData& data,
                                          const nn::ParameterSet& params, std::span<const int> qps);

// One JSON object per record: round, the metrics, then bytes_up,
// bytes_down, local_steps, sequential_steps, mean_client_loss. Wall-clock
// times are left out so the text depends on config and seed only.
std::string metrics_jsonl(const federation::MetricSeries& series);
// {"round": r, "wall_seconds": t} per record.
std::string timings_jsonl(const federation::MetricSeries& series);

}  // namespace fedq::exp
