#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedq/compression/quantize.hpp"
#include "fedq/data/partition.hpp"
#include "fedq/data/samples.hpp"
#include "fedq/data/synthetic.hpp"
#include "fedq/federation/federation.hpp"
#include "fedq/models/models.hpp"
#include "fedq/nn/loss.hpp"

namespace fedq::exp {

enum class DataSource { Synthetic, MovieLens, Prepared };
DataSource parse_data_source(const std::string& name);
std::string to_string(DataSource source);

enum class ModelKind { CandidateGenerator, Ranker };
ModelKind parse_model_kind(const std::string& name);
std::string to_string(ModelKind kind);

struct DataSection {
  DataSource source = DataSource::Synthetic;
  std::string ratings_csv;
  std::string movies_csv;
  std::string prepared_dir;  // output directory of prepare-data
  data::SyntheticConfig synthetic;
  std::size_t window = 7;
  data::OrderingMode ordering = data::OrderingMode::TimestampAsc;
  double train_fraction = 0.9;
  data::PartitionKind partition = data::PartitionKind::PerUser;
  std::size_t iid_clients = 100;  // used by the iid partition only
  std::int32_t reference_year = 2020;
};

// Vocabulary and table sizes left at 0 are filled in from the data.
struct ModelSection {
  ModelKind kind = ModelKind::CandidateGenerator;
  nn::LossKind loss = nn::LossKind::SoftmaxCrossEntropy;
  models::CandidateGeneratorConfig candidate_generator;
  models::RankerConfig ranker;

  ModelSection();
};

struct CompressionSection {
  bool enabled = false;
  compression::QuantConfig quant;
  std::vector<int> qp_sweep = {-48, -43, -38, -30, -24};
};

struct MetricsSection {
  std::size_t top_k = 100;
  std::size_t eval_every = 1;
};

struct CentralSection {
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
};

// federation.seed is not part of the document; it is derived from
// master_seed when a run starts.
struct ExperimentConfig {
  std::uint64_t master_seed = 1;
  DataSection data;
  ModelSection model;
  federation::FederationConfig federation;
  CompressionSection compression;
  MetricsSection metrics;
  CentralSection central;

  // Checks everything that does not depend on the data. Throws ConfigError
  // naming the field and the constraint.
  void validate() const;
};

// Parses a JSON document. Every section and key is optional; unknown keys
// are rejected. Each override has the form "dotted.path=value" where value
// is read as JSON when it parses as JSON and as a string otherwise.
ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// Fully-resolved document with every default written out; only the
// selected model's fields appear. Parsing the result gives back the same
// document.
std::string to_json(const ExperimentConfig& config);

}  // namespace fedq::exp
