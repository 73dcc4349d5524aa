#include "fedq/exp/experiment.hpp"

#include <chrono>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "fedq/binary_io.hpp"
#include "fedq/compression/channel.hpp"
#include "fedq/error.hpp"
#include "fedq/models/models.hpp"
#include "fedq/nn/training.hpp"
#include "fedq/rng.hpp"

namespace fedq::exp {
namespace {

using json = nlohmann::ordered_json;

constexpr std::size_t kEvalChunk = 512;

struct ModelBundle {
  ModelSection model;
  nn::Network net;
  nn::ParameterSet params;
};

ModelBundle build(const ExperimentConfig& config, const PreparedData& data) {
  ModelSection model = resolve_model(config.model, data);
  const std::uint64_t init_seed = derive_seed(config.master_seed, "init");
  models::BuiltModel built = model.kind == ModelKind::CandidateGenerator
                                 ? models::build_candidate_generator(model.candidate_generator, init_seed)
                                 : models::build_ranker(model.ranker, init_seed);
  if (model.kind == ModelKind::CandidateGenerator && config.metrics.top_k > model.candidate_generator.output_vocab_size) {
    throw ConfigError("config field 'metrics.top_k': must not exceed the output vocabulary (" +
                      std::to_string(model.candidate_generator.output_vocab_size) + ")");
  }
  return {model, nn::Network(std::move(built.spec)), std::move(built.params)};
}

bool has_batch_norm(const nn::Network& net) {
  for (const auto& layer : net.spec()) {
    if (std::holds_alternative<nn::BatchNorm>(layer)) return true;
  }
  return false;
}

void require_split(const PreparedData& data) {
  if (data.split.split.train.empty() || data.split.split.validation.empty()) {
    throw DataError("prepared data needs non-empty training and validation splits");
  }
}

federation::Evaluator make_evaluator(const ModelSection& model, const nn::Network& net, const nn::Batch& validation,
                                     std::size_t top_k) {
  return [&model, &net, &validation, top_k](const nn::ParameterSet& params) {
    return evaluate_model(model, net, params, validation, top_k);
  };
}

}  // namespace

ModelKind PreparedData::kind() const {
  return std::holds_alternative<data::HistorySamples>(samples) ? ModelKind::CandidateGenerator : ModelKind::Ranker;
}

std::size_t PreparedData::sample_count() const {
  return std::visit(
      [](const auto& s) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, data::HistorySamples>) {
          return s.samples.size();
        } else {
          return s.size();
        }
      },
      samples);
}

data::Corpus load_corpus(const DataSection& section) {
  switch (section.source) {
    case DataSource::Synthetic: return data::generate_synthetic(section.synthetic).corpus;
    case DataSource::MovieLens: return data::load_movielens(section.ratings_csv, section.movies_csv);
    case DataSource::Prepared: break;
  }
  throw ConfigError("config field 'data.source': prepared data carries samples, not a corpus");
}

PreparedData prepare_data(const ExperimentConfig& config) {
  const auto& d = config.data;
  if (d.source == DataSource::Prepared) {
    PreparedData out = load_prepared_data(d.prepared_dir);
    if (out.kind() != config.model.kind) {
      throw ConfigError("prepared data in " + d.prepared_dir + " holds " + to_string(out.kind()) +
                        " samples but model.type is " + to_string(config.model.kind));
    }
    return out;
  }

  const data::Corpus corpus = load_corpus(d);
  PreparedData out;
  out.num_users = corpus.num_users;
  out.num_movies = corpus.num_movies();
  out.num_genres = corpus.num_genres();

  data::IdsOf ids;
  std::vector<std::int32_t> users;
  if (config.model.kind == ModelKind::CandidateGenerator) {
    Rng order_rng = substream(config.master_seed, "ordering");
    data::HistorySamples hs;
    hs.window = static_cast<std::uint32_t>(d.window);
    hs.samples = data::build_watch_histories(corpus.interactions, d.window, d.ordering, order_rng);
    for (const auto& s : hs.samples) users.push_back(s.user_id);
    out.samples = std::move(hs);
    ids = data::history_ids(std::get<data::HistorySamples>(out.samples).samples);
  } else {
    auto rs = data::build_rating_samples(corpus.interactions, corpus.movies, config.model.ranker.use_movie_age,
                                         d.reference_year);
    for (const auto& s : rs) users.push_back(s.user_id);
    out.samples = std::move(rs);
    ids = data::rating_ids(std::get<std::vector<data::RatingSample>>(out.samples));
  }
  const std::size_t n = out.sample_count();
  if (n < 2) throw DataError("the corpus yields " + std::to_string(n) + " samples; at least 2 are needed");

  Rng split_rng = substream(config.master_seed, "split");
  out.split.sample_count = n;
  out.split.split = data::train_val_split(n, d.train_fraction, split_rng, ids);
  if (d.partition == data::PartitionKind::PerUser) {
    std::vector<std::int32_t> train_users;
    train_users.reserve(out.split.split.train.size());
    for (std::size_t i : out.split.split.train) train_users.push_back(users[i]);
    out.split.partition = data::partition_by_user(train_users);
  } else {
    Rng part_rng = substream(config.master_seed, "partition");
    out.split.partition = data::partition_iid(out.split.split.train.size(), d.iid_clients, part_rng);
  }
  data::validate_prepared_split(out.split);
  return out;
}

void save_prepared_data(const PreparedData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  data::save_samples(data.samples, dir / "samples.fqd");
  data::save_prepared_split(data.split, dir / "split.fqp");
  json meta = {{"model_type", to_string(data.kind())},
               {"num_users", data.num_users},
               {"num_movies", data.num_movies},
               {"num_genres", data.num_genres},
               {"samples", data.sample_count()},
               {"train", data.split.split.train.size()},
               {"validation", data.split.split.validation.size()},
               {"clients", data.split.partition.num_clients()}};
  const std::string text = meta.dump(2) + "\n";
  write_file_bytes(dir / "dataset.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

PreparedData load_prepared_data(const std::filesystem::path& dir) {
  PreparedData out;
  out.samples = data::load_samples(dir / "samples.fqd");
  out.split = data::load_prepared_split(dir / "split.fqp");
  if (out.split.sample_count != out.sample_count()) {
    throw DataError(dir.string() + ": split covers " + std::to_string(out.split.sample_count) +
                    " samples, sample file holds " + std::to_string(out.sample_count()));
  }
  const auto bytes = read_file_bytes(dir / "dataset.json");
  json meta = json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw DataError((dir / "dataset.json").string() + ": not a JSON object");
  for (const char* key : {"num_users", "num_movies", "num_genres"}) {
    if (!meta.contains(key) || !meta[key].is_number_unsigned()) {
      throw DataError((dir / "dataset.json").string() + ": missing or invalid '" + key + "'");
    }
  }
  out.num_users = meta["num_users"].get<std::size_t>();
  out.num_movies = meta["num_movies"].get<std::size_t>();
  out.num_genres = meta["num_genres"].get<std::size_t>();
  return out;
}

ModelSection resolve_model(const ModelSection& model, const PreparedData& data) {
  if (data.kind() != model.kind) {
    throw ConfigError("model.type is " + to_string(model.kind) + " but the data holds " + to_string(data.kind()) +
                      " samples");
  }
  ModelSection out = model;
  auto fill = [](std::size_t& field, std::size_t needed, const std::string& name) {
    if (field == 0) {
      field = needed;
    } else if (field < needed) {
      throw ConfigError("config field 'model." + name + "': " + std::to_string(field) + " cannot hold the " +
                        std::to_string(needed) + " ids in the data");
    }
  };
  if (model.kind == ModelKind::CandidateGenerator) {
    auto& c = out.candidate_generator;
    fill(c.output_vocab_size, data.num_movies, "output_vocab_size");
    fill(c.input_vocab_size, c.output_vocab_size + 1, "input_vocab_size");
    c.validate();
  } else {
    auto& c = out.ranker;
    fill(c.num_users, data.num_users, "num_users");
    fill(c.num_movies, data.num_movies, "num_movies");
    fill(c.num_genres, data.num_genres, "num_genres");
    if (c.num_classes < 10) throw ConfigError("config field 'model.num_classes': rating data needs 10 classes");
    c.validate();
  }
  return out;
}

nn::Batch make_batch(const PreparedData& data, std::span<const std::size_t> samples) {
  if (const auto* h = std::get_if<data::HistorySamples>(&data.samples)) {
    return data::make_history_batch(h->samples, samples, h->window);
  }
  return data::make_rating_batch(std::get<std::vector<data::RatingSample>>(data.samples), samples);
}

federation::MetricValues evaluate_model(const ModelSection& model, const nn::Network& net,
                                        const nn::ParameterSet& params, const nn::Batch& batch, std::size_t top_k,
                                        const nn::ParameterSet* buffers) {
  if (batch.rows == 0) throw ArgumentError("evaluate_model: empty evaluation batch");
  nn::ParameterSet scratch;
  if (buffers) scratch = *buffers;
  double loss_sum = 0.0;
  std::size_t hits = 0;
  double sq_err = 0.0;
  for (std::size_t begin = 0; begin < batch.rows; begin += kEvalChunk) {
    const std::size_t end = std::min(batch.rows, begin + kEvalChunk);
    const nn::Batch chunk = batch.slice(begin, end);
    const auto fwd = net.forward(params, chunk, nn::Mode::Eval, buffers ? &scratch : nullptr);
    loss_sum += nn::loss_and_grad(model.loss, fwd.logits, chunk.targets).loss * static_cast<double>(chunk.rows);
    for (std::size_t r = 0; r < chunk.rows; ++r) {
      const auto scores = fwd.logits.row(r);
      const auto target = static_cast<std::size_t>(chunk.targets[r]);
      if (model.kind == ModelKind::CandidateGenerator) {
        hits += models::rank_of(scores, target) < top_k;
      } else {
        const auto best = models::predict_top_k(scores, 1).front();
        hits += best == target;
        const double e = models::predicted_rating(scores) - nn::class_rating(chunk.targets[r]);
        sq_err += e * e;
      }
    }
  }
  const double rows = static_cast<double>(batch.rows);
  if (model.kind == ModelKind::CandidateGenerator) {
    return {{"top_k_accuracy", static_cast<double>(hits) / rows}, {"loss", loss_sum / rows}};
  }
  return {{"accuracy", static_cast<double>(hits) / rows}, {"mse", sq_err / rows}, {"loss", loss_sum / rows}};
}

RunResult resume_federated(const ExperimentConfig& config, const PreparedData& data, federation::TrainingState state,
                           federation::TrainingOptions options) {
  require_split(data);
  ModelBundle m = build(config, data);
  federation::FederationConfig fc = config.federation;
  fc.seed = derive_seed(config.master_seed, "federation");

  const nn::Batch train = make_batch(data, data.split.split.train);
  const nn::Batch validation = make_batch(data, data.split.split.validation);
  federation::BatchClientData clients(train, data.split.partition.clients);
  federation::LocalTrainer trainer{&m.net, m.model.loss};
  auto evaluate = make_evaluator(m.model, m.net, validation, config.metrics.top_k);

  std::unique_ptr<federation::Channel> channel;
  if (config.compression.enabled) {
    std::vector<std::string> names;
    for (const auto& e : m.params) names.push_back(e.name);
    config.compression.quant.validate(names);
    channel = std::make_unique<compression::CompressedChannel>(config.compression.quant);
  } else {
    channel = std::make_unique<federation::IdentityChannel>();
  }

  if (state.rounds_done == 0 && state.history.empty()) {
    state = federation::initial_training_state(fc, std::move(m.params));
  } else if (!state.global.congruent_with(m.params)) {
    throw ConfigError("saved training state does not match the configured model");
  }
  options.eval_every = config.metrics.eval_every;

  RunResult out;
  out.resolved = config;
  out.resolved.model = m.model;
  out.state = federation::run_training(fc, trainer, clients, std::move(state), evaluate, *channel, options);
  out.series = out.state.history;
  out.params = out.state.global;
  return out;
}

RunResult run_federated(const ExperimentConfig& config, const PreparedData& data, federation::TrainingOptions options) {
  return resume_federated(config, data, federation::TrainingState{}, std::move(options));
}

RunResult run_central(const ExperimentConfig& config, const PreparedData& data) {
  require_split(data);
  ModelBundle m = build(config, data);
  const nn::Batch train = make_batch(data, data.split.split.train);
  const nn::Batch validation = make_batch(data, data.split.split.validation);
  nn::ParameterSet buffers = m.net.init_buffers();
  nn::ParameterSet* buf = buffers.empty() ? nullptr : &buffers;
  const auto& c = config.central;

  RunResult out;
  out.resolved = config;
  out.resolved.model = m.model;
  auto record = [&](std::size_t epoch, double train_loss, std::size_t steps, double seconds) {
    federation::RoundRecord r;
    r.round = epoch;
    r.evaluated = true;
    r.metrics = evaluate_model(m.model, m.net, m.params, validation, config.metrics.top_k, buf);
    if (epoch > 0) r.metrics.emplace_back("train_loss", train_loss);
    r.stats.local_steps = steps;
    r.stats.sequential_steps = steps;
    r.wall_seconds = seconds;
    out.series.push_back(std::move(r));
  };
  record(0, 0.0, 0, 0.0);

  Rng shuffle_rng = substream(config.master_seed, "shuffle");
  std::vector<std::size_t> order(train.rows);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 1; epoch <= c.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle(order, shuffle_rng);
    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += c.batch_size) {
      const std::size_t end = std::min(order.size(), begin + c.batch_size);
      const nn::Batch batch = train.gather(std::vector<std::size_t>(order.begin() + begin, order.begin() + end));
      auto g = nn::compute_gradients(m.net, m.params, batch, m.model.loss, nn::Mode::Train, buf);
      nn::sgd_step_inplace(m.params, g.grads, c.learning_rate);
      loss_sum += g.loss;
      ++steps;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    record(epoch, loss_sum / static_cast<double>(steps), steps, seconds);
  }
  out.params = std::move(m.params);
  out.buffers = std::move(buffers);
  return out;
}

federation::MetricValues evaluate_parameters(const ExperimentConfig& config, const PreparedData& data,
                                             const nn::ParameterSet& params) {
  require_split(data);
  ModelBundle m = build(config, data);
  if (!params.congruent_with(m.params)) throw ConfigError("parameters do not match the configured model");
  if (has_batch_norm(m.net)) throw ConfigError("evaluating a BatchNorm model needs its running statistics");
  return evaluate_model(m.model, m.net, params, make_batch(data, data.split.split.validation), config.metrics.top_k);
}

std::vector<SweepPoint> compression_sweep(const ExperimentConfig& config, const PreparedData& data,
                                          const nn::ParameterSet& params, std::span<const int> qps) {
  require_split(data);
  ModelBundle m = build(config, data);
  if (!params.congruent_with(m.params)) throw ConfigError("parameters do not match the configured model");
  if (has_batch_norm(m.net)) throw ConfigError("compression sweeps support GroupNorm models only");
  const nn::Batch validation = make_batch(data, data.split.split.validation);
  std::vector<std::string> names;
  for (const auto& e : params) names.push_back(e.name);
  std::vector<SweepPoint> out;
  for (int qp : qps) {
    compression::QuantConfig q = config.compression.quant;
    q.qp = qp;
    q.validate(names);
    const auto quantized = compression::quantize_model(params, q);
    const auto blob = compression::encode_model(quantized);
    SweepPoint p;
    p.qp = qp;
    p.step = compression::step_size(qp, q.f_qp, q.rule);
    p.bytes = blob.size();
    p.uncompressed_bytes = compression::uncompressed_bytes(params);
    p.space_saving = compression::space_saving(p.uncompressed_bytes, p.bytes);
    p.entropy_bits = compression::weight_entropy(quantized);
    p.metrics = evaluate_model(m.model, m.net, compression::dequantize_model(compression::decode_model(blob)),
                               validation, config.metrics.top_k);
    out.push_back(std::move(p));
  }
  return out;
}

std::string metrics_jsonl(const federation::MetricSeries& series) {
  std::string out;
  for (const auto& r : series) {
    json line;
    line["round"] = r.round;
    for (const auto& [name, value] : r.metrics) line[name] = value;
    line["bytes_up"] = r.stats.bytes_up;
    line["bytes_down"] = r.stats.bytes_down;
    line["local_steps"] = r.stats.local_steps;
    line["sequential_steps"] = r.stats.sequential_steps;
    line["mean_client_loss"] = r.stats.mean_client_loss;
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::string timings_jsonl(const federation::MetricSeries& series) {
  std::string out;
  for (const auto& r : series) {
    json line;
    line["round"] = r.round;
    line["wall_seconds"] = r.wall_seconds;
    out += line.dump();
    out += '\n';
  }
  return out;
}

}  // namespace fedq::exp
