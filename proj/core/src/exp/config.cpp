#include "fedq/exp/config.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fedq/error.hpp"

namespace fedq::exp {
namespace {

using json = nlohmann::ordered_json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("config field '" + path + "': " + what);
}

// Reads the keys of one JSON object and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) field_error(path_.empty() ? "<root>" : path_, "must be an object");
  }

  bool has(const std::string& key) const { return node_.contains(key); }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) field_error(path(key), "must be a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void read(const std::string& key, std::int32_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) field_error(path(key), "must be an integer");
      const auto x = v->is_number_unsigned() ? static_cast<std::int64_t>(std::min<std::uint64_t>(
                                                   v->get<std::uint64_t>(), std::numeric_limits<std::int64_t>::max()))
                                             : v->get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
        field_error(path(key), "is out of the 32-bit integer range");
      }
      out = static_cast<int>(x);
    }
  }
  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) field_error(path(key), "must be a number");
      out = v->get<double>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) field_error(path(key), "must be true or false");
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) field_error(path(key), "must be a string");
      out = v->get<std::string>();
    }
  }
  void read(const std::string& key, std::vector<std::size_t>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) field_error(path(key), "must be an array of non-negative integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) field_error(path(key), "must be an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  void read(const std::string& key, std::vector<int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) field_error(path(key), "must be an array of integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_integer()) field_error(path(key), "must be an array of integers");
        out.push_back(e.get<int>());
      }
    }
  }
  void read(const std::string& key, std::map<std::string, int>& out) {
    if (const json* v = find(key)) {
      if (!v->is_object()) field_error(path(key), "must be an object of integers");
      out.clear();
      for (const auto& [name, e] : v->items()) {
        if (!e.is_number_integer()) field_error(join(path(key), name), "must be an integer");
        out[name] = e.get<int>();
      }
    }
  }
  // Enumerations given by name.
  template <typename T, typename Parse>
  void read_enum(const std::string& key, T& out, Parse parse) {
    std::string name;
    bool present = has(key);
    read(key, name);
    if (!present) return;
    try {
      out = parse(name);
    } catch (const ConfigError& e) {
      field_error(path(key), e.what());
    }
  }

  Section child(const std::string& key) {
    static const json empty = json::object();
    const json* v = find(key);
    return Section(v ? *v : empty, path(key));
  }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) field_error(path(key), "unknown key");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_synthetic(Section s, data::SyntheticConfig& c) {
  s.read("num_users", c.num_users);
  s.read("num_movies", c.num_movies);
  s.read("num_genres", c.num_genres);
  s.read("cluster_count", c.cluster_count);
  s.read("mu", c.mu);
  s.read("sigma", c.sigma);
  s.read("zipf_s", c.zipf_s);
  s.read("seed", c.seed);
  s.read("genres_per_cluster", c.genres_per_cluster);
  s.read("affinity", c.affinity);
  s.read("sequel_probability", c.sequel_probability);
  s.read("min_samples", c.min_samples);
  s.read("first_year", c.first_year);
  s.read("last_year", c.last_year);
  s.finish();
}

void read_data(Section s, DataSection& d) {
  s.read_enum("source", d.source, parse_data_source);
  s.read("ratings_csv", d.ratings_csv);
  s.read("movies_csv", d.movies_csv);
  s.read("prepared_dir", d.prepared_dir);
  read_synthetic(s.child("synthetic"), d.synthetic);
  s.read("window", d.window);
  s.read_enum("ordering", d.ordering, data::parse_ordering);
  s.read("train_fraction", d.train_fraction);
  s.read_enum("partition", d.partition, data::parse_partition_kind);
  s.read("iid_clients", d.iid_clients);
  s.read("reference_year", d.reference_year);
  s.finish();
}

void read_model(Section s, ModelSection& m) {
  s.read_enum("type", m.kind, parse_model_kind);
  s.read_enum("loss", m.loss, nn::parse_loss_kind);
  if (m.kind == ModelKind::CandidateGenerator) {
    auto& c = m.candidate_generator;
    s.read("input_vocab_size", c.input_vocab_size);
    s.read("output_vocab_size", c.output_vocab_size);
    s.read("embedding_dim", c.embedding_dim);
    s.read("hidden_sizes", c.hidden_sizes);
    s.read_enum("norm", c.norm, models::parse_norm_kind);
    s.read("norm_groups", c.norm_groups);
  } else {
    auto& c = m.ranker;
    s.read("num_users", c.num_users);
    s.read("num_movies", c.num_movies);
    s.read("num_genres", c.num_genres);
    s.read("user_dim", c.user_dim);
    s.read("movie_dim", c.movie_dim);
    s.read("genre_dim", c.genre_dim);
    s.read("hidden_sizes", c.hidden_sizes);
    s.read("num_classes", c.num_classes);
    s.read("use_movie_age", c.use_movie_age);
    s.read_enum("norm", c.norm, models::parse_norm_kind);
    s.read("norm_groups", c.norm_groups);
  }
  s.finish();
}

void read_federation(Section s, federation::FederationConfig& f) {
  s.read("rounds", f.rounds);
  s.read("clients_per_round", f.clients_per_round);
  s.read_enum("algorithm", f.algorithm, federation::parse_algorithm);
  s.read("queue_length", f.queue_length);
  s.read("batch_size", f.batch_size);
  s.read("local_epochs", f.local_epochs);
  s.read("learning_rate", f.learning_rate);
  s.read("parallel_queues", f.parallel_queues);
  s.finish();
}

void read_compression(Section s, CompressionSection& c) {
  s.read("enabled", c.enabled);
  s.read("qp", c.quant.qp);
  s.read("f_qp", c.quant.f_qp);
  s.read_enum("step_rule", c.quant.rule, compression::parse_step_rule);
  s.read("per_tensor_qp_offset", c.quant.per_tensor_qp_offset);
  s.read("qp_sweep", c.qp_sweep);
  s.finish();
}

// "a.b.c=value" applied to the raw document, creating objects on the way.
void apply_override(json& doc, const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + text + "' must have the form dotted.path=value");
  }
  const std::string path = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + text + "' has an empty path component");
    if (!node->is_object()) {
      throw ConfigError("override '" + text + "': '" + path.substr(0, start - 1) + "' is not an object");
    }
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) field_error(path, what);
}

}  // namespace

DataSource parse_data_source(const std::string& name) {
  if (name == "synthetic") return DataSource::Synthetic;
  if (name == "movielens") return DataSource::MovieLens;
  if (name == "prepared") return DataSource::Prepared;
  throw ConfigError("unknown data source '" + name + "' (expected synthetic, movielens or prepared)");
}

std::string to_string(DataSource source) {
  switch (source) {
    case DataSource::Synthetic: return "synthetic";
    case DataSource::MovieLens: return "movielens";
    case DataSource::Prepared: return "prepared";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "candidate_generator") return ModelKind::CandidateGenerator;
  if (name == "ranker") return ModelKind::Ranker;
  throw ConfigError("unknown model type '" + name + "' (expected candidate_generator or ranker)");
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::CandidateGenerator ? "candidate_generator" : "ranker";
}

ModelSection::ModelSection() {
  candidate_generator.input_vocab_size = 0;
  candidate_generator.output_vocab_size = 0;
  ranker.num_users = 0;
  ranker.num_movies = 0;
  ranker.num_genres = 0;
}

void ExperimentConfig::validate() const {
  const auto& d = data;
  if (d.source == DataSource::MovieLens) {
    check(!d.ratings_csv.empty(), "data.ratings_csv", "is required for the movielens source");
    check(!d.movies_csv.empty(), "data.movies_csv", "is required for the movielens source");
  }
  if (d.source == DataSource::Prepared) {
    check(!d.prepared_dir.empty(), "data.prepared_dir", "is required for the prepared source");
  }
  if (d.source == DataSource::Synthetic) {
    try {
      d.synthetic.validate();
    } catch (const ConfigError& e) {
      field_error("data.synthetic", e.what());
    }
  }
  check(d.window >= 1, "data.window", "must be >= 1");
  check(d.train_fraction > 0.0 && d.train_fraction < 1.0, "data.train_fraction", "must lie strictly between 0 and 1");
  if (d.partition == data::PartitionKind::IidEqual) check(d.iid_clients >= 1, "data.iid_clients", "must be >= 1");

  // Sizes still at 0 come from the data; stand-ins let the shape checks run.
  try {
    if (model.kind == ModelKind::CandidateGenerator) {
      auto c = model.candidate_generator;
      if (c.output_vocab_size == 0) c.output_vocab_size = c.input_vocab_size > 1 ? c.input_vocab_size - 1 : 1;
      if (c.input_vocab_size == 0) c.input_vocab_size = c.output_vocab_size + 1;
      c.validate();
      check(model.loss == nn::LossKind::SoftmaxCrossEntropy, "model.loss",
            "must be cross_entropy for the candidate generator");
    } else {
      auto c = model.ranker;
      if (c.num_users == 0) c.num_users = 1;
      if (c.num_movies == 0) c.num_movies = 1;
      if (c.num_genres == 0) c.num_genres = 1;
      c.validate();
    }
  } catch (const ConfigError& e) {
    field_error("model", e.what());
  }

  const auto& f = federation;
  check(f.rounds >= 1, "federation.rounds", "must be >= 1");
  check(f.clients_per_round >= 1, "federation.clients_per_round", "must be >= 1");
  check(f.batch_size >= 1, "federation.batch_size", "must be >= 1");
  check(f.local_epochs >= 1, "federation.local_epochs", "must be >= 1");
  check(f.learning_rate >= 0.0, "federation.learning_rate", "must be >= 0");
  if (f.algorithm == federation::Algorithm::FedQ) {
    check(f.queue_length >= 1, "federation.queue_length", "must be >= 1");
    check(f.clients_per_round % f.queue_length == 0, "federation.queue_length",
          "must divide federation.clients_per_round");
  }

  if (compression.enabled) {
    try {
      compression.quant.validate();
    } catch (const ConfigError& e) {
      field_error("compression", e.what());
    }
  }
  for (int qp : compression.qp_sweep) {
    auto q = compression.quant;
    q.qp = qp;
    try {
      q.validate();
    } catch (const ConfigError& e) {
      field_error("compression.qp_sweep", e.what());
    }
  }

  check(metrics.top_k >= 1, "metrics.top_k", "must be >= 1");
  check(metrics.eval_every >= 1, "metrics.eval_every", "must be >= 1");
  check(central.epochs >= 1, "central.epochs", "must be >= 1");
  check(central.batch_size >= 1, "central.batch_size", "must be >= 1");
  check(central.learning_rate >= 0.0, "central.learning_rate", "must be >= 0");
}

ExperimentConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config is not valid JSON");
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& o : overrides) apply_override(doc, o);

  ExperimentConfig c;
  Section root(doc, "");
  root.read("master_seed", c.master_seed);
  read_data(root.child("data"), c.data);
  read_model(root.child("model"), c.model);
  read_federation(root.child("federation"), c.federation);
  read_compression(root.child("compression"), c.compression);
  {
    auto s = root.child("metrics");
    s.read("top_k", c.metrics.top_k);
    s.read("eval_every", c.metrics.eval_every);
    s.finish();
  }
  {
    auto s = root.child("central");
    s.read("epochs", c.central.epochs);
    s.read("batch_size", c.central.batch_size);
    s.read("learning_rate", c.central.learning_rate);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  try {
    return parse_config(text.str(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_json(const ExperimentConfig& c) {
  json doc;
  doc["master_seed"] = c.master_seed;

  const auto& d = c.data;
  const auto& s = d.synthetic;
  json& data = doc["data"];
  data["source"] = to_string(d.source);
  data["ratings_csv"] = d.ratings_csv;
  data["movies_csv"] = d.movies_csv;
  data["prepared_dir"] = d.prepared_dir;
  data["synthetic"] = {{"num_users", s.num_users},
                       {"num_movies", s.num_movies},
                       {"num_genres", s.num_genres},
                       {"cluster_count", s.cluster_count},
                       {"mu", s.mu},
                       {"sigma", s.sigma},
                       {"zipf_s", s.zipf_s},
                       {"seed", s.seed},
                       {"genres_per_cluster", s.genres_per_cluster},
                       {"affinity", s.affinity},
                       {"sequel_probability", s.sequel_probability},
                       {"min_samples", s.min_samples},
                       {"first_year", s.first_year},
                       {"last_year", s.last_year}};
  data["window"] = d.window;
  data["ordering"] = data::to_string(d.ordering);
  data["train_fraction"] = d.train_fraction;
  data["partition"] = data::to_string(d.partition);
  data["iid_clients"] = d.iid_clients;
  data["reference_year"] = d.reference_year;

  json& model = doc["model"];
  model["type"] = to_string(c.model.kind);
  model["loss"] = nn::to_string(c.model.loss);
  if (c.model.kind == ModelKind::CandidateGenerator) {
    const auto& m = c.model.candidate_generator;
    model["input_vocab_size"] = m.input_vocab_size;
    model["output_vocab_size"] = m.output_vocab_size;
    model["embedding_dim"] = m.embedding_dim;
    model["hidden_sizes"] = m.hidden_sizes;
    model["norm"] = models::to_string(m.norm);
    model["norm_groups"] = m.norm_groups;
  } else {
    const auto& m = c.model.ranker;
    model["num_users"] = m.num_users;
    model["num_movies"] = m.num_movies;
    model["num_genres"] = m.num_genres;
    model["user_dim"] = m.user_dim;
    model["movie_dim"] = m.movie_dim;
    model["genre_dim"] = m.genre_dim;
    model["hidden_sizes"] = m.hidden_sizes;
    model["num_classes"] = m.num_classes;
    model["use_movie_age"] = m.use_movie_age;
    model["norm"] = models::to_string(m.norm);
    model["norm_groups"] = m.norm_groups;
  }

  const auto& f = c.federation;
  doc["federation"] = {{"rounds", f.rounds},
                       {"clients_per_round", f.clients_per_round},
                       {"algorithm", federation::to_string(f.algorithm)},
                       {"queue_length", f.queue_length},
                       {"batch_size", f.batch_size},
                       {"local_epochs", f.local_epochs},
                       {"learning_rate", f.learning_rate},
                       {"parallel_queues", f.parallel_queues}};

  json offsets = json::object();
  for (const auto& [name, off] : c.compression.quant.per_tensor_qp_offset) offsets[name] = off;
  doc["compression"] = {{"enabled", c.compression.enabled},
                        {"qp", c.compression.quant.qp},
                        {"f_qp", c.compression.quant.f_qp},
                        {"step_rule", compression::to_string(c.compression.quant.rule)},
                        {"per_tensor_qp_offset", offsets},
                        {"qp_sweep", c.compression.qp_sweep}};
  doc["metrics"] = {{"top_k", c.metrics.top_k}, {"eval_every", c.metrics.eval_every}};
  doc["central"] = {{"epochs", c.central.epochs},
                    {"batch_size", c.central.batch_size},
                    {"learning_rate", c.central.learning_rate}};
  return doc.dump(2) + "\n";
}

}  // namespace fedq::exp
