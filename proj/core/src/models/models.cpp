#include "fedq/models/models.hpp"

#include <algorithm>
#include <numeric>

#include "fedq/error.hpp"
#include "fedq/nn/network.hpp"

namespace fedq::models {
namespace {

void append_tower(nn::ModelSpec& spec, std::size_t in, const std::vector<std::size_t>& hidden, NormKind norm,
                  std::size_t groups) {
  for (std::size_t width : hidden) {
    spec.push_back(nn::FullyConnected{in, width});
    if (norm == NormKind::GroupNorm) {
      spec.push_back(nn::GroupNorm{groups, width, 1e-5});
    } else {
      spec.push_back(nn::BatchNorm{width, 1e-5, 0.1});
    }
    spec.push_back(nn::ReLU{});
    in = width;
  }
}

void validate_tower(const std::vector<std::size_t>& hidden, NormKind norm, std::size_t groups,
                    const char* model) {
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (hidden[i] == 0) {
      throw ConfigError(std::string(model) + ": hidden_sizes[" + std::to_string(i) + "] must be >= 1");
    }
    if (norm == NormKind::GroupNorm && (groups == 0 || hidden[i] % groups != 0)) {
      throw ConfigError(std::string(model) + ": norm_groups (" + std::to_string(groups) +
                        ") must divide hidden_sizes[" + std::to_string(i) + "] (" +
                        std::to_string(hidden[i]) + ")");
    }
  }
}

std::size_t tower_count(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::size_t n = 0;
  for (std::size_t width : hidden) {
    n += in * width + width;  // fully connected
    n += 2 * width;           // gamma, beta
    in = width;
  }
  return n + in * out + out;
}

}  // namespace

NormKind parse_norm_kind(const std::string& name) {
  if (name == "groupnorm") return NormKind::GroupNorm;
  if (name == "batchnorm") return NormKind::BatchNorm;
  throw ConfigError("unknown norm '" + name + "' (expected groupnorm or batchnorm)");
}

std::string to_string(NormKind kind) { return kind == NormKind::GroupNorm ? "groupnorm" : "batchnorm"; }

void CandidateGeneratorConfig::validate() const {
  if (output_vocab_size < 1) throw ConfigError("candidate_generator: output_vocab_size must be >= 1");
  if (input_vocab_size != output_vocab_size + 1) {
    throw ConfigError("candidate_generator: input_vocab_size (" + std::to_string(input_vocab_size) +
                      ") must equal output_vocab_size + 1 (" + std::to_string(output_vocab_size + 1) +
                      "); index 0 is reserved for padding");
  }
  if (embedding_dim < 1) throw ConfigError("candidate_generator: embedding_dim must be >= 1");
  validate_tower(hidden_sizes, norm, norm_groups, "candidate_generator");
}

void RankerConfig::validate() const {
  if (num_users < 1 || num_movies < 1 || num_genres < 1) {
    throw ConfigError("ranker: num_users, num_movies and num_genres must be >= 1");
  }
  if (user_dim < 1 || movie_dim < 1 || genre_dim < 1) {
    throw ConfigError("ranker: embedding dims must be >= 1");
  }
  if (num_classes < 2) throw ConfigError("ranker: num_classes must be >= 2");
  validate_tower(hidden_sizes, norm, norm_groups, "ranker");
}

nn::ModelSpec candidate_generator_spec(const CandidateGeneratorConfig& config) {
  config.validate();
  nn::ModelSpec spec;
  spec.push_back(nn::Embedding{kHistoryField, config.input_vocab_size, config.embedding_dim});
  spec.push_back(nn::MeanPoolOverSequence{});
  append_tower(spec, config.embedding_dim, config.hidden_sizes, config.norm, config.norm_groups);
  const std::size_t last = config.hidden_sizes.empty() ? config.embedding_dim : config.hidden_sizes.back();
  spec.push_back(nn::FullyConnected{last, config.output_vocab_size});
  return spec;
}

nn::ModelSpec ranker_spec(const RankerConfig& config) {
  config.validate();
  nn::ModelSpec spec;
  spec.push_back(nn::Embedding{kUserField, config.num_users, config.user_dim});
  spec.push_back(nn::Embedding{kMovieField, config.num_movies, config.movie_dim});
  spec.push_back(nn::Embedding{kGenresField, config.num_genres, config.genre_dim});
  spec.push_back(nn::MeanPoolOverSequence{});
  nn::Concat concat{3, {}};
  if (config.use_movie_age) concat.dense_features.push_back(kMovieAgeField);
  spec.push_back(concat);
  append_tower(spec, config.concat_width(), config.hidden_sizes, config.norm, config.norm_groups);
  const std::size_t last = config.hidden_sizes.empty() ? config.concat_width() : config.hidden_sizes.back();
  spec.push_back(nn::FullyConnected{last, config.num_classes});
  return spec;
}

BuiltModel build_candidate_generator(const CandidateGeneratorConfig& config, std::uint64_t init_seed) {
  BuiltModel model{candidate_generator_spec(config), {}};
  Rng rng(init_seed);
  model.params = nn::Network(model.spec).init_parameters(rng);
  return model;
}

BuiltModel build_ranker(const RankerConfig& config, std::uint64_t init_seed) {
  BuiltModel model{ranker_spec(config), {}};
  Rng rng(init_seed);
  model.params = nn::Network(model.spec).init_parameters(rng);
  return model;
}

std::size_t candidate_generator_parameter_count(const CandidateGeneratorConfig& config) {
  return config.input_vocab_size * config.embedding_dim +
         tower_count(config.embedding_dim, config.hidden_sizes, config.output_vocab_size);
}

std::size_t ranker_parameter_count(const RankerConfig& config) {
  return config.num_users * config.user_dim + config.num_movies * config.movie_dim +
         config.num_genres * config.genre_dim +
         tower_count(config.concat_width(), config.hidden_sizes, config.num_classes);
}

std::vector<std::size_t> predict_top_k(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) {
    throw ArgumentError("predict_top_k: k = " + std::to_string(k) + " outside [1, " +
                        std::to_string(scores.size()) + "]");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto before = [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  order.resize(k);
  return order;
}

std::size_t rank_of(std::span<const double> scores, std::size_t target) {
  if (target >= scores.size()) throw ArgumentError("rank_of: target outside score vector");
  const double t = scores[target];
  std::size_t ahead = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > t || (scores[i] == t && i < target)) ++ahead;
  }
  return ahead;
}

double predicted_rating(std::span<const double> scores) {
  if (scores.empty()) throw ArgumentError("predicted_rating: empty score vector");
  const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
  return 0.5 + 0.5 * static_cast<double>(best);
}

}  // namespace fedq::models
