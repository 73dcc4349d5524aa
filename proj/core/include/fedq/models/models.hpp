#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedq/nn/layers.hpp"
#include "fedq/nn/tensor.hpp"
#include "fedq/rng.hpp"

namespace fedq::models {

enum class NormKind { GroupNorm, BatchNorm };

NormKind parse_norm_kind(const std::string& name);
std::string to_string(NormKind kind);

// Batch field names shared by the sample builders and the model specs.
inline constexpr const char* kHistoryField = "history";
inline constexpr const char* kUserField = "user";
inline constexpr const char* kMovieField = "movie";
inline constexpr const char* kGenresField = "genres";
inline constexpr const char* kMovieAgeField = "movie_age";

// Next-watch model: averaged history embedding through a fully-connected
// tower to a distribution over the movie corpus. Input index 0 is reserved
// for padding, so input_vocab_size = output_vocab_size + 1.
struct CandidateGeneratorConfig {
  std::size_t input_vocab_size = 53'797;
  std::size_t output_vocab_size = 53'796;
  std::size_t embedding_dim = 64;
  std::vector<std::size_t> hidden_sizes = {1024, 512, 256};
  NormKind norm = NormKind::GroupNorm;
  std::size_t norm_groups = 32;

  // Throws ConfigError listing the violated invariant.
  void validate() const;
};

// Rating classifier over (user, movie, genres, movie age).
struct RankerConfig {
  std::size_t num_users = 162'541;
  std::size_t num_movies = 53'796;
  std::size_t num_genres = 20;
  std::size_t user_dim = 32;
  std::size_t movie_dim = 128;
  std::size_t genre_dim = 16;
  std::vector<std::size_t> hidden_sizes = {256};
  std::size_t num_classes = 10;
  bool use_movie_age = true;
  NormKind norm = NormKind::GroupNorm;
  std::size_t norm_groups = 32;

  std::size_t concat_width() const {
    return user_dim + movie_dim + genre_dim + (use_movie_age ? 1 : 0);
  }
  void validate() const;
};

struct BuiltModel {
  nn::ModelSpec spec;
  nn::ParameterSet params;
};

// Embedding -> MeanPool -> (FC -> Norm -> ReLU) x hidden -> FC.
// The softmax is applied by the loss and by predict helpers.
nn::ModelSpec candidate_generator_spec(const CandidateGeneratorConfig& config);
BuiltModel build_candidate_generator(const CandidateGeneratorConfig& config, std::uint64_t init_seed = 0);

// User/Movie/Genre embeddings (genres mean-pooled) -> Concat(+movie age)
// -> (FC -> Norm -> ReLU) x hidden -> FC(num_classes).
nn::ModelSpec ranker_spec(const RankerConfig& config);
BuiltModel build_ranker(const RankerConfig& config, std::uint64_t init_seed = 0);

// Per-layer closed-form parameter counts, independent of the spec builder.
std::size_t candidate_generator_parameter_count(const CandidateGeneratorConfig& config);
std::size_t ranker_parameter_count(const RankerConfig& config);

// Class indices of the k largest scores, descending; ties go to the lower
// index. Throws ArgumentError unless 1 <= k <= scores.size().
std::vector<std::size_t> predict_top_k(std::span<const double> scores, std::size_t k);

// Number of classes ranked ahead of `target` under predict_top_k's order.
// target is in the top k exactly when the result is < k.
std::size_t rank_of(std::span<const double> scores, std::size_t target);

// 0.5 + 0.5 * argmax(scores); ties go to the lower index.
double predicted_rating(std::span<const double> scores);

}  // namespace fedq::models
