#pragma once

#include <cstdint>
#include <vector>

#include "fedq/data/corpus.hpp"

namespace fedq::data {

// Desk-scale stand-in for MovieLens with clustered, imbalanced users.
//
// Movies get a primary genre (and sometimes a second one), a release year and
// a Zipf(zipf_s) popularity over a random rank order. Each cluster favors
// genres_per_cluster genres; its users draw movies with popularity weights
// multiplied by `affinity` for favored primary genres. A user's watch count is
// max(min_samples, round(exp(mu + sigma * Z))) capped at num_movies, with no
// repeat watches. With probability sequel_probability the next watch is the
// following movie of the same primary genre (in id order, wrapping), which
// gives watch order a learnable structure. Timestamps strictly increase per
// user; ratings lean positive and are higher for favored genres.
struct SyntheticConfig {
  std::size_t num_users = 2000;
  std::size_t num_movies = 500;
  std::size_t num_genres = 20;
  std::size_t cluster_count = 8;
  double mu = 3.0;
  double sigma = 0.8;
  double zipf_s = 1.0;
  std::uint64_t seed = 1;

  std::size_t genres_per_cluster = 3;
  double affinity = 25.0;
  double sequel_probability = 0.35;
  std::size_t min_samples = 2;
  std::int32_t first_year = 1950;
  std::int32_t last_year = 2020;

  // Throws ConfigError on zero counts or out-of-range parameters.
  void validate() const;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<std::int32_t> user_cluster;                 // per user
  std::vector<std::vector<std::int32_t>> cluster_genres;  // favored genres per cluster
};

SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

}  // namespace fedq::data
