#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedq/data/corpus.hpp"
#include "fedq/nn/batch.hpp"
#include "fedq/rng.hpp"

namespace fedq::data {

enum class OrderingMode { TimestampAsc, TimestampDesc, RatingAsc, RatingDesc, Random };

OrderingMode parse_ordering(const std::string& name);
std::string to_string(OrderingMode mode);

// Next-watch sample. History entries are model input indices (movie id + 1,
// 0 being padding); the target is the movie id, i.e. the output class.
struct WatchHistorySample {
  std::int32_t user_id = 0;
  std::vector<std::int32_t> history;
  std::int32_t target = 0;

  friend bool operator==(const WatchHistorySample&, const WatchHistorySample&) = default;
};

struct RatingSample {
  std::int32_t user_id = 0;
  std::int32_t movie_id = 0;
  std::vector<std::int32_t> genre_ids;
  double movie_age = 0.0;  // [-1, 1]; 1 = oldest movie
  std::int32_t rating_class = 0;  // 2 * rating - 1

  friend bool operator==(const RatingSample&, const RatingSample&) = default;
};

// Per user, interactions are ordered by `ordering` (ties keep input order;
// Random shuffles each user's list with `rng`, users in ascending id order).
// The watch at 1-based position i >= 2 becomes a target whose history is
// the preceding min(window, i - 1) watches, oldest first. A user with n
// interactions yields n - 1 samples; output is grouped by ascending user.
std::vector<WatchHistorySample> build_watch_histories(const std::vector<Interaction>& interactions,
                                                      std::size_t window, OrderingMode ordering, Rng& rng);

// One sample per interaction, in input order. movie_age maps
// age = reference_year - release_year linearly from [min_age, max_age] over
// the movie table onto [-1, 1] (0 when all ages agree). Throws DataError for
// a referenced movie without a release year or a missing movie entry.
std::vector<RatingSample> build_rating_samples(const std::vector<Interaction>& interactions,
                                               const std::vector<MovieMeta>& movies, bool use_movie_age,
                                               std::int32_t reference_year);

// Batches for the model input fields. History width is `window`; genre width
// is the largest genre count among the selected rows.
nn::Batch make_history_batch(const std::vector<WatchHistorySample>& samples, std::span<const std::size_t> rows,
                             std::size_t window);
nn::Batch make_rating_batch(const std::vector<RatingSample>& samples, std::span<const std::size_t> rows);

}  // namespace fedq::data
