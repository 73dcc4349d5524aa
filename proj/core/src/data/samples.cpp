#include "fedq/data/samples.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedq/error.hpp"
#include "fedq/models/models.hpp"

namespace fedq::data {

OrderingMode parse_ordering(const std::string& name) {
  if (name == "timestamp_asc") return OrderingMode::TimestampAsc;
  if (name == "timestamp_desc") return OrderingMode::TimestampDesc;
  if (name == "rating_asc") return OrderingMode::RatingAsc;
  if (name == "rating_desc") return OrderingMode::RatingDesc;
  if (name == "random") return OrderingMode::Random;
  throw ConfigError("unknown ordering '" + name +
                    "' (expected timestamp_asc, timestamp_desc, rating_asc, rating_desc or random)");
}

std::string to_string(OrderingMode mode) {
  switch (mode) {
    case OrderingMode::TimestampAsc: return "timestamp_asc";
    case OrderingMode::TimestampDesc: return "timestamp_desc";
    case OrderingMode::RatingAsc: return "rating_asc";
    case OrderingMode::RatingDesc: return "rating_desc";
    case OrderingMode::Random: return "random";
  }
  return "?";
}

std::vector<WatchHistorySample> build_watch_histories(const std::vector<Interaction>& interactions,
                                                      std::size_t window, OrderingMode ordering, Rng& rng) {
  if (window < 1) throw ConfigError("build_watch_histories: window must be >= 1");
  std::int32_t max_user = -1;
  for (const auto& it : interactions) {
    if (it.user_id < 0) throw DataError("build_watch_histories: negative user id");
    max_user = std::max(max_user, it.user_id);
  }
  std::vector<std::vector<const Interaction*>> by_user(static_cast<std::size_t>(max_user + 1));
  for (const auto& it : interactions) by_user[static_cast<std::size_t>(it.user_id)].push_back(&it);

  std::vector<WatchHistorySample> out;
  for (auto& seq : by_user) {
    switch (ordering) {
      case OrderingMode::TimestampAsc:
        std::stable_sort(seq.begin(), seq.end(),
                         [](auto* a, auto* b) { return a->timestamp < b->timestamp; });
        break;
      case OrderingMode::TimestampDesc:
        std::stable_sort(seq.begin(), seq.end(),
                         [](auto* a, auto* b) { return a->timestamp > b->timestamp; });
        break;
      case OrderingMode::RatingAsc:
        std::stable_sort(seq.begin(), seq.end(), [](auto* a, auto* b) { return a->rating < b->rating; });
        break;
      case OrderingMode::RatingDesc:
        std::stable_sort(seq.begin(), seq.end(), [](auto* a, auto* b) { return a->rating > b->rating; });
        break;
      case OrderingMode::Random:
        shuffle(seq, rng);
        break;
    }
    for (std::size_t pos = 1; pos < seq.size(); ++pos) {
      WatchHistorySample s;
      s.user_id = seq[pos]->user_id;
      s.target = seq[pos]->movie_id;
      const std::size_t len = std::min(window, pos);
      for (std::size_t k = pos - len; k < pos; ++k) s.history.push_back(seq[k]->movie_id + 1);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<RatingSample> build_rating_samples(const std::vector<Interaction>& interactions,
                                               const std::vector<MovieMeta>& movies, bool use_movie_age,
                                               std::int32_t reference_year) {
  std::int32_t min_age = std::numeric_limits<std::int32_t>::max();
  std::int32_t max_age = std::numeric_limits<std::int32_t>::min();
  if (use_movie_age) {
    for (const auto& m : movies) {
      if (!m.release_year) continue;
      const std::int32_t age = reference_year - *m.release_year;
      min_age = std::min(min_age, age);
      max_age = std::max(max_age, age);
    }
  }
  std::vector<RatingSample> out;
  out.reserve(interactions.size());
  for (const auto& it : interactions) {
    if (it.movie_id < 0 || static_cast<std::size_t>(it.movie_id) >= movies.size()) {
      throw DataError("build_rating_samples: no movie entry for id " + std::to_string(it.movie_id));
    }
    const MovieMeta& m = movies[static_cast<std::size_t>(it.movie_id)];
    if (!is_valid_rating(it.rating)) {
      throw DataError("build_rating_samples: rating " + std::to_string(it.rating) + " off the half-star grid");
    }
    RatingSample s;
    s.user_id = it.user_id;
    s.movie_id = it.movie_id;
    s.genre_ids = m.genre_ids;
    if (s.genre_ids.empty()) throw DataError("movie " + std::to_string(m.movie_id) + " has no genre ids");
    s.rating_class = static_cast<std::int32_t>(std::lround(it.rating * 2.0)) - 1;
    if (use_movie_age) {
      if (!m.release_year) {
        throw DataError("movie " + std::to_string(m.movie_id) + " has no release year");
      }
      const std::int32_t age = reference_year - *m.release_year;
      s.movie_age = max_age == min_age ? 0.0
                                       : 2.0 * static_cast<double>(age - min_age) /
                                                 static_cast<double>(max_age - min_age) -
                                             1.0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

nn::Batch make_history_batch(const std::vector<WatchHistorySample>& samples, std::span<const std::size_t> rows,
                             std::size_t window) {
  nn::Batch b;
  b.rows = rows.size();
  nn::IndexField f;
  f.width = window;
  f.indices.assign(rows.size() * window, 0);
  f.lengths.reserve(rows.size());
  b.targets.reserve(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const WatchHistorySample& s = samples.at(rows[r]);
    if (s.history.empty() || s.history.size() > window) {
      throw DataError("watch history of length " + std::to_string(s.history.size()) +
                      " does not fit window " + std::to_string(window));
    }
    std::copy(s.history.begin(), s.history.end(), f.indices.begin() + static_cast<std::ptrdiff_t>(r * window));
    f.lengths.push_back(static_cast<std::uint32_t>(s.history.size()));
    b.targets.push_back(s.target);
  }
  b.sequences.emplace(models::kHistoryField, std::move(f));
  return b;
}

nn::Batch make_rating_batch(const std::vector<RatingSample>& samples, std::span<const std::size_t> rows) {
  nn::Batch b;
  b.rows = rows.size();
  std::size_t genre_width = 1;
  for (std::size_t r : rows) genre_width = std::max(genre_width, samples.at(r).genre_ids.size());
  nn::IndexField users{1, {}, {}};
  nn::IndexField movies{1, {}, {}};
  nn::IndexField genres{genre_width, std::vector<std::int32_t>(rows.size() * genre_width, 0), {}};
  std::vector<double> age;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const RatingSample& s = samples[rows[r]];
    users.indices.push_back(s.user_id);
    users.lengths.push_back(1);
    movies.indices.push_back(s.movie_id);
    movies.lengths.push_back(1);
    std::copy(s.genre_ids.begin(), s.genre_ids.end(),
              genres.indices.begin() + static_cast<std::ptrdiff_t>(r * genre_width));
    genres.lengths.push_back(static_cast<std::uint32_t>(s.genre_ids.size()));
    age.push_back(s.movie_age);
    b.targets.push_back(s.rating_class);
  }
  b.sequences.emplace(models::kUserField, std::move(users));
  b.sequences.emplace(models::kMovieField, std::move(movies));
  b.sequences.emplace(models::kGenresField, std::move(genres));
  b.dense.emplace(models::kMovieAgeField, std::move(age));
  return b;
}

}  // namespace fedq::data
