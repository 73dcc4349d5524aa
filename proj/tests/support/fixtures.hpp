#pragma once

#include <cstddef>
#include <cstdint>

#include "fedq/models/models.hpp"
#include "fedq/nn/batch.hpp"
#include "fedq/rng.hpp"

namespace fedq::testing {

// Random padded watch-history batch. Padding cells hold index 0.
inline nn::Batch random_history_batch(Rng& rng, std::size_t rows, std::size_t width,
                                      std::size_t input_vocab, std::size_t classes) {
  nn::Batch b;
  b.rows = rows;
  nn::IndexField f;
  f.width = width;
  f.indices.assign(rows * width, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto len = static_cast<std::uint32_t>(1 + rng.uniform_index(width));
    f.lengths.push_back(len);
    for (std::size_t s = 0; s < len; ++s) {
      f.indices[r * width + s] = static_cast<std::int32_t>(1 + rng.uniform_index(input_vocab - 1));
    }
    b.targets.push_back(static_cast<std::int32_t>(rng.uniform_index(classes)));
  }
  b.sequences.emplace(models::kHistoryField, std::move(f));
  return b;
}

inline nn::Batch random_rating_batch(Rng& rng, std::size_t rows, const models::RankerConfig& cfg,
                                     std::size_t max_genres = 3) {
  nn::Batch b;
  b.rows = rows;
  nn::IndexField users{1, {}, {}};
  nn::IndexField movies{1, {}, {}};
  nn::IndexField genres{max_genres, std::vector<std::int32_t>(rows * max_genres, 0), {}};
  std::vector<double> age;
  for (std::size_t r = 0; r < rows; ++r) {
    users.indices.push_back(static_cast<std::int32_t>(rng.uniform_index(cfg.num_users)));
    users.lengths.push_back(1);
    movies.indices.push_back(static_cast<std::int32_t>(rng.uniform_index(cfg.num_movies)));
    movies.lengths.push_back(1);
    const auto len = static_cast<std::uint32_t>(1 + rng.uniform_index(max_genres));
    genres.lengths.push_back(len);
    for (std::size_t s = 0; s < len; ++s) {
      genres.indices[r * max_genres + s] = static_cast<std::int32_t>(rng.uniform_index(cfg.num_genres));
    }
    age.push_back(rng.uniform(-1.0, 1.0));
    b.targets.push_back(static_cast<std::int32_t>(rng.uniform_index(cfg.num_classes)));
  }
  b.sequences.emplace(models::kUserField, std::move(users));
  b.sequences.emplace(models::kMovieField, std::move(movies));
  b.sequences.emplace(models::kGenresField, std::move(genres));
  b.dense.emplace(models::kMovieAgeField, std::move(age));
  return b;
}

}  // namespace fedq::testing
