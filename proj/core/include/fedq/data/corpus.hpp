#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fedq::data {

// One rating event with dense 0-based ids.
struct Interaction {
  std::int32_t user_id = 0;
  std::int32_t movie_id = 0;
  double rating = 0.0;  // 0.5 .. 5.0 in steps of 0.5
  std::int64_t timestamp = 0;  // seconds

  friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct MovieMeta {
  std::int32_t movie_id = 0;
  std::vector<std::int32_t> genre_ids;  // non-empty
  std::optional<std::int32_t> release_year;

  friend bool operator==(const MovieMeta&, const MovieMeta&) = default;
};

// A rating corpus with dense ids. movies[m].movie_id == m.
struct Corpus {
  std::vector<Interaction> interactions;
  std::vector<MovieMeta> movies;
  std::size_t num_users = 0;
  std::vector<std::string> genre_names;

  // Dense id -> id in the source files. Empty for synthetic corpora.
  std::vector<std::int64_t> user_source_ids;
  std::vector<std::int64_t> movie_source_ids;

  std::size_t num_movies() const noexcept { return movies.size(); }
  std::size_t num_genres() const noexcept { return genre_names.size(); }
};

// True when 2 * rating is an integer in 1..10.
bool is_valid_rating(double rating);

// Genre name used for movies whose genre list is empty.
inline constexpr const char* kNoGenres = "(no genres listed)";

// MovieLens CSV ingestion.
//
// ratings: header row naming userId, movieId, rating, timestamp (any order).
// movies:  header row naming movieId, title, genres ('|'-separated) and
//          optionally releaseYear. Without that column the year is taken
//          from a trailing "(YYYY)" in the title when present.
//
// Users are remapped in ascending source-id order; movies likewise, keeping
// only movies that have at least one rating. Genre ids follow the sorted
// genre names. Malformed rows, off-grid ratings and ratings of movies absent
// from the movie table raise DataError with the 1-based line number.
Corpus load_movielens(std::istream& ratings, std::istream& movies);
Corpus load_movielens(const std::filesystem::path& ratings_csv, const std::filesystem::path& movies_csv);

// Writes users.csv and movies.csv ("source_id,dense_id") into `dir`.
void save_remap_tables(const Corpus& corpus, const std::filesystem::path& dir);

// Log-decade histogram. Bin i counts values v with edges[i] <= v < edges[i+1];
// the last bin is open-ended.
struct Histogram {
  std::vector<double> edges;
  std::vector<std::uint64_t> counts;

  void add(double value);
  std::uint64_t total() const;
};

struct DatasetStats {
  std::size_t interactions = 0;
  std::size_t users = 0;   // distinct users with >= 1 rating
  std::size_t movies = 0;  // distinct rated movies
  double mean_ratings_per_user = 0.0;
  double mean_ratings_per_movie = 0.0;
  double mean_inter_rating_seconds = 0.0;  // over consecutive same-user ratings
  std::uint64_t inter_rating_pairs = 0;
  // edges 0, 1, 10, ..., 1e9 seconds
  Histogram inter_rating_seconds;
  // edges 1, 10, ..., 1e6 ratings
  Histogram ratings_per_user;
  Histogram ratings_per_movie;
  // index i counts rating 0.5 + 0.5 i
  std::vector<std::uint64_t> rating_value_counts;
};

// Throws DataError on an empty corpus.
DatasetStats dataset_stats(const std::vector<Interaction>& interactions);

}  // namespace fedq::data
