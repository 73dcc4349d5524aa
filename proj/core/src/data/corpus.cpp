#include "fedq/data/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <unordered_map>

#include "fedq/error.hpp"

namespace fedq::data {
namespace {

// Splits one CSV record; fields may be double-quoted with "" escapes.
std::vector<std::string> split_csv(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw DataError("line " + std::to_string(line_no) + ": unterminated quoted field");
  fields.push_back(std::move(field));
  return fields;
}

template <typename T>
T parse_number(const std::string& text, const char* column, std::size_t line_no) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw DataError("line " + std::to_string(line_no) + ": column '" + column + "' is not a number: '" +
                    text + "'");
  }
  return value;
}

std::map<std::string, std::size_t> header_columns(std::istream& in, const char* file,
                                                  std::initializer_list<const char*> required) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(std::string(file) + ": missing header row");
  std::map<std::string, std::size_t> cols;
  auto names = split_csv(line, 1);
  for (std::size_t i = 0; i < names.size(); ++i) cols[names[i]] = i;
  for (const char* name : required) {
    if (!cols.count(name)) {
      throw DataError(std::string(file) + ": header lacks column '" + name + "'");
    }
  }
  return cols;
}

std::optional<std::int32_t> year_from_title(const std::string& title) {
  // Trailing "(YYYY)" possibly followed by spaces.
  std::size_t end = title.find_last_not_of(' ');
  if (end == std::string::npos || end < 5 || title[end] != ')' || title[end - 5] != '(') return std::nullopt;
  std::int32_t year = 0;
  for (std::size_t i = end - 4; i < end; ++i) {
    if (title[i] < '0' || title[i] > '9') return std::nullopt;
    year = year * 10 + (title[i] - '0');
  }
  return year;
}

}  // namespace

bool is_valid_rating(double rating) {
  const double twice = rating * 2.0;
  return std::isfinite(rating) && twice == std::round(twice) && twice >= 1.0 && twice <= 10.0;
}

Corpus load_movielens(std::istream& ratings, std::istream& movies) {
  struct RawMovie {
    std::vector<std::string> genres;
    std::optional<std::int32_t> year;
  };
  std::map<std::int64_t, RawMovie> raw_movies;
  std::set<std::string> genre_set;
  {
    auto cols = header_columns(movies, "movies", {"movieId", "title", "genres"});
    const std::size_t c_id = cols["movieId"];
    const std::size_t c_title = cols["title"];
    const std::size_t c_genres = cols["genres"];
    const bool has_year = cols.count("releaseYear") > 0;
    const std::size_t c_year = has_year ? cols["releaseYear"] : 0;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(movies, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      auto f = split_csv(line, line_no);
      std::size_t needed = std::max({c_id, c_title, c_genres, c_year}) + 1;
      if (f.size() < needed) {
        throw DataError("movies line " + std::to_string(line_no) + ": expected " + std::to_string(needed) +
                        " fields, got " + std::to_string(f.size()));
      }
      RawMovie m;
      const auto id = parse_number<std::int64_t>(f[c_id], "movieId", line_no);
      std::string genres = f[c_genres];
      std::size_t start = 0;
      while (start <= genres.size()) {
        std::size_t bar = genres.find('|', start);
        std::string g = genres.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
        if (!g.empty()) m.genres.push_back(g);
        if (bar == std::string::npos) break;
        start = bar + 1;
      }
      if (m.genres.empty()) m.genres.push_back(kNoGenres);
      for (const auto& g : m.genres) genre_set.insert(g);
      if (has_year && !f[c_year].empty()) {
        m.year = parse_number<std::int32_t>(f[c_year], "releaseYear", line_no);
      } else {
        m.year = year_from_title(f[c_title]);
      }
      if (!raw_movies.emplace(id, std::move(m)).second) {
        throw DataError("movies line " + std::to_string(line_no) + ": duplicate movieId " + std::to_string(id));
      }
    }
  }

  struct RawRating {
    std::int64_t user;
    std::int64_t movie;
    double rating;
    std::int64_t timestamp;
  };
  std::vector<RawRating> raw;
  {
    auto cols = header_columns(ratings, "ratings", {"userId", "movieId", "rating", "timestamp"});
    const std::size_t c_user = cols["userId"];
    const std::size_t c_movie = cols["movieId"];
    const std::size_t c_rating = cols["rating"];
    const std::size_t c_time = cols["timestamp"];
    const std::size_t needed = std::max({c_user, c_movie, c_rating, c_time}) + 1;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(ratings, line)) {
      ++line_no;
      if (line.empty() || line == "\r") continue;
      auto f = split_csv(line, line_no);
      if (f.size() < needed) {
        throw DataError("ratings line " + std::to_string(line_no) + ": expected " + std::to_string(needed) +
                        " fields, got " + std::to_string(f.size()));
      }
      RawRating r{parse_number<std::int64_t>(f[c_user], "userId", line_no),
                  parse_number<std::int64_t>(f[c_movie], "movieId", line_no),
                  parse_number<double>(f[c_rating], "rating", line_no),
                  parse_number<std::int64_t>(f[c_time], "timestamp", line_no)};
      if (!is_valid_rating(r.rating)) {
        throw DataError("ratings line " + std::to_string(line_no) + ": rating " + f[c_rating] +
                        " is not on the 0.5..5.0 half-star grid");
      }
      if (r.timestamp < 0) throw DataError("ratings line " + std::to_string(line_no) + ": negative timestamp");
      if (!raw_movies.count(r.movie)) {
        throw DataError("ratings line " + std::to_string(line_no) + ": unknown movieId " +
                        std::to_string(r.movie));
      }
      raw.push_back(r);
    }
  }

  Corpus corpus;
  corpus.genre_names.assign(genre_set.begin(), genre_set.end());
  std::map<std::string, std::int32_t> genre_id;
  for (std::size_t i = 0; i < corpus.genre_names.size(); ++i) {
    genre_id[corpus.genre_names[i]] = static_cast<std::int32_t>(i);
  }

  std::set<std::int64_t> users;
  std::set<std::int64_t> rated;
  for (const auto& r : raw) {
    users.insert(r.user);
    rated.insert(r.movie);
  }
  std::unordered_map<std::int64_t, std::int32_t> user_dense;
  for (std::int64_t u : users) {
    user_dense[u] = static_cast<std::int32_t>(corpus.user_source_ids.size());
    corpus.user_source_ids.push_back(u);
  }
  std::unordered_map<std::int64_t, std::int32_t> movie_dense;
  for (std::int64_t m : rated) {
    const auto dense = static_cast<std::int32_t>(corpus.movie_source_ids.size());
    movie_dense[m] = dense;
    corpus.movie_source_ids.push_back(m);
    MovieMeta meta;
    meta.movie_id = dense;
    const RawMovie& rm = raw_movies.at(m);
    for (const auto& g : rm.genres) meta.genre_ids.push_back(genre_id.at(g));
    meta.release_year = rm.year;
    corpus.movies.push_back(std::move(meta));
  }
  corpus.num_users = users.size();
  corpus.interactions.reserve(raw.size());
  for (const auto& r : raw) {
    corpus.interactions.push_back({user_dense.at(r.user), movie_dense.at(r.movie), r.rating, r.timestamp});
  }
  return corpus;
}

Corpus load_movielens(const std::filesystem::path& ratings_csv, const std::filesystem::path& movies_csv) {
  std::ifstream ratings(ratings_csv);
  if (!ratings) throw DataError("cannot open ratings file '" + ratings_csv.string() + "'");
  std::ifstream movies(movies_csv);
  if (!movies) throw DataError("cannot open movies file '" + movies_csv.string() + "'");
  return load_movielens(ratings, movies);
}

void save_remap_tables(const Corpus& corpus, const std::filesystem::path& dir) {
  auto write = [&](const char* name, const std::vector<std::int64_t>& ids) {
    std::ofstream out(dir / name);
    if (!out) throw DataError("cannot write remap table in '" + dir.string() + "'");
    out << "source_id,dense_id\n";
    for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << i << '\n';
  };
  write("users.csv", corpus.user_source_ids);
  write("movies.csv", corpus.movie_source_ids);
}

void Histogram::add(double value) {
  std::size_t bin = 0;
  while (bin + 1 < edges.size() && value >= edges[bin + 1]) ++bin;
  ++counts[bin];
}

std::uint64_t Histogram::total() const {
  std::uint64_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

DatasetStats dataset_stats(const std::vector<Interaction>& interactions) {
  if (interactions.empty()) throw DataError("dataset_stats: empty corpus");
  // Edges [0,] 1, 10, ..., 10^max_exponent.
  auto decades = [](bool with_zero, int max_exponent) {
    Histogram h;
    if (with_zero) h.edges.push_back(0.0);
    for (int e = 0; e <= max_exponent; ++e) h.edges.push_back(std::pow(10.0, e));
    h.counts.assign(h.edges.size(), 0);
    return h;
  };
  DatasetStats s;
  s.inter_rating_seconds = decades(true, 9);
  s.ratings_per_user = decades(false, 6);
  s.ratings_per_movie = decades(false, 6);
  s.rating_value_counts.assign(10, 0);

  std::map<std::int32_t, std::vector<std::int64_t>> times_by_user;
  std::map<std::int32_t, std::uint64_t> per_movie;
  for (const auto& it : interactions) {
    times_by_user[it.user_id].push_back(it.timestamp);
    ++per_movie[it.movie_id];
    const auto cls = static_cast<std::size_t>(std::lround(it.rating * 2.0)) - 1;
    if (cls < 10) ++s.rating_value_counts[cls];
  }
  s.interactions = interactions.size();
  s.users = times_by_user.size();
  s.movies = per_movie.size();
  s.mean_ratings_per_user = static_cast<double>(s.interactions) / static_cast<double>(s.users);
  s.mean_ratings_per_movie = static_cast<double>(s.interactions) / static_cast<double>(s.movies);

  double gap_sum = 0;
  for (auto& [user, times] : times_by_user) {
    s.ratings_per_user.add(static_cast<double>(times.size()));
    std::sort(times.begin(), times.end());
    for (std::size_t i = 1; i < times.size(); ++i) {
      const auto gap = static_cast<double>(times[i] - times[i - 1]);
      s.inter_rating_seconds.add(gap);
      gap_sum += gap;
      ++s.inter_rating_pairs;
    }
  }
  for (const auto& [movie, n] : per_movie) s.ratings_per_movie.add(static_cast<double>(n));
  s.mean_inter_rating_seconds = s.inter_rating_pairs ? gap_sum / static_cast<double>(s.inter_rating_pairs) : 0.0;
  return s;
}

}  // namespace fedq::data
