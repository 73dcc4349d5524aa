#include "fedq/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedq/error.hpp"
#include "fedq/rng.hpp"

namespace fedq::data {

void SyntheticConfig::validate() const {
  if (num_users < 1 || num_movies < 1 || num_genres < 1 || cluster_count < 1) {
    throw ConfigError("synthetic: num_users, num_movies, num_genres and cluster_count must be >= 1");
  }
  if (genres_per_cluster < 1 || genres_per_cluster > num_genres) {
    throw ConfigError("synthetic: genres_per_cluster must lie in 1..num_genres");
  }
  if (!(sigma >= 0.0) || !std::isfinite(mu)) throw ConfigError("synthetic: need finite mu and sigma >= 0");
  if (!(zipf_s >= 0.0)) throw ConfigError("synthetic: zipf_s must be >= 0");
  if (!(affinity >= 1.0)) throw ConfigError("synthetic: affinity must be >= 1");
  if (!(sequel_probability >= 0.0 && sequel_probability <= 1.0)) {
    throw ConfigError("synthetic: sequel_probability must lie in [0, 1]");
  }
  if (min_samples < 1) throw ConfigError("synthetic: min_samples must be >= 1");
  if (last_year < first_year) throw ConfigError("synthetic: last_year precedes first_year");
}

namespace {

std::size_t sample_cdf(const std::vector<double>& cdf, double u) {
  const double x = u * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), x);
  return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

double round_half_star(double r) { return std::clamp(std::round(r * 2.0) / 2.0, 0.5, 5.0); }

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng movie_rng = substream(cfg.seed, "synthetic.movies");
  Rng cluster_rng = substream(cfg.seed, "synthetic.clusters");
  Rng user_rng = substream(cfg.seed, "synthetic.users");

  SyntheticCorpus out;
  Corpus& corpus = out.corpus;
  corpus.num_users = cfg.num_users;
  for (std::size_t g = 0; g < cfg.num_genres; ++g) corpus.genre_names.push_back("genre" + std::to_string(g));

  const std::size_t M = cfg.num_movies;
  std::vector<std::int32_t> primary(M);
  corpus.movies.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    MovieMeta& meta = corpus.movies[m];
    meta.movie_id = static_cast<std::int32_t>(m);
    primary[m] = static_cast<std::int32_t>(movie_rng.uniform_index(cfg.num_genres));
    meta.genre_ids.push_back(primary[m]);
    if (cfg.num_genres > 1 && movie_rng.uniform() < 0.3) {
      auto second = static_cast<std::int32_t>(movie_rng.uniform_index(cfg.num_genres - 1));
      if (second >= primary[m]) ++second;
      meta.genre_ids.push_back(second);
      std::sort(meta.genre_ids.begin(), meta.genre_ids.end());
    }
    meta.release_year = cfg.first_year + static_cast<std::int32_t>(movie_rng.uniform_index(
                                             static_cast<std::uint64_t>(cfg.last_year - cfg.first_year) + 1));
  }
  std::vector<std::size_t> rank(M);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  shuffle(rank, movie_rng);
  std::vector<double> popularity(M);
  for (std::size_t m = 0; m < M; ++m) popularity[m] = std::pow(static_cast<double>(rank[m] + 1), -cfg.zipf_s);

  // Same-genre successor in id order.
  std::vector<std::int32_t> sequel(M);
  for (std::size_t m = 0; m < M; ++m) {
    sequel[m] = static_cast<std::int32_t>(m);
    for (std::size_t k = 1; k < M; ++k) {
      const std::size_t c = (m + k) % M;
      if (primary[c] == primary[m]) {
        sequel[m] = static_cast<std::int32_t>(c);
        break;
      }
    }
  }

  std::vector<std::vector<double>> cluster_cdf(cfg.cluster_count);
  std::vector<std::vector<std::uint8_t>> favored(cfg.cluster_count, std::vector<std::uint8_t>(cfg.num_genres, 0));
  out.cluster_genres.resize(cfg.cluster_count);
  for (std::size_t c = 0; c < cfg.cluster_count; ++c) {
    std::vector<std::int32_t> genres(cfg.num_genres);
    std::iota(genres.begin(), genres.end(), 0);
    shuffle(genres, cluster_rng);
    genres.resize(cfg.genres_per_cluster);
    std::sort(genres.begin(), genres.end());
    for (auto g : genres) favored[c][static_cast<std::size_t>(g)] = 1;
    out.cluster_genres[c] = genres;
    auto& cdf = cluster_cdf[c];
    cdf.resize(M);
    double acc = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      acc += popularity[m] * (favored[c][static_cast<std::size_t>(primary[m])] ? cfg.affinity : 1.0);
      cdf[m] = acc;
    }
  }

  out.user_cluster.resize(cfg.num_users);
  std::vector<std::uint8_t> watched(M, 0);
  std::vector<std::int32_t> seq;
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    const auto c = static_cast<std::size_t>(user_rng.uniform_index(cfg.cluster_count));
    out.user_cluster[u] = static_cast<std::int32_t>(c);
    const double draw = std::exp(cfg.mu + cfg.sigma * user_rng.normal());
    const auto n = std::min<std::size_t>(
        M, std::max<std::size_t>(cfg.min_samples, static_cast<std::size_t>(std::llround(draw))));

    seq.clear();
    std::fill(watched.begin(), watched.end(), 0);
    while (seq.size() < n) {
      std::int32_t next = -1;
      if (!seq.empty() && user_rng.uniform() < cfg.sequel_probability) {
        const std::int32_t cand = sequel[static_cast<std::size_t>(seq.back())];
        if (!watched[static_cast<std::size_t>(cand)]) next = cand;
      }
      for (int attempt = 0; next < 0 && attempt < 64; ++attempt) {
        const auto cand = static_cast<std::int32_t>(sample_cdf(cluster_cdf[c], user_rng.uniform()));
        if (!watched[static_cast<std::size_t>(cand)]) next = cand;
      }
      if (next < 0) {
        // Dense users exhaust the popular titles; fall back to the lowest unwatched id.
        next = static_cast<std::int32_t>(std::find(watched.begin(), watched.end(), 0) - watched.begin());
      }
      watched[static_cast<std::size_t>(next)] = 1;
      seq.push_back(next);
    }

    std::int64_t t = static_cast<std::int64_t>(user_rng.uniform_index(100'000'000));
    for (std::int32_t m : seq) {
      t += 1 + static_cast<std::int64_t>(user_rng.exponential(1.0 / 86400.0));
      const bool liked = favored[c][static_cast<std::size_t>(primary[static_cast<std::size_t>(m)])];
      const double rating = round_half_star((liked ? 4.0 : 3.0) + 0.9 * user_rng.normal());
      corpus.interactions.push_back({static_cast<std::int32_t>(u), m, rating, t});
    }
  }
  return out;
}

}  // namespace fedq::data
