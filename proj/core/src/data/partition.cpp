#include "fedq/data/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_set>

#include "fedq/error.hpp"

namespace fedq::data {

PartitionKind parse_partition_kind(const std::string& name) {
  if (name == "iid") return PartitionKind::IidEqual;
  if (name == "per_user") return PartitionKind::PerUser;
  throw ConfigError("unknown partition kind '" + name + "' (expected iid or per_user)");
}

std::string to_string(PartitionKind kind) { return kind == PartitionKind::IidEqual ? "iid" : "per_user"; }

std::size_t ClientPartition::sample_count() const {
  std::size_t n = 0;
  for (const auto& c : clients) n += c.size();
  return n;
}

ClientPartition partition_iid(std::size_t sample_count, std::size_t num_clients, Rng& rng) {
  if (num_clients < 1) throw ConfigError("partition_iid: num_clients must be >= 1");
  if (num_clients > sample_count) {
    throw ConfigError("partition_iid: num_clients (" + std::to_string(num_clients) + ") exceeds sample count (" +
                      std::to_string(sample_count) + ")");
  }
  std::vector<std::size_t> perm(sample_count);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(perm, rng);
  ClientPartition p;
  p.kind = PartitionKind::IidEqual;
  p.clients.resize(num_clients);
  const std::size_t base = sample_count / num_clients;
  const std::size_t extra = sample_count % num_clients;
  std::size_t at = 0;
  for (std::size_t c = 0; c < num_clients; ++c) {
    const std::size_t n = base + (c < extra ? 1 : 0);
    p.clients[c].assign(perm.begin() + static_cast<std::ptrdiff_t>(at),
                        perm.begin() + static_cast<std::ptrdiff_t>(at + n));
    at += n;
  }
  return p;
}

ClientPartition partition_by_user(std::span<const std::int32_t> user_of_sample) {
  std::map<std::int32_t, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < user_of_sample.size(); ++i) by_user[user_of_sample[i]].push_back(i);
  ClientPartition p;
  p.kind = PartitionKind::PerUser;
  p.clients.reserve(by_user.size());
  for (auto& [user, rows] : by_user) p.clients.push_back(std::move(rows));
  return p;
}

void validate_partition(const ClientPartition& partition, std::size_t sample_count) {
  std::vector<std::uint8_t> seen(sample_count, 0);
  for (std::size_t c = 0; c < partition.clients.size(); ++c) {
    for (std::size_t i : partition.clients[c]) {
      if (i >= sample_count) {
        throw DataError("partition: client " + std::to_string(c) + " holds sample " + std::to_string(i) +
                        " outside 0.." + std::to_string(sample_count - 1));
      }
      if (seen[i]++) throw DataError("partition: sample " + std::to_string(i) + " assigned twice");
    }
  }
  const auto missing = std::count(seen.begin(), seen.end(), 0);
  if (missing) throw DataError("partition: " + std::to_string(missing) + " samples unassigned");
}

TrainValSplit train_val_split(std::size_t count, double fraction, Rng& rng, const IdsOf& ids_of) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("train_val_split: fraction must lie strictly between 0 and 1");
  }
  std::vector<std::size_t> perm(count);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  shuffle(perm, rng);

  std::vector<std::uint8_t> in_train(count, 0);
  std::size_t pinned = 0;
  if (ids_of) {
    std::unordered_set<std::int64_t> covered;
    std::vector<std::int64_t> ids;
    for (std::size_t i : perm) {
      ids.clear();
      ids_of(i, ids);
      bool adds = false;
      for (auto id : ids) adds |= covered.insert(id).second;
      if (adds) {
        in_train[i] = 1;
        ++pinned;
      }
    }
  }
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count)));
  std::size_t train_size = pinned;
  for (std::size_t i : perm) {
    if (train_size >= target) break;
    if (!in_train[i]) {
      in_train[i] = 1;
      ++train_size;
    }
  }
  TrainValSplit split;
  for (std::size_t i = 0; i < count; ++i) (in_train[i] ? split.train : split.validation).push_back(i);
  if (split.train.empty() || split.validation.empty()) {
    throw ConfigError("train_val_split: fraction " + std::to_string(fraction) + " of " + std::to_string(count) +
                      " samples leaves an empty " + (split.train.empty() ? "training" : "validation") + " side");
  }
  return split;
}

IdsOf history_ids(const std::vector<WatchHistorySample>& samples) {
  return [&samples](std::size_t i, std::vector<std::int64_t>& out) {
    const auto& s = samples[i];
    // Inputs are movie + 1, targets are movie ids; both map to the movie.
    for (auto h : s.history) out.push_back(h - 1);
    out.push_back(s.target);
  };
}

IdsOf rating_ids(const std::vector<RatingSample>& samples) {
  constexpr std::int64_t kMovieBase = std::int64_t{1} << 32;
  constexpr std::int64_t kGenreBase = std::int64_t{2} << 32;
  return [&samples](std::size_t i, std::vector<std::int64_t>& out) {
    const auto& s = samples[i];
    out.push_back(s.user_id);
    out.push_back(kMovieBase + s.movie_id);
    for (auto g : s.genre_ids) out.push_back(kGenreBase + g);
  };
}

}  // namespace fedq::data
