#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedq/data/samples.hpp"
#include "fedq/rng.hpp"

namespace fedq::data {

enum class PartitionKind { IidEqual, PerUser };

PartitionKind parse_partition_kind(const std::string& name);
std::string to_string(PartitionKind kind);

// Client id = position in `clients`; entries are indices into the training
// sample list the partition was built from.
struct ClientPartition {
  PartitionKind kind = PartitionKind::IidEqual;
  std::vector<std::vector<std::size_t>> clients;

  std::size_t num_clients() const noexcept { return clients.size(); }
  std::size_t sample_count() const;

  friend bool operator==(const ClientPartition&, const ClientPartition&) = default;
};

// Random permutation split into num_clients chunks whose sizes differ by at
// most one (the first sample_count % num_clients clients get the extra one).
// Throws ConfigError if num_clients is 0 or exceeds sample_count.
ClientPartition partition_iid(std::size_t sample_count, std::size_t num_clients, Rng& rng);

// One client per distinct user, in ascending user-id order.
ClientPartition partition_by_user(std::span<const std::int32_t> user_of_sample);

// Throws DataError unless the clients are pairwise disjoint and cover
// 0..sample_count-1.
void validate_partition(const ClientPartition& partition, std::size_t sample_count);

struct TrainValSplit {
  std::vector<std::size_t> train;       // ascending
  std::vector<std::size_t> validation;  // ascending
};

// Embedding ids a sample touches, in any shared id space.
using IdsOf = std::function<void(std::size_t sample, std::vector<std::int64_t>& out)>;

// Random split with round(fraction * count) training samples. When ids_of is
// given, one sample per otherwise-uncovered id is pinned to the training
// side first (walking a random permutation), so every id that occurs in the
// corpus occurs in training; the training side can then exceed the target
// size. Throws ConfigError unless 0 < fraction < 1 and both sides are
// non-empty.
TrainValSplit train_val_split(std::size_t count, double fraction, Rng& rng, const IdsOf& ids_of = {});

// Id spaces used for coverage: history inputs and targets share the movie
// space; the ranker's users, movies and genres are offset into disjoint
// ranges.
IdsOf history_ids(const std::vector<WatchHistorySample>& samples);
IdsOf rating_ids(const std::vector<RatingSample>& samples);

}  // namespace fedq::data
