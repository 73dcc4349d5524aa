#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "fedq/data/partition.hpp"
#include "fedq/data/samples.hpp"

namespace fedq::data {

// Sample file layout (little-endian):
//   "FQD1", u16 version (1), u8 kind (1 = watch history, 2 = rating),
//   u32 window (0 for ratings), u64 sample count, then per sample
//   history: i32 user, i32 target, u32 length, length x i32 history
//   rating:  i32 user, i32 movie, f64 movie_age, i32 rating_class,
//            u32 genre count, count x i32 genre ids
struct HistorySamples {
  std::uint32_t window = 0;
  std::vector<WatchHistorySample> samples;

  friend bool operator==(const HistorySamples&, const HistorySamples&) = default;
};
using SampleFile = std::variant<HistorySamples, std::vector<RatingSample>>;

std::vector<std::uint8_t> encode_samples(const SampleFile& file);
SampleFile decode_samples(std::span<const std::uint8_t> bytes);
void save_samples(const SampleFile& file, const std::filesystem::path& path);
SampleFile load_samples(const std::filesystem::path& path);

// Split + partition file layout:
//   "FQP1", u16 version (1), u8 partition kind (1 = iid, 2 = per user),
//   u64 total sample count,
//   u64 n, n x u64 train indices, u64 n, n x u64 validation indices,
//   u32 client count, per client u64 n, n x u64 positions in the train list
struct PreparedSplit {
  std::uint64_t sample_count = 0;
  TrainValSplit split;
  ClientPartition partition;
};

// Checks the split is a disjoint cover and the partition covers the train
// list; throws DataError otherwise.
void validate_prepared_split(const PreparedSplit& prepared);

std::vector<std::uint8_t> encode_prepared_split(const PreparedSplit& prepared);
PreparedSplit decode_prepared_split(std::span<const std::uint8_t> bytes);
void save_prepared_split(const PreparedSplit& prepared, const std::filesystem::path& path);
PreparedSplit load_prepared_split(const std::filesystem::path& path);

}  // namespace fedq::data
