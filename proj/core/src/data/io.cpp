#include "fedq/data/io.hpp"

#include "fedq/binary_io.hpp"
#include "fedq/error.hpp"

namespace fedq::data {
namespace {

constexpr std::uint16_t kVersion = 1;

void put_indices(ByteWriter& w, const std::vector<std::size_t>& v) {
  w.u64(v.size());
  for (std::size_t i : v) w.u64(i);
}

std::vector<std::size_t> get_indices(ByteReader& r) {
  const std::size_t at = r.offset();
  const std::uint64_t n = r.u64();
  if (n > r.remaining() / 8) throw DecodingError("index list length " + std::to_string(n) + " exceeds data", at);
  std::vector<std::size_t> v(n);
  for (auto& i : v) i = r.u64();
  return v;
}

std::vector<std::int32_t> get_ids(ByteReader& r) {
  const std::size_t at = r.offset();
  const std::uint32_t n = r.u32();
  if (n > r.remaining() / 4) throw DecodingError("id list length " + std::to_string(n) + " exceeds data", at);
  std::vector<std::int32_t> v(n);
  for (auto& i : v) i = r.i32();
  return v;
}

void check_version(ByteReader& r) {
  const std::size_t at = r.offset();
  const std::uint16_t v = r.u16();
  if (v != kVersion) throw DecodingError("unsupported version " + std::to_string(v), at);
}

void expect_end(const ByteReader& r) {
  if (!r.at_end()) throw DecodingError(std::to_string(r.remaining()) + " trailing bytes", r.offset());
}

}  // namespace

std::vector<std::uint8_t> encode_samples(const SampleFile& file) {
  ByteWriter w;
  w.magic("FQD1");
  w.u16(kVersion);
  if (const auto* h = std::get_if<HistorySamples>(&file)) {
    w.u8(1);
    w.u32(h->window);
    w.u64(h->samples.size());
    for (const auto& s : h->samples) {
      w.i32(s.user_id);
      w.i32(s.target);
      w.u32(static_cast<std::uint32_t>(s.history.size()));
      for (auto x : s.history) w.i32(x);
    }
  } else {
    const auto& ratings = std::get<std::vector<RatingSample>>(file);
    w.u8(2);
    w.u32(0);
    w.u64(ratings.size());
    for (const auto& s : ratings) {
      w.i32(s.user_id);
      w.i32(s.movie_id);
      w.f64(s.movie_age);
      w.i32(s.rating_class);
      w.u32(static_cast<std::uint32_t>(s.genre_ids.size()));
      for (auto g : s.genre_ids) w.i32(g);
    }
  }
  return w.take();
}

SampleFile decode_samples(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("FQD1");
  check_version(r);
  const std::size_t kind_at = r.offset();
  const std::uint8_t kind = r.u8();
  const std::uint32_t window = r.u32();
  const std::size_t count_at = r.offset();
  const std::uint64_t count = r.u64();
  // Every sample takes at least 12 bytes.
  if (count > r.remaining() / 12) throw DecodingError("sample count exceeds data", count_at);
  if (kind == 1) {
    HistorySamples h;
    h.window = window;
    h.samples.resize(count);
    for (auto& s : h.samples) {
      s.user_id = r.i32();
      s.target = r.i32();
      s.history = get_ids(r);
    }
    expect_end(r);
    return h;
  }
  if (kind == 2) {
    std::vector<RatingSample> out(count);
    for (auto& s : out) {
      s.user_id = r.i32();
      s.movie_id = r.i32();
      s.movie_age = r.f64();
      s.rating_class = r.i32();
      s.genre_ids = get_ids(r);
    }
    expect_end(r);
    return out;
  }
  throw DecodingError("unknown sample kind " + std::to_string(kind), kind_at);
}

void save_samples(const SampleFile& file, const std::filesystem::path& path) {
  write_file_bytes(path, encode_samples(file));
}

SampleFile load_samples(const std::filesystem::path& path) { return decode_samples(read_file_bytes(path)); }

void validate_prepared_split(const PreparedSplit& p) {
  ClientPartition halves;
  halves.clients = {p.split.train, p.split.validation};
  validate_partition(halves, p.sample_count);
  validate_partition(p.partition, p.split.train.size());
}

std::vector<std::uint8_t> encode_prepared_split(const PreparedSplit& p) {
  ByteWriter w;
  w.magic("FQP1");
  w.u16(kVersion);
  w.u8(p.partition.kind == PartitionKind::IidEqual ? 1 : 2);
  w.u64(p.sample_count);
  put_indices(w, p.split.train);
  put_indices(w, p.split.validation);
  w.u32(static_cast<std::uint32_t>(p.partition.clients.size()));
  for (const auto& c : p.partition.clients) put_indices(w, c);
  return w.take();
}

PreparedSplit decode_prepared_split(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("FQP1");
  check_version(r);
  PreparedSplit p;
  const std::size_t kind_at = r.offset();
  const std::uint8_t kind = r.u8();
  if (kind != 1 && kind != 2) throw DecodingError("unknown partition kind " + std::to_string(kind), kind_at);
  p.partition.kind = kind == 1 ? PartitionKind::IidEqual : PartitionKind::PerUser;
  p.sample_count = r.u64();
  p.split.train = get_indices(r);
  p.split.validation = get_indices(r);
  const std::size_t clients_at = r.offset();
  const std::uint32_t clients = r.u32();
  if (clients > r.remaining() / 8) throw DecodingError("client count exceeds data", clients_at);
  p.partition.clients.resize(clients);
  for (auto& c : p.partition.clients) c = get_indices(r);
  expect_end(r);
  return p;
}

void save_prepared_split(const PreparedSplit& p, const std::filesystem::path& path) {
  write_file_bytes(path, encode_prepared_split(p));
}

PreparedSplit load_prepared_split(const std::filesystem::path& path) {
  return decode_prepared_split(read_file_bytes(path));
}

}  // namespace fedq::data
