#include "fedq/nn/serialize.hpp"

#include "fedq/binary_io.hpp"

namespace fedq::nn {

std::vector<std::uint8_t> encode_parameters(const ParameterSet& params) {
  ByteWriter w;
  w.magic("FQS1");
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    w.string(name);
    w.u32(static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t d : tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : tensor.values()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

ParameterSet decode_parameters(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("FQS1");
  const std::uint32_t count = r.u32();
  ParameterSet params;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::size_t entry_at = r.offset();
    std::string name = r.string();
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw DecodingError("unsupported tensor rank " + std::to_string(rank), entry_at);
    Shape shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
      d = r.u32();
      if (d == 0) throw DecodingError("zero tensor dimension in '" + name + "'", r.offset() - 4);
      n *= d;
    }
    if (n > r.remaining() / 4) throw DecodingError("tensor '" + name + "' payload truncated", r.offset());
    std::vector<double> data(n);
    for (auto& v : data) v = static_cast<double>(r.f32());
    if (params.contains(name)) throw DecodingError("duplicate tensor name '" + name + "'", entry_at);
    params.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) throw DecodingError("trailing bytes after parameter set", r.offset());
  return params;
}

void save_parameters(const ParameterSet& params, const std::filesystem::path& path) {
  write_file_bytes(path, encode_parameters(params));
}

ParameterSet load_parameters(const std::filesystem::path& path) {
  return decode_parameters(read_file_bytes(path));
}

ParameterSet round_to_float32(const ParameterSet& params) {
  ParameterSet out = params;
  for (auto& entry : out) {
    for (double& v : entry.tensor.values()) v = static_cast<double>(static_cast<float>(v));
  }
  return out;
}

}  // namespace fedq::nn
