#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace fedq::nn {

// Looks up rows of a (vocab_size x dim) table for the index sequence named
// `input` in the batch. Produces a sequence value.
struct Embedding {
  std::string input;
  std::size_t vocab_size = 0;
  std::size_t dim = 0;
};

// y = x W^T + b, W is (out_dim x in_dim).
struct FullyConnected {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};

// Per-sample normalization over groups of consecutive channels.
struct GroupNorm {
  std::size_t num_groups = 32;
  std::size_t channels = 0;
  double epsilon = 1e-5;
};

// Per-channel normalization over the batch; running statistics are kept as
// non-trainable buffers.
struct BatchNorm {
  std::size_t channels = 0;
  double epsilon = 1e-5;
  double momentum = 0.1;
};

struct ReLU {};

// Mean over the valid (non-padding) positions of a sequence value.
struct MeanPoolOverSequence {};

// Concatenates the top `inputs` values of the stack (in push order) and
// appends the named per-row scalar features.
struct Concat {
  std::size_t inputs = 0;
  std::vector<std::string> dense_features;
};

using LayerSpec = std::variant<Embedding, FullyConnected, GroupNorm, BatchNorm, ReLU,
                               MeanPoolOverSequence, Concat>;

// Layers execute in order against a value stack: Embedding pushes, MeanPool
// and the dense layers transform the top, Concat merges several values.
// A valid spec leaves exactly one dense value, the logits.
using ModelSpec = std::vector<LayerSpec>;

std::string layer_kind(const LayerSpec& layer);

}  // namespace fedq::nn
