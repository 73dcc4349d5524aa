#include "fedq/nn/network.hpp"

#include <cmath>
#include <cstdio>
#include <type_traits>

#include "fedq/error.hpp"

namespace fedq::nn {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// A value on the execution stack. Sequence values are (rows x width x dim)
// with per-row valid lengths; dense values are (rows x width).
struct Value {
  bool sequence = false;
  Tensor data;
  std::vector<std::uint32_t> lengths;
};

std::string layer_label(std::size_t index, const LayerSpec& layer) {
  return "layer " + std::to_string(index) + " (" + layer_kind(layer) + ")";
}

Value pop(std::vector<Value>& stack) {
  Value v = std::move(stack.back());
  stack.pop_back();
  return v;
}

std::size_t dense_width(const Value& v) { return v.data.size() / v.data.dim(0); }

}  // namespace

std::string layer_kind(const LayerSpec& layer) {
  return std::visit(Overloaded{
                        [](const Embedding&) { return std::string("embedding"); },
                        [](const FullyConnected&) { return std::string("fc"); },
                        [](const GroupNorm&) { return std::string("groupnorm"); },
                        [](const BatchNorm&) { return std::string("batchnorm"); },
                        [](const ReLU&) { return std::string("relu"); },
                        [](const MeanPoolOverSequence&) { return std::string("meanpool"); },
                        [](const Concat&) { return std::string("concat"); },
                    },
                    layer);
}

std::vector<std::uint8_t> ForwardCache::relu_pattern() const {
  std::vector<std::uint8_t> out;
  for (const auto& layer : layers_) out.insert(out.end(), layer.mask.begin(), layer.mask.end());
  return out;
}

Network::Network(ModelSpec spec) : spec_(std::move(spec)) {
  // Symbolic pass over the stack: true = sequence, width = feature size.
  struct Slot {
    bool sequence;
    std::size_t width;
  };
  std::vector<Slot> stack;
  std::uint64_t fp = mix64(spec_.size());
  auto hash = [&fp](std::uint64_t v) { fp = mix64(fp ^ v); };

  for (std::size_t i = 0; i < spec_.size(); ++i) {
    const LayerSpec& layer = spec_[i];
    const std::string label = layer_label(i, layer);
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%02zu", i);
    prefixes_.push_back(std::string(prefix) + "." + layer_kind(layer));
    hash(layer.index());

    auto require_dense = [&](std::size_t width) {
      if (stack.empty()) throw ConfigError(label + ": no input value");
      if (stack.back().sequence) throw ConfigError(label + ": expects a dense input, got a sequence");
      if (width != 0 && stack.back().width != width) {
        throw ConfigError(label + ": expects input width " + std::to_string(width) + ", got " +
                          std::to_string(stack.back().width));
      }
    };

    std::visit(Overloaded{
                   [&](const Embedding& l) {
                     if (l.vocab_size < 1 || l.dim < 1) {
                       throw ConfigError(label + ": vocab_size and dim must be >= 1");
                     }
                     if (l.input.empty()) throw ConfigError(label + ": input field name is empty");
                     hash(l.vocab_size);
                     hash(l.dim);
                     stack.push_back({true, l.dim});
                   },
                   [&](const FullyConnected& l) {
                     if (l.in_dim < 1 || l.out_dim < 1) throw ConfigError(label + ": dims must be >= 1");
                     require_dense(l.in_dim);
                     hash(l.in_dim);
                     hash(l.out_dim);
                     stack.back().width = l.out_dim;
                   },
                   [&](const GroupNorm& l) {
                     if (l.num_groups < 1 || l.channels < 1 || l.channels % l.num_groups != 0) {
                       throw ConfigError(label + ": num_groups (" + std::to_string(l.num_groups) +
                                         ") must divide channels (" + std::to_string(l.channels) + ")");
                     }
                     if (!(l.epsilon > 0)) throw ConfigError(label + ": epsilon must be positive");
                     require_dense(l.channels);
                     hash(l.num_groups);
                     hash(l.channels);
                   },
                   [&](const BatchNorm& l) {
                     if (l.channels < 1) throw ConfigError(label + ": channels must be >= 1");
                     if (!(l.epsilon > 0)) throw ConfigError(label + ": epsilon must be positive");
                     if (!(l.momentum >= 0 && l.momentum <= 1)) {
                       throw ConfigError(label + ": momentum must lie in [0, 1]");
                     }
                     require_dense(l.channels);
                     hash(l.channels);
                   },
                   [&](const ReLU&) { require_dense(0); },
                   [&](const MeanPoolOverSequence&) {
                     if (stack.empty() || !stack.back().sequence) {
                       throw ConfigError(label + ": expects a sequence input");
                     }
                     stack.back().sequence = false;
                   },
                   [&](const Concat& l) {
                     if (l.inputs < 1 || l.inputs > stack.size()) {
                       throw ConfigError(label + ": needs " + std::to_string(l.inputs) +
                                         " inputs, stack holds " + std::to_string(stack.size()));
                     }
                     std::size_t width = l.dense_features.size();
                     for (std::size_t k = 0; k < l.inputs; ++k) {
                       width += stack.back().width;
                       stack.pop_back();
                     }
                     hash(l.inputs);
                     hash(l.dense_features.size());
                     stack.push_back({false, width});
                   },
               },
               layer);
  }
  if (stack.size() != 1 || stack.back().sequence) {
    throw ConfigError("model spec must reduce to exactly one dense output value, found " +
                      std::to_string(stack.size()) + " value(s)");
  }
  output_dim_ = stack.back().width;
  fingerprint_ = fp;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : spec_) {
    std::visit(Overloaded{
                   [&](const Embedding& l) { n += l.vocab_size * l.dim; },
                   [&](const FullyConnected& l) { n += l.in_dim * l.out_dim + l.out_dim; },
                   [&](const GroupNorm& l) { n += 2 * l.channels; },
                   [&](const BatchNorm& l) { n += 2 * l.channels; },
                   [](const auto&) {},
               },
               layer);
  }
  return n;
}

ParameterSet Network::init_parameters(Rng& rng) const {
  ParameterSet params;
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    const std::string& p = prefixes_[i];
    std::visit(Overloaded{
                   [&](const Embedding& l) {
                     Tensor w({l.vocab_size, l.dim});
                     rng.fill_normal(w.values(), 1.0 / std::sqrt(static_cast<double>(l.dim)));
                     params.add(p + ".weight", std::move(w));
                   },
                   [&](const FullyConnected& l) {
                     const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
                     Tensor w({l.out_dim, l.in_dim});
                     for (double& v : w.values()) v = rng.uniform(-bound, bound);
                     Tensor b({l.out_dim});
                     for (double& v : b.values()) v = rng.uniform(-bound, bound);
                     params.add(p + ".weight", std::move(w));
                     params.add(p + ".bias", std::move(b));
                   },
                   [&](const GroupNorm& l) {
                     Tensor gamma({l.channels});
                     gamma.fill(1.0);
                     params.add(p + ".gamma", std::move(gamma));
                     params.add(p + ".beta", Tensor({l.channels}));
                   },
                   [&](const BatchNorm& l) {
                     Tensor gamma({l.channels});
                     gamma.fill(1.0);
                     params.add(p + ".gamma", std::move(gamma));
                     params.add(p + ".beta", Tensor({l.channels}));
                   },
                   [](const auto&) {},
               },
               spec_[i]);
  }
  return params;
}

ParameterSet Network::init_buffers() const {
  ParameterSet buffers;
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    if (const auto* bn = std::get_if<BatchNorm>(&spec_[i])) {
      buffers.add(prefixes_[i] + ".running_mean", Tensor({bn->channels}));
      Tensor var({bn->channels});
      var.fill(1.0);
      buffers.add(prefixes_[i] + ".running_var", std::move(var));
    }
  }
  return buffers;
}

ForwardResult Network::forward(const ParameterSet& params, const Batch& batch, Mode mode,
                               ParameterSet* buffers) const {
  const std::size_t rows = batch.rows;
  if (rows == 0) throw DataError("forward: empty batch");
  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.fingerprint_ = fingerprint_;
  cache.rows_ = rows;
  cache.layers_.resize(spec_.size());
  std::vector<Value> stack;

  for (std::size_t i = 0; i < spec_.size(); ++i) {
    const std::string& p = prefixes_[i];
    ForwardCache::Layer& lc = cache.layers_[i];
    std::visit(
        Overloaded{
            [&](const Embedding& l) {
              auto it = batch.sequences.find(l.input);
              if (it == batch.sequences.end()) {
                throw DataError("batch has no sequence field '" + l.input + "'");
              }
              const IndexField& field = it->second;
              if (field.lengths.size() != rows || field.indices.size() != rows * field.width) {
                throw DataError("sequence field '" + l.input + "' does not match batch rows");
              }
              const Tensor& table = params.at(p + ".weight");
              if (table.shape() != Shape{l.vocab_size, l.dim}) {
                throw ConfigError(p + ".weight has shape " + shape_string(table.shape()) +
                                  ", expected " + shape_string({l.vocab_size, l.dim}));
              }
              Value out;
              out.sequence = true;
              out.data = Tensor({rows, field.width, l.dim});
              out.lengths = field.lengths;
              for (std::size_t r = 0; r < rows; ++r) {
                const std::uint32_t len = field.lengths[r];
                if (len < 1 || len > field.width) {
                  throw DataError("sequence field '" + l.input + "' row " + std::to_string(r) +
                                  " has invalid length " + std::to_string(len));
                }
                for (std::size_t s = 0; s < len; ++s) {
                  const std::int32_t idx = field.at(r, s);
                  if (idx < 0 || static_cast<std::size_t>(idx) >= l.vocab_size) {
                    throw DataError("embedding index " + std::to_string(idx) + " in field '" +
                                    l.input + "' (row " + std::to_string(r) +
                                    ") outside vocabulary of size " + std::to_string(l.vocab_size));
                  }
                  const double* src = table.data() + static_cast<std::size_t>(idx) * l.dim;
                  double* dst = out.data.data() + (r * field.width + s) * l.dim;
                  for (std::size_t d = 0; d < l.dim; ++d) dst[d] = src[d];
                }
              }
              lc.indices = field.indices;
              lc.lengths = field.lengths;
              lc.width = field.width;
              stack.push_back(std::move(out));
            },
            [&](const FullyConnected& l) {
              Value& v = stack.back();
              const Tensor& w = params.at(p + ".weight");
              const Tensor& b = params.at(p + ".bias");
              if (w.shape() != Shape{l.out_dim, l.in_dim} || b.shape() != Shape{l.out_dim}) {
                throw ConfigError(p + " parameters do not match " + std::to_string(l.out_dim) +
                                  "x" + std::to_string(l.in_dim));
              }
              Tensor y({rows, l.out_dim});
              for (std::size_t r = 0; r < rows; ++r) {
                const double* x = v.data.data() + r * l.in_dim;
                double* yr = y.data() + r * l.out_dim;
                for (std::size_t o = 0; o < l.out_dim; ++o) {
                  const double* wr = w.data() + o * l.in_dim;
                  double acc = b[o];
                  for (std::size_t k = 0; k < l.in_dim; ++k) acc += wr[k] * x[k];
                  yr[o] = acc;
                }
              }
              lc.input = std::move(v.data);
              v.data = std::move(y);
            },
            [&](const GroupNorm& l) {
              Value& v = stack.back();
              const Tensor& gamma = params.at(p + ".gamma");
              const Tensor& beta = params.at(p + ".beta");
              const std::size_t c = l.channels;
              const std::size_t m = c / l.num_groups;
              lc.normalized = Tensor({rows, c});
              lc.inv_std.assign(rows * l.num_groups, 0.0);
              Tensor y({rows, c});
              for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t g = 0; g < l.num_groups; ++g) {
                  const double* x = v.data.data() + r * c + g * m;
                  double mean = 0;
                  for (std::size_t k = 0; k < m; ++k) mean += x[k];
                  mean /= static_cast<double>(m);
                  double var = 0;
                  for (std::size_t k = 0; k < m; ++k) var += (x[k] - mean) * (x[k] - mean);
                  var /= static_cast<double>(m);
                  const double inv = 1.0 / std::sqrt(var + l.epsilon);
                  lc.inv_std[r * l.num_groups + g] = inv;
                  for (std::size_t k = 0; k < m; ++k) {
                    const std::size_t ch = g * m + k;
                    const double xh = (x[k] - mean) * inv;
                    lc.normalized[r * c + ch] = xh;
                    y[r * c + ch] = gamma[ch] * xh + beta[ch];
                  }
                }
              }
              v.data = std::move(y);
            },
            [&](const BatchNorm& l) {
              Value& v = stack.back();
              const Tensor& gamma = params.at(p + ".gamma");
              const Tensor& beta = params.at(p + ".beta");
              const std::size_t c = l.channels;
              lc.normalized = Tensor({rows, c});
              lc.inv_std.assign(c, 0.0);
              lc.batch_statistics = (mode == Mode::Train);
              Tensor y({rows, c});
              for (std::size_t ch = 0; ch < c; ++ch) {
                double mean = 0;
                double var = 0;
                if (mode == Mode::Train) {
                  for (std::size_t r = 0; r < rows; ++r) mean += v.data[r * c + ch];
                  mean /= static_cast<double>(rows);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const double d = v.data[r * c + ch] - mean;
                    var += d * d;
                  }
                  var /= static_cast<double>(rows);
                  if (buffers != nullptr) {
                    Tensor& rm = buffers->at(p + ".running_mean");
                    Tensor& rv = buffers->at(p + ".running_var");
                    const double unbiased =
                        rows > 1 ? var * static_cast<double>(rows) / static_cast<double>(rows - 1) : var;
                    rm[ch] = (1.0 - l.momentum) * rm[ch] + l.momentum * mean;
                    rv[ch] = (1.0 - l.momentum) * rv[ch] + l.momentum * unbiased;
                  }
                } else {
                  if (buffers == nullptr) {
                    throw ConfigError(p + ": eval-mode BatchNorm requires running statistics");
                  }
                  mean = buffers->at(p + ".running_mean")[ch];
                  var = buffers->at(p + ".running_var")[ch];
                }
                const double inv = 1.0 / std::sqrt(var + l.epsilon);
                lc.inv_std[ch] = inv;
                for (std::size_t r = 0; r < rows; ++r) {
                  const double xh = (v.data[r * c + ch] - mean) * inv;
                  lc.normalized[r * c + ch] = xh;
                  y[r * c + ch] = gamma[ch] * xh + beta[ch];
                }
              }
              v.data = std::move(y);
            },
            [&](const ReLU&) {
              Value& v = stack.back();
              lc.mask.resize(v.data.size());
              for (std::size_t k = 0; k < v.data.size(); ++k) {
                const bool on = v.data[k] > 0.0;
                lc.mask[k] = on ? 1 : 0;
                if (!on) v.data[k] = 0.0;
              }
            },
            [&](const MeanPoolOverSequence&) {
              Value v = pop(stack);
              const std::size_t width = v.data.dim(1);
              const std::size_t dim = v.data.dim(2);
              Value out;
              out.data = Tensor({rows, dim});
              for (std::size_t r = 0; r < rows; ++r) {
                double* dst = out.data.data() + r * dim;
                for (std::size_t s = 0; s < v.lengths[r]; ++s) {
                  const double* src = v.data.data() + (r * width + s) * dim;
                  for (std::size_t d = 0; d < dim; ++d) dst[d] += src[d];
                }
                const double inv = 1.0 / static_cast<double>(v.lengths[r]);
                for (std::size_t d = 0; d < dim; ++d) dst[d] *= inv;
              }
              lc.lengths = std::move(v.lengths);
              lc.width = width;
              stack.push_back(std::move(out));
            },
            [&](const Concat& l) {
              std::vector<Value> parts(l.inputs);
              for (std::size_t k = l.inputs; k-- > 0;) parts[k] = pop(stack);
              std::size_t total = l.dense_features.size();
              lc.widths.clear();
              for (std::size_t k = 0; k < parts.size(); ++k) {
                const Value& part = parts[k];
                if (part.sequence) {
                  // A fixed single-position sequence is treated as a dense row.
                  if (part.data.dim(1) != 1) {
                    throw DataError(layer_label(i, spec_[i]) + ": input " + std::to_string(k) +
                                    " is a sequence of width " + std::to_string(part.data.dim(1)) +
                                    "; pool it first");
                  }
                  lc.widths.push_back(part.data.dim(2));
                } else {
                  lc.widths.push_back(dense_width(part));
                }
                total += lc.widths.back();
              }
              Value out;
              out.data = Tensor({rows, total});
              for (std::size_t r = 0; r < rows; ++r) {
                double* dst = out.data.data() + r * total;
                for (std::size_t k = 0; k < parts.size(); ++k) {
                  const double* src = parts[k].data.data() + r * lc.widths[k];
                  for (std::size_t d = 0; d < lc.widths[k]; ++d) *dst++ = src[d];
                }
                for (const auto& name : l.dense_features) {
                  auto it = batch.dense.find(name);
                  if (it == batch.dense.end() || it->second.size() != rows) {
                    throw DataError("batch has no dense field '" + name + "' with " +
                                    std::to_string(rows) + " rows");
                  }
                  *dst++ = it->second[r];
                }
              }
              lc.sequence_inputs.clear();
              for (const auto& part : parts) lc.sequence_inputs.push_back(part.sequence ? 1 : 0);
              stack.push_back(std::move(out));
            },
        },
        spec_[i]);
  }
  result.logits = std::move(stack.back().data);
  return result;
}

GradientSet Network::backward(const ParameterSet& params, const ForwardCache& cache,
                              const Tensor& dlogits) const {
  if (cache.fingerprint_ != fingerprint_ || cache.layers_.size() != spec_.size()) {
    throw InternalError("backward: cache was produced by a different network");
  }
  const std::size_t rows = cache.rows_;
  if (dlogits.shape() != Shape{rows, output_dim_}) {
    throw InternalError("backward: upstream gradient shape " + shape_string(dlogits.shape()) +
                        " does not match cached forward " + shape_string({rows, output_dim_}));
  }
  GradientSet grads = params.zeros_like();
  std::vector<Value> stack;
  stack.push_back(Value{false, dlogits, {}});

  for (std::size_t i = spec_.size(); i-- > 0;) {
    const std::string& p = prefixes_[i];
    const ForwardCache::Layer& lc = cache.layers_[i];
    std::visit(
        Overloaded{
            [&](const Embedding& l) {
              Value dy = pop(stack);
              Tensor& dw = grads.at(p + ".weight");
              for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t s = 0; s < lc.lengths[r]; ++s) {
                  const auto idx = static_cast<std::size_t>(lc.indices[r * lc.width + s]);
                  const double* src = dy.data.data() + (r * lc.width + s) * l.dim;
                  double* dst = dw.data() + idx * l.dim;
                  for (std::size_t d = 0; d < l.dim; ++d) dst[d] += src[d];
                }
              }
            },
            [&](const FullyConnected& l) {
              Value& v = stack.back();
              const Tensor& w = params.at(p + ".weight");
              Tensor& dw = grads.at(p + ".weight");
              Tensor& db = grads.at(p + ".bias");
              Tensor dx({rows, l.in_dim});
              for (std::size_t r = 0; r < rows; ++r) {
                const double* x = lc.input.data() + r * l.in_dim;
                const double* dyr = v.data.data() + r * l.out_dim;
                double* dxr = dx.data() + r * l.in_dim;
                for (std::size_t o = 0; o < l.out_dim; ++o) {
                  const double g = dyr[o];
                  if (g == 0.0) continue;
                  db[o] += g;
                  double* dwr = dw.data() + o * l.in_dim;
                  const double* wr = w.data() + o * l.in_dim;
                  for (std::size_t k = 0; k < l.in_dim; ++k) {
                    dwr[k] += g * x[k];
                    dxr[k] += g * wr[k];
                  }
                }
              }
              v.data = std::move(dx);
            },
            [&](const GroupNorm& l) {
              Value& v = stack.back();
              const Tensor& gamma = params.at(p + ".gamma");
              Tensor& dgamma = grads.at(p + ".gamma");
              Tensor& dbeta = grads.at(p + ".beta");
              const std::size_t c = l.channels;
              const std::size_t m = c / l.num_groups;
              const double md = static_cast<double>(m);
              Tensor dx({rows, c});
              std::vector<double> dxhat(m);
              for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t g = 0; g < l.num_groups; ++g) {
                  double sum = 0;
                  double sum_xh = 0;
                  for (std::size_t k = 0; k < m; ++k) {
                    const std::size_t at = r * c + g * m + k;
                    const std::size_t ch = g * m + k;
                    const double dy = v.data[at];
                    const double xh = lc.normalized[at];
                    dgamma[ch] += dy * xh;
                    dbeta[ch] += dy;
                    dxhat[k] = dy * gamma[ch];
                    sum += dxhat[k];
                    sum_xh += dxhat[k] * xh;
                  }
                  const double inv = lc.inv_std[r * l.num_groups + g];
                  for (std::size_t k = 0; k < m; ++k) {
                    const std::size_t at = r * c + g * m + k;
                    dx[at] = inv / md * (md * dxhat[k] - sum - lc.normalized[at] * sum_xh);
                  }
                }
              }
              v.data = std::move(dx);
            },
            [&](const BatchNorm& l) {
              Value& v = stack.back();
              const Tensor& gamma = params.at(p + ".gamma");
              Tensor& dgamma = grads.at(p + ".gamma");
              Tensor& dbeta = grads.at(p + ".beta");
              const std::size_t c = l.channels;
              const double n = static_cast<double>(rows);
              Tensor dx({rows, c});
              for (std::size_t ch = 0; ch < c; ++ch) {
                double sum = 0;
                double sum_xh = 0;
                for (std::size_t r = 0; r < rows; ++r) {
                  const double dy = v.data[r * c + ch];
                  const double xh = lc.normalized[r * c + ch];
                  dgamma[ch] += dy * xh;
                  dbeta[ch] += dy;
                  sum += dy * gamma[ch];
                  sum_xh += dy * gamma[ch] * xh;
                }
                const double inv = lc.inv_std[ch];
                for (std::size_t r = 0; r < rows; ++r) {
                  const double dxh = v.data[r * c + ch] * gamma[ch];
                  dx[r * c + ch] = lc.batch_statistics
                                       ? inv / n * (n * dxh - sum - lc.normalized[r * c + ch] * sum_xh)
                                       : dxh * inv;
                }
              }
              v.data = std::move(dx);
            },
            [&](const ReLU&) {
              Value& v = stack.back();
              for (std::size_t k = 0; k < v.data.size(); ++k) {
                if (!lc.mask[k]) v.data[k] = 0.0;
              }
            },
            [&](const MeanPoolOverSequence&) {
              Value dy = pop(stack);
              const std::size_t dim = dy.data.dim(1);
              Value dseq;
              dseq.sequence = true;
              dseq.data = Tensor({rows, lc.width, dim});
              for (std::size_t r = 0; r < rows; ++r) {
                const double inv = 1.0 / static_cast<double>(lc.lengths[r]);
                for (std::size_t s = 0; s < lc.lengths[r]; ++s) {
                  double* dst = dseq.data.data() + (r * lc.width + s) * dim;
                  for (std::size_t d = 0; d < dim; ++d) dst[d] = dy.data[r * dim + d] * inv;
                }
              }
              stack.push_back(std::move(dseq));
            },
            [&](const Concat& l) {
              Value dy = pop(stack);
              const std::size_t total = dy.data.dim(1);
              std::size_t offset = 0;
              for (std::size_t k = 0; k < l.inputs; ++k) {
                const std::size_t w = lc.widths[k];
                Value part;
                part.sequence = lc.sequence_inputs[k] != 0;
                part.data = part.sequence ? Tensor({rows, 1, w}) : Tensor({rows, w});
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t d = 0; d < w; ++d) part.data[r * w + d] = dy.data[r * total + offset + d];
                }
                offset += w;
                stack.push_back(std::move(part));
              }
            },
        },
        spec_[i]);
  }
  return grads;
}

}  // namespace fedq::nn
