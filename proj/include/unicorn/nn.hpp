#pragma once

// Building blocks shared by the snapshot, series and text models.

#include <string>
#include <vector>

#include "unicorn/rng.hpp"
#include "unicorn/tensor.hpp"

namespace unicorn::nn {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedParameter>;

/// Appends `params` to `out`, prefixing each name with `prefix.`.
void append_prefixed(ParameterList& out, const std::string& prefix, const ParameterList& params);

std::size_t parameter_count(const ParameterList& params);

/// Uniform(-bound, bound) initialized trainable tensor.
Tensor uniform_parameter(Shape shape, double bound, Rng& rng);
Tensor zero_parameter(Shape shape);
Tensor constant_parameter(Shape shape, double value);

/// y = x W (+ b), x [m,in], W [in,out]. Xavier-uniform weights, zero bias.
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, bool bias, Rng& rng);

  Tensor forward(const Tensor& x) const;
  ParameterList parameters() const;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  bool has_bias() const { return bias_.defined(); }
  Tensor& weight() { return weight_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Tensor weight_, bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor forward(const Tensor& x) const;
  ParameterList parameters() const;

 private:
  Tensor gamma_, beta_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng);

  /// query [m,d] attends over memory [n,d]. With causal, position i only sees
  /// memory positions <= i (self-attention use).
  Tensor forward(const Tensor& query, const Tensor& memory, bool causal = false) const;
  ParameterList parameters() const;

 private:
  std::size_t dim_ = 0, heads_ = 0;
  Linear q_, k_, v_, o_;
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& x) const;
  ParameterList parameters() const;

 private:
  Linear up_, down_;
};

/// Pre-norm encoder layer: x + attn(ln(x)), then x + ff(ln(x)).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(std::size_t dim, std::size_t heads, std::size_t ff_dim, Rng& rng);

  Tensor forward(const Tensor& x) const;
  ParameterList parameters() const;

 private:
  LayerNorm norm_attn_, norm_ff_;
  MultiHeadAttention attn_;
  FeedForward ff_;
};

/// Pre-norm decoder layer with causal self-attention and cross-attention.
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(std::size_t dim, std::size_t heads, std::size_t ff_dim, Rng& rng);

  Tensor forward(const Tensor& x, const Tensor& memory) const;
  ParameterList parameters() const;

 private:
  LayerNorm norm_self_, norm_cross_, norm_ff_;
  MultiHeadAttention self_attn_, cross_attn_;
  FeedForward ff_;
};

/// Fixed sinusoidal encoding [length, dim] (sin on even, cos on odd columns).
Tensor sinusoidal_positions(std::size_t length, std::size_t dim);

}  // namespace unicorn::nn
