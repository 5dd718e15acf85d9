#include "unicorn/nn.hpp"

#include <cmath>

#include "unicorn/errors.hpp"

namespace unicorn::nn {

void append_prefixed(ParameterList& out, const std::string& prefix, const ParameterList& params) {
  for (const auto& p : params) out.push_back({prefix + "." + p.name, p.tensor});
}

std::size_t parameter_count(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.size();
  return n;
}

Tensor uniform_parameter(Shape shape, double bound, Rng& rng) {
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Tensor zero_parameter(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor constant_parameter(Shape shape, double value) {
  std::vector<double> values(shape_size(shape), value);
  return Tensor::from(std::move(shape), std::move(values), true);
}

Linear::Linear(std::size_t in, std::size_t out, bool bias, Rng& rng) : in_(in), out_(out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  weight_ = uniform_parameter({in, out}, bound, rng);
  if (bias) bias_ = zero_parameter({out});
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = ops::matmul(x, weight_);
  return bias_.defined() ? ops::add_bias(y, bias_) : y;
}

ParameterList Linear::parameters() const {
  ParameterList out{{"weight", weight_}};
  if (bias_.defined()) out.push_back({"bias", bias_});
  return out;
}

LayerNorm::LayerNorm(std::size_t dim) : gamma_(constant_parameter({dim}, 1.0)), beta_(zero_parameter({dim})) {}

Tensor LayerNorm::forward(const Tensor& x) const { return ops::layer_norm(x, gamma_, beta_); }

ParameterList LayerNorm::parameters() const { return {{"gamma", gamma_}, {"beta", beta_}}; }

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng)
    : dim_(dim),
      heads_(heads),
      q_(dim, dim, true, rng),
      k_(dim, dim, true, rng),
      v_(dim, dim, true, rng),
      o_(dim, dim, true, rng) {
  if (heads == 0 || dim % heads != 0) {
    throw ValidationError("attention: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                          " heads");
  }
}

Tensor MultiHeadAttention::forward(const Tensor& query, const Tensor& memory, bool causal) const {
  const std::size_t head_dim = dim_ / heads_;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
  Tensor q = q_.forward(query), k = k_.forward(memory), v = v_.forward(memory);
  std::vector<Tensor> outputs;
  outputs.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Tensor qh = ops::slice_cols(q, h * head_dim, head_dim);
    Tensor kh = ops::slice_cols(k, h * head_dim, head_dim);
    Tensor vh = ops::slice_cols(v, h * head_dim, head_dim);
    Tensor weights = ops::softmax_rows(ops::scale(ops::matmul_nt(qh, kh), inv_sqrt), causal);
    outputs.push_back(ops::matmul(weights, vh));
  }
  Tensor merged = heads_ == 1 ? outputs.front() : ops::concat_cols(outputs);
  return o_.forward(merged);
}

ParameterList MultiHeadAttention::parameters() const {
  ParameterList out;
  append_prefixed(out, "q", q_.parameters());
  append_prefixed(out, "k", k_.parameters());
  append_prefixed(out, "v", v_.parameters());
  append_prefixed(out, "o", o_.parameters());
  return out;
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, Rng& rng)
    : up_(dim, hidden, true, rng), down_(hidden, dim, true, rng) {}

Tensor FeedForward::forward(const Tensor& x) const { return down_.forward(ops::gelu(up_.forward(x))); }

ParameterList FeedForward::parameters() const {
  ParameterList out;
  append_prefixed(out, "up", up_.parameters());
  append_prefixed(out, "down", down_.parameters());
  return out;
}

EncoderLayer::EncoderLayer(std::size_t dim, std::size_t heads, std::size_t ff_dim, Rng& rng)
    : norm_attn_(dim), norm_ff_(dim), attn_(dim, heads, rng), ff_(dim, ff_dim, rng) {}

Tensor EncoderLayer::forward(const Tensor& x) const {
  Tensor normed = norm_attn_.forward(x);
  Tensor h = ops::add(x, attn_.forward(normed, normed));
  return ops::add(h, ff_.forward(norm_ff_.forward(h)));
}

ParameterList EncoderLayer::parameters() const {
  ParameterList out;
  append_prefixed(out, "norm_attn", norm_attn_.parameters());
  append_prefixed(out, "attn", attn_.parameters());
  append_prefixed(out, "norm_ff", norm_ff_.parameters());
  append_prefixed(out, "ff", ff_.parameters());
  return out;
}

DecoderLayer::DecoderLayer(std::size_t dim, std::size_t heads, std::size_t ff_dim, Rng& rng)
    : norm_self_(dim),
      norm_cross_(dim),
      norm_ff_(dim),
      self_attn_(dim, heads, rng),
      cross_attn_(dim, heads, rng),
      ff_(dim, ff_dim, rng) {}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& memory) const {
  Tensor normed = norm_self_.forward(x);
  Tensor h = ops::add(x, self_attn_.forward(normed, normed, /*causal=*/true));
  h = ops::add(h, cross_attn_.forward(norm_cross_.forward(h), memory));
  return ops::add(h, ff_.forward(norm_ff_.forward(h)));
}

ParameterList DecoderLayer::parameters() const {
  ParameterList out;
  append_prefixed(out, "norm_self", norm_self_.parameters());
  append_prefixed(out, "self_attn", self_attn_.parameters());
  append_prefixed(out, "norm_cross", norm_cross_.parameters());
  append_prefixed(out, "cross_attn", cross_attn_.parameters());
  append_prefixed(out, "norm_ff", norm_ff_.parameters());
  append_prefixed(out, "ff", ff_.parameters());
  return out;
}

Tensor sinusoidal_positions(std::size_t length, std::size_t dim) {
  std::vector<double> values(length * dim);
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t j = 0; j < dim; ++j) {
      const double rate = std::pow(10000.0, -static_cast<double>(j - j % 2) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * rate;
      values[pos * dim + j] = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  return Tensor::from({length, dim}, std::move(values));
}

}  // namespace unicorn::nn
