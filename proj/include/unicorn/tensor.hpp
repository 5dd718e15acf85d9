#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Tensor is a shared handle to a node in the computation graph. Operations
// record their inputs and a backward closure when any input requires a
// gradient and grad recording is enabled on the current thread. Calling
// backward() on a scalar walks the graph in reverse topological order and
// accumulates gradients into every leaf that requires them.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace unicorn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> inputs;
  std::function<void()> backward;

  std::vector<double>& ensure_grad();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<double> data();
  std::span<const double> data() const;
  /// Gradient buffer; empty when nothing has been accumulated.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  double item() const;

  /// Backpropagates from this scalar, seeding d(self)/d(self) = 1. The graph
  /// below this node is released afterwards.
  void backward();

  /// Copy of the values without graph history.
  Tensor detach() const;

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

/// True when operations on this thread record graph history.
bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Kernel/stride/padding for cubic 3D convolutions.
struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t padding = 1;

  /// Output extent of a strided convolution along one axis.
  std::size_t conv_out(std::size_t in) const;
};

namespace ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// a [m,n] + bias [n] broadcast over rows.
Tensor add_bias(const Tensor& a, const Tensor& bias);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
/// tanh approximation of GELU.
Tensor gelu(const Tensor& a);

/// Row-wise softmax of a [m,n]. With causal set, entries j > i are masked.
Tensor softmax_rows(const Tensor& a, bool causal = false);

/// Row-wise layer normalization of a [m,n] with affine gamma/beta [n].
Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Stacks vectors (shape [n] or [1,n]) into [m,n].
Tensor stack_rows(const std::vector<Tensor>& rows);
/// Row i of a [m,n] as [1,n].
Tensor row(const Tensor& a, std::size_t i);

Tensor reshape(const Tensor& a, Shape shape);

/// Gathers rows of table [V,d] for each id -> [L,d].
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

/// x [C,X,Y,Z], weight [O,C,k,k,k], bias [O] -> [O,X',Y',Z'].
Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& geom);

/// Adjoint of conv3d: x [C,X,Y,Z], weight [C,O,k,k,k], bias [O] -> [O, out_dims].
Tensor conv_transpose3d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                        const ConvGeometry& geom, const Shape& out_dims);

/// Mean absolute error between equally shaped tensors.
Tensor mae(const Tensor& prediction, const Tensor& target);

/// Sum over positions t with targets[t] != pad_id of -log softmax(logits[t])[targets[t]].
Tensor cross_entropy_sum(const Tensor& logits, std::span<const std::size_t> targets, std::size_t pad_id);

Tensor sum(const Tensor& a);

}  // namespace ops
}  // namespace unicorn
