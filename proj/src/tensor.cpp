#include "unicorn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "unicorn/errors.hpp"

namespace unicorn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

std::vector<double>& TensorNode::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {

thread_local bool t_grad_enabled = true;

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> value) {
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  return node;
}

const TensorNode& checked(const Tensor& t, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(what) + ": undefined tensor");
  return *t.node();
}

/// Builds the output node; attaches history only when a gradient can flow.
template <typename MakeBackward>
Tensor record(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
              MakeBackward&& make_backward) {
  auto node = make_node(std::move(shape), std::move(value));
  bool needs = false;
  if (t_grad_enabled) {
    for (const Tensor* in : inputs) needs = needs || in->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor* in : inputs) node->inputs.push_back(in->node_ptr());
    node->backward = make_backward(node.get());
  }
  return Tensor(std::move(node));
}

Tensor record_many(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                   const std::function<std::function<void()>(TensorNode*)>& make_backward) {
  auto node = make_node(std::move(shape), std::move(value));
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->inputs.push_back(in.node_ptr());
    node->backward = make_backward(node.get());
  }
  return Tensor(std::move(node));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (checked(a, op).shape != checked(b, op).shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
  if (checked(a, op).shape.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_to_string(a.shape()));
  }
}

}  // namespace

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

std::size_t ConvGeometry::conv_out(std::size_t in) const {
  if (in + 2 * padding < kernel) throw ShapeError("conv: input extent smaller than kernel");
  return (in + 2 * padding - kernel) / stride + 1;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_size(shape);
  auto node = make_node(std::move(shape), std::vector<double>(n, 0.0));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) + " values for shape " +
                     shape_to_string(shape));
  }
  auto node = make_node(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return checked(*this, "shape").shape; }
std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw ShapeError("Tensor::dim: axis out of range");
  return s[axis];
}
std::size_t Tensor::size() const { return checked(*this, "size").value.size(); }

std::span<double> Tensor::data() { return node_->value; }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }
void Tensor::zero_grad() {
  if (node_) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("Tensor::item on non-scalar " + shape_to_string(shape()));
  return node_->value[0];
}

Tensor Tensor::detach() const { return from(shape(), node_->value); }

void Tensor::backward() {
  if (size() != 1) throw ShapeError("backward() requires a scalar");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of interior nodes.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorNode* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* node = *it;
    if (node->backward) {
      node->ensure_grad();
      node->backward();
    }
  }
  // Interior nodes are released; leaves keep their accumulated gradients.
  for (TensorNode* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->inputs.clear();
      if (node != node_.get()) {
        node->grad.clear();
        node->grad.shrink_to_fit();
      }
    }
  }
}

namespace ops {

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return record(a.shape(), std::move(out), {&a, &b}, [pa = a.node(), pb = b.node()](TensorNode* o) {
    return [o, pa, pb] {
      for (TensorNode* p : {pa, pb}) {
        if (!p->requires_grad) continue;
        auto& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
    };
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return record(a.shape(), std::move(out), {&a, &b}, [pa = a.node(), pb = b.node()](TensorNode* o) {
    return [o, pa, pb] {
      if (pa->requires_grad) {
        auto& g = pa->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
      }
      if (pb->requires_grad) {
        auto& g = pb->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o->grad[i];
      }
    };
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return record(a.shape(), std::move(out), {&a, &b}, [pa = a.node(), pb = b.node()](TensorNode* o) {
    return [o, pa, pb] {
      if (pa->requires_grad) {
        auto& g = pa->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * pb->value[i];
      }
      if (pb->requires_grad) {
        auto& g = pb->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * pa->value[i];
      }
    };
  });
}

Tensor scale(const Tensor& a, double factor) {
  checked(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return record(a.shape(), std::move(out), {&a}, [pa = a.node(), factor](TensorNode* o) {
    return [o, pa, factor] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i] * factor;
    };
  });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_rank(a, 2, "add_bias");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (bias.size() != n) throw ShapeError("add_bias: bias length does not match columns");
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return record(a.shape(), std::move(out), {&a, &bias},
                [pa = a.node(), pb = bias.node(), m, n](TensorNode* o) {
                  return [o, pa, pb, m, n] {
                    if (pa->requires_grad) {
                      auto& g = pa->ensure_grad();
                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
                    }
                    if (pb->requires_grad) {
                      auto& g = pb->ensure_grad();
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) g[j] += o->grad[i * n + j];
                    }
                  };
                });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  return record({m, n}, std::move(out), {&a, &b},
                [pa = a.node(), pb = b.node(), m, k, n](TensorNode* o) {
                  return [o, pa, pb, m, k, n] {
                    const auto& go = o->grad;
                    if (pa->requires_grad) {
                      auto& ga = pa->ensure_grad();
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          double acc = 0.0;
                          const double* brow = &pb->value[p * n];
                          const double* grow = &go[i * n];
                          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                          ga[i * k + p] += acc;
                        }
                    }
                    if (pb->requires_grad) {
                      auto& gb = pb->ensure_grad();
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double x = pa->value[i * k + p];
                          if (x == 0.0) continue;
                          double* gbrow = &gb[p * n];
                          const double* grow = &go[i * n];
                          for (std::size_t j = 0; j < n; ++j) gbrow[j] += x * grow[j];
                        }
                    }
                  };
                });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt: inner dimension mismatch " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()) + "^T");
  }
  std::vector<double> out(m * n, 0.0);
  auto av = a.data(), bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  return record({m, n}, std::move(out), {&a, &b},
                [pa = a.node(), pb = b.node(), m, k, n](TensorNode* o) {
                  return [o, pa, pb, m, k, n] {
                    const auto& go = o->grad;
                    if (pa->requires_grad) {
                      auto& ga = pa->ensure_grad();
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                          const double g = go[i * n + j];
                          if (g == 0.0) continue;
                          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * pb->value[j * k + p];
                        }
                    }
                    if (pb->requires_grad) {
                      auto& gb = pb->ensure_grad();
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                          const double g = go[i * n + j];
                          if (g == 0.0) continue;
                          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += g * pa->value[i * k + p];
                        }
                    }
                  };
                });
}

Tensor relu(const Tensor& a) {
  checked(a, "relu");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = v > 0.0 ? v : 0.0;
  return record(a.shape(), std::move(out), {&a}, [pa = a.node()](TensorNode* o) {
    return [o, pa] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (pa->value[i] > 0.0) g[i] += o->grad[i];
    };
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  checked(a, "gelu");
  std::vector<double> out(a.size());
  auto av = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = av[i];
    out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  return record(a.shape(), std::move(out), {&a}, [pa = a.node()](TensorNode* o) {
    return [o, pa] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = pa->value[i];
        const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
        const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        g[i] += o->grad[i] * d;
      }
    };
  });
}

Tensor softmax_rows(const Tensor& a, bool causal) {
  require_rank(a, 2, "softmax_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t width = causal ? std::min(n, i + 1) : n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < width; ++j) mx = std::max(mx, av[i * n + j]);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      out[i * n + j] = std::exp(av[i * n + j] - mx);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < width; ++j) out[i * n + j] /= total;
  }
  return record(a.shape(), std::move(out), {&a}, [pa = a.node(), m, n](TensorNode* o) {
    return [o, pa, m, n] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += o->grad[i * n + j] * o->value[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          g[i * n + j] += o->value[i * n + j] * (o->grad[i * n + j] - dot);
      }
    };
  });
}

Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, double eps) {
  require_rank(a, 2, "layer_norm");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (gamma.size() != n || beta.size() != n) throw ShapeError("layer_norm: affine size mismatch");
  std::vector<double> out(m * n);
  std::vector<double> normalized(m * n);
  std::vector<double> inv_std(m);
  auto av = a.data(), gv = gamma.data(), bv = beta.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += av[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = av[i * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normalized[i * n + j] = (av[i * n + j] - mean) * inv_std[i];
      out[i * n + j] = gv[j] * normalized[i * n + j] + bv[j];
    }
  }
  return record(a.shape(), std::move(out), {&a, &gamma, &beta},
                [pa = a.node(), pg = gamma.node(), pb = beta.node(), m, n,
                 normalized = std::move(normalized), inv_std = std::move(inv_std)](TensorNode* o) {
                  return [o, pa, pg, pb, m, n, normalized, inv_std] {
                    const auto& go = o->grad;
                    if (pg->requires_grad) {
                      auto& g = pg->ensure_grad();
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) g[j] += go[i * n + j] * normalized[i * n + j];
                    }
                    if (pb->requires_grad) {
                      auto& g = pb->ensure_grad();
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) g[j] += go[i * n + j];
                    }
                    if (pa->requires_grad) {
                      auto& g = pa->ensure_grad();
                      const double inv_n = 1.0 / static_cast<double>(n);
                      for (std::size_t i = 0; i < m; ++i) {
                        double mean_g = 0.0, mean_gx = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                          const double gh = go[i * n + j] * pg->value[j];
                          mean_g += gh;
                          mean_gx += gh * normalized[i * n + j];
                        }
                        mean_g *= inv_n;
                        mean_gx *= inv_n;
                        for (std::size_t j = 0; j < n; ++j) {
                          const double gh = go[i * n + j] * pg->value[j];
                          g[i * n + j] += inv_std[i] * (gh - mean_g - normalized[i * n + j] * mean_gx);
                        }
                      }
                    }
                  };
                });
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (start + count > n) throw ShapeError("slice_cols: range out of bounds");
  std::vector<double> out(m * count);
  auto av = a.data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(&av[i * n + start], count, &out[i * count]);
  return record({m, count}, std::move(out), {&a}, [pa = a.node(), m, n, start, count](TensorNode* o) {
    return [o, pa, m, n, start, count] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < count; ++j) g[i * n + start + j] += o->grad[i * count + j];
    };
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts.front().dim(0);
  std::vector<std::size_t> widths;
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != m) throw ShapeError("concat_cols: row count mismatch");
    widths.push_back(p.dim(1));
    n += p.dim(1);
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].data();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(&pv[i * widths[k]], widths[k], &out[i * n + offset]);
    offset += widths[k];
  }
  return record_many({m, n}, std::move(out), parts, [parts, widths, m, n](TensorNode* o) {
    std::vector<TensorNode*> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return std::function<void()>([o, nodes, widths, m, n] {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (nodes[k]->requires_grad) {
          auto& g = nodes[k]->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += o->grad[i * n + offset + j];
        }
        offset += widths[k];
      }
    });
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const std::size_t n = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != n) throw ShapeError("stack_rows: row length mismatch");
    if (!(r.rank() == 1 || (r.rank() == 2 && r.dim(0) == 1)))
      throw ShapeError("stack_rows: rows must be vectors, got " + shape_to_string(r.shape()));
  }
  const std::size_t m = rows.size();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(rows[i].data().begin(), n, &out[i * n]);
  return record_many({m, n}, std::move(out), rows, [rows, n](TensorNode* o) {
    std::vector<TensorNode*> nodes;
    for (const auto& r : rows) nodes.push_back(r.node());
    return std::function<void()>([o, nodes, n] {
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->requires_grad) continue;
        auto& g = nodes[i]->ensure_grad();
        for (std::size_t j = 0; j < n; ++j) g[j] += o->grad[i * n + j];
      }
    });
  });
}

Tensor row(const Tensor& a, std::size_t i) {
  require_rank(a, 2, "row");
  const std::size_t n = a.dim(1);
  if (i >= a.dim(0)) throw ShapeError("row: index out of range");
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                          a.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  return record({1, n}, std::move(out), {&a}, [pa = a.node(), i, n](TensorNode* o) {
    return [o, pa, i, n] {
      auto& g = pa->ensure_grad();
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o->grad[j];
    };
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_to_string(a.shape()) + " -> " + shape_to_string(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return record(std::move(shape), std::move(out), {&a}, [pa = a.node()](TensorNode* o) {
    return [o, pa] {
      auto& g = pa->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o->grad[i];
    };
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  auto tv = table.data();
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] >= vocab) throw ShapeError("embedding: id out of range");
    std::copy_n(&tv[ids[t] * d], d, &out[t * d]);
  }
  std::vector<std::size_t> id_copy(ids.begin(), ids.end());
  return record({ids.size(), d}, std::move(out), {&table},
                [pt = table.node(), id_copy = std::move(id_copy), d](TensorNode* o) {
                  return [o, pt, id_copy, d] {
                    auto& g = pt->ensure_grad();
                    for (std::size_t t = 0; t < id_copy.size(); ++t)
                      for (std::size_t j = 0; j < d; ++j) g[id_copy[t] * d + j] += o->grad[t * d + j];
                  };
                });
}

namespace {

struct Grid3 {
  std::size_t x, y, z;
  std::size_t volume() const { return x * y * z; }
};

Grid3 spatial(const Shape& s) { return {s[1], s[2], s[3]}; }

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& geom) {
  require_rank(x, 4, "conv3d");
  require_rank(weight, 5, "conv3d");
  const std::size_t channels = x.dim(0), outs = weight.dim(0), k = geom.kernel;
  if (weight.dim(1) != channels || weight.dim(2) != k || weight.dim(3) != k || weight.dim(4) != k)
    throw ShapeError("conv3d: weight shape " + shape_to_string(weight.shape()) + " incompatible with input " +
                     shape_to_string(x.shape()));
  if (bias.size() != outs) throw ShapeError("conv3d: bias size mismatch");
  const Grid3 in = spatial(x.shape());
  const Grid3 out{geom.conv_out(in.x), geom.conv_out(in.y), geom.conv_out(in.z)};
  const std::size_t kvol = k * k * k;
  const auto s = static_cast<std::ptrdiff_t>(geom.stride), p = static_cast<std::ptrdiff_t>(geom.padding);

  // For every output voxel, list (input offset, kernel offset) taps once and
  // reuse them across channels in forward and backward.
  struct Tap {
    std::size_t in_offset, k_offset;
  };
  auto taps = std::make_shared<std::vector<std::vector<Tap>>>(out.volume());
  for (std::size_t ox = 0; ox < out.x; ++ox)
    for (std::size_t oy = 0; oy < out.y; ++oy)
      for (std::size_t oz = 0; oz < out.z; ++oz) {
        auto& list = (*taps)[(ox * out.y + oy) * out.z + oz];
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox) * s - p + static_cast<std::ptrdiff_t>(kx);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(in.x)) continue;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(oy) * s - p + static_cast<std::ptrdiff_t>(ky);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(in.y)) continue;
            for (std::size_t kz = 0; kz < k; ++kz) {
              const auto iz = static_cast<std::ptrdiff_t>(oz) * s - p + static_cast<std::ptrdiff_t>(kz);
              if (iz < 0 || iz >= static_cast<std::ptrdiff_t>(in.z)) continue;
              list.push_back({(static_cast<std::size_t>(ix) * in.y + static_cast<std::size_t>(iy)) * in.z +
                                  static_cast<std::size_t>(iz),
                              (kx * k + ky) * k + kz});
            }
          }
        }
      }

  std::vector<double> result(outs * out.volume());
  auto xv = x.data(), wv = weight.data(), bv = bias.data();
  for (std::size_t o = 0; o < outs; ++o)
    for (std::size_t pos = 0; pos < out.volume(); ++pos) {
      double acc = bv[o];
      for (std::size_t c = 0; c < channels; ++c) {
        const double* xc = &xv[c * in.volume()];
        const double* wc = &wv[(o * channels + c) * kvol];
        for (const Tap& t : (*taps)[pos]) acc += wc[t.k_offset] * xc[t.in_offset];
      }
      result[o * out.volume() + pos] = acc;
    }

  return record({outs, out.x, out.y, out.z}, std::move(result), {&x, &weight, &bias},
                [px = x.node(), pw = weight.node(), pb = bias.node(), taps, channels, outs, in, out,
                 kvol](TensorNode* o) {
                  return [o, px, pw, pb, taps, channels, outs, in, out, kvol] {
                    const auto& go = o->grad;
                    double* gx = px->requires_grad ? px->ensure_grad().data() : nullptr;
                    double* gw = pw->requires_grad ? pw->ensure_grad().data() : nullptr;
                    double* gb = pb->requires_grad ? pb->ensure_grad().data() : nullptr;
                    for (std::size_t oc = 0; oc < outs; ++oc)
                      for (std::size_t pos = 0; pos < out.volume(); ++pos) {
                        const double g = go[oc * out.volume() + pos];
                        if (g == 0.0) continue;
                        if (gb) gb[oc] += g;
                        for (std::size_t c = 0; c < channels; ++c) {
                          const std::size_t xbase = c * in.volume();
                          const std::size_t wbase = (oc * channels + c) * kvol;
                          for (const Tap& t : (*taps)[pos]) {
                            if (gw) gw[wbase + t.k_offset] += g * px->value[xbase + t.in_offset];
                            if (gx) gx[xbase + t.in_offset] += g * pw->value[wbase + t.k_offset];
                          }
                        }
                      }
                  };
                });
}

Tensor conv_transpose3d(const Tensor& x, const Tensor& weight, const Tensor& bias, const ConvGeometry& geom,
                        const Shape& out_dims) {
  require_rank(x, 4, "conv_transpose3d");
  require_rank(weight, 5, "conv_transpose3d");
  if (out_dims.size() != 3) throw ShapeError("conv_transpose3d: out_dims must have 3 entries");
  const std::size_t channels = x.dim(0), outs = weight.dim(1), k = geom.kernel;
  if (weight.dim(0) != channels || weight.dim(2) != k || weight.dim(3) != k || weight.dim(4) != k)
    throw ShapeError("conv_transpose3d: weight shape " + shape_to_string(weight.shape()) +
                     " incompatible with input " + shape_to_string(x.shape()));
  if (bias.size() != outs) throw ShapeError("conv_transpose3d: bias size mismatch");
  const Grid3 in = spatial(x.shape());
  const Grid3 out{out_dims[0], out_dims[1], out_dims[2]};
  if (geom.conv_out(out.x) != in.x || geom.conv_out(out.y) != in.y || geom.conv_out(out.z) != in.z)
    throw ShapeError("conv_transpose3d: output dims " + shape_to_string(out_dims) + " do not invert input " +
                     shape_to_string(x.shape()));
  const std::size_t kvol = k * k * k;
  const auto s = static_cast<std::ptrdiff_t>(geom.stride), p = static_cast<std::ptrdiff_t>(geom.padding);

  // Taps are enumerated from the forward-convolution side: output voxel of
  // this op plays the role of the convolution input.
  struct Tap {
    std::size_t out_offset, k_offset;
  };
  auto taps = std::make_shared<std::vector<std::vector<Tap>>>(in.volume());
  for (std::size_t ix = 0; ix < in.x; ++ix)
    for (std::size_t iy = 0; iy < in.y; ++iy)
      for (std::size_t iz = 0; iz < in.z; ++iz) {
        auto& list = (*taps)[(ix * in.y + iy) * in.z + iz];
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ox = static_cast<std::ptrdiff_t>(ix) * s - p + static_cast<std::ptrdiff_t>(kx);
          if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(out.x)) continue;
          for (std::size_t ky = 0; ky < k; ++ky) {
            const auto oy = static_cast<std::ptrdiff_t>(iy) * s - p + static_cast<std::ptrdiff_t>(ky);
            if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(out.y)) continue;
            for (std::size_t kz = 0; kz < k; ++kz) {
              const auto oz = static_cast<std::ptrdiff_t>(iz) * s - p + static_cast<std::ptrdiff_t>(kz);
              if (oz < 0 || oz >= static_cast<std::ptrdiff_t>(out.z)) continue;
              list.push_back({(static_cast<std::size_t>(ox) * out.y + static_cast<std::size_t>(oy)) * out.z +
                                  static_cast<std::size_t>(oz),
                              (kx * k + ky) * k + kz});
            }
          }
        }
      }

  std::vector<double> result(outs * out.volume(), 0.0);
  auto xv = x.data(), wv = weight.data(), bv = bias.data();
  for (std::size_t o = 0; o < outs; ++o) std::fill_n(&result[o * out.volume()], out.volume(), bv[o]);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t pos = 0; pos < in.volume(); ++pos) {
      const double xval = xv[c * in.volume() + pos];
      if (xval == 0.0) continue;
      for (std::size_t o = 0; o < outs; ++o) {
        const double* wc = &wv[(c * outs + o) * kvol];
        double* yo = &result[o * out.volume()];
        for (const Tap& t : (*taps)[pos]) yo[t.out_offset] += wc[t.k_offset] * xval;
      }
    }

  return record({outs, out.x, out.y, out.z}, std::move(result), {&x, &weight, &bias},
                [px = x.node(), pw = weight.node(), pb = bias.node(), taps, channels, outs, in, out,
                 kvol](TensorNode* o) {
                  return [o, px, pw, pb, taps, channels, outs, in, out, kvol] {
                    const auto& go = o->grad;
                    if (pb->requires_grad) {
                      auto& gb = pb->ensure_grad();
                      for (std::size_t oc = 0; oc < outs; ++oc)
                        for (std::size_t pos = 0; pos < out.volume(); ++pos) gb[oc] += go[oc * out.volume() + pos];
                    }
                    double* gx = px->requires_grad ? px->ensure_grad().data() : nullptr;
                    double* gw = pw->requires_grad ? pw->ensure_grad().data() : nullptr;
                    if (!gx && !gw) return;
                    for (std::size_t c = 0; c < channels; ++c)
                      for (std::size_t pos = 0; pos < in.volume(); ++pos) {
                        const double xval = px->value[c * in.volume() + pos];
                        double gacc = 0.0;
                        for (std::size_t oc = 0; oc < outs; ++oc) {
                          const std::size_t wbase = (c * outs + oc) * kvol;
                          const double* gyo = &go[oc * out.volume()];
                          for (const Tap& t : (*taps)[pos]) {
                            gacc += pw->value[wbase + t.k_offset] * gyo[t.out_offset];
                            if (gw) gw[wbase + t.k_offset] += xval * gyo[t.out_offset];
                          }
                        }
                        if (gx) gx[c * in.volume() + pos] += gacc;
                      }
                  };
                });
}

Tensor mae(const Tensor& prediction, const Tensor& target) {
  if (prediction.size() != target.size()) {
    throw ShapeError("mae: shape mismatch " + shape_to_string(prediction.shape()) + " vs " +
                     shape_to_string(target.shape()));
  }
  if (prediction.size() == 0) throw ShapeError("mae: empty tensors");
  auto pv = prediction.data(), tv = target.data();
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) total += std::abs(pv[i] - tv[i]);
  const double n = static_cast<double>(pv.size());
  return record({1}, {total / n}, {&prediction, &target},
                [pp = prediction.node(), pt = target.node(), n](TensorNode* o) {
                  return [o, pp, pt, n] {
                    const double g = o->grad[0] / n;
                    for (std::size_t i = 0; i < pp->value.size(); ++i) {
                      const double d = pp->value[i] - pt->value[i];
                      const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                      if (pp->requires_grad) pp->ensure_grad()[i] += g * sgn;
                      if (pt->requires_grad) pt->ensure_grad()[i] -= g * sgn;
                    }
                  };
                });
}

Tensor cross_entropy_sum(const Tensor& logits, std::span<const std::size_t> targets, std::size_t pad_id) {
  require_rank(logits, 2, "cross_entropy_sum");
  const std::size_t len = logits.dim(0), vocab = logits.dim(1);
  if (targets.size() != len) throw ShapeError("cross_entropy_sum: target length does not match logits rows");
  auto lv = logits.data();
  std::vector<double> probs(len * vocab, 0.0);
  double total = 0.0;
  for (std::size_t t = 0; t < len; ++t) {
    if (targets[t] == pad_id) continue;
    if (targets[t] >= vocab) throw ValidationError("cross_entropy: target id " + std::to_string(targets[t]) +
                                                   " outside vocabulary of size " + std::to_string(vocab));
    const double* r = &lv[t * vocab];
    const double mx = *std::max_element(r, r + vocab);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(r[j] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - r[targets[t]];
    for (std::size_t j = 0; j < vocab; ++j) probs[t * vocab + j] = std::exp(r[j] - log_z);
  }
  std::vector<std::size_t> target_copy(targets.begin(), targets.end());
  return record({1}, {total}, {&logits},
                [pl = logits.node(), probs = std::move(probs), target_copy = std::move(target_copy), pad_id,
                 vocab](TensorNode* o) {
                  return [o, pl, probs, target_copy, pad_id, vocab] {
                    auto& g = pl->ensure_grad();
                    const double up = o->grad[0];
                    for (std::size_t t = 0; t < target_copy.size(); ++t) {
                      if (target_copy[t] == pad_id) continue;
                      for (std::size_t j = 0; j < vocab; ++j) g[t * vocab + j] += up * probs[t * vocab + j];
                      g[t * vocab + target_copy[t]] -= up;
                    }
                  };
                });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return record({1}, {total}, {&a}, [pa = a.node()](TensorNode* o) {
    return [o, pa] {
      auto& g = pa->ensure_grad();
      for (auto& v : g) v += o->grad[0];
    };
  });
}

}  // namespace ops
}  // namespace unicorn
