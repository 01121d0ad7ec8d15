#pragma once

// Minimal reverse-mode automatic differentiation over dense double arrays.
//
// A Graph records nodes eagerly in creation order, so the node list is
// already topologically sorted: every parent id is smaller than its child.
// backward() walks that list once in reverse. Values are lightweight
// handles (graph pointer + node id) and are only valid while their Graph
// lives. A Graph is confined to one thread.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace preflab {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array of doubles. An empty shape denotes a scalar.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() : data(1, 0.0) {}
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_string(shape));
    }
  }

  static Tensor zeros(Shape s) {
    const auto n = element_count(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor scalar(double v) { return Tensor(Shape{}, {v}); }
  static Tensor vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data).subspan(r * cols(), cols());
  }
};

namespace ad {

enum class OpKind {
  Variable,
  Constant,
  StopGradient,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  Exp,
  Log,
  Sigmoid,
  LogSigmoid,
  Tanh,
  Relu,
  Sum,
  Mean,
  Gather,
  GatherRows,
  Slice,
  MatMul,
  LogSoftmax,
};

class Graph;

/// Handle to a node of a Graph.
class Value {
 public:
  Value() = default;

  const Tensor& data() const;
  const Tensor& grad() const;
  const Shape& shape() const { return data().shape; }
  std::size_t size() const { return data().size(); }
  /// Single element of a one-element value.
  double item() const;
  std::size_t id() const { return id_; }
  bool tracks_grad() const;
  Graph& graph() const {
    if (!graph_) throw std::logic_error("value is not attached to a graph");
    return *graph_;
  }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Value(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> parents;
    Tensor value;
    Tensor grad;
    bool tracks_grad;
    BackwardFn backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that receives gradient.
  Value variable(Tensor t) { return record(OpKind::Variable, {}, std::move(t), true, {}); }
  /// Leaf that never receives gradient.
  Value constant(Tensor t) { return record(OpKind::Constant, {}, std::move(t), false, {}); }
  Value scalar(double v) { return constant(Tensor::scalar(v)); }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  const Node& node(Value v) const { return node(v.id()); }

  /// Computes d(root)/d(value) for every value created before root.
  ///
  /// Leaf gradients accumulate across repeated calls; intermediate node
  /// gradients hold the result of the latest call only.
  void backward(Value root) {
    check_owner(root);
    if (root.size() != 1) {
      throw ShapeError("backward requires a scalar root, got shape " + shape_string(root.shape()));
    }
    for (std::size_t i = 0; i <= root.id(); ++i) {
      auto& n = nodes_[i];
      if (n.kind != OpKind::Variable) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
    auto& r = nodes_[root.id()];
    if (!r.tracks_grad) return;
    if (r.kind == OpKind::Variable) {
      r.grad.data[0] += 1.0;
      return;
    }
    r.grad.data[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.tracks_grad || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  void zero_grad() {
    for (auto& n : nodes_) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
  }

  // Kernel-author interface.

  Value record(OpKind kind, std::vector<std::size_t> parents, Tensor value, bool tracks,
               BackwardFn backward) {
    Tensor grad = Tensor::zeros(value.shape);
    nodes_.push_back(Node{kind, std::move(parents), std::move(value), std::move(grad), tracks,
                          std::move(backward)});
    return Value(this, nodes_.size() - 1);
  }

  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool tracks(std::size_t id) const { return nodes_[id].tracks_grad; }
  std::size_t parent(std::size_t id, std::size_t k) const { return nodes_[id].parents[k]; }

  /// Mutable gradient buffer of a parent, or nullptr if it does not track.
  Tensor* sink(std::size_t id) { return nodes_[id].tracks_grad ? &nodes_[id].grad : nullptr; }

  void check_owner(Value v) const {
    if (&v.graph() != this) throw std::logic_error("value belongs to a different graph");
  }

 private:
  std::deque<Node> nodes_;
};

inline const Tensor& Value::data() const { return graph().value_of(id_); }
inline const Tensor& Value::grad() const { return graph().grad_of(id_); }
inline bool Value::tracks_grad() const { return graph().tracks(id_); }
inline double Value::item() const {
  const auto& d = data();
  if (d.size() != 1) throw ShapeError("item() requires a single-element value");
  return d.data[0];
}

namespace detail {

inline Graph& common_graph(Value a, Value b) {
  if (&a.graph() != &b.graph()) throw std::logic_error("operands belong to different graphs");
  return a.graph();
}

enum class Broadcast { Same, LeftScalar, RightScalar };

inline Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape == b.shape) return Broadcast::Same;
  if (a.size() == 1) return Broadcast::LeftScalar;
  if (b.size() == 1) return Broadcast::RightScalar;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape) + " and " +
                   shape_string(b.shape));
}

// Shared driver for elementwise binary kernels. `fwd(x, y)` is the value and
// `dx(x, y)`, `dy(x, y)` are the partial derivatives.
template <class Fwd, class Dx, class Dy>
Value binary(OpKind kind, Value a, Value b, const char* name, Fwd fwd, Dx dx, Dy dy) {
  Graph& g = common_graph(a, b);
  const Tensor& ta = a.data();
  const Tensor& tb = b.data();
  const Broadcast bc = broadcast_kind(ta, tb, name);
  const Shape& out_shape = bc == Broadcast::LeftScalar ? tb.shape : ta.shape;
  const std::size_t n = element_count(out_shape);
  std::vector<double> out(n);
  auto xa = [&](std::size_t i) { return bc == Broadcast::LeftScalar ? ta.data[0] : ta.data[i]; };
  auto xb = [&](std::size_t i) { return bc == Broadcast::RightScalar ? tb.data[0] : tb.data[i]; };
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xa(i), xb(i));
  const bool tracks = a.tracks_grad() || b.tracks_grad();
  return g.record(kind, {a.id(), b.id()}, Tensor(out_shape, std::move(out)), tracks,
                  [bc, dx, dy](Graph& gr, std::size_t self) {
                    const auto pa = gr.parent(self, 0);
                    const auto pb = gr.parent(self, 1);
                    const auto& va = gr.value_of(pa).data;
                    const auto& vb = gr.value_of(pb).data;
                    const auto& go = gr.grad_of(self).data;
                    Tensor* ga = gr.sink(pa);
                    Tensor* gb = gr.sink(pb);
                    for (std::size_t i = 0; i < go.size(); ++i) {
                      const double x = bc == Broadcast::LeftScalar ? va[0] : va[i];
                      const double y = bc == Broadcast::RightScalar ? vb[0] : vb[i];
                      if (ga) ga->data[bc == Broadcast::LeftScalar ? 0 : i] += go[i] * dx(x, y);
                      if (gb) gb->data[bc == Broadcast::RightScalar ? 0 : i] += go[i] * dy(x, y);
                    }
                  });
}

// Shared driver for elementwise unary kernels; `deriv(x, y)` receives the
// input and the forward output.
template <class Fwd, class Deriv>
Value unary(OpKind kind, Value a, Fwd fwd, Deriv deriv) {
  Graph& g = a.graph();
  const Tensor& ta = a.data();
  std::vector<double> out(ta.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(ta.data[i]);
  return g.record(kind, {a.id()}, Tensor(ta.shape, std::move(out)), a.tracks_grad(),
                  [deriv](Graph& gr, std::size_t self) {
                    Tensor* ga = gr.sink(gr.parent(self, 0));
                    if (!ga) return;
                    const auto& x = gr.value_of(gr.parent(self, 0)).data;
                    const auto& y = gr.value_of(self).data;
                    const auto& go = gr.grad_of(self).data;
                    for (std::size_t i = 0; i < go.size(); ++i) ga->data[i] += go[i] * deriv(x[i], y[i]);
                  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) = -softplus(-x)
inline double stable_log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

}  // namespace detail

inline double sigmoid(double x) { return detail::stable_sigmoid(x); }
inline double log_sigmoid(double x) { return detail::stable_log_sigmoid(x); }

inline Value add(Value a, Value b) {
  return detail::binary(
      OpKind::Add, a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Value sub(Value a, Value b) {
  return detail::binary(
      OpKind::Sub, a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Value mul(Value a, Value b) {
  return detail::binary(
      OpKind::Mul, a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

inline Value scale(Value a, double k) {
  return detail::unary(
      OpKind::Scale, a, [k](double x) { return k * x; }, [k](double, double) { return k; });
}

inline Value add_scalar(Value a, double k) {
  return detail::unary(
      OpKind::AddScalar, a, [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

inline Value neg(Value a) { return scale(a, -1.0); }

inline Value exp(Value a) {
  return detail::unary(
      OpKind::Exp, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

/// Natural log. Nonpositive inputs are rejected rather than clamped.
inline Value log(Value a) {
  for (double x : a.data().data) {
    if (!(x > 0.0)) throw DomainError("log of nonpositive value " + std::to_string(x));
  }
  return detail::unary(
      OpKind::Log, a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Value sigmoid(Value a) {
  return detail::unary(
      OpKind::Sigmoid, a, detail::stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

inline Value log_sigmoid(Value a) {
  return detail::unary(OpKind::LogSigmoid, a, detail::stable_log_sigmoid,
                       [](double x, double) { return detail::stable_sigmoid(-x); });
}

inline Value tanh(Value a) {
  return detail::unary(
      OpKind::Tanh, a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

/// max(x, 0); the subgradient at 0 is taken as 0.
inline Value relu(Value a) {
  return detail::unary(
      OpKind::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }
inline Value operator-(Value a) { return neg(a); }
inline Value operator*(double k, Value a) { return scale(a, k); }
inline Value operator*(Value a, double k) { return scale(a, k); }
inline Value operator+(Value a, double k) { return add_scalar(a, k); }
inline Value operator-(Value a, double k) { return add_scalar(a, -k); }

inline Value sum(Value a) {
  Graph& g = a.graph();
  const auto& d = a.data().data;
  const double s = std::accumulate(d.begin(), d.end(), 0.0);
  return g.record(OpKind::Sum, {a.id()}, Tensor::scalar(s), a.tracks_grad(),
                  [](Graph& gr, std::size_t self) {
                    Tensor* ga = gr.sink(gr.parent(self, 0));
                    const double go = gr.grad_of(self).data[0];
                    for (auto& x : ga->data) x += go;
                  });
}

inline Value mean(Value a) {
  Graph& g = a.graph();
  const auto& d = a.data().data;
  const double n = static_cast<double>(d.size());
  const double m = std::accumulate(d.begin(), d.end(), 0.0) / n;
  return g.record(OpKind::Mean, {a.id()}, Tensor::scalar(m), a.tracks_grad(),
                  [n](Graph& gr, std::size_t self) {
                    Tensor* ga = gr.sink(gr.parent(self, 0));
                    const double go = gr.grad_of(self).data[0] / n;
                    for (auto& x : ga->data) x += go;
                  });
}

/// Selects elements by flat index into a 1-D result.
inline Value gather(Value a, std::vector<std::size_t> flat_indices) {
  Graph& g = a.graph();
  const auto& d = a.data().data;
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= d.size()) throw std::out_of_range("gather index out of range");
    out[i] = d[flat_indices[i]];
  }
  return g.record(OpKind::Gather, {a.id()}, Tensor::vector(std::move(out)), a.tracks_grad(),
                  [idx = std::move(flat_indices)](Graph& gr, std::size_t self) {
                    Tensor* ga = gr.sink(gr.parent(self, 0));
                    const auto& go = gr.grad_of(self).data;
                    for (std::size_t i = 0; i < idx.size(); ++i) ga->data[idx[i]] += go[i];
                  });
}

/// Embedding lookup: rows of a 2-D table, stacked in the given order.
inline Value gather_rows(Value table, std::vector<std::size_t> rows) {
  Graph& g = table.graph();
  const Tensor& t = table.data();
  if (t.rank() != 2) throw ShapeError("gather_rows requires a 2-D table");
  const std::size_t cols = t.cols();
  std::vector<double> out(rows.size() * cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= t.rows()) throw std::out_of_range("gather_rows index out of range");
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(rows[r] * cols), cols,
                out.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
  Tensor result({rows.size(), cols}, std::move(out));
  return g.record(OpKind::GatherRows, {table.id()}, std::move(result),
                  table.tracks_grad(), [rows = std::move(rows), cols](Graph& gr, std::size_t self) {
                    Tensor* ga = gr.sink(gr.parent(self, 0));
                    const auto& go = gr.grad_of(self).data;
                    for (std::size_t r = 0; r < rows.size(); ++r)
                      for (std::size_t c = 0; c < cols; ++c) ga->data[rows[r] * cols + c] += go[r * cols + c];
                  });
}

/// Contiguous block of `element_count(shape)` elements starting at `offset`,
/// viewed with the given shape.
inline Value slice(Value a, std::size_t offset, Shape shape) {
  Graph& g = a.graph();
  const auto& d = a.data().data;
  const std::size_t n = element_count(shape);
  if (offset + n > d.size()) throw ShapeError("slice exceeds source extent");
  std::vector<double> out(d.begin() + static_cast<std::ptrdiff_t>(offset),
                          d.begin() + static_cast<std::ptrdiff_t>(offset + n));
  return g.record(OpKind::Slice, {a.id()}, Tensor(std::move(shape), std::move(out)), a.tracks_grad(),
                  [offset](Graph& gr, std::size_t self) {
                    Tensor* ga = gr.sink(gr.parent(self, 0));
                    const auto& go = gr.grad_of(self).data;
                    for (std::size_t i = 0; i < go.size(); ++i) ga->data[offset + i] += go[i];
                  });
}

inline Value matmul(Value a, Value b) {
  Graph& g = detail::common_graph(a, b);
  const Tensor& ta = a.data();
  const Tensor& tb = b.data();
  if (ta.rank() != 2 || tb.rank() != 2 || ta.shape[1] != tb.shape[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_string(ta.shape) + " and " +
                     shape_string(tb.shape));
  }
  const std::size_t n = ta.shape[0], k = ta.shape[1], m = tb.shape[1];
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double x = ta.data[i * k + p];
      if (x == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += x * tb.data[p * m + j];
    }
  const bool tracks = a.tracks_grad() || b.tracks_grad();
  return g.record(OpKind::MatMul, {a.id(), b.id()}, Tensor({n, m}, std::move(out)), tracks,
                  [n, k, m](Graph& gr, std::size_t self) {
                    const auto pa = gr.parent(self, 0);
                    const auto pb = gr.parent(self, 1);
                    const auto& va = gr.value_of(pa).data;
                    const auto& vb = gr.value_of(pb).data;
                    const auto& go = gr.grad_of(self).data;
                    if (Tensor* ga = gr.sink(pa)) {
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          double acc = 0.0;
                          for (std::size_t j = 0; j < m; ++j) acc += go[i * m + j] * vb[p * m + j];
                          ga->data[i * k + p] += acc;
                        }
                    }
                    if (Tensor* gb = gr.sink(pb)) {
                      for (std::size_t i = 0; i < n; ++i)
                        for (std::size_t p = 0; p < k; ++p) {
                          const double x = va[i * k + p];
                          if (x == 0.0) continue;
                          for (std::size_t j = 0; j < m; ++j) gb->data[p * m + j] += x * go[i * m + j];
                        }
                    }
                  });
}

/// Max-shifted log-softmax over the last axis of a 1-D or 2-D value.
inline Value log_softmax(Value logits) {
  Graph& g = logits.graph();
  const Tensor& t = logits.data();
  if (t.rank() == 0 || t.rank() > 2) throw ShapeError("log_softmax requires a 1-D or 2-D value");
  const std::size_t rows = t.rows(), cols = t.cols();
  if (cols == 0) throw ShapeError("log_softmax over an empty axis");
  std::vector<double> out(t.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = t.data.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (!std::isfinite(x[c])) throw DomainError("log_softmax received a non-finite logit");
      mx = std::max(mx, x[c]);
    }
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(x[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[c] - lse;
  }
  return g.record(OpKind::LogSoftmax, {logits.id()}, Tensor(t.shape, std::move(out)),
                  logits.tracks_grad(), [rows, cols](Graph& gr, std::size_t self) {
                    Tensor* ga = gr.sink(gr.parent(self, 0));
                    const auto& y = gr.value_of(self).data;
                    const auto& go = gr.grad_of(self).data;
                    for (std::size_t r = 0; r < rows; ++r) {
                      double gsum = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) gsum += go[r * cols + c];
                      for (std::size_t c = 0; c < cols; ++c) {
                        const std::size_t i = r * cols + c;
                        ga->data[i] += go[i] - std::exp(y[i]) * gsum;
                      }
                    }
                  });
}

/// Identity in the forward pass; blocks all gradient flow to `v`'s ancestors.
inline Value stop_gradient(Value v) {
  return v.graph().record(OpKind::StopGradient, {v.id()}, v.data(), false, {});
}

/// Scalar function of a flat parameter vector, expressed on a fresh graph.
using ScalarFn = std::function<Value(Graph&, Value)>;

/// Analytic gradient of `f` at `theta`.
inline std::vector<double> gradient(const ScalarFn& f, std::span<const double> theta) {
  Graph g;
  Value x = g.variable(Tensor::vector({theta.begin(), theta.end()}));
  Value y = f(g, x);
  g.backward(y);
  return x.grad().data;
}

inline double evaluate(const ScalarFn& f, std::span<const double> theta) {
  Graph g;
  Value x = g.constant(Tensor::vector({theta.begin(), theta.end()}));
  const double y = f(g, x).item();
  if (!std::isfinite(y)) throw DomainError("function value is not finite");
  return y;
}

/// Central-difference gradient of `f` at `theta`.
inline std::vector<double> numeric_gradient(const ScalarFn& f, std::span<const double> theta,
                                            double h = 1e-5) {
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> out(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = evaluate(f, point);
    point[i] = saved - h;
    const double down = evaluate(f, point);
    point[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

/// max_i |a_i - b_i| / max(1, |a_i|)
inline double max_relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double err = std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`.
inline double finite_difference_check(const ScalarFn& f, std::span<const double> theta,
                                      double h = 1e-5) {
  const auto analytic = gradient(f, theta);
  const auto numeric = numeric_gradient(f, theta, h);
  return max_relative_error(analytic, numeric);
}

}  // namespace ad
}  // namespace preflab
