#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation. Each
// result node keeps its parents and a closure that pushes its gradient into
// them; backward() walks the graph in reverse topological order.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace crafter::nn {

using Shape = std::vector<int>;

// Vectorized kernels pick different code paths for differently aligned
// storage, so buffers are aligned to keep results bit-reproducible.
template <class T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

namespace detail {
inline thread_local bool grad_enabled = true;
}

// Disables graph recording on this thread for its lifetime.
class NoGrad {
 public:
  NoGrad() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGrad() { detail::grad_enabled = prev_; }
  NoGrad(const NoGrad&) = delete;
  NoGrad& operator=(const NoGrad&) = delete;

 private:
  bool prev_;
};

template <class T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using CMatMap = Eigen::Map<const RowMat<T>>;
template <class T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;
template <class T>
using CVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <class T>
class Tensor {
 public:
  using Scalar = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(numel(shape), T(0));
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (values.size() != numel(shape)) {
      throw ShapeError("tensor data has " + std::to_string(values.size()) + " values for shape " +
                       to_string(shape));
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value.assign(values.begin(), values.end());
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  template <class A>
    requires std::same_as<A, typename Buffer<T>::allocator_type>
  static Tensor from(Shape shape, std::vector<T, A> values, bool requires_grad = false) {
    if (values.size() != numel(shape)) {
      throw ShapeError("tensor data has " + std::to_string(values.size()) + " values for shape " +
                       to_string(shape));
    }
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const {
    const int r = rank();
    return node_->shape[static_cast<std::size_t>(i < 0 ? r + i : i)];
  }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::span<T> grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }
  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
    return node_->value[0];
  }
  T operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }
  // Drops graph history; the result is a leaf sharing no state.
  Tensor detach() const {
    auto n = std::make_shared<Node<T>>();
    n->shape = node_->shape;
    n->value = node_->value;
    return Tensor(std::move(n));
  }

  Node<T>& node() const { return *node_; }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <class T>
bool any_requires(std::initializer_list<const Tensor<T>*> inputs) {
  if (!grad_enabled) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Builds a result node; the closure only runs when some input needs a gradient.
template <class T, class F>
Tensor<T> make_result(Shape shape, Buffer<T> value, std::initializer_list<const Tensor<T>*> inputs,
                      F&& backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  if (any_requires<T>(inputs)) {
    n->requires_grad = true;
    for (const auto* t : inputs) n->parents.push_back(t->ptr());
    n->backward = std::forward<F>(backward);
  }
  return Tensor<T>(std::move(n));
}

inline void expect(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace detail

// Seeds d(root) = seed for every pair and propagates to all leaves.
template <class T>
void backward(std::span<const std::pair<Tensor<T>, std::vector<T>>> roots) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  for (const auto& [t, seed] : roots) {
    detail::expect(seed.size() == t.size(), "backward seed size mismatch");
    Node<T>& n = t.node();
    if (!n.requires_grad) continue;
    n.ensure_grad();
    for (std::size_t i = 0; i < seed.size(); ++i) n.grad[i] += seed[i];
    if (seen.insert(&n).second) stack.emplace_back(&n, 0);
    while (!stack.empty()) {
      auto& [cur, next] = stack.back();
      if (next < cur->parents.size()) {
        Node<T>* p = cur->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(cur);
        stack.pop_back();
      }
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& n = **it;
    if (n.backward && !n.grad.empty()) n.backward(n);
  }
}

template <class T>
void backward(const Tensor<T>& root, std::vector<T> seed) {
  std::pair<Tensor<T>, std::vector<T>> r{root, std::move(seed)};
  backward<T>(std::span<const std::pair<Tensor<T>, std::vector<T>>>(&r, 1));
}

template <class T>
void backward(const Tensor<T>& scalar_root) {
  backward(scalar_root, std::vector<T>(scalar_root.size(), T(1)));
}

// ---- elementwise -------------------------------------------------------

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::expect(a.shape() == b.shape(), "add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Buffer<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
  return detail::make_result<T>(a.shape(), std::move(v), {&a, &b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  });
}

// x[..., d] + b[d] (or any trailing-shape b), broadcast over leading dims.
template <class T>
Tensor<T> add_trailing(const Tensor<T>& x, const Tensor<T>& b) {
  const std::size_t m = b.size();
  detail::expect(m > 0 && x.size() % m == 0 && x.rank() >= b.rank() &&
                     std::equal(b.shape().rbegin(), b.shape().rend(), x.shape().rbegin()),
                 "add_trailing: " + to_string(x.shape()) + " + " + to_string(b.shape()));
  Buffer<T> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] + b[i % m];
  return detail::make_result<T>(x.shape(), std::move(v), {&x, &b}, [m](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    if (px.requires_grad) {
      px.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i % m] += self.grad[i];
    }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::expect(a.shape() == b.shape(), "mul: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Buffer<T> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] * b[i];
  return detail::make_result<T>(a.shape(), std::move(v), {&a, &b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

// Multiplies row r of x[N, ...] by the constant m[r].
template <class T>
Tensor<T> scale_rows(const Tensor<T>& x, std::span<const T> m) {
  const auto n = static_cast<std::size_t>(x.dim(0));
  detail::expect(m.size() == n, "scale_rows: row count mismatch");
  const std::size_t w = x.size() / n;
  Buffer<T> factors(m.begin(), m.end());
  Buffer<T> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x[i] * factors[i / w];
  return detail::make_result<T>(x.shape(), std::move(v), {&x}, [factors, w](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * factors[i / w];
  });
}

template <class Act, class Deriv, class T>
Tensor<T> unary(const Tensor<T>& x, Act act, Deriv deriv) {
  Buffer<T> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = act(x[i]);
  return detail::make_result<T>(x.shape(), std::move(v), {&x}, [deriv](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T a) { return a > T(0) ? a : T(0); }, [](T a, T) { return a > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(x, [](T a) { return T(1) / (T(1) + std::exp(-a)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(x, [](T a) { return std::tanh(a); }, [](T, T y) { return T(1) - y * y; });
}

// ---- shape ops ---------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::expect(numel(shape) == x.size(), "reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  return detail::make_result<T>(std::move(shape), Buffer<T>(x.data().begin(), x.data().end()), {&x},
                                [](Node<T>& self) {
                                  auto& p = *self.parents[0];
                                  p.ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
                                });
}

// [N, ...] -> [N, prod(...)]
template <class T>
Tensor<T> flatten(const Tensor<T>& x) {
  const int n = x.dim(0);
  return reshape(x, {n, static_cast<int>(x.size() / static_cast<std::size_t>(n))});
}

// Columns [start, start+len) of x[N, D].
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int len) {
  detail::expect(x.rank() == 2 && start >= 0 && len > 0 && start + len <= x.dim(1), "slice_cols: bad range");
  const int n = x.dim(0), d = x.dim(1);
  Buffer<T> v(static_cast<std::size_t>(n * len));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < len; ++c) v[static_cast<std::size_t>(r * len + c)] = x[static_cast<std::size_t>(r * d + start + c)];
  return detail::make_result<T>({n, len}, std::move(v), {&x}, [n, d, start, len](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < len; ++c)
        p.grad[static_cast<std::size_t>(r * d + start + c)] += self.grad[static_cast<std::size_t>(r * len + c)];
  });
}

// Concatenates [N, a] and [N, b] along columns.
template <class T>
Tensor<T> concat_cols(const Tensor<T>& x, const Tensor<T>& y) {
  detail::expect(x.rank() == 2 && y.rank() == 2 && x.dim(0) == y.dim(0), "concat_cols: row mismatch");
  const int n = x.dim(0), a = x.dim(1), b = y.dim(1);
  Buffer<T> v(static_cast<std::size_t>(n * (a + b)));
  for (int r = 0; r < n; ++r) {
    std::copy_n(&x.data()[static_cast<std::size_t>(r * a)], a, &v[static_cast<std::size_t>(r * (a + b))]);
    std::copy_n(&y.data()[static_cast<std::size_t>(r * b)], b, &v[static_cast<std::size_t>(r * (a + b) + a)]);
  }
  return detail::make_result<T>({n, a + b}, std::move(v), {&x, &y}, [n, a, b](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& py = *self.parents[1];
    for (int r = 0; r < n; ++r) {
      const auto row = static_cast<std::size_t>(r * (a + b));
      if (px.requires_grad) {
        px.ensure_grad();
        for (int c = 0; c < a; ++c) px.grad[static_cast<std::size_t>(r * a + c)] += self.grad[row + static_cast<std::size_t>(c)];
      }
      if (py.requires_grad) {
        py.ensure_grad();
        for (int c = 0; c < b; ++c) py.grad[static_cast<std::size_t>(r * b + c)] += self.grad[row + static_cast<std::size_t>(a + c)];
      }
    }
  });
}

// Stacks equally shaped [N, ...] tensors along rows.
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  detail::expect(!parts.empty(), "concat_rows: empty");
  Shape shape = parts.front().shape();
  int rows = 0;
  Buffer<T> v;
  for (const auto& p : parts) {
    Shape tail(p.shape().begin() + 1, p.shape().end());
    detail::expect(tail == Shape(shape.begin() + 1, shape.end()), "concat_rows: trailing shape mismatch");
    rows += p.dim(0);
    v.insert(v.end(), p.data().begin(), p.data().end());
  }
  shape[0] = rows;
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(v);
  bool need = false;
  if (detail::grad_enabled)
    for (const auto& p : parts) need = need || p.requires_grad();
  if (need) {
    n->requires_grad = true;
    for (const auto& p : parts) n->parents.push_back(p.ptr());
    n->backward = [](Node<T>& self) {
      std::size_t off = 0;
      for (auto& p : self.parents) {
        const std::size_t m = p->value.size();
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t i = 0; i < m; ++i) p->grad[i] += self.grad[off + i];
        }
        off += m;
      }
    };
  }
  return Tensor<T>(std::move(n));
}

// ---- linear algebra ----------------------------------------------------

// x[..., in] W[out, in]^T + b[out]; leading dims are flattened.
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b) {
  detail::expect(w.rank() == 2 && x.dim(-1) == w.dim(1),
                 "linear: input " + to_string(x.shape()) + " vs weight " + to_string(w.shape()));
  const int in = w.dim(1), out = w.dim(0);
  const int rows = static_cast<int>(x.size() / static_cast<std::size_t>(in));
  if (b) detail::expect(b->size() == static_cast<std::size_t>(out), "linear: bias size");
  Shape shape = x.shape();
  shape.back() = out;
  Buffer<T> v(static_cast<std::size_t>(rows) * static_cast<std::size_t>(out));
  {
    MatMap<T> y(v.data(), rows, out);
    CMatMap<T> xm(x.data().data(), rows, in);
    CMatMap<T> wm(w.data().data(), out, in);
    y.noalias() = xm * wm.transpose();
    if (b) y.rowwise() += CVecMap<T>(b->data().data(), out).transpose();
  }
  auto fn = [rows, in, out](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    CMatMap<T> g(self.grad.data(), rows, out);
    if (px.requires_grad) {
      px.ensure_grad();
      MatMap<T>(px.grad.data(), rows, in).noalias() += g * CMatMap<T>(pw.value.data(), out, in);
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      MatMap<T>(pw.grad.data(), out, in).noalias() += g.transpose() * CMatMap<T>(px.value.data(), rows, in);
    }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& pb = *self.parents[2];
      pb.ensure_grad();
      VecMap<T>(pb.grad.data(), out) += g.colwise().sum().transpose();
    }
  };
  if (b) return detail::make_result<T>(std::move(shape), std::move(v), {&x, &w, b}, fn);
  return detail::make_result<T>(std::move(shape), std::move(v), {&x, &w}, fn);
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return linear(x, w, &b);
}

// a[m, k] b[k, n]
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::expect(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                 "matmul: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Buffer<T> v(static_cast<std::size_t>(m * n));
  MatMap<T>(v.data(), m, n).noalias() = CMatMap<T>(a.data().data(), m, k) * CMatMap<T>(b.data().data(), k, n);
  return detail::make_result<T>({m, n}, std::move(v), {&a, &b}, [m, k, n](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    CMatMap<T> g(self.grad.data(), m, n);
    if (pa.requires_grad) {
      pa.ensure_grad();
      MatMap<T>(pa.grad.data(), m, k).noalias() += g * CMatMap<T>(pb.value.data(), k, n).transpose();
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      MatMap<T>(pb.grad.data(), k, n).noalias() += CMatMap<T>(pa.value.data(), m, k).transpose() * g;
    }
  });
}

// ---- reductions ----------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return detail::make_result<T>({1}, {s}, {&x}, [](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (auto& g : p.grad) g += self.grad[0];
  });
}

// Softmax along the last axis.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  const auto d = static_cast<std::size_t>(x.dim(-1));
  const std::size_t rows = x.size() / d;
  Buffer<T> v(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = &x.data()[r * d];
    T* out = &v[r * d];
    const T mx = *std::max_element(in, in + d);
    T z = 0;
    for (std::size_t i = 0; i < d; ++i) z += out[i] = std::exp(in[i] - mx);
    for (std::size_t i = 0; i < d; ++i) out[i] /= z;
  }
  return detail::make_result<T>(x.shape(), std::move(v), {&x}, [rows, d](Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = &self.value[r * d];
      const T* g = &self.grad[r * d];
      T dot = 0;
      for (std::size_t i = 0; i < d; ++i) dot += y[i] * g[i];
      for (std::size_t i = 0; i < d; ++i) p.grad[r * d + i] += y[i] * (g[i] - dot);
    }
  });
}

}  // namespace crafter::nn
