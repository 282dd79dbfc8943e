#pragma once

// Tape-based reverse-mode automatic differentiation over rank-2 tensors.
//
// A Tape records every operation of one forward pass. Vars are cheap handles
// (tape pointer + node id); node values are never mutated after creation.
// backward() walks the tape in reverse creation order, which is a valid
// topological order because a node can only reference earlier nodes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "muplon/error.hpp"
#include "muplon/tensor.hpp"

namespace muplon::ad {

template <typename T>
class Tape;

template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const { return tape_->value(id_); }
  Tensor<T> grad() const { return tape_->grad(id_); }
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

  T item() const {
    if (value().size() != 1) {
      throw ShapeError("item() on non-scalar " + shape_string(shape()));
    }
    return value()[0];
  }

  std::size_t id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using Backprop = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return record(std::move(value), false, nullptr); }
  Var<T> variable(Tensor<T> value) { return record(std::move(value), true, nullptr); }

  Var<T> record(Tensor<T> value, bool requires_grad, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), Tensor<T>(), false, requires_grad, std::move(backprop)});
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }

  Tensor<T> grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (!n.has_grad) return Tensor<T>(n.value.shape(), T(0));
    return n.grad;
  }

  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  Tensor<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.has_grad) {
      n.grad = Tensor<T>(n.value.shape(), T(0));
      n.has_grad = true;
    }
    return n.grad;
  }

  void accumulate(std::size_t id, const Tensor<T>& g) {
    if (!nodes_[id].requires_grad) return;
    auto& buf = grad_buffer(id).storage();
    const auto& src = g.storage();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += src[i];
  }

  void backward(const Var<T>& loss) {
    if (loss.tape() != this) throw Error("autodiff", "loss belongs to a different tape");
    const Node& root = nodes_.at(loss.id());
    if (root.value.size() != 1) {
      throw ShapeError("backward() needs a scalar loss, got " + shape_string(root.value.shape()));
    }
    if (!root.requires_grad) return;
    grad_buffer(loss.id())[0] += T(1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.has_grad || !n.backprop) continue;
      n.backprop(*this, n.grad);
    }
  }

  void zero_grad() {
    for (auto& n : nodes_) {
      n.grad = Tensor<T>();
      n.has_grad = false;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad;
    bool requires_grad;
    Backprop backprop;
  };
  std::deque<Node> nodes_;  // stable references across record()
};

namespace detail {

template <typename T>
void require_matrix(const Var<T>& v, const char* op) {
  if (v.value().rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 operand, got " +
                     shape_string(v.shape()));
  }
}

template <typename T>
void require_same_tape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.tape() != b.tape()) throw Error("autodiff", std::string(op) + ": operands on different tapes");
}

inline std::size_t broadcast_dim(std::size_t a, std::size_t b, const char* op, const Shape& sa,
                                 const Shape& sb) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(sa) + " with " +
                   shape_string(sb));
}

// Sum a broadcast gradient back down to the operand's shape.
template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, std::size_t rows, std::size_t cols) {
  if (g.rows() == rows && g.cols() == cols) return g;
  Tensor<T> out({rows, cols}, T(0));
  for (std::size_t r = 0; r < g.rows(); ++r) {
    for (std::size_t c = 0; c < g.cols(); ++c) {
      out.at(rows == 1 ? 0 : r, cols == 1 ? 0 : c) += g.at(r, c);
    }
  }
  return out;
}

template <typename T, typename Fwd>
Tensor<T> broadcast_apply(const Tensor<T>& a, const Tensor<T>& b, std::size_t rows, std::size_t cols,
                          Fwd fwd) {
  Tensor<T> out({rows, cols});
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out.at(r, c) = fwd(a.at(ar == 1 ? 0 : r, ac == 1 ? 0 : c), b.at(br == 1 ? 0 : r, bc == 1 ? 0 : c));
    }
  }
  return out;
}

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(const Var<T>& a, Fwd fwd, Deriv deriv) {
  Tensor<T> out(a.shape());
  const auto& in = a.value().storage();
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  const std::size_t ida = a.id();
  // deriv(x, y) gives dy/dx from the input and the output value.
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ida, deriv, self = a.tape()->size()](Tape<T>& t, const Tensor<T>& g) {
                            const auto& x = t.value(ida).storage();
                            const auto& y = t.value(self).storage();
                            Tensor<T> ga(g.shape());
                            for (std::size_t i = 0; i < x.size(); ++i) ga[i] = g[i] * deriv(x[i], y[i]);
                            t.accumulate(ida, ga);
                          });
}

}  // namespace detail

// Stops gradient flow: a fresh constant holding a copy of v's value.
template <typename T>
Var<T> detach(const Var<T>& v) {
  return v.tape()->constant(v.value());
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b, "matmul");
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  Tensor<T> out({m, n}, T(0));
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = out.storage().data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av.at(i, p);
      if (aip == T(0)) continue;
      const T* brow = bv.storage().data() + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  const std::size_t ida = a.id(), idb = b.id();
  return a.tape()->record(
      std::move(out), a.requires_grad() || b.requires_grad(),
      [ida, idb, m, k, n](Tape<T>& t, const Tensor<T>& g) {
        const auto& av = t.value(ida);
        const auto& bv = t.value(idb);
        if (t.requires_grad(ida)) {
          Tensor<T> ga({m, k}, T(0));
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              T s = 0;
              for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * bv.at(p, j);
              ga.at(i, p) = s;
            }
          }
          t.accumulate(ida, ga);
        }
        if (t.requires_grad(idb)) {
          Tensor<T> gb({k, n}, T(0));
          for (std::size_t i = 0; i < m; ++i) {
            const T* grow = g.storage().data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
              const T aip = av.at(i, p);
              T* gbrow = gb.storage().data() + p * n;
              for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
            }
          }
          t.accumulate(idb, gb);
        }
      });
}

// Elementwise a + b with numpy-style broadcasting of size-1 dimensions.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b, "add");
  detail::require_matrix(a, "add");
  detail::require_matrix(b, "add");
  const std::size_t rows = detail::broadcast_dim(a.rows(), b.rows(), "add", a.shape(), b.shape());
  const std::size_t cols = detail::broadcast_dim(a.cols(), b.cols(), "add", a.shape(), b.shape());
  auto out = detail::broadcast_apply(a.value(), b.value(), rows, cols, [](T x, T y) { return x + y; });
  const std::size_t ida = a.id(), idb = b.id();
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  return a.tape()->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [=](Tape<T>& t, const Tensor<T>& g) {
                            if (t.requires_grad(ida)) t.accumulate(ida, detail::reduce_to(g, ar, ac));
                            if (t.requires_grad(idb)) t.accumulate(idb, detail::reduce_to(g, br, bc));
                          });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b, "sub");
  detail::require_matrix(a, "sub");
  detail::require_matrix(b, "sub");
  const std::size_t rows = detail::broadcast_dim(a.rows(), b.rows(), "sub", a.shape(), b.shape());
  const std::size_t cols = detail::broadcast_dim(a.cols(), b.cols(), "sub", a.shape(), b.shape());
  auto out = detail::broadcast_apply(a.value(), b.value(), rows, cols, [](T x, T y) { return x - y; });
  const std::size_t ida = a.id(), idb = b.id();
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  return a.tape()->record(std::move(out), a.requires_grad() || b.requires_grad(),
                          [=](Tape<T>& t, const Tensor<T>& g) {
                            if (t.requires_grad(ida)) t.accumulate(ida, detail::reduce_to(g, ar, ac));
                            if (t.requires_grad(idb)) {
                              Tensor<T> neg = g;
                              for (auto& x : neg.storage()) x = -x;
                              t.accumulate(idb, detail::reduce_to(neg, br, bc));
                            }
                          });
}

// Elementwise product with broadcasting.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_tape(a, b, "mul");
  detail::require_matrix(a, "mul");
  detail::require_matrix(b, "mul");
  const std::size_t rows = detail::broadcast_dim(a.rows(), b.rows(), "mul", a.shape(), b.shape());
  const std::size_t cols = detail::broadcast_dim(a.cols(), b.cols(), "mul", a.shape(), b.shape());
  auto out = detail::broadcast_apply(a.value(), b.value(), rows, cols, [](T x, T y) { return x * y; });
  const std::size_t ida = a.id(), idb = b.id();
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  return a.tape()->record(
      std::move(out), a.requires_grad() || b.requires_grad(), [=](Tape<T>& t, const Tensor<T>& g) {
        const auto& av = t.value(ida);
        const auto& bv = t.value(idb);
        if (t.requires_grad(ida)) {
          auto ga = detail::broadcast_apply(g, bv, rows, cols, [](T x, T y) { return x * y; });
          t.accumulate(ida, detail::reduce_to(ga, ar, ac));
        }
        if (t.requires_grad(idb)) {
          auto gb = detail::broadcast_apply(g, av, rows, cols, [](T x, T y) { return x * y; });
          t.accumulate(idb, detail::reduce_to(gb, br, bc));
        }
      });
}

// Multiply by a constant.
template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return detail::unary(a, [factor](T x) { return factor * x; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x > T(0) ? x : T(0); },
                       [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

// Concatenate along axis 0 (stack rows) or axis 1 (join columns).
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  if (axis != 0 && axis != 1) throw ShapeError("concat: axis must be 0 or 1");
  Tape<T>* tape = parts.front().tape();
  std::size_t rows = 0, cols = 0;
  bool needs_grad = false;
  for (const auto& p : parts) {
    detail::require_same_tape(parts.front(), p, "concat");
    detail::require_matrix(p, "concat");
    needs_grad = needs_grad || p.requires_grad();
    if (axis == 0) {
      if (rows == 0 && cols == 0) cols = p.cols();
      if (p.cols() != cols) throw ShapeError("concat: column count mismatch " + shape_string(p.shape()));
      rows += p.rows();
    } else {
      if (rows == 0 && cols == 0) rows = p.rows();
      if (p.rows() != rows) throw ShapeError("concat: row count mismatch " + shape_string(p.shape()));
      cols += p.cols();
    }
  }
  Tensor<T> out({rows, cols});
  std::vector<std::size_t> ids;
  std::vector<std::pair<std::size_t, std::size_t>> dims;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    for (std::size_t r = 0; r < v.rows(); ++r) {
      for (std::size_t c = 0; c < v.cols(); ++c) {
        if (axis == 0) {
          out.at(offset + r, c) = v.at(r, c);
        } else {
          out.at(r, offset + c) = v.at(r, c);
        }
      }
    }
    offset += axis == 0 ? v.rows() : v.cols();
    ids.push_back(p.id());
    dims.emplace_back(v.rows(), v.cols());
  }
  return tape->record(std::move(out), needs_grad, [ids, dims, axis](Tape<T>& t, const Tensor<T>& g) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto [r_n, c_n] = dims[k];
      if (t.requires_grad(ids[k])) {
        Tensor<T> part({r_n, c_n});
        for (std::size_t r = 0; r < r_n; ++r) {
          for (std::size_t c = 0; c < c_n; ++c) {
            part.at(r, c) = axis == 0 ? g.at(offset + r, c) : g.at(r, offset + c);
          }
        }
        t.accumulate(ids[k], part);
      }
      offset += axis == 0 ? r_n : c_n;
    }
  });
}

template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t len) {
  detail::require_matrix(a, "slice_cols");
  if (start + len > a.cols() || len == 0) {
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
                     ") out of range for " + shape_string(a.shape()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor<T> out({rows, len});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < len; ++c) out.at(r, c) = a.value().at(r, start + c);
  }
  const std::size_t ida = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ida, rows, cols, start, len](Tape<T>& t, const Tensor<T>& g) {
                            Tensor<T> ga({rows, cols}, T(0));
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t c = 0; c < len; ++c) ga.at(r, start + c) = g.at(r, c);
                            }
                            t.accumulate(ida, ga);
                          });
}

// out[i, :] = a[index[i], :]; repeated indices accumulate gradient.
template <typename T>
Var<T> gather_rows(const Var<T>& a, const std::vector<std::size_t>& index) {
  detail::require_matrix(a, "gather_rows");
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor<T> out({index.size(), cols});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) {
      throw ShapeError("gather_rows: row " + std::to_string(index[i]) + " out of range for " +
                       shape_string(a.shape()));
    }
    for (std::size_t c = 0; c < cols; ++c) out.at(i, c) = a.value().at(index[i], c);
  }
  const std::size_t ida = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ida, rows, cols, index](Tape<T>& t, const Tensor<T>& g) {
                            Tensor<T> ga({rows, cols}, T(0));
                            for (std::size_t i = 0; i < index.size(); ++i) {
                              for (std::size_t c = 0; c < cols; ++c) ga.at(index[i], c) += g.at(i, c);
                            }
                            t.accumulate(ida, ga);
                          });
}

// Selected entries a[r, c] laid out as a 1 x K row.
template <typename T>
Var<T> pick(const Var<T>& a, const std::vector<std::pair<std::size_t, std::size_t>>& cells) {
  detail::require_matrix(a, "pick");
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor<T> out({1, cells.size()});
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto [r, c] = cells[i];
    if (r >= rows || c >= cols) throw ShapeError("pick: cell out of range for " + shape_string(a.shape()));
    out[i] = a.value().at(r, c);
  }
  const std::size_t ida = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ida, rows, cols, cells](Tape<T>& t, const Tensor<T>& g) {
                            Tensor<T> ga({rows, cols}, T(0));
                            for (std::size_t i = 0; i < cells.size(); ++i) {
                              ga.at(cells[i].first, cells[i].second) += g[i];
                            }
                            t.accumulate(ida, ga);
                          });
}

// Same row-major data viewed as rows x cols.
template <typename T>
Var<T> reshape(const Var<T>& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: " + shape_string(a.shape()) + " cannot become " +
                     shape_string({rows, cols}));
  }
  const std::size_t ida = a.id();
  const Shape original = a.shape();
  return a.tape()->record(Tensor<T>({rows, cols}, a.value().storage()), a.requires_grad(),
                          [ida, original](Tape<T>& t, const Tensor<T>& g) {
                            t.accumulate(ida, Tensor<T>(original, g.storage()));
                          });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t rows = a.rows(), cols = a.cols();
  Tensor<T> out({cols, rows});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out.at(c, r) = a.value().at(r, c);
  }
  const std::size_t ida = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ida, rows, cols](Tape<T>& t, const Tensor<T>& g) {
                            Tensor<T> ga({rows, cols});
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t c = 0; c < cols; ++c) ga.at(r, c) = g.at(c, r);
                            }
                            t.accumulate(ida, ga);
                          });
}

// Sum of all entries, as a 1 x 1 tensor.
template <typename T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T x : a.value().storage()) s += x;
  const std::size_t ida = a.id();
  const Shape shape = a.shape();
  return a.tape()->record(Tensor<T>::scalar(s), a.requires_grad(),
                          [ida, shape](Tape<T>& t, const Tensor<T>& g) {
                            t.accumulate(ida, Tensor<T>(shape, g[0]));
                          });
}

// Mean along an axis: axis 0 gives 1 x cols, axis 1 gives rows x 1.
template <typename T>
Var<T> mean(const Var<T>& a, int axis) {
  detail::require_matrix(a, "mean");
  if (axis != 0 && axis != 1) throw ShapeError("mean: axis must be 0 or 1");
  const std::size_t rows = a.rows(), cols = a.cols();
  const std::size_t n = axis == 0 ? rows : cols;
  if (n == 0) throw ShapeError("mean: empty axis in " + shape_string(a.shape()));
  Tensor<T> out(axis == 0 ? Shape{1, cols} : Shape{rows, 1}, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[axis == 0 ? c : r] += a.value().at(r, c);
    }
  }
  for (auto& x : out.storage()) x /= static_cast<T>(n);
  const std::size_t ida = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ida, rows, cols, axis, n](Tape<T>& t, const Tensor<T>& g) {
                            Tensor<T> ga({rows, cols});
                            const T inv = T(1) / static_cast<T>(n);
                            for (std::size_t r = 0; r < rows; ++r) {
                              for (std::size_t c = 0; c < cols; ++c) {
                                ga.at(r, c) = g[axis == 0 ? c : r] * inv;
                              }
                            }
                            t.accumulate(ida, ga);
                          });
}

// Softmax along an axis, stabilized by subtracting the slice maximum.
template <typename T>
Var<T> softmax(const Var<T>& a, int axis) {
  detail::require_matrix(a, "softmax");
  if (axis != 0 && axis != 1) throw ShapeError("softmax: axis must be 0 or 1");
  const std::size_t rows = a.rows(), cols = a.cols();
  const std::size_t n = axis == 1 ? cols : rows;
  const std::size_t slices = axis == 1 ? rows : cols;
  if (n == 0) throw ShapeError("softmax: empty axis in " + shape_string(a.shape()));
  const auto& x = a.value();
  Tensor<T> out({rows, cols});
  auto idx = [axis, cols](std::size_t s, std::size_t k) { return axis == 1 ? s * cols + k : k * cols + s; };
  for (std::size_t s = 0; s < slices; ++s) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, x[idx(s, k)]);
    T z = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const T e = std::exp(x[idx(s, k)] - mx);
      out[idx(s, k)] = e;
      z += e;
    }
    for (std::size_t k = 0; k < n; ++k) out[idx(s, k)] /= z;
  }
  const std::size_t ida = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ida, slices, n, idx, self = a.tape()->size()](Tape<T>& t, const Tensor<T>& g) {
                            const auto& y = t.value(self);
                            Tensor<T> ga(y.shape());
                            for (std::size_t s = 0; s < slices; ++s) {
                              T dot = 0;
                              for (std::size_t k = 0; k < n; ++k) dot += g[idx(s, k)] * y[idx(s, k)];
                              for (std::size_t k = 0; k < n; ++k) {
                                ga[idx(s, k)] = y[idx(s, k)] * (g[idx(s, k)] - dot);
                              }
                            }
                            t.accumulate(ida, ga);
                          });
}

// Euclidean norm of all entries, as a 1 x 1 tensor. Gradient at 0 is 0.
template <typename T>
Var<T> l2_norm(const Var<T>& a) {
  T s = 0;
  for (T x : a.value().storage()) s += x * x;
  const T norm = std::sqrt(s);
  const std::size_t ida = a.id();
  return a.tape()->record(Tensor<T>::scalar(norm), a.requires_grad(),
                          [ida, norm](Tape<T>& t, const Tensor<T>& g) {
                            Tensor<T> ga = t.value(ida);
                            for (auto& x : ga.storage()) x = norm > T(0) ? g[0] * x / norm : T(0);
                            t.accumulate(ida, ga);
                          });
}

// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<std::size_t>& labels) {
  detail::require_matrix(logits, "cross_entropy");
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (labels.size() != rows) throw ShapeError("cross_entropy: one label per row required");
  Tensor<T> probs({rows, cols});
  T loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= cols) throw ShapeError("cross_entropy: label out of range");
    auto row = logits.value().row_span(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    for (std::size_t c = 0; c < cols; ++c) probs.at(r, c) = std::exp(row[c] - mx) / z;
    loss += -(row[labels[r]] - mx - std::log(z));
  }
  loss /= static_cast<T>(rows);
  const std::size_t ida = logits.id();
  return logits.tape()->record(Tensor<T>::scalar(loss), logits.requires_grad(),
                               [ida, probs, labels, rows](Tape<T>& t, const Tensor<T>& g) {
                                 Tensor<T> ga = probs;
                                 for (std::size_t r = 0; r < rows; ++r) ga.at(r, labels[r]) -= T(1);
                                 const T s = g[0] / static_cast<T>(rows);
                                 for (auto& x : ga.storage()) x *= s;
                                 t.accumulate(ida, ga);
                               });
}

// Reparameterized Gaussian draw mu + sigma * eps; eps is a constant.
template <typename T>
Var<T> gaussian_sample(const Var<T>& mu, const Var<T>& sigma, const Tensor<T>& eps) {
  detail::require_same_tape(mu, sigma, "gaussian_sample");
  if (mu.shape() != sigma.shape() || mu.shape() != eps.shape()) {
    throw ShapeError("gaussian_sample: mu " + shape_string(mu.shape()) + ", sigma " +
                     shape_string(sigma.shape()) + ", eps " + shape_string(eps.shape()));
  }
  Tensor<T> out(mu.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mu.value()[i] + sigma.value()[i] * eps[i];
  const std::size_t idm = mu.id(), ids = sigma.id();
  return mu.tape()->record(std::move(out), mu.requires_grad() || sigma.requires_grad(),
                           [idm, ids, eps](Tape<T>& t, const Tensor<T>& g) {
                             t.accumulate(idm, g);
                             if (t.requires_grad(ids)) {
                               Tensor<T> gs = g;
                               for (std::size_t i = 0; i < gs.size(); ++i) gs[i] *= eps[i];
                               t.accumulate(ids, gs);
                             }
                           });
}

// One long short-term memory step for a batch of rows.
//   x:     B x D input
//   state: B x 2H, [h | c]
//   w:     D x 4H, u: H x 4H, b: 1 x 4H; gate blocks ordered input, forget,
//          output, cell candidate.
// Returns the new state B x 2H as [h' | c'].
template <typename T>
Var<T> lstm_cell(const Var<T>& x, const Var<T>& state, const Var<T>& w, const Var<T>& u, const Var<T>& b) {
  for (const auto* v : {&x, &state, &w, &u, &b}) {
    detail::require_same_tape(x, *v, "lstm_cell");
    detail::require_matrix(*v, "lstm_cell");
  }
  const std::size_t batch = x.rows(), in = x.cols();
  const std::size_t hid = u.rows();
  if (state.rows() != batch || state.cols() != 2 * hid || w.rows() != in || w.cols() != 4 * hid ||
      u.cols() != 4 * hid || b.rows() != 1 || b.cols() != 4 * hid) {
    throw ShapeError("lstm_cell: inconsistent shapes x " + shape_string(x.shape()) + ", state " +
                     shape_string(state.shape()) + ", w " + shape_string(w.shape()) + ", u " +
                     shape_string(u.shape()) + ", b " + shape_string(b.shape()));
  }
  const auto& xv = x.value();
  const auto& sv = state.value();
  const auto& wv = w.value();
  const auto& uv = u.value();
  const auto& bv = b.value();
  // Activated gates, batch x 4H.
  Tensor<T> gates({batch, 4 * hid});
  Tensor<T> out({batch, 2 * hid});
  for (std::size_t r = 0; r < batch; ++r) {
    std::vector<T> z(bv.storage().begin(), bv.storage().end());
    for (std::size_t p = 0; p < in; ++p) {
      const T xp = xv.at(r, p);
      for (std::size_t j = 0; j < 4 * hid; ++j) z[j] += xp * wv.at(p, j);
    }
    for (std::size_t p = 0; p < hid; ++p) {
      const T hp = sv.at(r, p);
      for (std::size_t j = 0; j < 4 * hid; ++j) z[j] += hp * uv.at(p, j);
    }
    for (std::size_t j = 0; j < hid; ++j) {
      const T ig = T(1) / (T(1) + std::exp(-z[j]));
      const T fg = T(1) / (T(1) + std::exp(-z[hid + j]));
      const T og = T(1) / (T(1) + std::exp(-z[2 * hid + j]));
      const T cg = std::tanh(z[3 * hid + j]);
      gates.at(r, j) = ig;
      gates.at(r, hid + j) = fg;
      gates.at(r, 2 * hid + j) = og;
      gates.at(r, 3 * hid + j) = cg;
      const T c_new = fg * sv.at(r, hid + j) + ig * cg;
      out.at(r, hid + j) = c_new;
      out.at(r, j) = og * std::tanh(c_new);
    }
  }
  const std::size_t idx = x.id(), ids = state.id(), idw = w.id(), idu = u.id(), idb = b.id();
  const bool needs = x.requires_grad() || state.requires_grad() || w.requires_grad() ||
                     u.requires_grad() || b.requires_grad();
  return x.tape()->record(
      std::move(out), needs,
      [=, self = x.tape()->size()](Tape<T>& t, const Tensor<T>& g) {
        const auto& xv = t.value(idx);
        const auto& sv = t.value(ids);
        const auto& wv = t.value(idw);
        const auto& uv = t.value(idu);
        const auto& ov = t.value(self);
        Tensor<T> dz({batch, 4 * hid});
        Tensor<T> dstate({batch, 2 * hid});
        for (std::size_t r = 0; r < batch; ++r) {
          for (std::size_t j = 0; j < hid; ++j) {
            const T ig = gates.at(r, j), fg = gates.at(r, hid + j);
            const T og = gates.at(r, 2 * hid + j), cg = gates.at(r, 3 * hid + j);
            const T tc = std::tanh(ov.at(r, hid + j));
            const T dh = g.at(r, j);
            const T dc = g.at(r, hid + j) + dh * og * (T(1) - tc * tc);
            dz.at(r, j) = dc * cg * ig * (T(1) - ig);
            dz.at(r, hid + j) = dc * sv.at(r, hid + j) * fg * (T(1) - fg);
            dz.at(r, 2 * hid + j) = dh * tc * og * (T(1) - og);
            dz.at(r, 3 * hid + j) = dc * ig * (T(1) - cg * cg);
            dstate.at(r, hid + j) = dc * fg;
          }
        }
        if (t.requires_grad(idx)) {
          Tensor<T> dx({batch, in}, T(0));
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t p = 0; p < in; ++p) {
              T s = 0;
              for (std::size_t j = 0; j < 4 * hid; ++j) s += dz.at(r, j) * wv.at(p, j);
              dx.at(r, p) = s;
            }
          t.accumulate(idx, dx);
        }
        if (t.requires_grad(ids)) {
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t p = 0; p < hid; ++p) {
              T s = 0;
              for (std::size_t j = 0; j < 4 * hid; ++j) s += dz.at(r, j) * uv.at(p, j);
              dstate.at(r, p) = s;
            }
          t.accumulate(ids, dstate);
        }
        if (t.requires_grad(idw)) {
          Tensor<T> dw({in, 4 * hid}, T(0));
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t p = 0; p < in; ++p) {
              const T xp = xv.at(r, p);
              for (std::size_t j = 0; j < 4 * hid; ++j) dw.at(p, j) += xp * dz.at(r, j);
            }
          t.accumulate(idw, dw);
        }
        if (t.requires_grad(idu)) {
          Tensor<T> du({hid, 4 * hid}, T(0));
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t p = 0; p < hid; ++p) {
              const T hp = sv.at(r, p);
              for (std::size_t j = 0; j < 4 * hid; ++j) du.at(p, j) += hp * dz.at(r, j);
            }
          t.accumulate(idu, du);
        }
        if (t.requires_grad(idb)) {
          Tensor<T> db({1, 4 * hid}, T(0));
          for (std::size_t r = 0; r < batch; ++r)
            for (std::size_t j = 0; j < 4 * hid; ++j) db[j] += dz.at(r, j);
          t.accumulate(idb, db);
        }
      });
}

}  // namespace muplon::ad
