#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "tsam/ad/tensor.hpp"

namespace tsam::ad {

namespace detail {

struct Dims2 {
  std::size_t rows;
  std::size_t cols;
};

template <typename T>
Dims2 dims2(const Tensor<T>& t) {
  return {t.rows(), t.cols()};
}

template <typename T>
void require_2d(const Tensor<T>& t, const char* op) {
  if (t.rank() > 2) {
    throw ShapeError(std::string(op) + ": expected rank <= 2, got " + shape_string(t.shape()));
  }
}

template <typename T>
void require_same_size(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": size mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

// Elementwise binary op with 2-D broadcasting (either operand may have a
// unit row and/or column count).
template <typename T>
Tensor<T> broadcast_binary(const Tensor<T>& a, const Tensor<T>& b, BinOp op, const char* name) {
  require_2d(a, name);
  require_2d(b, name);
  const Dims2 da = dims2(a), db = dims2(b);
  auto merge = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(name) + ": cannot broadcast " + shape_string(a.shape()) + " with " +
                     shape_string(b.shape()));
  };
  const std::size_t R = merge(da.rows, db.rows);
  const std::size_t C = merge(da.cols, db.cols);
  Shape shape;
  if (da.rows == R && da.cols == C) {
    shape = a.shape();
  } else if (db.rows == R && db.cols == C) {
    shape = b.shape();
  } else {
    shape = {R, C};
  }
  auto ai = [da](std::size_t i, std::size_t j) {
    return (da.rows == 1 ? 0 : i) * da.cols + (da.cols == 1 ? 0 : j);
  };
  auto bi = [db](std::size_t i, std::size_t j) {
    return (db.rows == 1 ? 0 : i) * db.cols + (db.cols == 1 ? 0 : j);
  };
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(R * C);
  for (std::size_t i = 0; i < R; ++i) {
    for (std::size_t j = 0; j < C; ++j) {
      const T x = av[ai(i, j)], y = bv[bi(i, j)];
      T r{};
      switch (op) {
        case BinOp::kAdd: r = x + y; break;
        case BinOp::kSub: r = x - y; break;
        case BinOp::kMul: r = x * y; break;
        case BinOp::kDiv: r = x / y; break;
      }
      out[i * C + j] = r;
    }
  }
  return make_result<T>(std::move(shape), std::move(out), {a.node(), b.node()},
                        [R, C, ai, bi, op](Node<T>& self) {
                          auto& na = *self.inputs[0];
                          auto& nb = *self.inputs[1];
                          for (std::size_t i = 0; i < R; ++i) {
                            for (std::size_t j = 0; j < C; ++j) {
                              const T g = self.grad[i * C + j];
                              const std::size_t ia = ai(i, j), ib = bi(i, j);
                              const T x = na.value[ia], y = nb.value[ib];
                              T ga{}, gb{};
                              switch (op) {
                                case BinOp::kAdd: ga = g; gb = g; break;
                                case BinOp::kSub: ga = g; gb = -g; break;
                                case BinOp::kMul: ga = g * y; gb = g * x; break;
                                case BinOp::kDiv: ga = g / y; gb = -g * x / (y * y); break;
                              }
                              if (na.requires_grad) na.grad[ia] += ga;
                              if (nb.requires_grad) nb.grad[ib] += gb;
                            }
                          }
                        });
}

// Elementwise unary op; `deriv(x, y)` returns dy/dx given input x and output y.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, F f, D deriv) {
  const auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result<T>(a.shape(), std::move(out), {a.node()}, [deriv](Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      in.grad[i] += self.grad[i] * deriv(in.value[i], self.value[i]);
    }
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary(a, b, detail::BinOp::kAdd, "add");
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary(a, b, detail::BinOp::kSub, "sub");
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary(a, b, detail::BinOp::kMul, "mul");
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::broadcast_binary(a, b, detail::BinOp::kDiv, "div");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
  return detail::unary(a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  return detail::unary(a, [c](T x) { return x + c; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return scale(a, T(-1));
}

// ---------------------------------------------------------------------------
// Nonlinearities

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  for (T v : a.data()) {
    if (!(v > T(0))) throw NumericError("log: non-positive input");
  }
  return detail::unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return detail::unary(
      a, [](T x) { return std::sqrt(x); },
      [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

// Gradient passes only where lo <= x <= hi.
template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return detail::unary(
      a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return x >= lo && x <= hi ? T(1) : T(0); });
}

// log(1 + e^x), stable for large |x|.
template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
  return detail::unary(
      a, [](T x) { return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x))); },
      [](T x, T) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      });
}

// Exact (erf-based) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr T kInvSqrt2 = T(0.70710678118654752440);
  constexpr T kInvSqrt2Pi = T(0.39894228040143267794);
  return detail::unary(
      a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * kInvSqrt2)); },
      [](T x, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(x * kInvSqrt2));
        return cdf + x * kInvSqrt2Pi * std::exp(T(-0.5) * x * x);
      });
}

template <typename T>
Tensor<T> cos(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::cos(x); }, [](T x, T) { return -std::sin(x); });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& a) {
  return detail::unary(a, [](T x) { return std::sin(x); }, [](T x, T) { return std::cos(x); });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (element_count(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  return detail::make_result<T>(std::move(shape), std::vector<T>(a.data().begin(), a.data().end()),
                                {a.node()}, [](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
                                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_2d(a, "transpose");
  const std::size_t R = a.rows(), C = a.cols();
  std::vector<T> out(R * C);
  const auto av = a.data();
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) out[j * R + i] = av[i * C + j];
  return detail::make_result<T>({C, R}, std::move(out), {a.node()}, [R, C](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) in.grad[i * C + j] += self.grad[j * R + i];
  });
}

// Stacks 2-D views along axis 0 (rows) or axis 1 (columns).
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  if (axis > 1) throw ShapeError("concat: axis must be 0 or 1");
  std::vector<std::shared_ptr<detail::Node<T>>> inputs;
  std::vector<detail::Dims2> dims;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat");
    inputs.push_back(p.node());
    dims.push_back(detail::dims2(p));
  }
  std::size_t R = 0, C = 0;
  if (axis == 0) {
    C = dims[0].cols;
    for (const auto& d : dims) {
      if (d.cols != C) throw ShapeError("concat: column mismatch along axis 0");
      R += d.rows;
    }
  } else {
    R = dims[0].rows;
    for (const auto& d : dims) {
      if (d.rows != R) throw ShapeError("concat: row mismatch along axis 1");
      C += d.cols;
    }
  }
  std::vector<T> out(R * C);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].data();
    const auto d = dims[p];
    for (std::size_t i = 0; i < d.rows; ++i)
      for (std::size_t j = 0; j < d.cols; ++j) {
        const std::size_t dst = axis == 0 ? (offset + i) * C + j : i * C + offset + j;
        out[dst] = v[i * d.cols + j];
      }
    offset += axis == 0 ? d.rows : d.cols;
  }
  return detail::make_result<T>({R, C}, std::move(out), std::move(inputs),
                                [dims, axis, C](detail::Node<T>& self) {
                                  std::size_t offset = 0;
                                  for (std::size_t p = 0; p < dims.size(); ++p) {
                                    auto& in = *self.inputs[p];
                                    const auto d = dims[p];
                                    if (in.requires_grad) {
                                      for (std::size_t i = 0; i < d.rows; ++i)
                                        for (std::size_t j = 0; j < d.cols; ++j) {
                                          const std::size_t src =
                                              axis == 0 ? (offset + i) * C + j : i * C + offset + j;
                                          in.grad[i * d.cols + j] += self.grad[src];
                                        }
                                    }
                                    offset += axis == 0 ? d.rows : d.cols;
                                  }
                                });
}

template <typename T>
Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis) {
  return concat(std::vector<Tensor<T>>(parts), axis);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  detail::require_2d(a, "slice_cols");
  const std::size_t R = a.rows(), C = a.cols();
  if (begin >= end || end > C) {
    throw ShapeError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                     shape_string(a.shape()));
  }
  const std::size_t W = end - begin;
  std::vector<T> out(R * W);
  const auto av = a.data();
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < W; ++j) out[i * W + j] = av[i * C + begin + j];
  Shape shape = a.rank() <= 1 ? Shape{W} : Shape{R, W};
  return detail::make_result<T>(std::move(shape), std::move(out), {a.node()},
                                [R, C, W, begin](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t i = 0; i < R; ++i)
                                    for (std::size_t j = 0; j < W; ++j)
                                      in.grad[i * C + begin + j] += self.grad[i * W + j];
                                });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  detail::require_2d(a, "slice_rows");
  const std::size_t R = a.rows(), C = a.cols();
  if (begin >= end || end > R) {
    throw ShapeError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                     shape_string(a.shape()));
  }
  const auto av = a.data();
  std::vector<T> out(av.begin() + begin * C, av.begin() + end * C);
  return detail::make_result<T>({end - begin, C}, std::move(out), {a.node()},
                                [C, begin](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                    in.grad[begin * C + i] += self.grad[i];
                                });
}

// Row lookup (embedding gather); backward scatter-adds into repeated rows.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, std::vector<std::size_t> index) {
  detail::require_2d(a, "gather_rows");
  const std::size_t R = a.rows(), C = a.cols();
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  std::vector<T> out(index.size() * C);
  const auto av = a.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= R) {
      throw ShapeError("gather_rows: row " + std::to_string(index[i]) + " out of range for " +
                       shape_string(a.shape()));
    }
    std::copy_n(av.begin() + index[i] * C, C, out.begin() + i * C);
  }
  const std::size_t n = index.size();
  return detail::make_result<T>({n, C}, std::move(out), {a.node()},
                                [C, index = std::move(index)](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t i = 0; i < index.size(); ++i)
                                    for (std::size_t j = 0; j < C; ++j)
                                      in.grad[index[i] * C + j] += self.grad[i * C + j];
                                });
}

// ---------------------------------------------------------------------------
// Linear algebra and reductions

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  const std::size_t M = a.rows(), K = a.cols(), N = b.cols();
  if (b.rows() != K) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                     shape_string(b.shape()));
  }
  std::vector<T> out(M * N, T(0));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t p = 0; p < K; ++p) {
      const T x = av[i * K + p];
      if (x == T(0)) continue;
      const T* brow = bv.data() + p * N;
      T* orow = out.data() + i * N;
      for (std::size_t j = 0; j < N; ++j) orow[j] += x * brow[j];
    }
  return detail::make_result<T>({M, N}, std::move(out), {a.node(), b.node()},
                                [M, K, N](detail::Node<T>& self) {
                                  auto& na = *self.inputs[0];
                                  auto& nb = *self.inputs[1];
                                  const T* g = self.grad.data();
                                  if (na.requires_grad) {
                                    // dA = dC * B^T
                                    for (std::size_t i = 0; i < M; ++i)
                                      for (std::size_t p = 0; p < K; ++p) {
                                        T s = 0;
                                        const T* brow = nb.value.data() + p * N;
                                        for (std::size_t j = 0; j < N; ++j) s += g[i * N + j] * brow[j];
                                        na.grad[i * K + p] += s;
                                      }
                                  }
                                  if (nb.requires_grad) {
                                    // dB = A^T * dC
                                    for (std::size_t i = 0; i < M; ++i)
                                      for (std::size_t p = 0; p < K; ++p) {
                                        const T x = na.value[i * K + p];
                                        if (x == T(0)) continue;
                                        T* gb = nb.grad.data() + p * N;
                                        for (std::size_t j = 0; j < N; ++j) gb[j] += x * g[i * N + j];
                                      }
                                  }
                                });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  double s = 0;  // wide accumulator for float losses
  for (T v : a.data()) s += v;
  return detail::make_result<T>({}, {static_cast<T>(s)}, {a.node()}, [](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (auto& g : in.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// Sum over one axis of the 2-D view, keeping it: axis 0 -> [1xC], axis 1 -> [Rx1].
template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, std::size_t axis) {
  detail::require_2d(a, "sum_axis");
  if (axis > 1) throw ShapeError("sum_axis: axis must be 0 or 1");
  const std::size_t R = a.rows(), C = a.cols();
  const auto av = a.data();
  std::vector<T> out(axis == 0 ? C : R, T(0));
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < C; ++j) out[axis == 0 ? j : i] += av[i * C + j];
  Shape shape = axis == 0 ? Shape{1, C} : Shape{R, 1};
  return detail::make_result<T>(std::move(shape), std::move(out), {a.node()},
                                [R, C, axis](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t i = 0; i < R; ++i)
                                    for (std::size_t j = 0; j < C; ++j)
                                      in.grad[i * C + j] += self.grad[axis == 0 ? j : i];
                                });
}

// Mean pooling over rows: [RxC] -> [1xC].
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& a) {
  return scale(sum_axis(a, 0), T(1) / static_cast<T>(a.rows()));
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_size(a, b, "dot");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return detail::make_result<T>({}, {s}, {a.node(), b.node()}, [](detail::Node<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const T g = self.grad[0];
    for (std::size_t i = 0; i < na.value.size(); ++i) {
      if (na.requires_grad) na.grad[i] += g * nb.value[i];
      if (nb.requires_grad) nb.grad[i] += g * na.value[i];
    }
  });
}

// Euclidean norm of the whole tensor.
template <typename T>
Tensor<T> l2_norm(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v * v;
  return detail::make_result<T>({}, {std::sqrt(s)}, {a.node()}, [](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    const T n = self.value[0];
    if (n == T(0)) return;
    for (std::size_t i = 0; i < in.value.size(); ++i) in.grad[i] += self.grad[0] * in.value[i] / n;
  });
}

// Per-row Euclidean norms: [RxC] -> [Rx1].
template <typename T>
Tensor<T> row_norms(const Tensor<T>& a) {
  detail::require_2d(a, "row_norms");
  const std::size_t R = a.rows(), C = a.cols();
  const auto av = a.data();
  std::vector<T> out(R, T(0));
  for (std::size_t i = 0; i < R; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < C; ++j) s += av[i * C + j] * av[i * C + j];
    out[i] = std::sqrt(s);
  }
  return detail::make_result<T>({R, 1}, std::move(out), {a.node()}, [R, C](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < R; ++i) {
      const T n = self.value[i];
      if (n == T(0)) continue;
      for (std::size_t j = 0; j < C; ++j) in.grad[i * C + j] += self.grad[i] * in.value[i * C + j] / n;
    }
  });
}

// ---------------------------------------------------------------------------
// Normalizations

/// Softmax over the last axis, row by row (a vector is a single row). Uses
/// max-subtraction; rejects non-finite input.
template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
  detail::require_2d(a, "softmax");
  detail::require_finite(a, "softmax");
  const std::size_t R = a.rows(), C = a.cols();
  const auto av = a.data();
  std::vector<T> out(R * C);
  for (std::size_t i = 0; i < R; ++i) {
    T mx = av[i * C];
    for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, av[i * C + j]);
    T z = 0;
    for (std::size_t j = 0; j < C; ++j) z += (out[i * C + j] = std::exp(av[i * C + j] - mx));
    for (std::size_t j = 0; j < C; ++j) out[i * C + j] /= z;
  }
  return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [R, C](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < R; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < C; ++j) s += self.grad[i * C + j] * self.value[i * C + j];
      for (std::size_t j = 0; j < C; ++j)
        in.grad[i * C + j] += self.value[i * C + j] * (self.grad[i * C + j] - s);
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a) {
  detail::require_2d(a, "log_softmax");
  detail::require_finite(a, "log_softmax");
  const std::size_t R = a.rows(), C = a.cols();
  const auto av = a.data();
  std::vector<T> out(R * C);
  for (std::size_t i = 0; i < R; ++i) {
    T mx = av[i * C];
    for (std::size_t j = 1; j < C; ++j) mx = std::max(mx, av[i * C + j]);
    T z = 0;
    for (std::size_t j = 0; j < C; ++j) z += std::exp(av[i * C + j] - mx);
    const T lz = std::log(z);
    for (std::size_t j = 0; j < C; ++j) out[i * C + j] = (av[i * C + j] - mx) - lz;
  }
  return detail::make_result<T>(a.shape(), std::move(out), {a.node()}, [R, C](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < R; ++i) {
      T s = 0;
      for (std::size_t j = 0; j < C; ++j) s += self.grad[i * C + j];
      for (std::size_t j = 0; j < C; ++j)
        in.grad[i * C + j] += self.grad[i * C + j] - std::exp(self.value[i * C + j]) * s;
    }
  });
}

/// Layer normalization over the last axis, row by row:
/// gain * (x - mean) / sqrt(var + eps) + bias, with biased variance.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  detail::require_2d(x, "layer_norm");
  const std::size_t R = x.rows(), C = x.cols();
  if (C < 2) throw ShapeError("layer_norm: needs at least 2 features, got " + shape_string(x.shape()));
  if (gain.size() != C || bias.size() != C) {
    throw ShapeError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                     shape_string(bias.shape()) + " do not match " + shape_string(x.shape()));
  }
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  std::vector<T> out(R * C);
  std::vector<T> xhat(R * C);
  std::vector<T> inv_std(R);
  for (std::size_t i = 0; i < R; ++i) {
    T mu = 0;
    for (std::size_t j = 0; j < C; ++j) mu += xv[i * C + j];
    mu /= static_cast<T>(C);
    T var = 0;
    for (std::size_t j = 0; j < C; ++j) var += (xv[i * C + j] - mu) * (xv[i * C + j] - mu);
    var /= static_cast<T>(C);
    inv_std[i] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < C; ++j) {
      xhat[i * C + j] = (xv[i * C + j] - mu) * inv_std[i];
      out[i * C + j] = gv[j] * xhat[i * C + j] + bv[j];
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
      [R, C, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<T>& self) {
        auto& nx = *self.inputs[0];
        auto& ng = *self.inputs[1];
        auto& nb = *self.inputs[2];
        for (std::size_t i = 0; i < R; ++i) {
          T sum_dxhat = 0, sum_dxhat_xhat = 0;
          for (std::size_t j = 0; j < C; ++j) {
            const T g = self.grad[i * C + j];
            if (ng.requires_grad) ng.grad[j] += g * xhat[i * C + j];
            if (nb.requires_grad) nb.grad[j] += g;
            const T dxhat = g * ng.value[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat[i * C + j];
          }
          if (!nx.requires_grad) continue;
          const T n = static_cast<T>(C);
          for (std::size_t j = 0; j < C; ++j) {
            const T dxhat = self.grad[i * C + j] * ng.value[j];
            nx.grad[i * C + j] +=
                inv_std[i] / n * (n * dxhat - sum_dxhat - xhat[i * C + j] * sum_dxhat_xhat);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Fused kernels

/// Multi-head scaled dot-product self-attention over ragged segments.
/// q, k, v are [N x d] row stacks; rows [offsets[s], offsets[s+1]) form one
/// sequence and attend only within it. d must divide evenly by `heads`.
template <typename T>
Tensor<T> segment_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                            std::vector<std::size_t> offsets, std::size_t heads) {
  detail::require_2d(q, "segment_attention");
  if (q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("segment_attention: q/k/v shapes differ: " + shape_string(q.shape()) + ", " +
                     shape_string(k.shape()) + ", " + shape_string(v.shape()));
  }
  const std::size_t N = q.rows(), D = q.cols();
  if (heads == 0 || D % heads != 0) {
    throw ShapeError("segment_attention: width " + std::to_string(D) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != N) {
    throw ShapeError("segment_attention: offsets must span [0, " + std::to_string(N) + "]");
  }
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] <= offsets[s]) throw ShapeError("segment_attention: empty segment");
  }
  const std::size_t dh = D / heads;
  const T scl = T(1) / std::sqrt(static_cast<T>(dh));
  const auto qv = q.data(), kv = k.data(), vv = v.data();
  std::vector<T> out(N * D, T(0));
  // Attention probabilities, stored per (segment, head) block.
  std::vector<T> probs;
  std::vector<std::size_t> block_start;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t a = offsets[s], L = offsets[s + 1] - a;
    for (std::size_t h = 0; h < heads; ++h) {
      block_start.push_back(probs.size());
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < L; ++i) {
        const std::size_t row0 = probs.size();
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < L; ++j) {
          T sc = 0;
          for (std::size_t c = 0; c < dh; ++c) sc += qv[(a + i) * D + c0 + c] * kv[(a + j) * D + c0 + c];
          sc *= scl;
          probs.push_back(sc);
          mx = std::max(mx, sc);
        }
        T z = 0;
        for (std::size_t j = 0; j < L; ++j) z += (probs[row0 + j] = std::exp(probs[row0 + j] - mx));
        for (std::size_t j = 0; j < L; ++j) {
          probs[row0 + j] /= z;
          const T p = probs[row0 + j];
          for (std::size_t c = 0; c < dh; ++c) out[(a + i) * D + c0 + c] += p * vv[(a + j) * D + c0 + c];
        }
      }
    }
  }
  return detail::make_result<T>(
      {N, D}, std::move(out), {q.node(), k.node(), v.node()},
      [D, dh, heads, scl, offsets = std::move(offsets), probs = std::move(probs),
       block_start = std::move(block_start)](detail::Node<T>& self) {
        auto& nq = *self.inputs[0];
        auto& nk = *self.inputs[1];
        auto& nv = *self.inputs[2];
        std::vector<T> dp, ds;
        std::size_t block = 0;
        for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
          const std::size_t a = offsets[s], L = offsets[s + 1] - a;
          dp.assign(L * L, T(0));
          ds.assign(L * L, T(0));
          for (std::size_t h = 0; h < heads; ++h, ++block) {
            const T* P = probs.data() + block_start[block];
            const std::size_t c0 = h * dh;
            for (std::size_t i = 0; i < L; ++i) {
              const T* go = self.grad.data() + (a + i) * D + c0;
              T rowdot = 0;
              for (std::size_t j = 0; j < L; ++j) {
                T g = 0;
                const T* vr = nv.value.data() + (a + j) * D + c0;
                for (std::size_t c = 0; c < dh; ++c) g += go[c] * vr[c];
                dp[i * L + j] = g;
                rowdot += g * P[i * L + j];
                if (nv.requires_grad) {
                  T* gv = nv.grad.data() + (a + j) * D + c0;
                  for (std::size_t c = 0; c < dh; ++c) gv[c] += P[i * L + j] * go[c];
                }
              }
              for (std::size_t j = 0; j < L; ++j) ds[i * L + j] = P[i * L + j] * (dp[i * L + j] - rowdot) * scl;
            }
            for (std::size_t i = 0; i < L; ++i)
              for (std::size_t j = 0; j < L; ++j) {
                const T g = ds[i * L + j];
                if (g == T(0)) continue;
                for (std::size_t c = 0; c < dh; ++c) {
                  if (nq.requires_grad) nq.grad[(a + i) * D + c0 + c] += g * nk.value[(a + j) * D + c0 + c];
                  if (nk.requires_grad) nk.grad[(a + j) * D + c0 + c] += g * nq.value[(a + i) * D + c0 + c];
                }
              }
          }
        }
      });
}

// Mean of each ragged row segment: [N x d] -> [S x d].
template <typename T>
Tensor<T> segment_mean(const Tensor<T>& x, std::vector<std::size_t> offsets) {
  detail::require_2d(x, "segment_mean");
  const std::size_t N = x.rows(), D = x.cols();
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != N) {
    throw ShapeError("segment_mean: offsets must span [0, " + std::to_string(N) + "]");
  }
  const std::size_t S = offsets.size() - 1;
  const auto xv = x.data();
  std::vector<T> out(S * D, T(0));
  for (std::size_t s = 0; s < S; ++s) {
    if (offsets[s + 1] <= offsets[s]) throw ShapeError("segment_mean: empty segment");
    const T inv = T(1) / static_cast<T>(offsets[s + 1] - offsets[s]);
    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i)
      for (std::size_t c = 0; c < D; ++c) out[s * D + c] += xv[i * D + c] * inv;
  }
  return detail::make_result<T>({S, D}, std::move(out), {x.node()},
                                [S, D, offsets = std::move(offsets)](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t s = 0; s < S; ++s) {
                                    const T inv = T(1) / static_cast<T>(offsets[s + 1] - offsets[s]);
                                    for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i)
                                      for (std::size_t c = 0; c < D; ++c)
                                        in.grad[i * D + c] += self.grad[s * D + c] * inv;
                                  }
                                });
}

/// Batched Tucker contraction with one shared core W[d x d x d]:
/// out[b,k] = sum_{i,j} W[i,j,k] * h[b,i] * r[b,j].
template <typename T>
Tensor<T> tucker_contract(const Tensor<T>& h, const Tensor<T>& r, const Tensor<T>& core) {
  detail::require_2d(h, "tucker_contract");
  if (h.shape() != r.shape() && !(h.rows() == r.rows() && h.cols() == r.cols())) {
    throw ShapeError("tucker_contract: head " + shape_string(h.shape()) + " vs relation " +
                     shape_string(r.shape()));
  }
  const std::size_t B = h.rows(), D = h.cols();
  if (core.shape() != Shape{D, D, D}) {
    throw ShapeError("tucker_contract: core " + shape_string(core.shape()) + " does not match width " +
                     std::to_string(D));
  }
  const auto hv = h.data(), rv = r.data(), wv = core.data();
  std::vector<T> out(B * D, T(0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < D; ++i) {
      const T hi = hv[b * D + i];
      for (std::size_t j = 0; j < D; ++j) {
        const T hr = hi * rv[b * D + j];
        const T* w = wv.data() + (i * D + j) * D;
        T* o = out.data() + b * D;
        for (std::size_t k = 0; k < D; ++k) o[k] += w[k] * hr;
      }
    }
  return detail::make_result<T>({B, D}, std::move(out), {h.node(), r.node(), core.node()},
                                [B, D](detail::Node<T>& self) {
                                  auto& nh = *self.inputs[0];
                                  auto& nr = *self.inputs[1];
                                  auto& nw = *self.inputs[2];
                                  for (std::size_t b = 0; b < B; ++b) {
                                    const T* g = self.grad.data() + b * D;
                                    for (std::size_t i = 0; i < D; ++i)
                                      for (std::size_t j = 0; j < D; ++j) {
                                        const T* w = nw.value.data() + (i * D + j) * D;
                                        T wg = 0;
                                        for (std::size_t k = 0; k < D; ++k) wg += w[k] * g[k];
                                        const T hi = nh.value[b * D + i], rj = nr.value[b * D + j];
                                        if (nh.requires_grad) nh.grad[b * D + i] += wg * rj;
                                        if (nr.requires_grad) nr.grad[b * D + j] += wg * hi;
                                        if (nw.requires_grad) {
                                          T* gw = nw.grad.data() + (i * D + j) * D;
                                          const T hr = hi * rj;
                                          for (std::size_t k = 0; k < D; ++k) gw[k] += hr * g[k];
                                        }
                                      }
                                  }
                                });
}

/// Euclidean distance between every row of x [B x d] and every row of y [N x d].
template <typename T>
Tensor<T> pairwise_l2(const Tensor<T>& x, const Tensor<T>& y) {
  detail::require_2d(x, "pairwise_l2");
  detail::require_2d(y, "pairwise_l2");
  const std::size_t B = x.rows(), N = y.rows(), D = x.cols();
  if (y.cols() != D) {
    throw ShapeError("pairwise_l2: widths differ, " + shape_string(x.shape()) + " vs " +
                     shape_string(y.shape()));
  }
  const auto xv = x.data(), yv = y.data();
  std::vector<T> out(B * N);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n) {
      T s = 0;
      for (std::size_t c = 0; c < D; ++c) {
        const T diff = xv[b * D + c] - yv[n * D + c];
        s += diff * diff;
      }
      out[b * N + n] = std::sqrt(s);
    }
  return detail::make_result<T>({B, N}, std::move(out), {x.node(), y.node()},
                                [B, N, D](detail::Node<T>& self) {
                                  auto& nx = *self.inputs[0];
                                  auto& ny = *self.inputs[1];
                                  for (std::size_t b = 0; b < B; ++b)
                                    for (std::size_t n = 0; n < N; ++n) {
                                      const T dist = self.value[b * N + n];
                                      if (dist == T(0)) continue;
                                      const T g = self.grad[b * N + n] / dist;
                                      for (std::size_t c = 0; c < D; ++c) {
                                        const T diff = nx.value[b * D + c] - ny.value[n * D + c];
                                        if (nx.requires_grad) nx.grad[b * D + c] += g * diff;
                                        if (ny.requires_grad) ny.grad[n * D + c] -= g * diff;
                                      }
                                    }
                                });
}

/// Sum of complex moduli |x_k - y_k| between every row pair; rows hold c
/// complex components as [re_0..re_{c-1}, im_0..im_{c-1}].
template <typename T>
Tensor<T> pairwise_complex_l1(const Tensor<T>& x, const Tensor<T>& y) {
  detail::require_2d(x, "pairwise_complex_l1");
  detail::require_2d(y, "pairwise_complex_l1");
  const std::size_t B = x.rows(), N = y.rows(), D = x.cols();
  if (y.cols() != D || D % 2 != 0) {
    throw ShapeError("pairwise_complex_l1: widths must match and be even, " + shape_string(x.shape()) +
                     " vs " + shape_string(y.shape()));
  }
  const std::size_t C = D / 2;
  const auto xv = x.data(), yv = y.data();
  std::vector<T> out(B * N);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t n = 0; n < N; ++n) {
      T s = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const T dr = xv[b * D + c] - yv[n * D + c];
        const T di = xv[b * D + C + c] - yv[n * D + C + c];
        s += std::sqrt(dr * dr + di * di);
      }
      out[b * N + n] = s;
    }
  return detail::make_result<T>({B, N}, std::move(out), {x.node(), y.node()},
                                [B, N, D, C](detail::Node<T>& self) {
                                  auto& nx = *self.inputs[0];
                                  auto& ny = *self.inputs[1];
                                  for (std::size_t b = 0; b < B; ++b)
                                    for (std::size_t n = 0; n < N; ++n) {
                                      const T g = self.grad[b * N + n];
                                      for (std::size_t c = 0; c < C; ++c) {
                                        const T dr = nx.value[b * D + c] - ny.value[n * D + c];
                                        const T di = nx.value[b * D + C + c] - ny.value[n * D + C + c];
                                        const T m = std::sqrt(dr * dr + di * di);
                                        if (m == T(0)) continue;
                                        const T gr = g * dr / m, gi = g * di / m;
                                        if (nx.requires_grad) {
                                          nx.grad[b * D + c] += gr;
                                          nx.grad[b * D + C + c] += gi;
                                        }
                                        if (ny.requires_grad) {
                                          ny.grad[n * D + c] -= gr;
                                          ny.grad[n * D + C + c] -= gi;
                                        }
                                      }
                                    }
                                });
}

}  // namespace tsam::ad
