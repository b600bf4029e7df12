#pragma once

// Differentiable primitives. Every op here has a backward rule that the
// gradcheck suite exercises in 64-bit.

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "mvclip/tensor.hpp"

namespace mvclip {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// out (+)= op(a) * op(b), all row-major.
template <typename T>
void gemm(const T* a, std::size_t a_rows, std::size_t a_cols, bool trans_a, const T* b,
          std::size_t b_rows, std::size_t b_cols, bool trans_b, T* out, bool accumulate) {
  using Map = Eigen::Map<const RowMat<T>>;
  Map A(a, static_cast<Eigen::Index>(a_rows), static_cast<Eigen::Index>(a_cols));
  Map B(b, static_cast<Eigen::Index>(b_rows), static_cast<Eigen::Index>(b_cols));
  const auto m = static_cast<Eigen::Index>(trans_a ? a_cols : a_rows);
  const auto n = static_cast<Eigen::Index>(trans_b ? b_rows : b_cols);
  Eigen::Map<RowMat<T>> C(out, m, n);
  if (!accumulate) C.setZero();
  if (!trans_a && !trans_b) C.noalias() += A * B;
  else if (trans_a && !trans_b) C.noalias() += A.transpose() * B;
  else if (!trans_a && trans_b) C.noalias() += A * B.transpose();
  else C.noalias() += A.transpose() * B.transpose();
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_rank2(const char* op, const Tensor<T>& a) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
  }
}

template <typename T>
T std_normal_cdf(T x) {
  return T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T std_normal_pdf(T x) {
  return std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::make_result<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    if (n.parents[0]->requires_grad) {
      auto& g = n.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (n.parents[1]->requires_grad) {
      auto& g = n.parents[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return detail::make_result<T>("scale", a.shape(), std::move(out), {a}, [factor](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * factor;
  });
}

// x[..., D] + bias[D], bias broadcast over every leading index.
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& bias) {
  const std::size_t d = x.shape().back();
  if (bias.numel() != d) {
    throw ShapeError("add_row: bias " + shape_str(bias.shape()) + " does not match last extent of " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = x.data()[r * d + j] + bias.data()[j];
  }
  return detail::make_result<T>("add_row", x.shape(), std::move(out), {x, bias},
                                [rows, d](Node<T>& n) {
                                  if (n.parents[0]->requires_grad) {
                                    auto& g = n.parents[0]->ensure_grad();
                                    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
                                  }
                                  if (n.parents[1]->requires_grad) {
                                    auto& g = n.parents[1]->ensure_grad();
                                    for (std::size_t r = 0; r < rows; ++r) {
                                      for (std::size_t j = 0; j < d; ++j) g[j] += n.grad[r * d + j];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2("matmul", a);
  detail::require_rank2("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  detail::gemm(a.data().data(), m, k, false, b.data().data(), k, n, false, out.data(), false);
  return detail::make_result<T>("matmul", Shape{m, n}, std::move(out), {a, b},
                                [m, k, n](Node<T>& node) {
                                  auto& pa = *node.parents[0];
                                  auto& pb = *node.parents[1];
                                  if (pa.requires_grad) {
                                    // dA = dC * B^T
                                    detail::gemm(node.grad.data(), m, n, false, pb.data.data(), k, n,
                                                 true, pa.ensure_grad().data(), true);
                                  }
                                  if (pb.requires_grad) {
                                    // dB = A^T * dC
                                    detail::gemm(pa.data.data(), m, k, true, node.grad.data(), m, n,
                                                 false, pb.ensure_grad().data(), true);
                                  }
                                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_rank2("transpose", a);
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
  }
  return detail::make_result<T>("transpose", Shape{n, m}, std::move(out), {a}, [m, n](Node<T>& node) {
    auto& g = node.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += node.grad[j * m + i];
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return detail::make_result<T>("reshape", std::move(shape), a.storage(), {a}, [](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.data()) total += v;
  return detail::make_result<T>("sum", Shape{1}, std::vector<T>{total}, {a}, [](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (auto& v : g) v += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// Mean along one axis; the axis is kept with extent 1.
template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = 1;
  std::vector<T> out(s.outer * s.inner, T(0));
  const T inv = T(1) / static_cast<T>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t a = 0; a < s.extent; ++a) {
      const T* src = x.data().data() + (o * s.extent + a) * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += src[i];
    }
  }
  for (auto& v : out) v *= inv;
  return detail::make_result<T>("mean_axis", std::move(shape), std::move(out), {x},
                                [s, inv](Node<T>& n) {
                                  auto& g = n.parents[0]->ensure_grad();
                                  for (std::size_t o = 0; o < s.outer; ++o) {
                                    for (std::size_t a = 0; a < s.extent; ++a) {
                                      for (std::size_t i = 0; i < s.inner; ++i) {
                                        g[(o * s.extent + a) * s.inner + i] += n.grad[o * s.inner + i] * inv;
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t a = 0; a < s.extent; ++a) mx = std::max(mx, in[base + a * s.inner]);
      T total = T(0);
      for (std::size_t a = 0; a < s.extent; ++a) {
        const T e = std::exp(in[base + a * s.inner] - mx);
        out[base + a * s.inner] = e;
        total += e;
      }
      for (std::size_t a = 0; a < s.extent; ++a) out[base + a * s.inner] /= total;
    }
  }
  return detail::make_result<T>("softmax", x.shape(), std::move(out), {x}, [s](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    const auto& y = n.data;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        T dot = T(0);
        for (std::size_t a = 0; a < s.extent; ++a) dot += n.grad[base + a * s.inner] * y[base + a * s.inner];
        for (std::size_t a = 0; a < s.extent; ++a) {
          const std::size_t k = base + a * s.inner;
          g[k] += y[k] * (n.grad[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<T> out(x.numel());
  const T* in = x.data().data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.extent * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t a = 0; a < s.extent; ++a) mx = std::max(mx, in[base + a * s.inner]);
      T total = T(0);
      for (std::size_t a = 0; a < s.extent; ++a) total += std::exp(in[base + a * s.inner] - mx);
      const T lse = mx + std::log(total);
      for (std::size_t a = 0; a < s.extent; ++a) out[base + a * s.inner] = in[base + a * s.inner] - lse;
    }
  }
  return detail::make_result<T>("log_softmax", x.shape(), std::move(out), {x}, [s](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    const auto& y = n.data;
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.extent * s.inner + i;
        T total = T(0);
        for (std::size_t a = 0; a < s.extent; ++a) total += n.grad[base + a * s.inner];
        for (std::size_t a = 0; a < s.extent; ++a) {
          const std::size_t k = base + a * s.inner;
          g[k] += n.grad[k] - std::exp(y[k]) * total;
        }
      }
    }
  });
}

// Row-wise softmax of a square score matrix where row i only sees columns j <= i.
// Masked entries are exactly zero and receive no gradient.
template <typename T>
Tensor<T> causal_softmax(const Tensor<T>& x) {
  detail::require_rank2("causal_softmax", x);
  const std::size_t t = x.dim(0);
  if (x.dim(1) != t) throw ShapeError("causal_softmax: expected square scores, got " + shape_str(x.shape()));
  std::vector<T> out(t * t, T(0));
  for (std::size_t i = 0; i < t; ++i) {
    const T* row = x.data().data() + i * t;
    T mx = row[0];
    for (std::size_t j = 1; j <= i; ++j) mx = std::max(mx, row[j]);
    T total = T(0);
    for (std::size_t j = 0; j <= i; ++j) {
      out[i * t + j] = std::exp(row[j] - mx);
      total += out[i * t + j];
    }
    for (std::size_t j = 0; j <= i; ++j) out[i * t + j] /= total;
  }
  return detail::make_result<T>("causal_softmax", x.shape(), std::move(out), {x}, [t](Node<T>& n) {
    auto& g = n.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < t; ++i) {
      T dot = T(0);
      for (std::size_t j = 0; j <= i; ++j) dot += n.grad[i * t + j] * n.data[i * t + j];
      for (std::size_t j = 0; j <= i; ++j) g[i * t + j] += n.data[i * t + j] * (n.grad[i * t + j] - dot);
    }
  });
}

// Normalizes over the last axis, then applies gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw ShapeError("layer_norm: affine params " + shape_str(gamma.shape()) + "/" +
                     shape_str(beta.shape()) + " do not match last extent of " + shape_str(x.shape()));
  }
  if (!(eps > T(0))) throw ShapeError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * d;
    T mu = T(0);
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<T>(d);
    T var = T(0);
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<T>(d);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mu) * rstd[r];
      out[r * d + j] = xhat[r * d + j] * gamma.data()[j] + beta.data()[j];
    }
  }
  return detail::make_result<T>(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Node<T>& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        if (pg.requires_grad) {
          auto& g = pg.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += n.grad[r * d + j] * xhat[r * d + j];
        }
        if (pb.requires_grad) {
          auto& g = pb.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) g[j] += n.grad[r * d + j];
        }
        if (px.requires_grad) {
          auto& g = px.ensure_grad();
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_g = T(0), mean_gx = T(0);
            for (std::size_t j = 0; j < d; ++j) {
              const T gh = n.grad[r * d + j] * pg.data[j];
              mean_g += gh;
              mean_gx += gh * xhat[r * d + j];
            }
            mean_g /= static_cast<T>(d);
            mean_gx /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T gh = n.grad[r * d + j] * pg.data[j];
              g[r * d + j] += rstd[r] * (gh - mean_g - xhat[r * d + j] * mean_gx);
            }
          }
        }
      });
}

// Exact GELU, x * Phi(x).
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * detail::std_normal_cdf(x.data()[i]);
  return detail::make_result<T>("gelu", x.shape(), std::move(out), {x}, [](Node<T>& n) {
    auto& p = *n.parents[0];
    auto& g = p.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = p.data[i];
      g[i] += n.grad[i] * (detail::std_normal_cdf(v) + v * detail::std_normal_pdf(v));
    }
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw ShapeError("concat: axis out of range for " + shape_str(ref));
  std::size_t total = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == ref.size();
    for (std::size_t i = 0; ok && i < ref.size(); ++i) ok = (i == axis) || p.dim(i) == ref[i];
    if (!ok) {
      throw ShapeError("concat: incompatible shapes " + shape_str(ref) + " and " + shape_str(p.shape()) +
                       " along axis " + std::to_string(axis));
    }
    total += p.dim(axis);
  }
  Shape shape = ref;
  shape[axis] = total;
  const auto s = detail::split_axis(shape, axis);
  std::vector<T> out(numel_of(shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.dim(axis);
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(p.data().data() + o * len * s.inner, len * s.inner,
                  out.data() + (o * total + offset) * s.inner);
    }
    offset += len;
  }
  return detail::make_result<T>("concat", std::move(shape), std::move(out), parts,
                                [s, total, offsets](Node<T>& n) {
                                  for (std::size_t k = 0; k < n.parents.size(); ++k) {
                                    auto& p = *n.parents[k];
                                    if (!p.requires_grad) continue;
                                    auto& g = p.ensure_grad();
                                    const std::size_t len = g.size() / (s.outer * s.inner);
                                    for (std::size_t o = 0; o < s.outer; ++o) {
                                      const T* src = n.grad.data() + (o * total + offsets[k]) * s.inner;
                                      T* dst = g.data() + o * len * s.inner;
                                      for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto s = detail::split_axis(x.shape(), axis);
  if (length == 0 || start + length > s.extent) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                     ") out of range for axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<T> out(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(x.data().data() + (o * s.extent + start) * s.inner, length * s.inner,
                out.data() + o * length * s.inner);
  }
  return detail::make_result<T>("slice", std::move(shape), std::move(out), {x},
                                [s, start, length](Node<T>& n) {
                                  auto& g = n.parents[0]->ensure_grad();
                                  for (std::size_t o = 0; o < s.outer; ++o) {
                                    const T* src = n.grad.data() + o * length * s.inner;
                                    T* dst = g.data() + (o * s.extent + start) * s.inner;
                                    for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
                                  }
                                });
}

// Row gather; also serves as an embedding lookup. Backward scatter-adds.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::size_t>& rows) {
  detail::require_rank2("gather_rows", x);
  if (rows.empty()) throw ShapeError("gather_rows: empty index list");
  const std::size_t n = x.dim(1);
  std::vector<T> out(rows.size() * n);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= x.dim(0)) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[k]) + " out of range for " +
                       shape_str(x.shape()));
    }
    std::copy_n(x.data().data() + rows[k] * n, n, out.data() + k * n);
  }
  return detail::make_result<T>("gather_rows", Shape{rows.size(), n}, std::move(out), {x},
                                [rows, n](Node<T>& node) {
                                  auto& g = node.parents[0]->ensure_grad();
                                  for (std::size_t k = 0; k < rows.size(); ++k) {
                                    for (std::size_t j = 0; j < n; ++j) g[rows[k] * n + j] += node.grad[k * n + j];
                                  }
                                });
}

// y[i] = x[i, cols[i]].
template <typename T>
Tensor<T> pick(const Tensor<T>& x, const std::vector<std::size_t>& cols) {
  detail::require_rank2("pick", x);
  if (cols.size() != x.dim(0)) {
    throw ShapeError("pick: " + std::to_string(cols.size()) + " indices for " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(1);
  std::vector<T> out(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (cols[i] >= n) throw ShapeError("pick: column " + std::to_string(cols[i]) + " out of range");
    out[i] = x.data()[i * n + cols[i]];
  }
  return detail::make_result<T>("pick", Shape{cols.size()}, std::move(out), {x}, [cols, n](Node<T>& node) {
    auto& g = node.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < cols.size(); ++i) g[i * n + cols[i]] += node.grad[i];
  });
}

// Each row divided by max(||row||, eps).
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(1e-12)) {
  detail::require_rank2("l2_normalize_rows", x);
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(m * n);
  std::vector<T> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    T sq = T(0);
    for (std::size_t j = 0; j < n; ++j) sq += x.data()[i * n + j] * x.data()[i * n + j];
    norms[i] = std::max(std::sqrt(sq), eps);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] / norms[i];
  }
  return detail::make_result<T>("l2_normalize_rows", x.shape(), std::move(out), {x},
                                [m, n, eps, norms = std::move(norms)](Node<T>& node) {
                                  auto& g = node.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < m; ++i) {
                                    const T* y = node.data.data() + i * n;
                                    const T* gy = node.grad.data() + i * n;
                                    if (norms[i] > eps) {
                                      T dot = T(0);
                                      for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
                                      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += (gy[j] - y[j] * dot) / norms[i];
                                    } else {
                                      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += gy[j] / eps;
                                    }
                                  }
                                });
}

// image[H, W, C] -> [(H/P)*(W/P), P*P*C]; patches in raster order, each
// flattened as (row, col, channel).
template <typename T>
Tensor<T> unfold_patches(const Tensor<T>& image, std::size_t patch) {
  if (image.rank() != 3) throw ShapeError("unfold_patches: expected HxWxC image, got " + shape_str(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (patch == 0 || h % patch != 0 || w % patch != 0) {
    throw ShapeError("image " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by patch size " + std::to_string(patch));
  }
  const std::size_t gh = h / patch, gw = w / patch, cols = patch * patch * c;
  std::vector<T> out(gh * gw * cols);
  auto index = [=](std::size_t py, std::size_t px, std::size_t r, std::size_t q) {
    return ((py * patch + r) * w + (px * patch + q)) * c;
  };
  for (std::size_t py = 0; py < gh; ++py)
    for (std::size_t px = 0; px < gw; ++px)
      for (std::size_t r = 0; r < patch; ++r)
        std::copy_n(image.data().data() + index(py, px, r, 0), patch * c,
                    out.data() + (py * gw + px) * cols + r * patch * c);
  return detail::make_result<T>("unfold_patches", Shape{gh * gw, cols}, std::move(out), {image},
                                [=](Node<T>& n) {
                                  auto& g = n.parents[0]->ensure_grad();
                                  for (std::size_t py = 0; py < gh; ++py)
                                    for (std::size_t px = 0; px < gw; ++px)
                                      for (std::size_t r = 0; r < patch; ++r) {
                                        const T* src = n.grad.data() + (py * gw + px) * cols + r * patch * c;
                                        T* dst = g.data() + index(py, px, r, 0);
                                        for (std::size_t i = 0; i < patch * c; ++i) dst[i] += src[i];
                                      }
                                });
}

// Element type conversion; the result is a fresh leaf.
template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
  std::vector<To> out(x.data().begin(), x.data().end());
  return Tensor<To>(x.shape(), std::move(out), false);
}

}  // namespace mvclip
