// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#include "tensor/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace resmlp {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= static_cast<std::size_t>(e);
  return n;
}

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  if (name == "silu") return Activation::silu;
  if (name == "hardswish") return Activation::hardswish;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

const char* to_string(Activation kind) noexcept {
  switch (kind) {
    case Activation::gelu: return "gelu";
    case Activation::relu: return "relu";
    case Activation::silu: return "silu";
    case Activation::hardswish: return "hardswish";
  }
  return "?";
}

double activation_value(Activation kind, double x) {
  switch (kind) {
    case Activation::gelu: return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    case Activation::relu: return x > 0 ? x : 0.0;
    case Activation::silu: return x / (1.0 + std::exp(-x));
    case Activation::hardswish:
      if (x <= -3.0) return 0.0;
      if (x >= 3.0) return x;
      return x * (x + 3.0) / 6.0;
  }
  throw ConfigError("unknown activation kind");
}

double activation_derivative(Activation kind, double x) {
  switch (kind) {
    case Activation::gelu: {
      const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
      const double pdf = std::exp(-0.5 * x * x) * 0.3989422804014327;
      return cdf + x * pdf;
    }
    case Activation::relu: return x > 0 ? 1.0 : 0.0;
    case Activation::silu: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::hardswish:
      if (x <= -3.0) return 0.0;
      if (x >= 3.0) return 1.0;
      return (2.0 * x + 3.0) / 6.0;
  }
  throw ConfigError("unknown activation kind");
}

namespace {

using Index = std::int64_t;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// C (m x n) = op(A) op(B) [+ C]; op(A) is m x k and op(B) is k x n.
template <typename T>
void gemm(bool ta, bool tb, Index m, Index n, Index k, const T* a, const T* b, T* c,
          bool accumulate) {
  Eigen::Map<const RowMat<T>> A(a, ta ? k : m, ta ? m : k);
  Eigen::Map<const RowMat<T>> B(b, tb ? n : k, tb ? k : n);
  Eigen::Map<RowMat<T>> C(c, m, n);
  if (!accumulate) C.setZero();
  if (!ta && !tb) {
    C.noalias() += A * B;
  } else if (!ta && tb) {
    C.noalias() += A * B.transpose();
  } else if (ta && !tb) {
    C.noalias() += A.transpose() * B;
  } else {
    C.noalias() += A.transpose() * B.transpose();
  }
}

template <typename T>
bool needs(const Var<T>& v) {
  return v.valid() && v.requires_grad();
}

template <typename T>
Tape<T>& tape_of(const Var<T>& v) {
  if (!v.valid()) throw ContractError("op applied to an empty Var");
  return v.tape();
}

template <typename T>
void check_same_tape(const Var<T>& a, const Var<T>& b) {
  if (b.valid() && &a.tape() != &b.tape()) {
    throw ContractError("operands recorded on different tapes");
  }
}

Index leading(const Shape& s, std::size_t drop) {
  Index n = 1;
  for (std::size_t i = 0; i + drop < s.size(); ++i) n *= s[i];
  return n;
}

void require_rank(const Shape& s, std::size_t min_rank, const char* op) {
  if (s.size() < min_rank) {
    throw RankError(std::string(op) + ": rank " + std::to_string(s.size()) + " input " +
                    shape_string(s) + ", need at least " + std::to_string(min_rank));
  }
}

int normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw RankError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                    std::to_string(rank));
  }
  return a;
}

// b broadcastable against a: equal shape or a trailing suffix of a's shape.
bool is_suffix(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.begin(), b.end(), a.end() - static_cast<std::ptrdiff_t>(b.size()));
}

enum class Binary { add, sub, mul };

template <typename T>
Var<T> binary(const Var<T>& a, const Var<T>& b, Binary op) {
  auto& tape = tape_of(a);
  check_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (!is_suffix(av.shape(), bv.shape())) {
    throw DimensionError("elementwise op: cannot broadcast " + shape_string(bv.shape()) + " onto " +
                         shape_string(av.shape()));
  }
  const std::size_t inner = bv.size();
  const std::size_t outer = av.size() / inner;
  Tensor<T> out(av.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    const T* x = av.data() + o * inner;
    T* y = out.data() + o * inner;
    for (std::size_t i = 0; i < inner; ++i) {
      switch (op) {
        case Binary::add: y[i] = x[i] + bv[i]; break;
        case Binary::sub: y[i] = x[i] - bv[i]; break;
        case Binary::mul: y[i] = x[i] * bv[i]; break;
      }
    }
  }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return tape.record(std::move(out), needs(a) || needs(b), [an, bn, op, outer, inner](auto& self) {
    const auto& g = self.grad;
    if (an->requires_grad) {
      auto& ga = an->grad_buffer();
      const auto& bv = bn->value();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t k = o * inner + i;
          ga[k] += op == Binary::mul ? g[k] * bv[i] : g[k];
        }
      }
    }
    if (bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      const auto& av = an->value();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t k = o * inner + i;
          switch (op) {
            case Binary::add: gb[i] += g[k]; break;
            case Binary::sub: gb[i] -= g[k]; break;
            case Binary::mul: gb[i] += g[k] * av[k]; break;
          }
        }
      }
    }
  });
}

// Splits a shape around `axis` into outer x extent x inner.
struct AxisSplit {
  Index outer = 1;
  Index extent = 1;
  Index inner = 1;
};

AxisSplit split_at(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  r.extent = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  auto& tape = tape_of(a);
  check_same_tape(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  require_rank(as, 1, "matmul");
  if (bs.size() != 2 || as.back() != bs[0]) {
    throw DimensionError("matmul: shapes " + shape_string(as) + " and " + shape_string(bs) +
                         " are not aligned");
  }
  const Index m = leading(as, 1);
  const Index k = bs[0];
  const Index n = bs[1];
  Shape os = as;
  os.back() = n;
  Tensor<T> out(os);
  gemm<T>(false, false, m, n, k, a.value().data(), b.value().data(), out.data(), false);
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return tape.record(std::move(out), needs(a) || needs(b), [an, bn, m, n, k](auto& self) {
    if (an->requires_grad) {
      gemm<T>(false, true, m, k, n, self.grad.data(), bn->value().data(), an->grad_buffer().data(),
              true);
    }
    if (bn->requires_grad) {
      gemm<T>(true, false, k, n, m, an->value().data(), self.grad.data(), bn->grad_buffer().data(),
              true);
    }
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  auto& tape = tape_of(a);
  const auto& s = a.shape();
  require_rank(s, 2, "transpose");
  const Index batch = leading(s, 2);
  const Index r = s[s.size() - 2];
  const Index c = s.back();
  Shape os = s;
  std::swap(os[os.size() - 2], os.back());
  Tensor<T> out(os);
  const T* x = a.value().data();
  for (Index b = 0; b < batch; ++b) {
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < c; ++j) out[b * r * c + j * r + i] = x[b * r * c + i * c + j];
    }
  }
  auto an = a.node_ptr();
  return tape.record(std::move(out), needs(a), [an, batch, r, c](auto& self) {
    auto& ga = an->grad_buffer();
    for (Index b = 0; b < batch; ++b) {
      for (Index i = 0; i < r; ++i) {
        for (Index j = 0; j < c; ++j) ga[b * r * c + i * c + j] += self.grad[b * r * c + j * r + i];
      }
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  auto& tape = tape_of(x);
  check_same_tape(x, weight);
  check_same_tape(x, bias);
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  require_rank(xs, 1, "linear");
  if (ws.size() != 2 || ws[1] != xs.back()) {
    throw DimensionError("linear: input " + shape_string(xs) + " does not match weight " +
                         shape_string(ws));
  }
  const Index m = leading(xs, 1);
  const Index in = ws[1];
  const Index outf = ws[0];
  if (bias.valid() && (bias.shape().size() != 1 || bias.shape()[0] != outf)) {
    throw DimensionError("linear: bias " + shape_string(bias.shape()) + " for weight " +
                         shape_string(ws));
  }
  Shape os = xs;
  os.back() = outf;
  Tensor<T> out(os);
  if (bias.valid()) {
    const auto& bv = bias.value();
    for (Index i = 0; i < m; ++i) std::copy(bv.data(), bv.data() + outf, out.data() + i * outf);
  }
  gemm<T>(false, true, m, outf, in, x.value().data(), weight.value().data(), out.data(),
          bias.valid());
  auto xn = x.node_ptr();
  auto wn = weight.node_ptr();
  auto bn = bias.valid() ? bias.node_ptr() : nullptr;
  const bool any = needs(x) || needs(weight) || needs(bias);
  return tape.record(std::move(out), any, [xn, wn, bn, m, in, outf](auto& self) {
    const T* g = self.grad.data();
    if (xn->requires_grad) {
      gemm<T>(false, false, m, in, outf, g, wn->value().data(), xn->grad_buffer().data(), true);
    }
    if (wn->requires_grad) {
      gemm<T>(true, false, outf, in, m, g, xn->value().data(), wn->grad_buffer().data(), true);
    }
    if (bn && bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (Index i = 0; i < m; ++i) {
        for (Index j = 0; j < outf; ++j) gb[j] += g[i * outf + j];
      }
    }
  });
}

template <typename T>
Var<T> token_mix(const Var<T>& mixer, const Var<T>& x, const Var<T>& bias) {
  auto& tape = tape_of(mixer);
  check_same_tape(mixer, x);
  check_same_tape(mixer, bias);
  const auto& ms = mixer.shape();
  const auto& xs = x.shape();
  if (ms.size() != 2) throw RankError("token_mix: mixer must be rank 2, got " + shape_string(ms));
  if (xs.size() != 2 && xs.size() != 3) {
    throw RankError("token_mix: input must be [L, d] or [B, L, d], got " + shape_string(xs));
  }
  const Index batch = xs.size() == 3 ? xs[0] : 1;
  const Index len = xs[xs.size() - 2];
  const Index d = xs.back();
  const Index rows = ms[0];
  if (ms[1] != len) {
    throw DimensionError("token_mix: mixer " + shape_string(ms) + " does not match input " +
                         shape_string(xs));
  }
  bool bias_matrix = false;
  if (bias.valid()) {
    const auto& bs = bias.shape();
    if (bs.size() == 1 && bs[0] == rows) {
      bias_matrix = false;
    } else if (bs.size() == 2 && bs[0] == rows && bs[1] == d) {
      bias_matrix = true;
    } else {
      throw DimensionError("token_mix: bias " + shape_string(bs) + " for mixer " + shape_string(ms));
    }
  }
  Shape os = xs;
  os[os.size() - 2] = rows;
  Tensor<T> out(os);
  const T* mv = mixer.value().data();
  for (Index b = 0; b < batch; ++b) {
    T* y = out.data() + b * rows * d;
    if (bias.valid()) {
      const T* bv = bias.value().data();
      for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < d; ++c) y[r * d + c] = bias_matrix ? bv[r * d + c] : bv[r];
      }
    }
    gemm<T>(false, false, rows, d, len, mv, x.value().data() + b * len * d, y, bias.valid());
  }
  auto mn = mixer.node_ptr();
  auto xn = x.node_ptr();
  auto bn = bias.valid() ? bias.node_ptr() : nullptr;
  const bool any = needs(mixer) || needs(x) || needs(bias);
  return tape.record(std::move(out), any,
                     [mn, xn, bn, batch, len, d, rows, bias_matrix](auto& self) {
    const T* g = self.grad.data();
    for (Index b = 0; b < batch; ++b) {
      const T* gb = g + b * rows * d;
      if (mn->requires_grad) {
        gemm<T>(false, true, rows, len, d, gb, xn->value().data() + b * len * d,
                mn->grad_buffer().data(), true);
      }
      if (xn->requires_grad) {
        gemm<T>(true, false, len, d, rows, mn->value().data(), gb,
                xn->grad_buffer().data() + b * len * d, true);
      }
      if (bn && bn->requires_grad) {
        auto& gbias = bn->grad_buffer();
        for (Index r = 0; r < rows; ++r) {
          for (Index c = 0; c < d; ++c) {
            if (bias_matrix) {
              gbias[r * d + c] += gb[r * d + c];
            } else {
              gbias[r] += gb[r * d + c];
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var<T> bmm(const Var<T>& a, const Var<T>& b, bool transpose_b) {
  auto& tape = tape_of(a);
  check_same_tape(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0]) {
    throw DimensionError("bmm: shapes " + shape_string(as) + " and " + shape_string(bs) +
                         " are not batch-aligned");
  }
  const Index batch = as[0];
  const Index m = as[1];
  const Index k = as[2];
  const Index bk = transpose_b ? bs[2] : bs[1];
  const Index n = transpose_b ? bs[1] : bs[2];
  if (bk != k) {
    throw DimensionError("bmm: inner extents differ for " + shape_string(as) + " and " +
                         shape_string(bs));
  }
  Tensor<T> out(Shape{batch, m, n});
  for (Index i = 0; i < batch; ++i) {
    gemm<T>(false, transpose_b, m, n, k, a.value().data() + i * m * k,
            b.value().data() + i * k * n, out.data() + i * m * n, false);
  }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return tape.record(std::move(out), needs(a) || needs(b),
                     [an, bn, batch, m, n, k, transpose_b](auto& self) {
    for (Index i = 0; i < batch; ++i) {
      const T* g = self.grad.data() + i * m * n;
      const T* av = an->value().data() + i * m * k;
      const T* bv = bn->value().data() + i * k * n;
      if (an->requires_grad) {
        // dA = dC op(B)^T
        gemm<T>(false, !transpose_b, m, k, n, g, bv, an->grad_buffer().data() + i * m * k, true);
      }
      if (bn->requires_grad) {
        T* gbv = bn->grad_buffer().data() + i * k * n;
        if (transpose_b) {
          gemm<T>(true, false, n, k, m, g, av, gbv, true);  // dB = dC^T A
        } else {
          gemm<T>(true, false, k, n, m, av, g, gbv, true);  // dB = A^T dC
        }
      }
    }
  });
}

template <typename T>
Var<T> activation(const Var<T>& x, Activation kind) {
  auto& tape = tape_of(x);
  const auto& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    out[i] = static_cast<T>(activation_value(kind, static_cast<double>(xv[i])));
  }
  auto xn = x.node_ptr();
  return tape.record(std::move(out), needs(x), [xn, kind](auto& self) {
    auto& gx = xn->grad_buffer();
    const auto& xv = xn->value();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      gx[i] += self.grad[i] * static_cast<T>(activation_derivative(kind, static_cast<double>(xv[i])));
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::add);
}
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::sub);
}
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, Binary::mul);
}

template <typename T>
Var<T> scale(const Var<T>& x, T factor) {
  auto& tape = tape_of(x);
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  auto xn = x.node_ptr();
  return tape.record(std::move(out), needs(x), [xn, factor](auto& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * factor;
  });
}

template <typename T>
Var<T> scale_shift(const Var<T>& x, const Var<T>& alpha, const Var<T>& beta) {
  auto& tape = tape_of(x);
  check_same_tape(x, alpha);
  check_same_tape(x, beta);
  const auto& xs = x.shape();
  require_rank(xs, 1, "scale_shift");
  const Index c = xs.back();
  for (const Var<T>* v : {&alpha, &beta}) {
    if (v->valid() && (v->shape().size() != 1 || v->shape()[0] != c)) {
      throw DimensionError("scale_shift: vector " + shape_string(v->shape()) +
                           " does not match channel extent of " + shape_string(xs));
    }
  }
  const Index rows = leading(xs, 1);
  const auto& xv = x.value();
  Tensor<T> out(xs);
  const T* av = alpha.valid() ? alpha.value().data() : nullptr;
  const T* bv = beta.valid() ? beta.value().data() : nullptr;
  for (Index r = 0; r < rows; ++r) {
    for (Index j = 0; j < c; ++j) {
      T y = xv[r * c + j];
      if (av) y = av[j] * y;
      if (bv) y = y + bv[j];
      out[r * c + j] = y;
    }
  }
  auto xn = x.node_ptr();
  auto an = alpha.valid() ? alpha.node_ptr() : nullptr;
  auto bn = beta.valid() ? beta.node_ptr() : nullptr;
  const bool any = needs(x) || needs(alpha) || needs(beta);
  return tape.record(std::move(out), any, [xn, an, bn, rows, c](auto& self) {
    const auto& g = self.grad;
    const auto& xv = xn->value();
    if (xn->requires_grad) {
      auto& gx = xn->grad_buffer();
      for (Index r = 0; r < rows; ++r) {
        for (Index j = 0; j < c; ++j) gx[r * c + j] += an ? g[r * c + j] * an->value()[j] : g[r * c + j];
      }
    }
    if (an && an->requires_grad) {
      auto& ga = an->grad_buffer();
      for (Index r = 0; r < rows; ++r) {
        for (Index j = 0; j < c; ++j) ga[j] += g[r * c + j] * xv[r * c + j];
      }
    }
    if (bn && bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (Index r = 0; r < rows; ++r) {
        for (Index j = 0; j < c; ++j) gb[j] += g[r * c + j];
      }
    }
  });
}

template <typename T>
Var<T> reduce(const Var<T>& x, int axis, ReduceKind kind, bool keepdim) {
  auto& tape = tape_of(x);
  const auto& xs = x.shape();
  require_rank(xs, 1, "reduce");
  const int ax = normalize_axis(axis, xs.size(), "reduce");
  const auto sp = split_at(xs, ax);
  Shape os;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (static_cast<int>(i) == ax) {
      if (keepdim) os.push_back(1);
    } else {
      os.push_back(xs[i]);
    }
  }
  Tensor<T> out(os);
  std::vector<Index> arg;
  if (kind == ReduceKind::max) arg.assign(static_cast<std::size_t>(sp.outer * sp.inner), 0);
  const auto& xv = x.value();
  // Sequential accumulation in row-major order.
  for (Index o = 0; o < sp.outer; ++o) {
    for (Index i = 0; i < sp.inner; ++i) {
      const Index base = o * sp.extent * sp.inner + i;
      T acc = xv[base];
      Index best = 0;
      for (Index e = 1; e < sp.extent; ++e) {
        const T v = xv[base + e * sp.inner];
        if (kind == ReduceKind::max) {
          if (v > acc) {
            acc = v;
            best = e;
          }
        } else {
          acc += v;
        }
      }
      if (kind == ReduceKind::mean) acc /= static_cast<T>(sp.extent);
      out[o * sp.inner + i] = acc;
      if (kind == ReduceKind::max) arg[o * sp.inner + i] = best;
    }
  }
  auto xn = x.node_ptr();
  return tape.record(std::move(out), needs(x), [xn, sp, kind, arg = std::move(arg)](auto& self) {
    auto& gx = xn->grad_buffer();
    for (Index o = 0; o < sp.outer; ++o) {
      for (Index i = 0; i < sp.inner; ++i) {
        const T g = self.grad[o * sp.inner + i];
        const Index base = o * sp.extent * sp.inner + i;
        if (kind == ReduceKind::max) {
          gx[base + arg[o * sp.inner + i] * sp.inner] += g;
        } else {
          const T gi = kind == ReduceKind::mean ? g / static_cast<T>(sp.extent) : g;
          for (Index e = 0; e < sp.extent; ++e) gx[base + e * sp.inner] += gi;
        }
      }
    }
  });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  return reduce(reshape(x, Shape{static_cast<std::int64_t>(x.value().size())}), 0, ReduceKind::sum);
}

template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& x) {
  require_rank(x.shape(), 1, "argmax_rows");
  const Index c = x.shape().back();
  const Index rows = leading(x.shape(), 1);
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    Index best = 0;
    for (Index j = 1; j < c; ++j) {
      if (x[r * c + j] > x[r * c + best]) best = j;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  auto& tape = tape_of(x);
  const auto& xs = x.shape();
  require_rank(xs, 1, "layer_norm");
  const Index c = xs.back();
  const Index rows = leading(xs, 1);
  const auto& xv = x.value();
  Tensor<T> normed(xs);
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  for (Index r = 0; r < rows; ++r) {
    T mean = 0;
    for (Index j = 0; j < c; ++j) mean += xv[r * c + j];
    mean /= static_cast<T>(c);
    T var = 0;
    for (Index j = 0; j < c; ++j) {
      const T d = xv[r * c + j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    for (Index j = 0; j < c; ++j) normed[r * c + j] = (xv[r * c + j] - mean) * is;
  }
  auto n = tape.record(normed, needs(x),
                       [xn = x.node_ptr(), normed, inv_std = std::move(inv_std), rows, c](auto& self) {
    auto& gx = xn->grad_buffer();
    const auto& g = self.grad;
    for (Index r = 0; r < rows; ++r) {
      T mg = 0;
      T mgn = 0;
      for (Index j = 0; j < c; ++j) {
        mg += g[r * c + j];
        mgn += g[r * c + j] * normed[r * c + j];
      }
      mg /= static_cast<T>(c);
      mgn /= static_cast<T>(c);
      const T is = inv_std[static_cast<std::size_t>(r)];
      for (Index j = 0; j < c; ++j) {
        gx[r * c + j] += is * (g[r * c + j] - mg - normed[r * c + j] * mgn);
      }
    }
  });
  if (!gamma.valid() && !beta.valid()) return n;
  return scale_shift(n, gamma, beta);
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels, T smoothing,
                     std::span<const T> row_weights) {
  auto& tape = tape_of(logits);
  const auto& ls = logits.shape();
  if (ls.size() != 2) throw RankError("cross_entropy: logits must be [rows, classes], got " + shape_string(ls));
  const Index rows = ls[0];
  const Index k = ls[1];
  if (static_cast<Index>(labels.size()) != rows) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rows) + " rows");
  }
  if (!row_weights.empty() && static_cast<Index>(row_weights.size()) != rows) {
    throw DimensionError("cross_entropy: row weight count does not match rows");
  }
  if (!(smoothing >= T(0) && smoothing < T(1))) {
    throw ConfigError("label smoothing must lie in [0, 1)");
  }
  const auto& x = logits.value();
  Tensor<T> probs(ls);
  T total = 0;
  T weight_sum = 0;
  const T off = smoothing / static_cast<T>(k);
  const T on = T(1) - smoothing + off;
  for (Index r = 0; r < rows; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= k) {
      throw DataError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                      std::to_string(k) + ")");
    }
    const T w = row_weights.empty() ? T(1) : row_weights[static_cast<std::size_t>(r)];
    const T* row = x.data() + r * k;
    T mx = row[0];
    for (Index j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    T s = 0;
    for (Index j = 0; j < k; ++j) s += std::exp(row[j] - mx);
    const T lse = mx + std::log(s);
    T loss = 0;
    for (Index j = 0; j < k; ++j) {
      const T logp = row[j] - lse;
      probs[r * k + j] = std::exp(logp);
      const T q = j == y ? on : off;
      if (q != T(0)) loss -= q * logp;
    }
    total += w * loss;
    weight_sum += w;
  }
  const T denom = weight_sum > T(0) ? weight_sum : T(1);
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<T> weights(row_weights.begin(), row_weights.end());
  return tape.record(Tensor<T>::scalar(total / denom), needs(logits),
                     [xn = logits.node_ptr(), probs = std::move(probs), lab = std::move(lab),
                      weights = std::move(weights), denom, on, off, rows, k](auto& self) {
    auto& gx = xn->grad_buffer();
    const T g = self.grad[0] / denom;
    for (Index r = 0; r < rows; ++r) {
      const T w = weights.empty() ? T(1) : weights[static_cast<std::size_t>(r)];
      if (w == T(0)) continue;
      const int y = lab[static_cast<std::size_t>(r)];
      for (Index j = 0; j < k; ++j) {
        const T q = j == y ? on : off;
        gx[r * k + j] += g * w * (probs[r * k + j] - q);
      }
    }
  });
}

template <typename T>
Var<T> masked_softmax(const Var<T>& x, std::span<const int> lengths) {
  auto& tape = tape_of(x);
  const auto& xs = x.shape();
  require_rank(xs, 2, "masked_softmax");
  const Index batch = static_cast<Index>(lengths.size());
  const Index len = xs.back();
  if (batch == 0 || static_cast<Index>(x.value().size()) % (batch * len) != 0 || xs[0] != batch) {
    throw DimensionError("masked_softmax: " + std::to_string(batch) + " lengths for input " +
                         shape_string(xs));
  }
  const Index m = static_cast<Index>(x.value().size()) / (batch * len);
  std::vector<int> lens(lengths.begin(), lengths.end());
  for (int l : lens) {
    if (l <= 0) throw DataError("masked_softmax: a row has every position masked");
    if (l > len) throw DimensionError("masked_softmax: length exceeds axis extent");
  }
  const auto& xv = x.value();
  Tensor<T> out(xs);
  for (Index b = 0; b < batch; ++b) {
    const Index valid = lens[static_cast<std::size_t>(b)];
    for (Index r = 0; r < m; ++r) {
      const T* row = xv.data() + (b * m + r) * len;
      T* o = out.data() + (b * m + r) * len;
      T mx = row[0];
      for (Index j = 1; j < valid; ++j) mx = std::max(mx, row[j]);
      T s = 0;
      for (Index j = 0; j < valid; ++j) {
        o[j] = std::exp(row[j] - mx);
        s += o[j];
      }
      for (Index j = 0; j < valid; ++j) o[j] /= s;
    }
  }
  Tensor<T> saved = out;
  return tape.record(std::move(out), needs(x),
                     [xn = x.node_ptr(), p = std::move(saved), lens = std::move(lens), batch, m,
                      len](auto& self) {
    auto& gx = xn->grad_buffer();
    for (Index b = 0; b < batch; ++b) {
      const Index valid = lens[static_cast<std::size_t>(b)];
      for (Index r = 0; r < m; ++r) {
        const Index base = (b * m + r) * len;
        T dot = 0;
        for (Index j = 0; j < valid; ++j) dot += p[base + j] * self.grad[base + j];
        for (Index j = 0; j < valid; ++j) gx[base + j] += p[base + j] * (self.grad[base + j] - dot);
      }
    }
  });
}

template <typename T>
Var<T> permute(const Var<T>& x, const std::vector<int>& axes) {
  auto& tape = tape_of(x);
  const auto& xs = x.shape();
  const std::size_t rank = xs.size();
  if (axes.size() != rank) throw RankError("permute: axis list does not match rank");
  std::vector<bool> seen(rank, false);
  for (int a : axes) {
    if (a < 0 || static_cast<std::size_t>(a) >= rank || seen[static_cast<std::size_t>(a)]) {
      throw RankError("permute: invalid axis permutation");
    }
    seen[static_cast<std::size_t>(a)] = true;
  }
  Shape os(rank);
  for (std::size_t i = 0; i < rank; ++i) os[i] = xs[static_cast<std::size_t>(axes[i])];
  std::vector<Index> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * xs[i];
  // Stride in the input for each output axis.
  std::vector<Index> src(rank);
  for (std::size_t i = 0; i < rank; ++i) src[i] = in_strides[static_cast<std::size_t>(axes[i])];
  const std::size_t n = x.value().size();
  std::vector<Index> map(n);
  std::vector<Index> counter(rank, 0);
  Index off = 0;
  for (std::size_t o = 0; o < n; ++o) {
    map[o] = off;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      off += src[ax];
      if (counter[ax] < os[ax]) break;
      off -= src[ax] * os[ax];
      counter[ax] = 0;
    }
  }
  Tensor<T> out(os);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < n; ++o) out[o] = xv[static_cast<std::size_t>(map[o])];
  return tape.record(std::move(out), needs(x), [xn = x.node_ptr(), map = std::move(map)](auto& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t o = 0; o < map.size(); ++o) gx[static_cast<std::size_t>(map[o])] += self.grad[o];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  auto& tape = tape_of(x);
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return tape.record(std::move(out), needs(x), [xn = x.node_ptr()](auto& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

template <typename T>
Var<T> embedding(const Var<T>& table, std::span<const int> ids, const Shape& prefix_shape) {
  auto& tape = tape_of(table);
  const auto& ts = table.shape();
  if (ts.size() != 2) throw RankError("embedding: table must be [V, d]");
  if (shape_size(prefix_shape) != ids.size()) {
    throw DimensionError("embedding: " + std::to_string(ids.size()) + " ids for prefix shape " +
                         shape_string(prefix_shape));
  }
  const Index vocab = ts[0];
  const Index d = ts[1];
  Shape os = prefix_shape;
  os.push_back(d);
  Tensor<T> out(os);
  const auto& tv = table.value();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    if (id < 0 || id >= vocab) throw DataError("embedding: token id " + std::to_string(id) + " out of range");
    std::copy(tv.data() + id * d, tv.data() + (id + 1) * d, out.data() + static_cast<Index>(i) * d);
  }
  std::vector<int> saved(ids.begin(), ids.end());
  return tape.record(std::move(out), needs(table),
                     [tn = table.node_ptr(), saved = std::move(saved), d](auto& self) {
    auto& gt = tn->grad_buffer();
    for (std::size_t i = 0; i < saved.size(); ++i) {
      const Index row = saved[i];
      for (Index j = 0; j < d; ++j) gt[row * d + j] += self.grad[static_cast<Index>(i) * d + j];
    }
  });
}

template <typename T>
Var<T> concat(const Var<T>& a, const Var<T>& b, int axis) {
  auto& tape = tape_of(a);
  check_same_tape(a, b);
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const int ax = normalize_axis(axis, as.size(), "concat");
  bool ok = as.size() == bs.size();
  for (std::size_t i = 0; ok && i < as.size(); ++i) {
    if (static_cast<int>(i) != ax && as[i] != bs[i]) ok = false;
  }
  if (!ok) throw DimensionError("concat: " + shape_string(as) + " and " + shape_string(bs));
  const auto sa = split_at(as, ax);
  const auto sb = split_at(bs, ax);
  Shape os = as;
  os[static_cast<std::size_t>(ax)] += bs[static_cast<std::size_t>(ax)];
  Tensor<T> out(os);
  const Index ca = sa.extent * sa.inner;
  const Index cb = sb.extent * sb.inner;
  for (Index o = 0; o < sa.outer; ++o) {
    std::copy(a.value().data() + o * ca, a.value().data() + (o + 1) * ca, out.data() + o * (ca + cb));
    std::copy(b.value().data() + o * cb, b.value().data() + (o + 1) * cb,
              out.data() + o * (ca + cb) + ca);
  }
  return tape.record(std::move(out), needs(a) || needs(b),
                     [an = a.node_ptr(), bn = b.node_ptr(), outer = sa.outer, ca, cb](auto& self) {
    for (Index o = 0; o < outer; ++o) {
      const T* g = self.grad.data() + o * (ca + cb);
      if (an->requires_grad) {
        T* ga = an->grad_buffer().data() + o * ca;
        for (Index i = 0; i < ca; ++i) ga[i] += g[i];
      }
      if (bn->requires_grad) {
        T* gb = bn->grad_buffer().data() + o * cb;
        for (Index i = 0; i < cb; ++i) gb[i] += g[ca + i];
      }
    }
  });
}

template <typename T>
Var<T> slice(const Var<T>& x, int axis, std::int64_t start, std::int64_t length) {
  auto& tape = tape_of(x);
  const auto& xs = x.shape();
  const int ax = normalize_axis(axis, xs.size(), "slice");
  const auto sp = split_at(xs, ax);
  if (start < 0 || length < 1 || start + length > sp.extent) {
    throw DimensionError("slice [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of range for axis extent " + std::to_string(sp.extent));
  }
  Shape os = xs;
  os[static_cast<std::size_t>(ax)] = length;
  Tensor<T> out(os);
  for (Index o = 0; o < sp.outer; ++o) {
    const T* src = x.value().data() + (o * sp.extent + start) * sp.inner;
    std::copy(src, src + length * sp.inner, out.data() + o * length * sp.inner);
  }
  return tape.record(std::move(out), needs(x), [xn = x.node_ptr(), sp, start, length](auto& self) {
    auto& gx = xn->grad_buffer();
    for (Index o = 0; o < sp.outer; ++o) {
      T* dst = gx.data() + (o * sp.extent + start) * sp.inner;
      const T* g = self.grad.data() + o * length * sp.inner;
      for (Index i = 0; i < length * sp.inner; ++i) dst[i] += g[i];
    }
  });
}

template <typename T>
Var<T> tril_expand(const Var<T>& packed, std::int64_t length) {
  auto& tape = tape_of(packed);
  const auto& ps = packed.shape();
  if (ps.size() != 1) throw RankError("tril_expand: packed triangle must be rank 1");
  const Index need = length * (length + 1) / 2;
  if (length < 1 || need > ps[0]) {
    throw CapacityError("tril_expand: length " + std::to_string(length) +
                        " exceeds packed capacity " + std::to_string(ps[0]));
  }
  Tensor<T> out(Shape{length, length});
  const auto& pv = packed.value();
  for (Index i = 0; i < length; ++i) {
    for (Index j = 0; j <= i; ++j) out[i * length + j] = pv[i * (i + 1) / 2 + j];
  }
  return tape.record(std::move(out), needs(packed), [pn = packed.node_ptr(), length](auto& self) {
    auto& gp = pn->grad_buffer();
    for (Index i = 0; i < length; ++i) {
      for (Index j = 0; j <= i; ++j) gp[i * (i + 1) / 2 + j] += self.grad[i * length + j];
    }
  });
}

template <typename T>
Var<T> mask_rows(const Var<T>& x, std::span<const int> lengths) {
  auto& tape = tape_of(x);
  const auto& xs = x.shape();
  if (xs.size() != 3 || xs[0] != static_cast<Index>(lengths.size())) {
    throw DimensionError("mask_rows: input " + shape_string(xs) + " with " +
                         std::to_string(lengths.size()) + " lengths");
  }
  const Index len = xs[1];
  const Index d = xs[2];
  std::vector<int> lens(lengths.begin(), lengths.end());
  Tensor<T> out(xs);
  const auto& xv = x.value();
  for (Index b = 0; b < xs[0]; ++b) {
    const Index valid = std::min<Index>(lens[static_cast<std::size_t>(b)], len);
    std::copy(xv.data() + b * len * d, xv.data() + (b * len + valid) * d, out.data() + b * len * d);
  }
  return tape.record(std::move(out), needs(x), [xn = x.node_ptr(), lens = std::move(lens), len, d](auto& self) {
    auto& gx = xn->grad_buffer();
    for (std::size_t b = 0; b < lens.size(); ++b) {
      const Index valid = std::min<Index>(lens[b], len);
      const Index base = static_cast<Index>(b) * len * d;
      for (Index i = 0; i < valid * d; ++i) gx[base + i] += self.grad[base + i];
    }
  });
}

template <typename T>
Var<T> detach(const Var<T>& x) {
  return tape_of(x).constant(x.value());
}

#define RESMLP_INSTANTIATE_OPS(T)                                                        \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                  \
  template Var<T> transpose(const Var<T>&);                                              \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                   \
  template Var<T> token_mix(const Var<T>&, const Var<T>&, const Var<T>&);                \
  template Var<T> bmm(const Var<T>&, const Var<T>&, bool);                               \
  template Var<T> activation(const Var<T>&, Activation);                                 \
  template Var<T> add(const Var<T>&, const Var<T>&);                                     \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                     \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                     \
  template Var<T> scale(const Var<T>&, T);                                               \
  template Var<T> scale_shift(const Var<T>&, const Var<T>&, const Var<T>&);              \
  template Var<T> reduce(const Var<T>&, int, ReduceKind, bool);                          \
  template Var<T> sum_all(const Var<T>&);                                                \
  template std::vector<int> argmax_rows(const Tensor<T>&);                               \
  template Var<T> layer_norm(const Var<T>&, const Var<T>&, const Var<T>&, T);            \
  template Var<T> cross_entropy(const Var<T>&, std::span<const int>, T, std::span<const T>); \
  template Var<T> masked_softmax(const Var<T>&, std::span<const int>);                   \
  template Var<T> permute(const Var<T>&, const std::vector<int>&);                       \
  template Var<T> reshape(const Var<T>&, Shape);                                         \
  template Var<T> embedding(const Var<T>&, std::span<const int>, const Shape&);          \
  template Var<T> concat(const Var<T>&, const Var<T>&, int);                             \
  template Var<T> slice(const Var<T>&, int, std::int64_t, std::int64_t);                 \
  template Var<T> tril_expand(const Var<T>&, std::int64_t);                              \
  template Var<T> mask_rows(const Var<T>&, std::span<const int>);                        \
  template Var<T> detach(const Var<T>&);

RESMLP_INSTANTIATE_OPS(float)
RESMLP_INSTANTIATE_OPS(double)

#undef RESMLP_INSTANTIATE_OPS

}  // namespace resmlp
