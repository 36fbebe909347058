#include "hats/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hats/error.hpp"

namespace hats::ops {

using detail::make_result;
using detail::Node;

namespace {

std::vector<double>* grad_of(Node& self, std::size_t i) {
  auto& p = self.parents[i];
  return p->requires_grad ? &p->grad_buffer() : nullptr;
}

const std::vector<double>& value_of(Node& self, std::size_t i) { return self.parents[i]->value; }

// ---- broadcasting ---------------------------------------------------------

struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank - a.size(), 1), pb(rank - b.size(), 1);
  pa.insert(pa.end(), a.begin(), a.end());
  pb.insert(pb.end(), b.begin(), b.end());
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      plan.out[i] = pa[i];
    } else if (pa[i] == 1) {
      plan.out[i] = pb[i];
    } else {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
  }
  auto strides = [&](const Shape& s) {
    std::vector<std::size_t> st(rank, 0);
    std::size_t acc = 1;
    for (std::size_t i = rank; i-- > 0;) {
      st[i] = s[i] == 1 ? 0 : acc;
      acc *= s[i];
    }
    return st;
  };
  auto sa = strides(pa), sb = strides(pb);
  const std::size_t n = numel_of(plan.out);
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k < n; ++k) {
    plan.a_index[k] = ia;
    plan.b_index[k] = ib;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < plan.out[d]) break;
      ia -= sa[d] * idx[d];
      ib -= sb[d] * idx[d];
      idx[d] = 0;
    }
  }
  return plan;
}

enum class BinOp { kAdd, kSub, kMul, kDiv };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
  const auto& av = a.data();
  const auto& bv = b.data();
  const std::size_t n = numel_of(plan->out);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double x = av[plan->same ? k : plan->a_index[k]];
    const double y = bv[plan->same ? k : plan->b_index[k]];
    switch (op) {
      case BinOp::kAdd: out[k] = x + y; break;
      case BinOp::kSub: out[k] = x - y; break;
      case BinOp::kMul: out[k] = x * y; break;
      case BinOp::kDiv: out[k] = x / y; break;
    }
  }
  return make_result(plan->out, std::move(out), {a, b}, [plan, op](Node& self) {
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    const auto& x = value_of(self, 0);
    const auto& y = value_of(self, 1);
    const auto& g = self.grad;
    for (std::size_t k = 0; k < g.size(); ++k) {
      const std::size_t ia = plan->same ? k : plan->a_index[k];
      const std::size_t ib = plan->same ? k : plan->b_index[k];
      switch (op) {
        case BinOp::kAdd:
          if (ga) (*ga)[ia] += g[k];
          if (gb) (*gb)[ib] += g[k];
          break;
        case BinOp::kSub:
          if (ga) (*ga)[ia] += g[k];
          if (gb) (*gb)[ib] -= g[k];
          break;
        case BinOp::kMul:
          if (ga) (*ga)[ia] += g[k] * y[ib];
          if (gb) (*gb)[ib] += g[k] * x[ia];
          break;
        case BinOp::kDiv:
          if (ga) (*ga)[ia] += g[k] / y[ib];
          if (gb) (*gb)[ib] -= g[k] * x[ia] / (y[ib] * y[ib]);
          break;
      }
    }
  });
}

// f(x) elementwise with derivative expressed through x and f(x).
template <typename F, typename D>
Tensor unary(const Tensor& x, F f, D df) {
  std::vector<double> out(x.numel());
  const auto& xv = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(x.shape(), std::move(out), {x}, [df](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& xv = value_of(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      (*gx)[i] += self.grad[i] * df(xv[i], self.value[i]);
    }
  });
}

// C (+)= op(A) op(B); A is m x k after op, B is k x n after op.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* A,
          const double* B, double* C) {
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      double* c = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double a = A[i * k + p];
        if (a == 0.0) continue;
        const double* b = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* a = A + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double* b = B + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a[p] * b[p];
        C[i * n + j] += s;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const double* b = B + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double a = A[p * m + i];
        if (a == 0.0) continue;
        double* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += A[p * m + i] * B[j * k + p];
        C[i * n + j] += s;
      }
    }
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw DimensionError(message);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kDiv); }

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary(
      x, [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        return 0.5 * (1.0 + std::erf(v * kInvSqrt2)) + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary(
      x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  require(a.rank() == 2 && b.rank() == 2,
          "matmul needs 2-D operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t m = trans_a ? a.dim(1) : a.dim(0);
  const std::size_t k = trans_a ? a.dim(0) : a.dim(1);
  const std::size_t kb = trans_b ? b.dim(1) : b.dim(0);
  const std::size_t n = trans_b ? b.dim(0) : b.dim(1);
  require(k == kb, "matmul inner dimensions disagree: " + shape_str(a.shape()) +
                       (trans_a ? "^T" : "") + " x " + shape_str(b.shape()) + (trans_b ? "^T" : ""));
  std::vector<double> out(m * n, 0.0);
  gemm(trans_a, trans_b, m, n, k, a.data().data(), b.data().data(), out.data());
  return make_result({m, n}, std::move(out), {a, b}, [=](Node& self) {
    const double* A = value_of(self, 0).data();
    const double* B = value_of(self, 1).data();
    const double* G = self.grad.data();
    if (auto* ga = grad_of(self, 0)) {
      if (!trans_a) {
        gemm(false, !trans_b, m, k, n, G, B, ga->data());
      } else {
        gemm(trans_b, true, k, m, n, B, G, ga->data());
      }
    }
    if (auto* gb = grad_of(self, 1)) {
      if (!trans_b) {
        gemm(!trans_a, false, k, n, m, A, G, gb->data());
      } else {
        gemm(true, trans_a, n, k, m, G, A, gb->data());
      }
    }
  });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0),
          "bmm needs 3-D operands with equal batch, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const std::size_t batch = a.dim(0);
  const std::size_t m = trans_a ? a.dim(2) : a.dim(1);
  const std::size_t k = trans_a ? a.dim(1) : a.dim(2);
  const std::size_t kb = trans_b ? b.dim(2) : b.dim(1);
  const std::size_t n = trans_b ? b.dim(1) : b.dim(2);
  require(k == kb, "bmm inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                       shape_str(b.shape()));
  const std::size_t sa = m * k, sb = k * n, sc = m * n;
  std::vector<double> out(batch * sc, 0.0);
  for (std::size_t g = 0; g < batch; ++g) {
    gemm(trans_a, trans_b, m, n, k, a.data().data() + g * sa, b.data().data() + g * sb,
         out.data() + g * sc);
  }
  return make_result({batch, m, n}, std::move(out), {a, b}, [=](Node& self) {
    const double* A = value_of(self, 0).data();
    const double* B = value_of(self, 1).data();
    const double* G = self.grad.data();
    auto* ga = grad_of(self, 0);
    auto* gb = grad_of(self, 1);
    for (std::size_t g = 0; g < batch; ++g) {
      const double* Ag = A + g * sa;
      const double* Bg = B + g * sb;
      const double* Gg = G + g * sc;
      if (ga) {
        if (!trans_a) {
          gemm(false, !trans_b, m, k, n, Gg, Bg, ga->data() + g * sa);
        } else {
          gemm(trans_b, true, k, m, n, Bg, Gg, ga->data() + g * sa);
        }
      }
      if (gb) {
        if (!trans_b) {
          gemm(!trans_a, false, k, n, m, Ag, Gg, gb->data() + g * sb);
        } else {
          gemm(true, trans_a, n, k, m, Gg, Ag, gb->data() + g * sb);
        }
      }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require(x.rank() == 2, "transpose needs a 2-D tensor, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(numel_of(shape) == x.numel(),
          "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    if (auto* gx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    }
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t rank = in.size();
  require(axes.size() == rank, "permute axes do not match " + shape_str(in));
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out_shape(rank);
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    require(axes[i] < rank, "permute axis out of range");
    out_shape[i] = in[axes[i]];
    src_strides[i] = in_strides[axes[i]];
  }
  const std::size_t n = x.numel();
  auto map = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t k = 0; k < n; ++k) {
    (*map)[k] = src;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      src += src_strides[d];
      if (idx[d] < out_shape[d]) break;
      src -= src_strides[d] * idx[d];
      idx[d] = 0;
    }
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = x.data()[(*map)[k]];
  return make_result(std::move(out_shape), std::move(out), {x}, [map](Node& self) {
    if (auto* gx = grad_of(self, 0)) {
      for (std::size_t k = 0; k < self.grad.size(); ++k) (*gx)[(*map)[k]] += self.grad[k];
    }
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result({}, {s}, {x}, [](Node& self) {
    if (auto* gx = grad_of(self, 0)) {
      for (auto& g : *gx) g += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  require(x.numel() > 0, "mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_dim(const Tensor& x, std::size_t axis, bool keepdim) {
  const Shape& in = x.shape();
  require(axis < in.size(), "sum_dim axis out of range for " + shape_str(in));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  const std::size_t len = in[axis];
  std::vector<double> out(outer * inner, 0.0);
  const auto& xv = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t l = 0; l < len; ++l)
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += xv[(o * len + l) * inner + i];
  Shape out_shape = in;
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [=](Node& self) {
    if (auto* gx = grad_of(self, 0)) {
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t l = 0; l < len; ++l)
          for (std::size_t i = 0; i < inner; ++i)
            (*gx)[(o * len + l) * inner + i] += self.grad[o * inner + i];
    }
  });
}

Tensor mean_dim(const Tensor& x, std::size_t axis, bool keepdim) {
  require(axis < x.rank() && x.dim(axis) > 0, "mean_dim over an empty or missing axis");
  return scale(sum_dim(x, axis, keepdim), 1.0 / static_cast<double>(x.dim(axis)));
}

Tensor softmax(const Tensor& x) {
  require(x.rank() >= 1 && x.shape().back() > 0, "softmax over an empty last axis");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  const auto& xv = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double* o = out.data() + r * d;
    const double mx = *std::max_element(in, in + d);
    double z = 0.0;
    for (std::size_t j = 0; j < d; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[j] /= z;
  }
  return make_result(x.shape(), std::move(out), {x}, [d, rows](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * d;
      const double* g = self.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < d; ++j) (*gx)[r * d + j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require(x.rank() >= 1, "layer_norm needs at least one axis");
  const std::size_t d = x.shape().back();
  if (d == 0) throw DimensionError("layer_norm over an empty last dimension");
  require(gain.numel() == d && bias.numel() == d,
          "layer_norm affine parameters must have " + std::to_string(d) + " entries, got " +
              shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  const std::size_t rows = x.numel() / d;
  auto normed = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const auto& xv = x.data();
  const auto& gv = gain.data();
  const auto& bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double nh = (in[j] - mu) * is;
      (*normed)[r * d + j] = nh;
      out[r * d + j] = nh * gv[j] + bv[j];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, bias}, [=](Node& self) {
    auto* gx = grad_of(self, 0);
    auto* gg = grad_of(self, 1);
    auto* gb = grad_of(self, 2);
    const auto& gv = value_of(self, 1);
    const auto& g = self.grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* nh = normed->data() + r * d;
      const double* gr = g.data() + r * d;
      if (gg || gb) {
        for (std::size_t j = 0; j < d; ++j) {
          if (gg) (*gg)[j] += gr[j] * nh[j];
          if (gb) (*gb)[j] += gr[j];
        }
      }
      if (gx) {
        double mean_dy = 0.0, mean_dy_n = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double dy = gr[j] * gv[j];
          mean_dy += dy;
          mean_dy_n += dy * nh[j];
        }
        mean_dy /= static_cast<double>(d);
        mean_dy_n /= static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const double dy = gr[j] * gv[j];
          (*gx)[r * d + j] += (*inv_std)[r] * (dy - mean_dy - nh[j] * mean_dy_n);
        }
      }
    }
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  require(!parts.empty(), "concat of zero tensors");
  const Shape& first = parts[0].shape();
  require(axis < first.size(), "concat axis out of range for " + shape_str(first));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> lens;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    require(ok, "concat shape mismatch: " + shape_str(first) + " vs " + shape_str(s));
    lens.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = parts[p].data();
    const std::size_t block = lens[p] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * block, block, out.data() + (o * total + offset) * inner);
    }
    offset += lens[p];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(std::move(out_shape), std::move(out), std::move(inputs),
                     [=](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < lens.size(); ++p) {
                         const std::size_t block = lens[p] * inner;
                         if (auto* gp = grad_of(self, p)) {
                           for (std::size_t o = 0; o < outer; ++o) {
                             const double* src = self.grad.data() + (o * total + offset) * inner;
                             double* dst = gp->data() + o * block;
                             for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                           }
                         }
                         offset += lens[p];
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& in = x.shape();
  require(axis < in.size() && begin <= end && end <= in[axis],
          "slice [" + std::to_string(begin) + "," + std::to_string(end) + ") out of range for " +
              shape_str(in));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  const std::size_t len = in[axis], span_len = end - begin;
  Shape out_shape = in;
  out_shape[axis] = span_len;
  std::vector<double> out(outer * span_len * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(x.data().data() + (o * len + begin) * inner, span_len * inner,
                out.data() + o * span_len * inner);
  }
  return make_result(std::move(out_shape), std::move(out), {x}, [=](Node& self) {
    if (auto* gx = grad_of(self, 0)) {
      for (std::size_t o = 0; o < outer; ++o) {
        const double* src = self.grad.data() + o * span_len * inner;
        double* dst = gx->data() + (o * len + begin) * inner;
        for (std::size_t i = 0; i < span_len * inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor index_select(const Tensor& x, std::span<const std::size_t> rows) {
  require(x.rank() >= 1, "index_select needs at least one axis");
  const std::size_t n = x.dim(0);
  const std::size_t inner = n ? x.numel() / n : 0;
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  std::vector<double> out(idx->size() * inner);
  for (std::size_t r = 0; r < idx->size(); ++r) {
    if ((*idx)[r] >= n) {
      throw DimensionError("row index " + std::to_string((*idx)[r]) + " out of range for " +
                           shape_str(x.shape()));
    }
    std::copy_n(x.data().data() + (*idx)[r] * inner, inner, out.data() + r * inner);
  }
  Shape out_shape = x.shape();
  out_shape[0] = idx->size();
  return make_result(std::move(out_shape), std::move(out), {x}, [idx, inner](Node& self) {
    if (auto* gx = grad_of(self, 0)) {
      for (std::size_t r = 0; r < idx->size(); ++r) {
        const double* src = self.grad.data() + r * inner;
        double* dst = gx->data() + (*idx)[r] * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> rows, std::size_t count) {
  require(src.rank() >= 1 && src.dim(0) == rows.size(),
          "scatter_add_rows: " + std::to_string(rows.size()) + " indices for " +
              shape_str(src.shape()));
  const std::size_t inner = src.dim(0) ? src.numel() / src.dim(0) : 1;
  auto idx = std::make_shared<std::vector<std::size_t>>(rows.begin(), rows.end());
  Shape out_shape = src.shape();
  out_shape[0] = count;
  std::vector<double> out(count * inner, 0.0);
  for (std::size_t r = 0; r < idx->size(); ++r) {
    if ((*idx)[r] >= count) {
      throw DimensionError("scatter row " + std::to_string((*idx)[r]) + " >= " +
                           std::to_string(count));
    }
    const double* s = src.data().data() + r * inner;
    double* d = out.data() + (*idx)[r] * inner;
    for (std::size_t i = 0; i < inner; ++i) d[i] += s[i];
  }
  return make_result(std::move(out_shape), std::move(out), {src}, [idx, inner](Node& self) {
    if (auto* gs = grad_of(self, 0)) {
      for (std::size_t r = 0; r < idx->size(); ++r) {
        const double* g = self.grad.data() + (*idx)[r] * inner;
        double* d = gs->data() + r * inner;
        for (std::size_t i = 0; i < inner; ++i) d[i] += g[i];
      }
    }
  });
}

Tensor relation_linear(const Tensor& x, std::span<const std::size_t> rel, const Tensor& weight,
                       const Tensor& bias) {
  require(x.rank() == 2 && weight.rank() == 3 && bias.rank() == 2,
          "relation_linear expects x [E,in], W [R,out,in], b [R,out]");
  const std::size_t edges = x.dim(0), in = x.dim(1);
  const std::size_t nrel = weight.dim(0), out_dim = weight.dim(1);
  require(weight.dim(2) == in && bias.dim(0) == nrel && bias.dim(1) == out_dim,
          "relation_linear shape mismatch: x " + shape_str(x.shape()) + ", W " +
              shape_str(weight.shape()) + ", b " + shape_str(bias.shape()));
  require(rel.size() == edges, "relation_linear needs one relation index per row");
  auto idx = std::make_shared<std::vector<std::size_t>>(rel.begin(), rel.end());
  std::vector<double> out(edges * out_dim);
  const double* X = x.data().data();
  const double* W = weight.data().data();
  const double* B = bias.data().data();
  for (std::size_t e = 0; e < edges; ++e) {
    const std::size_t r = (*idx)[e];
    if (r >= nrel) throw DimensionError("relation index " + std::to_string(r) + " out of range");
    const double* w = W + r * out_dim * in;
    const double* xe = X + e * in;
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = B[r * out_dim + o];
      const double* wr = w + o * in;
      for (std::size_t i = 0; i < in; ++i) s += wr[i] * xe[i];
      out[e * out_dim + o] = s;
    }
  }
  return make_result({edges, out_dim}, std::move(out), {x, weight, bias}, [=](Node& self) {
    auto* gx = grad_of(self, 0);
    auto* gw = grad_of(self, 1);
    auto* gb = grad_of(self, 2);
    const double* X = value_of(self, 0).data();
    const double* W = value_of(self, 1).data();
    for (std::size_t e = 0; e < edges; ++e) {
      const std::size_t r = (*idx)[e];
      const double* g = self.grad.data() + e * out_dim;
      const double* xe = X + e * in;
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double go = g[o];
        if (go == 0.0) continue;
        if (gb) (*gb)[r * out_dim + o] += go;
        if (gw) {
          double* gwr = gw->data() + (r * out_dim + o) * in;
          for (std::size_t i = 0; i < in; ++i) gwr[i] += go * xe[i];
        }
        if (gx) {
          const double* wr = W + (r * out_dim + o) * in;
          double* gxe = gx->data() + e * in;
          for (std::size_t i = 0; i < in; ++i) gxe[i] += go * wr[i];
        }
      }
    }
  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b, double eps) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
          "cosine_similarity shape mismatch: " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  auto row_norm = [eps](const Tensor& t) {
    return sqrt(add_scalar(sum_dim(mul(t, t), 1, true), eps));
  };
  Tensor an = div(a, row_norm(a));
  Tensor bn = div(b, row_norm(b));
  return matmul(an, bn, false, true);
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  if (logits.shape() != targets.shape()) {
    throw DimensionError("bce_with_logits shape mismatch: " + shape_str(logits.shape()) + " vs " +
                         shape_str(targets.shape()));
  }
  require(logits.numel() > 0, "bce_with_logits on empty input");
  const auto& x = logits.data();
  const auto& t = targets.data();
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(t[i] >= 0.0 && t[i] <= 1.0)) {
      throw ValidationError("bce target " + std::to_string(t[i]) + " outside [0,1] at index " +
                            std::to_string(i));
    }
    total += std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  const double n = static_cast<double>(x.size());
  return make_result({}, {total / n}, {logits, targets}, [n](Node& self) {
    const auto& x = value_of(self, 0);
    const auto& t = value_of(self, 1);
    const double g = self.grad[0] / n;
    if (auto* gx = grad_of(self, 0)) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                   : std::exp(x[i]) / (1.0 + std::exp(x[i]));
        (*gx)[i] += g * (s - t[i]);
      }
    }
    if (auto* gt = grad_of(self, 1)) {
      for (std::size_t i = 0; i < x.size(); ++i) (*gt)[i] -= g * x[i];
    }
  });
}

Tensor softmax_focal_loss(const Tensor& logits, std::span<const std::size_t> labels,
                          std::span<const double> class_weights, double gamma) {
  require(logits.rank() == 2, "focal loss expects [N, C] logits, got " + shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  require(labels.size() == n, "focal loss needs one label per row");
  require(class_weights.size() == c, "focal loss needs one weight per class");
  require(n > 0, "focal loss on an empty batch");
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= c) {
      throw ValidationError("label " + std::to_string(labels[i]) + " is not a valid class id (C=" +
                            std::to_string(c) + ")");
    }
  }
  for (double w : class_weights) {
    if (!(w >= 0.0)) throw ValidationError("class weights must be non-negative");
  }
  auto probs = std::make_shared<std::vector<double>>(n * c);
  auto lab = std::make_shared<std::vector<std::size_t>>(labels.begin(), labels.end());
  auto w = std::make_shared<std::vector<double>>(class_weights.begin(), class_weights.end());
  const auto& x = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.data() + i * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] = std::exp(row[j] - log_z);
    const std::size_t y = (*lab)[i];
    const double log_p = row[y] - log_z;
    const double pc = (*probs)[i * c + y];
    const double mod = gamma == 0.0 ? 1.0 : std::pow(std::max(1.0 - pc, 0.0), gamma);
    total += -(*w)[y] * mod * log_p;
  }
  const double nn = static_cast<double>(n);
  return make_result({}, {total / nn}, {logits}, [=](Node& self) {
    auto* gx = grad_of(self, 0);
    if (!gx) return;
    const auto& x = value_of(self, 0);
    const double g = self.grad[0] / nn;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t y = (*lab)[i];
      const double pc = (*probs)[i * c + y];
      const double* row = x.data() + i * c;
      double mx = *std::max_element(row, row + c), z = 0.0;
      for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
      const double log_p = row[y] - (mx + std::log(z));
      const double one_minus = std::max(1.0 - pc, 0.0);
      const double mod = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
      // d/dz_j = -w (delta_yj - p_j) [mod - gamma (1-p)^(gamma-1) p log p]
      double dmod_term = 0.0;
      if (gamma != 0.0 && one_minus > 0.0) {
        dmod_term = gamma * std::pow(one_minus, gamma - 1.0) * pc * log_p;
      }
      const double common = -(*w)[y] * (mod - dmod_term);
      for (std::size_t j = 0; j < c; ++j) {
        const double delta = j == y ? 1.0 : 0.0;
        (*gx)[i * c + j] += g * common * (delta - (*probs)[i * c + j]);
      }
    }
  });
}

}  // namespace hats::ops
