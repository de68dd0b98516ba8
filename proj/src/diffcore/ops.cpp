#include "lhz/diffcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lhz/diffcore/errors.hpp"

namespace lhz::diff {

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw ContractError("operands belong to different graphs");
}

// Unary elementwise op whose derivative is expressed through input and output.
template <typename F, typename D>
Var unary(Var x, F f, D dfdx) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  Graph& g = *x.graph;
  const std::uint32_t xi = x.id;
  // The output node id is the next free slot on the tape.
  const auto yi = static_cast<std::uint32_t>(g.size());
  return g.make(std::move(out), {x}, [xi, yi, dfdx](Graph& gr, const Tensor& gy) {
    Tensor* gx = gr.grad_target(xi);
    if (!gx) return;
    const Tensor& in = gr.value(xi);
    const Tensor& y = gr.value(yi);
    for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i] * dfdx(in[i], y[i]);
  });
}

}  // namespace

Var affine(Var x, Var weight, Var bias) {
  require_same_graph(x, weight);
  require_same_graph(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  if (wv.rank() != 2 || xv.rank() < 1 || xv.rank() > 2 || xv.shape().back() != wv.dim(0) ||
      bv.rank() != 1 || bv.dim(0) != wv.dim(1)) {
    throw DimensionError("affine: incompatible shapes input " + shape_string(xv.shape()) +
                         ", weight " + shape_string(wv.shape()) + ", bias " +
                         shape_string(bv.shape()));
  }
  const std::size_t n = wv.dim(0);
  const std::size_t m = wv.dim(1);
  const std::size_t rows = xv.rank() == 2 ? xv.dim(0) : 1;
  Shape out_shape = xv.rank() == 2 ? Shape{rows, m} : Shape{m};
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.raw().data() + r * m;
    const double* xr = xv.raw().data() + r * n;
    for (std::size_t j = 0; j < m; ++j) o[j] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double xi = xr[i];
      const double* wr = wv.raw().data() + i * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += xi * wr[j];
    }
    for (std::size_t j = 0; j < m; ++j) o[j] += bv[j];
  }
  const std::uint32_t xi = x.id, wi = weight.id, bi = bias.id;
  return x.graph->make(std::move(out), {x, weight, bias},
                       [xi, wi, bi, n, m, rows](Graph& g, const Tensor& gy) {
                         const Tensor& xv = g.value(xi);
                         const Tensor& wv = g.value(wi);
                         if (Tensor* gx = g.grad_target(xi)) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* gyr = gy.raw().data() + r * m;
                             double* gxr = gx->raw().data() + r * n;
                             for (std::size_t i = 0; i < n; ++i) {
                               const double* wr = wv.raw().data() + i * m;
                               double acc = 0.0;
                               for (std::size_t j = 0; j < m; ++j) acc += gyr[j] * wr[j];
                               gxr[i] += acc;
                             }
                           }
                         }
                         if (Tensor* gw = g.grad_target(wi)) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* gyr = gy.raw().data() + r * m;
                             const double* xr = xv.raw().data() + r * n;
                             for (std::size_t i = 0; i < n; ++i) {
                               const double xv_i = xr[i];
                               if (xv_i == 0.0) continue;
                               double* gwr = gw->raw().data() + i * m;
                               for (std::size_t j = 0; j < m; ++j) gwr[j] += xv_i * gyr[j];
                             }
                           }
                         }
                         if (Tensor* gb = g.grad_target(bi)) {
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* gyr = gy.raw().data() + r * m;
                             for (std::size_t j = 0; j < m; ++j) (*gb)[j] += gyr[j];
                           }
                         }
                       });
}

Var matmul(Var x, Var weight) {
  const std::size_t m = weight.value().rank() == 2 ? weight.value().dim(1) : 0;
  return affine(x, weight, x.graph->constant(Tensor(Shape{m})));
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("add", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return a.graph->make(std::move(out), {a, b}, [ai, bi](Graph& g, const Tensor& gy) {
    if (Tensor* ga = g.grad_target(ai))
      for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i];
    if (Tensor* gb = g.grad_target(bi))
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] += gy[i];
  });
}

Var sub(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("sub", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return a.graph->make(std::move(out), {a, b}, [ai, bi](Graph& g, const Tensor& gy) {
    if (Tensor* ga = g.grad_target(ai))
      for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i];
    if (Tensor* gb = g.grad_target(bi))
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] -= gy[i];
  });
}

Var mul(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const std::uint32_t ai = a.id, bi = b.id;
  return a.graph->make(std::move(out), {a, b}, [ai, bi](Graph& g, const Tensor& gy) {
    if (Tensor* ga = g.grad_target(ai)) {
      const Tensor& bv = g.value(bi);
      for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] * bv[i];
    }
    if (Tensor* gb = g.grad_target(bi)) {
      const Tensor& av = g.value(ai);
      for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] += gy[i] * av[i];
    }
  });
}

Var neg(Var x) { return scale(x, -1.0); }

Var scale(Var x, double c) {
  Tensor out = x.value();
  for (double& v : out.raw()) v *= c;
  const std::uint32_t xi = x.id;
  return x.graph->make(std::move(out), {x}, [xi, c](Graph& g, const Tensor& gy) {
    if (Tensor* gx = g.grad_target(xi))
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += c * gy[i];
  });
}

Var add_scalar(Var x, double c) {
  Tensor out = x.value();
  for (double& v : out.raw()) v += c;
  const std::uint32_t xi = x.id;
  return x.graph->make(std::move(out), {x}, [xi](Graph& g, const Tensor& gy) {
    if (Tensor* gx = g.grad_target(xi))
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i];
  });
}

Var tanh(Var x) {
  return unary(
      x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
  return unary(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().raw()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary(
      x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var square(Var x) {
  return unary(
      x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var elementwise(ElementwiseOp op, std::span<const Var> inputs) {
  const bool binary =
      op == ElementwiseOp::kAdd || op == ElementwiseOp::kMul || op == ElementwiseOp::kSub;
  if (inputs.size() != (binary ? 2u : 1u)) {
    throw DimensionError("elementwise: wrong operand count " + std::to_string(inputs.size()));
  }
  switch (op) {
    case ElementwiseOp::kTanh: return tanh(inputs[0]);
    case ElementwiseOp::kSigmoid: return sigmoid(inputs[0]);
    case ElementwiseOp::kExp: return exp(inputs[0]);
    case ElementwiseOp::kLog: return log(inputs[0]);
    case ElementwiseOp::kSquare: return square(inputs[0]);
    case ElementwiseOp::kAdd: return add(inputs[0], inputs[1]);
    case ElementwiseOp::kMul: return mul(inputs[0], inputs[1]);
    case ElementwiseOp::kSub: return sub(inputs[0], inputs[1]);
  }
  throw ContractError("elementwise: unknown op");
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().raw()) s += v;
  const std::uint32_t xi = x.id;
  return x.graph->make(Tensor::scalar(s), {x}, [xi](Graph& g, const Tensor& gy) {
    if (Tensor* gx = g.grad_target(xi))
      for (double& v : gx->raw()) v += gy[0];
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat: no operands");
  std::vector<double> out;
  std::vector<std::pair<std::uint32_t, std::size_t>> spans;
  for (const Var& p : parts) {
    require_same_graph(parts.front(), p);
    if (p.value().rank() > 1) {
      throw DimensionError("concat: expected vectors, got " + shape_string(p.shape()));
    }
    spans.emplace_back(p.id, p.size());
    out.insert(out.end(), p.value().raw().begin(), p.value().raw().end());
  }
  return parts.front().graph->make(Tensor::vector(std::move(out)), parts,
                                   [spans](Graph& g, const Tensor& gy) {
                                     std::size_t off = 0;
                                     for (const auto& [id, len] : spans) {
                                       if (Tensor* gp = g.grad_target(id))
                                         for (std::size_t i = 0; i < len; ++i)
                                           (*gp)[i] += gy[off + i];
                                       off += len;
                                     }
                                   });
}

Var slice(Var x, std::size_t offset, std::size_t length) {
  if (x.value().rank() != 1 || offset + length > x.size()) {
    throw DimensionError("slice: [" + std::to_string(offset) + ", +" + std::to_string(length) +
                         ") out of range for shape " + shape_string(x.shape()));
  }
  const auto& src = x.value().raw();
  std::vector<double> out(src.begin() + static_cast<std::ptrdiff_t>(offset),
                          src.begin() + static_cast<std::ptrdiff_t>(offset + length));
  const std::uint32_t xi = x.id;
  return x.graph->make(Tensor::vector(std::move(out)), {x},
                       [xi, offset](Graph& g, const Tensor& gy) {
                         if (Tensor* gx = g.grad_target(xi))
                           for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[offset + i] += gy[i];
                       });
}

Var clamp(Var x, double lo, double hi) {
  return unary(
      x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

Var minimum(Var a, Var b) {
  require_same_graph(a, b);
  require_same_shape("minimum", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(out[i], b.value()[i]);
  const std::uint32_t ai = a.id, bi = b.id;
  return a.graph->make(std::move(out), {a, b}, [ai, bi](Graph& g, const Tensor& gy) {
    const Tensor& av = g.value(ai);
    const Tensor& bv = g.value(bi);
    Tensor* ga = g.grad_target(ai);
    Tensor* gb = g.grad_target(bi);
    for (std::size_t i = 0; i < gy.size(); ++i) {
      // Ties route the gradient to the first operand.
      if (av[i] <= bv[i]) {
        if (ga) (*ga)[i] += gy[i];
      } else if (gb) {
        (*gb)[i] += gy[i];
      }
    }
  });
}

Var detach(Var x) { return x.graph->constant(x.value()); }

Var log_softmax(Var logits) {
  const Tensor& lv = logits.value();
  if (lv.rank() != 1) throw DimensionError("log_softmax: expected vector, got " + shape_string(lv.shape()));
  const double mx = *std::max_element(lv.raw().begin(), lv.raw().end());
  double z = 0.0;
  for (double v : lv.raw()) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  Tensor out(lv.shape());
  for (std::size_t i = 0; i < lv.size(); ++i) out[i] = lv[i] - lse;
  const std::uint32_t xi = logits.id;
  const auto yi = static_cast<std::uint32_t>(logits.graph->size());
  return logits.graph->make(std::move(out), {logits}, [xi, yi](Graph& g, const Tensor& gy) {
    Tensor* gx = g.grad_target(xi);
    if (!gx) return;
    const Tensor& y = g.value(yi);
    double total = 0.0;
    for (double v : gy.raw()) total += v;
    for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i] - std::exp(y[i]) * total;
  });
}

Var pick(Var x, std::size_t index) {
  if (index >= x.size()) {
    throw DimensionError("pick: index " + std::to_string(index) + " out of range for shape " +
                         shape_string(x.shape()));
  }
  const std::uint32_t xi = x.id;
  return x.graph->make(Tensor::scalar(x.value()[index]), {x},
                       [xi, index](Graph& g, const Tensor& gy) {
                         if (Tensor* gx = g.grad_target(xi)) (*gx)[index] += gy[0];
                       });
}

Var gaussian_logpdf(Var x, Var mean, Var log_std) {
  require_same_graph(x, mean);
  require_same_graph(x, log_std);
  require_same_shape("gaussian_logpdf", x, mean);
  require_same_shape("gaussian_logpdf", x, log_std);
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  const Tensor& xv = x.value();
  const Tensor& mv = mean.value();
  const Tensor& sv = log_std.value();
  double total = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double u = (xv[i] - mv[i]) * std::exp(-sv[i]);
    total += -0.5 * u * u - sv[i] - kHalfLog2Pi;
  }
  const std::uint32_t xi = x.id, mi = mean.id, si = log_std.id;
  return x.graph->make(Tensor::scalar(total), {x, mean, log_std},
                       [xi, mi, si](Graph& g, const Tensor& gy) {
                         const Tensor& xv = g.value(xi);
                         const Tensor& mv = g.value(mi);
                         const Tensor& sv = g.value(si);
                         Tensor* gx = g.grad_target(xi);
                         Tensor* gm = g.grad_target(mi);
                         Tensor* gs = g.grad_target(si);
                         for (std::size_t i = 0; i < xv.size(); ++i) {
                           const double inv_var = std::exp(-2.0 * sv[i]);
                           const double d = xv[i] - mv[i];
                           if (gx) (*gx)[i] += -gy[0] * d * inv_var;
                           if (gm) (*gm)[i] += gy[0] * d * inv_var;
                           if (gs) (*gs)[i] += gy[0] * (d * d * inv_var - 1.0);
                         }
                       });
}

}  // namespace lhz::diff
