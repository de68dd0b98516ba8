#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lhz/diffcore/graph.hpp"

namespace lhz::diff {

// out = x·W + b for x of shape [n] or [batch, n], W of shape [n, m], b of shape [m].
Var affine(Var x, Var weight, Var bias);
Var matmul(Var x, Var weight);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var x);
Var scale(Var x, double c);
Var add_scalar(Var x, double c);

Var tanh(Var x);
Var sigmoid(Var x);
Var exp(Var x);
Var log(Var x);  // throws DomainError on non-positive input
Var square(Var x);

enum class ElementwiseOp { kTanh, kSigmoid, kExp, kLog, kAdd, kMul, kSub, kSquare };

// Dispatches to the named elementwise operation. Unary ops take one input,
// binary ops two.
Var elementwise(ElementwiseOp op, std::span<const Var> inputs);

Var sum(Var x);
Var mean(Var x);

// 1-D concatenation and contiguous slice.
Var concat(const std::vector<Var>& parts);
Var slice(Var x, std::size_t offset, std::size_t length);

// Values outside [lo, hi] are clipped and receive zero gradient.
Var clamp(Var x, double lo, double hi);
Var minimum(Var a, Var b);

// Forward value passes through; no gradient flows back.
Var detach(Var x);

Var log_softmax(Var logits);
Var pick(Var x, std::size_t index);

// Sum over dimensions of the diagonal-Gaussian log density with sigma = exp(log_std).
Var gaussian_logpdf(Var x, Var mean, Var log_std);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(double c, Var x) { return scale(x, c); }

}  // namespace lhz::diff
