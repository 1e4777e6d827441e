#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace df {

// Differentiable primitives. Every op evaluates eagerly; when `tp` is
// non-null and any input carries a node, the op is recorded for backward.
// Passing tp == nullptr gives pure evaluation.

// elementwise, numpy-style broadcasting
Tensor add(Tape* tp, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tp, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tp, const Tensor& a, const Tensor& b);
Tensor div(Tape* tp, const Tensor& a, const Tensor& b);

// elementwise unary
Tensor relu(Tape* tp, const Tensor& x);
Tensor exp_(Tape* tp, const Tensor& x);
Tensor log_(Tape* tp, const Tensor& x);
Tensor sin_(Tape* tp, const Tensor& x);
Tensor cos_(Tape* tp, const Tensor& x);
Tensor abs_(Tape* tp, const Tensor& x);
Tensor softplus(Tape* tp, const Tensor& x);
Tensor neg(Tape* tp, const Tensor& x);
Tensor scale(Tape* tp, const Tensor& x, double c);
Tensor add_const(Tape* tp, const Tensor& x, double c);
Tensor clamp_min(Tape* tp, const Tensor& x, double lo);  // gradient 0 below lo

// shape
Tensor reshape(Tape* tp, const Tensor& x, Shape s);
Tensor permute(Tape* tp, const Tensor& x, const std::vector<int>& axes);
Tensor slice(Tape* tp, const Tensor& x, const std::vector<int>& begin, const std::vector<int>& end);
Tensor concat(Tape* tp, const std::vector<Tensor>& xs, int axis);
Tensor broadcast_to(Tape* tp, const Tensor& x, const Shape& s);

// reductions
Tensor sum_axis(Tape* tp, const Tensor& x, int axis);
Tensor mean_axis(Tape* tp, const Tensor& x, int axis);
Tensor min_axis(Tape* tp, const Tensor& x, int axis);  // ties -> first index
Tensor sum_all(Tape* tp, const Tensor& x);
Tensor mean_all(Tape* tp, const Tensor& x);

// linear algebra
Tensor matmul(Tape* tp, const Tensor& a, const Tensor& b);
// x:[n,k] w:[k,m] b:[m] -> [n,m]
Tensor linear(Tape* tp, const Tensor& x, const Tensor& w, const Tensor& b);

// nn blocks
// x:[ci,h,w] w:[co,ci,kh,kw] b:[co] -> [co,ho,wo], zero padding
Tensor conv2d(Tape* tp, const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// x:[c,h,w] -> [c,2h,2w]
Tensor upsample_nearest2(Tape* tp, const Tensor& x);
// 3x3 box mean over the trailing two axes, reflect-101 borders
Tensor box3_reflect(Tape* tp, const Tensor& x);
// f:[c,h,w], pts: p pairs (x,y) in continuous pixel coords -> [p,c];
// pts are not differentiated through
Tensor bilinear_sample(Tape* tp, const Tensor& f, const std::vector<double>& pts);
// softmax over the last axis of (logits + additive_mask); masked entries
// (mask <= -1e29) come out exactly zero
Tensor softmax_mask(Tape* tp, const Tensor& logits, const Tensor& additive_mask);

// scans over the last axis
Tensor cumsum_exclusive(Tape* tp, const Tensor& x);
Tensor cumprod_exclusive(Tape* tp, const Tensor& x);

// identity with a severed gradient path
Tensor stop_gradient(const Tensor& x);

// String-keyed dispatch over the primitive set, mainly for sweep-style
// test harnesses.
struct Attrs {
  std::map<std::string, double> num;
  std::map<std::string, std::vector<int>> ints;
  std::map<std::string, std::vector<double>> reals;
};
Tensor apply_primitive(Tape* tp, const std::string& op, const std::vector<Tensor>& inputs,
                       const Attrs& attrs = {});

}  // namespace df
