#include "core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "core/kernels.hpp"

namespace df {

namespace {

bool want_record(Tape* tp, std::initializer_list<const Tensor*> ins, const char* op) {
  if (!tp) return false;
  bool any = false;
  for (const Tensor* t : ins) {
    tp->check_owner(*t, op);
    any = any || t->node >= 0;
  }
  return any;
}

template <class F>
void attach(Tape* tp, Tensor& out, std::initializer_list<const Tensor*> ins, const char* op, F&& back) {
  if (!want_record(tp, ins, op)) return;
  out.node = tp->alloc_node(out.numel(), Tape::BackFn(std::forward<F>(back)));
  out.owner = tp;
}

void accum(Tape& t, const Tensor& parent, const double* g, int64_t n) {
  if (parent.node < 0) return;
  double* dst = t.grad_accum(parent.node);
  for (int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

Shape bcast_shape(const Shape& a, const Shape& b, const char* op) {
  const int ra = static_cast<int>(a.size()), rb = static_cast<int>(b.size());
  const int r = std::max(ra, rb);
  Shape out(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) {
    const int da = i < r - ra ? 1 : a[static_cast<size_t>(i - (r - ra))];
    const int db = i < r - rb ? 1 : b[static_cast<size_t>(i - (r - rb))];
    if (da != db && da != 1 && db != 1)
      fail_contract(std::string(op) + ": shapes not broadcastable: " + shape_str(a) + " vs " + shape_str(b));
    out[static_cast<size_t>(i)] = std::max(da, db);
  }
  return out;
}

// strides aligned to `out`, zero where the input broadcasts
std::vector<int64_t> bcast_strides(const Shape& in, const Shape& out) {
  const int r = static_cast<int>(out.size()), ri = static_cast<int>(in.size());
  auto st_in = row_major_strides(in);
  std::vector<int64_t> st(static_cast<size_t>(r), 0);
  for (int i = 0; i < ri; ++i) {
    const int oi = r - ri + i;
    st[static_cast<size_t>(oi)] = (in[static_cast<size_t>(i)] == 1 && out[static_cast<size_t>(oi)] != 1)
                                      ? 0
                                      : st_in[static_cast<size_t>(i)];
  }
  return st;
}

// sum `g` (shaped like out_s) down to in_s
std::vector<double> reduce_to_shape(const double* g, const Shape& out_s, const Shape& in_s) {
  const int64_t n_out = numel_of(out_s);
  std::vector<double> r(static_cast<size_t>(numel_of(in_s)), 0.0);
  if (static_cast<int64_t>(r.size()) == n_out) {
    std::copy(g, g + n_out, r.begin());
    return r;
  }
  auto st = bcast_strides(in_s, out_s);
  const int rank = static_cast<int>(out_s.size());
  std::vector<int> idx(static_cast<size_t>(rank), 0);
  int64_t off = 0;
  for (int64_t i = 0; i < n_out; ++i) {
    r[static_cast<size_t>(off)] += g[i];
    for (int k = rank - 1; k >= 0; --k) {
      idx[static_cast<size_t>(k)]++;
      off += st[static_cast<size_t>(k)];
      if (idx[static_cast<size_t>(k)] < out_s[static_cast<size_t>(k)]) break;
      off -= st[static_cast<size_t>(k)] * out_s[static_cast<size_t>(k)];
      idx[static_cast<size_t>(k)] = 0;
    }
  }
  return r;
}

struct BinKernel {
  double (*val)(double, double);
  double (*da)(double, double, double);  // (g, a, b)
  double (*db)(double, double, double);
};

Tensor binary_op(Tape* tp, const Tensor& a, const Tensor& b, const char* name, const BinKernel& k) {
  require(a.valid() && b.valid(), std::string(name) + ": invalid input");
  Shape os = bcast_shape(a.shape(), b.shape(), name);
  const int64_t n = numel_of(os);
  std::vector<double> v(static_cast<size_t>(n));
  const double* pa = a.data();
  const double* pb = b.data();

  if (a.shape() == b.shape()) {
    for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i)] = k.val(pa[i], pb[i]);
  } else if (b.numel() == 1) {
    const double bv = pb[0];
    for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i)] = k.val(pa[i], bv);
  } else if (a.numel() == 1) {
    const double av = pa[0];
    for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i)] = k.val(av, pb[i]);
  } else {
    auto sa = bcast_strides(a.shape(), os);
    auto sb = bcast_strides(b.shape(), os);
    const int rank = static_cast<int>(os.size());
    std::vector<int> idx(static_cast<size_t>(rank), 0);
    int64_t oa = 0, ob = 0;
    for (int64_t i = 0; i < n; ++i) {
      v[static_cast<size_t>(i)] = k.val(pa[oa], pb[ob]);
      for (int d = rank - 1; d >= 0; --d) {
        idx[static_cast<size_t>(d)]++;
        oa += sa[static_cast<size_t>(d)];
        ob += sb[static_cast<size_t>(d)];
        if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
        oa -= sa[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
        ob -= sb[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
        idx[static_cast<size_t>(d)] = 0;
      }
    }
  }

  Tensor out = wrap_tensor(os, std::move(v));
  attach(tp, out, {&a, &b}, name, [a, b, out, k](Tape& t, const std::vector<double>& g) {
    const Shape& os2 = out.shape();
    const int64_t n2 = out.numel();
    auto sa = bcast_strides(a.shape(), os2);
    auto sb = bcast_strides(b.shape(), os2);
    const int rank = static_cast<int>(os2.size());
    std::vector<double> ga, gb;
    if (a.node >= 0) ga.assign(static_cast<size_t>(n2), 0.0);
    if (b.node >= 0) gb.assign(static_cast<size_t>(n2), 0.0);
    const double* pa = a.data();
    const double* pb = b.data();
    std::vector<int> idx(static_cast<size_t>(rank), 0);
    int64_t oa = 0, ob = 0;
    for (int64_t i = 0; i < n2; ++i) {
      const double av = pa[oa], bv = pb[ob], gv = g[static_cast<size_t>(i)];
      if (!ga.empty()) ga[static_cast<size_t>(i)] = k.da(gv, av, bv);
      if (!gb.empty()) gb[static_cast<size_t>(i)] = k.db(gv, av, bv);
      for (int d = rank - 1; d >= 0; --d) {
        idx[static_cast<size_t>(d)]++;
        oa += sa[static_cast<size_t>(d)];
        ob += sb[static_cast<size_t>(d)];
        if (idx[static_cast<size_t>(d)] < os2[static_cast<size_t>(d)]) break;
        oa -= sa[static_cast<size_t>(d)] * os2[static_cast<size_t>(d)];
        ob -= sb[static_cast<size_t>(d)] * os2[static_cast<size_t>(d)];
        idx[static_cast<size_t>(d)] = 0;
      }
    }
    if (!ga.empty()) {
      auto rg = reduce_to_shape(ga.data(), os2, a.shape());
      accum(t, a, rg.data(), static_cast<int64_t>(rg.size()));
    }
    if (!gb.empty()) {
      auto rg = reduce_to_shape(gb.data(), os2, b.shape());
      accum(t, b, rg.data(), static_cast<int64_t>(rg.size()));
    }
  });
  return out;
}

struct UnKernel {
  double (*val)(double);
  double (*dx)(double, double, double);  // (g, x, y)
};

Tensor unary_op(Tape* tp, const Tensor& x, const char* name, const UnKernel& k) {
  require(x.valid(), std::string(name) + ": invalid input");
  const int64_t n = x.numel();
  std::vector<double> v(static_cast<size_t>(n));
  const double* px = x.data();
  for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i)] = k.val(px[i]);
  Tensor out = wrap_tensor(x.shape(), std::move(v));
  attach(tp, out, {&x}, name, [x, out, k](Tape& t, const std::vector<double>& g) {
    const int64_t n2 = x.numel();
    std::vector<double> gx(static_cast<size_t>(n2));
    const double* px = x.data();
    const double* py = out.data();
    for (int64_t i = 0; i < n2; ++i)
      gx[static_cast<size_t>(i)] = k.dx(g[static_cast<size_t>(i)], px[i], py[i]);
    accum(t, x, gx.data(), n2);
  });
  return out;
}

}  // namespace

Tensor add(Tape* tp, const Tensor& a, const Tensor& b) {
  static const BinKernel k{[](double x, double y) { return x + y; },
                           [](double g, double, double) { return g; },
                           [](double g, double, double) { return g; }};
  return binary_op(tp, a, b, "add", k);
}

Tensor sub(Tape* tp, const Tensor& a, const Tensor& b) {
  static const BinKernel k{[](double x, double y) { return x - y; },
                           [](double g, double, double) { return g; },
                           [](double g, double, double) { return -g; }};
  return binary_op(tp, a, b, "sub", k);
}

Tensor mul(Tape* tp, const Tensor& a, const Tensor& b) {
  static const BinKernel k{[](double x, double y) { return x * y; },
                           [](double g, double, double y) { return g * y; },
                           [](double g, double x, double) { return g * x; }};
  return binary_op(tp, a, b, "mul", k);
}

Tensor div(Tape* tp, const Tensor& a, const Tensor& b) {
  static const BinKernel k{[](double x, double y) { return x / y; },
                           [](double g, double, double y) { return g / y; },
                           [](double g, double x, double y) { return -g * x / (y * y); }};
  return binary_op(tp, a, b, "div", k);
}

Tensor relu(Tape* tp, const Tensor& x) {
  static const UnKernel k{[](double v) { return v > 0.0 ? v : 0.0; },
                          [](double g, double v, double) { return v > 0.0 ? g : 0.0; }};
  return unary_op(tp, x, "relu", k);
}

Tensor exp_(Tape* tp, const Tensor& x) {
  static const UnKernel k{[](double v) { return std::exp(v); },
                          [](double g, double, double y) { return g * y; }};
  return unary_op(tp, x, "exp", k);
}

Tensor log_(Tape* tp, const Tensor& x) {
  static const UnKernel k{[](double v) { return std::log(v); },
                          [](double g, double v, double) { return g / v; }};
  return unary_op(tp, x, "log", k);
}

Tensor sin_(Tape* tp, const Tensor& x) {
  static const UnKernel k{[](double v) { return std::sin(v); },
                          [](double g, double v, double) { return g * std::cos(v); }};
  return unary_op(tp, x, "sin", k);
}

Tensor cos_(Tape* tp, const Tensor& x) {
  static const UnKernel k{[](double v) { return std::cos(v); },
                          [](double g, double v, double) { return -g * std::sin(v); }};
  return unary_op(tp, x, "cos", k);
}

Tensor abs_(Tape* tp, const Tensor& x) {
  static const UnKernel k{[](double v) { return std::fabs(v); },
                          [](double g, double v, double) { return v > 0.0 ? g : (v < 0.0 ? -g : 0.0); }};
  return unary_op(tp, x, "abs", k);
}

Tensor softplus(Tape* tp, const Tensor& x) {
  static const UnKernel k{
      [](double v) { return v > 30.0 ? v : (v < -30.0 ? std::exp(v) : std::log1p(std::exp(v))); },
      [](double g, double v, double) { return g / (1.0 + std::exp(-v)); }};
  return unary_op(tp, x, "softplus", k);
}

Tensor neg(Tape* tp, const Tensor& x) {
  static const UnKernel k{[](double v) { return -v; },
                          [](double g, double, double) { return -g; }};
  return unary_op(tp, x, "neg", k);
}

Tensor scale(Tape* tp, const Tensor& x, double c) {
  return mul(tp, x, Tensor::scalar(c));
}

Tensor add_const(Tape* tp, const Tensor& x, double c) {
  return add(tp, x, Tensor::scalar(c));
}

Tensor clamp_min(Tape* tp, const Tensor& x, double lo) {
  require(x.valid(), "clamp_min: invalid input");
  const int64_t n = x.numel();
  std::vector<double> v(static_cast<size_t>(n));
  const double* px = x.data();
  for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i)] = px[i] < lo ? lo : px[i];
  Tensor out = wrap_tensor(x.shape(), std::move(v));
  attach(tp, out, {&x}, "clamp_min", [x, lo](Tape& t, const std::vector<double>& g) {
    const int64_t n2 = x.numel();
    std::vector<double> gx(static_cast<size_t>(n2));
    const double* px = x.data();
    for (int64_t i = 0; i < n2; ++i) gx[static_cast<size_t>(i)] = px[i] < lo ? 0.0 : g[static_cast<size_t>(i)];
    accum(t, x, gx.data(), n2);
  });
  return out;
}

Tensor reshape(Tape* tp, const Tensor& x, Shape s) {
  require(numel_of(s) == x.numel(),
          "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(s));
  Tensor out = wrap_tensor(std::move(s), std::vector<double>(x.vec()));
  attach(tp, out, {&x}, "reshape", [x](Tape& t, const std::vector<double>& g) {
    accum(t, x, g.data(), x.numel());
  });
  return out;
}

Tensor permute(Tape* tp, const Tensor& x, const std::vector<int>& axes) {
  const int r = x.rank();
  require(static_cast<int>(axes.size()) == r, "permute: axes rank mismatch");
  Shape os(static_cast<size_t>(r));
  std::vector<char> seen(static_cast<size_t>(r), 0);
  for (int i = 0; i < r; ++i) {
    int a = axes[static_cast<size_t>(i)];
    require(a >= 0 && a < r && !seen[static_cast<size_t>(a)], "permute: invalid axes");
    seen[static_cast<size_t>(a)] = 1;
    os[static_cast<size_t>(i)] = x.dim(a);
  }
  auto xst = row_major_strides(x.shape());
  std::vector<int64_t> src_stride(static_cast<size_t>(r));
  for (int i = 0; i < r; ++i) src_stride[static_cast<size_t>(i)] = xst[static_cast<size_t>(axes[static_cast<size_t>(i)])];
  const int64_t n = x.numel();
  std::vector<double> v(static_cast<size_t>(n));
  const double* px = x.data();
  std::vector<int> idx(static_cast<size_t>(r), 0);
  int64_t so = 0;
  for (int64_t i = 0; i < n; ++i) {
    v[static_cast<size_t>(i)] = px[so];
    for (int d = r - 1; d >= 0; --d) {
      idx[static_cast<size_t>(d)]++;
      so += src_stride[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
      so -= src_stride[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
      idx[static_cast<size_t>(d)] = 0;
    }
  }
  Tensor out = wrap_tensor(os, std::move(v));
  attach(tp, out, {&x}, "permute", [x, axes, os, src_stride](Tape& t, const std::vector<double>& g) {
    if (x.node < 0) return;
    double* gx = t.grad_accum(x.node);
    const int r2 = static_cast<int>(os.size());
    std::vector<int> idx(static_cast<size_t>(r2), 0);
    int64_t so = 0;
    const int64_t n2 = x.numel();
    for (int64_t i = 0; i < n2; ++i) {
      gx[so] += g[static_cast<size_t>(i)];
      for (int d = r2 - 1; d >= 0; --d) {
        idx[static_cast<size_t>(d)]++;
        so += src_stride[static_cast<size_t>(d)];
        if (idx[static_cast<size_t>(d)] < os[static_cast<size_t>(d)]) break;
        so -= src_stride[static_cast<size_t>(d)] * os[static_cast<size_t>(d)];
        idx[static_cast<size_t>(d)] = 0;
      }
    }
  });
  return out;
}

namespace {
// iterate a [begin,end) box of `shape`; calls f(linear_offset_in_full_tensor)
template <class F>
void for_box(const Shape& shape, const std::vector<int>& begin, const std::vector<int>& end, F&& f) {
  const int r = static_cast<int>(shape.size());
  auto st = row_major_strides(shape);
  std::vector<int> idx(begin.begin(), begin.end());
  int64_t off = 0;
  for (int d = 0; d < r; ++d) off += st[static_cast<size_t>(d)] * begin[static_cast<size_t>(d)];
  int64_t count = 1;
  for (int d = 0; d < r; ++d) count *= end[static_cast<size_t>(d)] - begin[static_cast<size_t>(d)];
  for (int64_t i = 0; i < count; ++i) {
    f(off);
    for (int d = r - 1; d >= 0; --d) {
      idx[static_cast<size_t>(d)]++;
      off += st[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < end[static_cast<size_t>(d)]) break;
      off -= st[static_cast<size_t>(d)] * (end[static_cast<size_t>(d)] - begin[static_cast<size_t>(d)]);
      idx[static_cast<size_t>(d)] = begin[static_cast<size_t>(d)];
    }
  }
}
}  // namespace

Tensor slice(Tape* tp, const Tensor& x, const std::vector<int>& begin, const std::vector<int>& end) {
  const int r = x.rank();
  require(static_cast<int>(begin.size()) == r && static_cast<int>(end.size()) == r,
          "slice: begin/end rank mismatch");
  Shape os(static_cast<size_t>(r));
  for (int d = 0; d < r; ++d) {
    require(0 <= begin[static_cast<size_t>(d)] && begin[static_cast<size_t>(d)] < end[static_cast<size_t>(d)] &&
                end[static_cast<size_t>(d)] <= x.dim(d),
            "slice: range out of bounds on axis " + std::to_string(d));
    os[static_cast<size_t>(d)] = end[static_cast<size_t>(d)] - begin[static_cast<size_t>(d)];
  }
  std::vector<double> v;
  v.reserve(static_cast<size_t>(numel_of(os)));
  const double* px = x.data();
  for_box(x.shape(), begin, end, [&](int64_t off) { v.push_back(px[off]); });
  Tensor out = wrap_tensor(os, std::move(v));
  attach(tp, out, {&x}, "slice", [x, begin, end](Tape& t, const std::vector<double>& g) {
    if (x.node < 0) return;
    double* gx = t.grad_accum(x.node);
    size_t i = 0;
    for_box(x.shape(), begin, end, [&](int64_t off) { gx[off] += g[i++]; });
  });
  return out;
}

Tensor concat(Tape* tp, const std::vector<Tensor>& xs, int axis) {
  require(!xs.empty(), "concat: empty input list");
  const int r = xs[0].rank();
  require(axis >= 0 && axis < r, "concat: bad axis");
  Shape os = xs[0].shape();
  int total = 0;
  for (const Tensor& x : xs) {
    require(x.rank() == r, "concat: rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != axis)
        require(x.dim(d) == os[static_cast<size_t>(d)],
                "concat: shape mismatch " + shape_str(x.shape()) + " vs " + shape_str(os));
    total += x.dim(axis);
  }
  os[static_cast<size_t>(axis)] = total;

  auto ost = row_major_strides(os);
  const int64_t outer = [&] {
    int64_t o = 1;
    for (int d = 0; d < axis; ++d) o *= os[static_cast<size_t>(d)];
    return o;
  }();
  const int64_t inner = ost[static_cast<size_t>(axis)];
  std::vector<double> v(static_cast<size_t>(numel_of(os)));
  int64_t at = 0;  // offset along concat axis in units of inner
  std::vector<int64_t> offsets(xs.size());
  for (size_t xi = 0; xi < xs.size(); ++xi) {
    const Tensor& x = xs[xi];
    offsets[xi] = at;
    const int64_t chunk = static_cast<int64_t>(x.dim(axis)) * inner;
    const double* px = x.data();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(v.data() + o * (static_cast<int64_t>(total) * inner) + at * inner, px + o * chunk,
                  sizeof(double) * static_cast<size_t>(chunk));
    at += x.dim(axis);
  }
  Tensor out = wrap_tensor(os, std::move(v));

  std::vector<const Tensor*> ptrs;
  bool any = false;
  if (tp) {
    for (const Tensor& x : xs) {
      tp->check_owner(x, "concat");
      any = any || x.node >= 0;
    }
  }
  if (tp && any) {
    std::vector<Tensor> saved = xs;
    Tape::BackFn fn = [saved, offsets, axis, total, inner, outer](Tape& t, const std::vector<double>& g) {
      for (size_t xi = 0; xi < saved.size(); ++xi) {
        const Tensor& x = saved[xi];
        if (x.node < 0) continue;
        double* gx = t.grad_accum(x.node);
        const int64_t chunk = static_cast<int64_t>(x.shape()[static_cast<size_t>(axis)]) * inner;
        for (int64_t o = 0; o < outer; ++o) {
          const double* src = g.data() + o * (static_cast<int64_t>(total) * inner) + offsets[xi] * inner;
          double* dst = gx + o * chunk;
          for (int64_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
      }
    };
    out.node = tp->alloc_node(out.numel(), std::move(fn));
    out.owner = tp;
  }
  return out;
}

Tensor broadcast_to(Tape* tp, const Tensor& x, const Shape& s) {
  Shape check = bcast_shape(x.shape(), s, "broadcast");
  require(check == s, "broadcast: " + shape_str(x.shape()) + " does not broadcast to " + shape_str(s));
  return add(tp, x, Tensor::zeros(s));
}

namespace {
struct AxisView {
  int64_t outer, extent, inner;
};
AxisView axis_view(const Shape& s, int axis) {
  AxisView v{1, s[static_cast<size_t>(axis)], 1};
  for (int d = 0; d < axis; ++d) v.outer *= s[static_cast<size_t>(d)];
  for (size_t d = static_cast<size_t>(axis) + 1; d < s.size(); ++d) v.inner *= s[d];
  return v;
}
Shape drop_axis(const Shape& s, int axis) {
  Shape r;
  for (int d = 0; d < static_cast<int>(s.size()); ++d)
    if (d != axis) r.push_back(s[static_cast<size_t>(d)]);
  return r;
}
}  // namespace

Tensor sum_axis(Tape* tp, const Tensor& x, int axis) {
  require(axis >= 0 && axis < x.rank(), "sum_axis: bad axis");
  auto av = axis_view(x.shape(), axis);
  std::vector<double> v(static_cast<size_t>(av.outer * av.inner), 0.0);
  const double* px = x.data();
  for (int64_t o = 0; o < av.outer; ++o)
    for (int64_t e = 0; e < av.extent; ++e) {
      const double* src = px + (o * av.extent + e) * av.inner;
      double* dst = v.data() + o * av.inner;
      for (int64_t i = 0; i < av.inner; ++i) dst[i] += src[i];
    }
  Tensor out = wrap_tensor(drop_axis(x.shape(), axis), std::move(v));
  attach(tp, out, {&x}, "sum_axis", [x, av](Tape& t, const std::vector<double>& g) {
    if (x.node < 0) return;
    double* gx = t.grad_accum(x.node);
    for (int64_t o = 0; o < av.outer; ++o)
      for (int64_t e = 0; e < av.extent; ++e) {
        double* dst = gx + (o * av.extent + e) * av.inner;
        const double* src = g.data() + o * av.inner;
        for (int64_t i = 0; i < av.inner; ++i) dst[i] += src[i];
      }
  });
  return out;
}

Tensor mean_axis(Tape* tp, const Tensor& x, int axis) {
  const double inv = 1.0 / x.dim(axis);
  return scale(tp, sum_axis(tp, x, axis), inv);
}

Tensor min_axis(Tape* tp, const Tensor& x, int axis) {
  require(axis >= 0 && axis < x.rank(), "min_axis: bad axis");
  auto av = axis_view(x.shape(), axis);
  std::vector<double> v(static_cast<size_t>(av.outer * av.inner));
  auto armin = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(av.outer * av.inner));
  const double* px = x.data();
  for (int64_t o = 0; o < av.outer; ++o)
    for (int64_t i = 0; i < av.inner; ++i) {
      double best = px[(o * av.extent) * av.inner + i];
      int64_t bi = 0;
      for (int64_t e = 1; e < av.extent; ++e) {
        const double c = px[(o * av.extent + e) * av.inner + i];
        if (c < best) {
          best = c;
          bi = e;
        }
      }
      v[static_cast<size_t>(o * av.inner + i)] = best;
      (*armin)[static_cast<size_t>(o * av.inner + i)] = bi;
    }
  Tensor out = wrap_tensor(drop_axis(x.shape(), axis), std::move(v));
  attach(tp, out, {&x}, "min_axis", [x, av, armin](Tape& t, const std::vector<double>& g) {
    if (x.node < 0) return;
    double* gx = t.grad_accum(x.node);
    for (int64_t o = 0; o < av.outer; ++o)
      for (int64_t i = 0; i < av.inner; ++i) {
        const int64_t e = (*armin)[static_cast<size_t>(o * av.inner + i)];
        gx[(o * av.extent + e) * av.inner + i] += g[static_cast<size_t>(o * av.inner + i)];
      }
  });
  return out;
}

Tensor sum_all(Tape* tp, const Tensor& x) {
  const int64_t n = x.numel();
  const double* px = x.data();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += px[i];
  Tensor out = Tensor::scalar(s);
  attach(tp, out, {&x}, "sum_all", [x](Tape& t, const std::vector<double>& g) {
    if (x.node < 0) return;
    double* gx = t.grad_accum(x.node);
    const int64_t n2 = x.numel();
    for (int64_t i = 0; i < n2; ++i) gx[i] += g[0];
  });
  return out;
}

Tensor mean_all(Tape* tp, const Tensor& x) {
  return scale(tp, sum_all(tp, x), 1.0 / static_cast<double>(x.numel()));
}

Tensor matmul(Tape* tp, const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: expects rank-2 inputs, got " +
                                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  require(b.dim(0) == k, "matmul: inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<double> v(static_cast<size_t>(m) * n, 0.0);
  kernels::matmul_nn(a.data(), b.data(), v.data(), m, k, n);
  Tensor out = wrap_tensor({m, n}, std::move(v));
  attach(tp, out, {&a, &b}, "matmul", [a, b, m, k, n](Tape& t, const std::vector<double>& g) {
    if (a.node >= 0) {
      double* ga = t.grad_accum(a.node);
      kernels::matmul_nt(g.data(), b.data(), ga, m, n, k);
    }
    if (b.node >= 0) {
      double* gb = t.grad_accum(b.node);
      kernels::matmul_tn(a.data(), g.data(), gb, k, m, n);
    }
  });
  return out;
}

Tensor linear(Tape* tp, const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "linear: bad ranks");
  const int n = x.dim(0), k = x.dim(1), m = w.dim(1);
  require(w.dim(0) == k && b.dim(0) == m, "linear: dimension mismatch " + shape_str(x.shape()) +
                                              " x " + shape_str(w.shape()) + " + " + shape_str(b.shape()));
  std::vector<double> v(static_cast<size_t>(n) * m);
  const double* pb = b.data();
  for (int i = 0; i < n; ++i) std::memcpy(v.data() + static_cast<int64_t>(i) * m, pb, sizeof(double) * static_cast<size_t>(m));
  kernels::matmul_nn(x.data(), w.data(), v.data(), n, k, m);
  Tensor out = wrap_tensor({n, m}, std::move(v));
  attach(tp, out, {&x, &w, &b}, "linear", [x, w, b, n, k, m](Tape& t, const std::vector<double>& g) {
    if (x.node >= 0) kernels::matmul_nt(g.data(), w.data(), t.grad_accum(x.node), n, m, k);
    if (w.node >= 0) kernels::matmul_tn(x.data(), g.data(), t.grad_accum(w.node), k, n, m);
    if (b.node >= 0) {
      double* gb = t.grad_accum(b.node);
      for (int i = 0; i < n; ++i) {
        const double* row = g.data() + static_cast<int64_t>(i) * m;
        for (int j = 0; j < m; ++j) gb[j] += row[j];
      }
    }
  });
  return out;
}

Tensor conv2d(Tape* tp, const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  require(x.rank() == 3 && w.rank() == 4 && b.rank() == 1, "conv2d: bad ranks");
  const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  require(w.dim(1) == ci, "conv2d: channel mismatch " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
  require(b.dim(0) == co, "conv2d: bias size mismatch");
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  require(ho >= 1 && wo >= 1, "conv2d: output would be empty");
  const int ck = ci * kh * kw;
  const int64_t np = static_cast<int64_t>(ho) * wo;

  auto cols = std::make_shared<std::vector<double>>(static_cast<size_t>(ck) * np);
  kernels::im2col(x.data(), ci, h, wd, kh, kw, stride, pad, ho, wo, cols->data());

  std::vector<double> v(static_cast<size_t>(co) * np);
  const double* pb = b.data();
  for (int c = 0; c < co; ++c)
    std::fill(v.begin() + static_cast<int64_t>(c) * np, v.begin() + static_cast<int64_t>(c + 1) * np, pb[c]);
  kernels::matmul_nn(w.data(), cols->data(), v.data(), co, ck, static_cast<int>(np));
  Tensor out = wrap_tensor({co, ho, wo}, std::move(v));

  attach(tp, out, {&x, &w, &b}, "conv2d",
         [x, w, b, cols, stride, pad, ci, h, wd, co, kh, kw, ho, wo, ck, np](Tape& t, const std::vector<double>& g) {
           if (w.node >= 0)
             kernels::matmul_nt(g.data(), cols->data(), t.grad_accum(w.node), co, static_cast<int>(np), ck);
           if (b.node >= 0) {
             double* gb = t.grad_accum(b.node);
             for (int c = 0; c < co; ++c) {
               const double* row = g.data() + static_cast<int64_t>(c) * np;
               double s = 0.0;
               for (int64_t i = 0; i < np; ++i) s += row[i];
               gb[c] += s;
             }
           }
           if (x.node >= 0) {
             std::vector<double> gcols(static_cast<size_t>(ck) * np, 0.0);
             kernels::matmul_tn(w.data(), g.data(), gcols.data(), ck, co, static_cast<int>(np));
             kernels::col2im(gcols.data(), ci, h, wd, kh, kw, stride, pad, ho, wo, t.grad_accum(x.node));
           }
         });
  return out;
}

Tensor upsample_nearest2(Tape* tp, const Tensor& x) {
  require(x.rank() == 3, "upsample_nearest2: expects [c,h,w]");
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<double> v(static_cast<size_t>(c) * (2 * h) * (2 * w));
  const double* px = x.data();
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < 2 * h; ++y) {
      const double* src = px + (static_cast<int64_t>(ci) * h + y / 2) * w;
      double* dst = v.data() + (static_cast<int64_t>(ci) * 2 * h + y) * 2 * w;
      for (int xx = 0; xx < 2 * w; ++xx) dst[xx] = src[xx / 2];
    }
  Tensor out = wrap_tensor({c, 2 * h, 2 * w}, std::move(v));
  attach(tp, out, {&x}, "upsample_nearest2", [x, c, h, w](Tape& t, const std::vector<double>& g) {
    if (x.node < 0) return;
    double* gx = t.grad_accum(x.node);
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < 2 * h; ++y) {
        double* dst = gx + (static_cast<int64_t>(ci) * h + y / 2) * w;
        const double* src = g.data() + (static_cast<int64_t>(ci) * 2 * h + y) * 2 * w;
        for (int xx = 0; xx < 2 * w; ++xx) dst[xx / 2] += src[xx];
      }
  });
  return out;
}

namespace {
inline int reflect101(int i, int n) {
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return i;
}
}  // namespace

Tensor box3_reflect(Tape* tp, const Tensor& x) {
  require(x.rank() >= 2, "box3_reflect: needs at least 2 axes");
  const int h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  require(h >= 2 && w >= 2, "box3_reflect: spatial extents must be >= 2");
  const int64_t planes = x.numel() / (static_cast<int64_t>(h) * w);
  std::vector<double> v(static_cast<size_t>(x.numel()));
  const double* px = x.data();
  for (int64_t p = 0; p < planes; ++p) {
    const double* in = px + p * h * w;
    double* outp = v.data() + p * h * w;
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            s += in[static_cast<int64_t>(reflect101(y + dy, h)) * w + reflect101(xx + dx, w)];
        outp[static_cast<int64_t>(y) * w + xx] = s / 9.0;
      }
  }
  Tensor out = wrap_tensor(x.shape(), std::move(v));
  attach(tp, out, {&x}, "box3_reflect", [x, h, w, planes](Tape& t, const std::vector<double>& g) {
    if (x.node < 0) return;
    double* gx = t.grad_accum(x.node);
    for (int64_t p = 0; p < planes; ++p) {
      const double* gp = g.data() + p * h * w;
      double* dst = gx + p * h * w;
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          const double gv = gp[static_cast<int64_t>(y) * w + xx] / 9.0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
              dst[static_cast<int64_t>(reflect101(y + dy, h)) * w + reflect101(xx + dx, w)] += gv;
        }
    }
  });
  return out;
}

Tensor bilinear_sample(Tape* tp, const Tensor& f, const std::vector<double>& pts) {
  require(f.rank() == 3, "bilinear_sample: feature map must be [c,h,w]");
  require(pts.size() % 2 == 0, "bilinear_sample: points must be (x,y) pairs");
  const int c = f.dim(0), h = f.dim(1), w = f.dim(2);
  const int64_t p = static_cast<int64_t>(pts.size() / 2);
  struct Tap {
    int x0, x1, y0, y1;
    double w00, w01, w10, w11;
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(p));
  for (int64_t i = 0; i < p; ++i) {
    const double xx = pts[static_cast<size_t>(2 * i)];
    const double yy = pts[static_cast<size_t>(2 * i + 1)];
    require(xx >= 0.0 && xx <= w - 1 && yy >= 0.0 && yy <= h - 1,
            "bilinear_sample: point (" + std::to_string(xx) + "," + std::to_string(yy) + ") outside [0," +
                std::to_string(w - 1) + "]x[0," + std::to_string(h - 1) + "]");
    Tap tp2;
    tp2.x0 = static_cast<int>(std::floor(xx));
    tp2.y0 = static_cast<int>(std::floor(yy));
    tp2.x1 = std::min(tp2.x0 + 1, w - 1);
    tp2.y1 = std::min(tp2.y0 + 1, h - 1);
    const double fx = xx - tp2.x0, fy = yy - tp2.y0;
    tp2.w00 = (1 - fx) * (1 - fy);
    tp2.w01 = fx * (1 - fy);
    tp2.w10 = (1 - fx) * fy;
    tp2.w11 = fx * fy;
    (*taps)[static_cast<size_t>(i)] = tp2;
  }
  std::vector<double> v(static_cast<size_t>(p) * c);
  const double* pf = f.data();
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int64_t i = 0; i < p; ++i) {
    const Tap& s = (*taps)[static_cast<size_t>(i)];
    double* dst = v.data() + i * c;
    for (int ch = 0; ch < c; ++ch) {
      const double* fp = pf + ch * plane;
      dst[ch] = s.w00 * fp[static_cast<int64_t>(s.y0) * w + s.x0] + s.w01 * fp[static_cast<int64_t>(s.y0) * w + s.x1] +
                s.w10 * fp[static_cast<int64_t>(s.y1) * w + s.x0] + s.w11 * fp[static_cast<int64_t>(s.y1) * w + s.x1];
    }
  }
  Tensor out = wrap_tensor({static_cast<int>(p), c}, std::move(v));
  attach(tp, out, {&f}, "bilinear_sample", [f, taps, c, h, w, p](Tape& t, const std::vector<double>& g) {
    if (f.node < 0) return;
    double* gf = t.grad_accum(f.node);
    const int64_t plane = static_cast<int64_t>(h) * w;
    for (int64_t i = 0; i < p; ++i) {
      const Tap& s = (*taps)[static_cast<size_t>(i)];
      const double* gr = g.data() + i * c;
      for (int ch = 0; ch < c; ++ch) {
        double* fp = gf + ch * plane;
        fp[static_cast<int64_t>(s.y0) * w + s.x0] += s.w00 * gr[ch];
        fp[static_cast<int64_t>(s.y0) * w + s.x1] += s.w01 * gr[ch];
        fp[static_cast<int64_t>(s.y1) * w + s.x0] += s.w10 * gr[ch];
        fp[static_cast<int64_t>(s.y1) * w + s.x1] += s.w11 * gr[ch];
      }
    }
  });
  return out;
}

Tensor softmax_mask(Tape* tp, const Tensor& logits, const Tensor& additive_mask) {
  require(logits.shape() == additive_mask.shape(), "softmax_mask: logits " + shape_str(logits.shape()) +
                                                       " vs mask " + shape_str(additive_mask.shape()));
  require(logits.rank() >= 1, "softmax_mask: rank must be >= 1");
  const int k = logits.dim(logits.rank() - 1);
  const int64_t rows = logits.numel() / k;
  std::vector<double> v(static_cast<size_t>(logits.numel()));
  const double* pl = logits.data();
  const double* pm = additive_mask.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* lr = pl + r * k;
    const double* mr = pm + r * k;
    double* outp = v.data() + r * k;
    double mx = -1e300;
    for (int i = 0; i < k; ++i) mx = std::max(mx, lr[i] + mr[i]);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      const double e = std::exp(lr[i] + mr[i] - mx);
      outp[i] = e;
      sum += e;
    }
    for (int i = 0; i < k; ++i) outp[i] /= sum;
  }
  Tensor out = wrap_tensor(logits.shape(), std::move(v));
  attach(tp, out, {&logits, &additive_mask}, "softmax_mask",
         [logits, additive_mask, out, k, rows](Tape& t, const std::vector<double>& g) {
           std::vector<double> gl(static_cast<size_t>(out.numel()));
           const double* pw = out.data();
           for (int64_t r = 0; r < rows; ++r) {
             const double* wr = pw + r * k;
             const double* gr = g.data() + r * k;
             double dot = 0.0;
             for (int i = 0; i < k; ++i) dot += wr[i] * gr[i];
             double* dst = gl.data() + r * k;
             for (int i = 0; i < k; ++i) dst[i] = wr[i] * (gr[i] - dot);
           }
           accum(t, logits, gl.data(), out.numel());
           accum(t, additive_mask, gl.data(), out.numel());
         });
  return out;
}

Tensor cumsum_exclusive(Tape* tp, const Tensor& x) {
  require(x.rank() >= 1, "cumsum_exclusive: rank must be >= 1");
  const int m = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / m;
  std::vector<double> v(static_cast<size_t>(x.numel()));
  const double* px = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = px + r * m;
    double* dst = v.data() + r * m;
    double acc = 0.0;
    for (int i = 0; i < m; ++i) {
      dst[i] = acc;
      acc += src[i];
    }
  }
  Tensor out = wrap_tensor(x.shape(), std::move(v));
  attach(tp, out, {&x}, "cumsum_exclusive", [x, m, rows](Tape& t, const std::vector<double>& g) {
    if (x.node < 0) return;
    double* gx = t.grad_accum(x.node);
    for (int64_t r = 0; r < rows; ++r) {
      const double* gr = g.data() + r * m;
      double* dst = gx + r * m;
      double acc = 0.0;
      for (int i = m - 1; i >= 0; --i) {
        dst[i] += acc;
        acc += gr[i];
      }
    }
  });
  return out;
}

Tensor cumprod_exclusive(Tape* tp, const Tensor& x) {
  require(x.rank() >= 1, "cumprod_exclusive: rank must be >= 1");
  const int m = x.dim(x.rank() - 1);
  const int64_t rows = x.numel() / m;
  std::vector<double> v(static_cast<size_t>(x.numel()));
  const double* px = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* src = px + r * m;
    double* dst = v.data() + r * m;
    double acc = 1.0;
    for (int i = 0; i < m; ++i) {
      dst[i] = acc;
      acc *= src[i];
    }
  }
  Tensor out = wrap_tensor(x.shape(), std::move(v));
  attach(tp, out, {&x}, "cumprod_exclusive", [x, out, m, rows](Tape& t, const std::vector<double>& g) {
    if (x.node < 0) return;
    double* gx = t.grad_accum(x.node);
    const double* px = x.data();
    const double* py = out.data();
    // zero-safe: rebuild the partial products explicitly per source slot
    for (int64_t r = 0; r < rows; ++r) {
      const double* xr = px + r * m;
      const double* yr = py + r * m;
      const double* gr = g.data() + r * m;
      double* dst = gx + r * m;
      for (int j = 0; j < m; ++j) {
        const double before = yr[j];  // product of x[0..j-1]
        double after = 1.0;
        double acc = 0.0;
        for (int i = j + 1; i < m; ++i) {
          acc += gr[i] * before * after;
          after *= xr[i];
        }
        dst[j] += acc;
      }
    }
  });
  return out;
}

Tensor stop_gradient(const Tensor& x) {
  Tensor out = wrap_tensor(x.shape(), std::vector<double>(x.vec()));
  return out;
}

Tensor apply_primitive(Tape* tp, const std::string& op, const std::vector<Tensor>& in, const Attrs& a) {
  auto geti = [&](const std::string& k, int def) {
    auto it = a.ints.find(k);
    return it != a.ints.end() && !it->second.empty() ? it->second[0] : def;
  };
  auto need = [&](size_t n) {
    require(in.size() == n, "apply_primitive(" + op + "): expects " + std::to_string(n) + " inputs");
  };
  if (op == "add") { need(2); return add(tp, in[0], in[1]); }
  if (op == "sub") { need(2); return sub(tp, in[0], in[1]); }
  if (op == "mul") { need(2); return mul(tp, in[0], in[1]); }
  if (op == "div") { need(2); return div(tp, in[0], in[1]); }
  if (op == "matmul") { need(2); return matmul(tp, in[0], in[1]); }
  if (op == "conv2d") { need(3); return conv2d(tp, in[0], in[1], in[2], geti("stride", 1), geti("pad", 1)); }
  if (op == "upsample_nearest") { need(1); return upsample_nearest2(tp, in[0]); }
  if (op == "relu") { need(1); return relu(tp, in[0]); }
  if (op == "exp") { need(1); return exp_(tp, in[0]); }
  if (op == "log") { need(1); return log_(tp, in[0]); }
  if (op == "sin") { need(1); return sin_(tp, in[0]); }
  if (op == "cos") { need(1); return cos_(tp, in[0]); }
  if (op == "abs") { need(1); return abs_(tp, in[0]); }
  if (op == "softplus") { need(1); return softplus(tp, in[0]); }
  if (op == "min_axis") { need(1); return min_axis(tp, in[0], geti("axis", 0)); }
  if (op == "sum_axis") { need(1); return sum_axis(tp, in[0], geti("axis", 0)); }
  if (op == "mean_axis") { need(1); return mean_axis(tp, in[0], geti("axis", 0)); }
  if (op == "bilinear_sample") {
    need(1);
    auto it = a.reals.find("points");
    require(it != a.reals.end(), "apply_primitive(bilinear_sample): missing points");
    return bilinear_sample(tp, in[0], it->second);
  }
  if (op == "softmax_mask") { need(2); return softmax_mask(tp, in[0], in[1]); }
  if (op == "stop_gradient") { need(1); return stop_gradient(in[0]); }
  if (op == "concat") { return concat(tp, in, geti("axis", 0)); }
  if (op == "broadcast") {
    need(1);
    auto it = a.ints.find("shape");
    require(it != a.ints.end(), "apply_primitive(broadcast): missing shape");
    return broadcast_to(tp, in[0], it->second);
  }
  if (op == "cumsum_exclusive") { need(1); return cumsum_exclusive(tp, in[0]); }
  if (op == "cumprod_exclusive") { need(1); return cumprod_exclusive(tp, in[0]); }
  if (op == "box3_reflect") { need(1); return box3_reflect(tp, in[0]); }
  fail_contract("apply_primitive: unknown op '" + op + "'");
}

}  // namespace df
