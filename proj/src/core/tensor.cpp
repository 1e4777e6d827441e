#include "core/tensor.hpp"

#include <numeric>
#include <sstream>

namespace df {

int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int d : s) {
    require(d > 0, "tensor extents must be positive, got " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

Tensor wrap_tensor(Shape s, std::vector<double>&& v) {
  int64_t n = numel_of(s);
  require(n == static_cast<int64_t>(v.size()),
          "tensor data length " + std::to_string(v.size()) + " does not match shape " + shape_str(s));
  Tensor t;
  t.shape_ = std::move(s);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(v));
  return t;
}

Tensor Tensor::zeros(Shape s) {
  int64_t n = numel_of(s);
  return wrap_tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(Shape s, double v) {
  int64_t n = numel_of(s);
  return wrap_tensor(std::move(s), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::from(Shape s, std::vector<double> v) {
  return wrap_tensor(std::move(s), std::move(v));
}

double Tensor::item() const {
  require(numel() == 1, "item() requires a single-element tensor, got " + shape_str(shape_));
  return (*data_)[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  require(static_cast<int>(idx.size()) == rank(), "at(): index rank mismatch");
  auto st = row_major_strides(shape_);
  int64_t off = 0;
  size_t k = 0;
  for (int i : idx) {
    require(i >= 0 && i < shape_[k], "at(): index out of range");
    off += st[k++] * i;
  }
  return (*data_)[static_cast<size_t>(off)];
}

Tensor Tape::leaf(const Tensor& value) {
  require(value.valid(), "leaf(): invalid tensor");
  require(value.node < 0, "leaf(): tensor already belongs to a graph");
  Tensor t = value;
  t.node = alloc_node(value.numel(), BackFn());
  t.owner = this;
  return t;
}

int Tape::alloc_node(int64_t numel, BackFn back) {
  require(!consumed_, "tape already consumed by backward()");
  nodes_.push_back(Node{numel, std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

double* Tape::grad_accum(int node) {
  auto& g = grads_[static_cast<size_t>(node)];
  if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].numel), 0.0);
  return g.data();
}

const std::vector<double>* Tape::grad_vec(int node) const {
  const auto& g = grads_[static_cast<size_t>(node)];
  return g.empty() ? nullptr : &g;
}

void Tape::check_owner(const Tensor& t, const char* op) const {
  if (t.node >= 0 && t.owner != this)
    fail_contract(std::string(op) + ": tensor belongs to a different graph");
}

void Tape::backward(const Tensor& scalar_output) {
  require(!consumed_, "backward() may run once per tape");
  require(scalar_output.numel() == 1, "backward(): output must be scalar, got " + shape_str(scalar_output.shape()));
  require(scalar_output.node >= 0 && scalar_output.owner == this,
          "backward(): output is not attached to this graph");
  consumed_ = true;
  grads_.assign(nodes_.size(), {});
  grads_[static_cast<size_t>(scalar_output.node)] = {1.0};
  for (int i = scalar_output.node; i >= 0; --i) {
    const auto& g = grads_[static_cast<size_t>(i)];
    if (g.empty()) continue;
    auto& fn = nodes_[static_cast<size_t>(i)].back;
    if (fn) fn(*this, g);
  }
}

bool Tape::has_grad(const Tensor& t) const {
  return t.node >= 0 && t.owner == this && grad_vec(t.node) != nullptr;
}

Tensor Tape::grad(const Tensor& t) const {
  require(t.node >= 0 && t.owner == this, "grad(): tensor is not attached to this graph");
  const auto* g = grad_vec(t.node);
  if (!g) return Tensor::zeros(t.shape());
  return Tensor::from(t.shape(), *g);
}

}  // namespace df
