#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "core/error.hpp"

namespace df {

using Shape = std::vector<int>;

int64_t numel_of(const Shape& s);
std::string shape_str(const Shape& s);
std::vector<int64_t> row_major_strides(const Shape& s);

class Tape;

// Dense row-major array of doubles. Value semantics, storage shared and
// treated as immutable once wrapped. `node >= 0` ties the tensor to one
// live tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double v);
  static Tensor from(Shape s, std::vector<double> v);
  static Tensor scalar(double v) { return from({}, {v}); }

  bool valid() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return data_ ? static_cast<int64_t>(data_->size()) : 0; }
  const double* data() const { return data_->data(); }
  const std::vector<double>& vec() const { return *data_; }

  double item() const;
  double at(std::initializer_list<int> idx) const;

  int node = -1;
  const Tape* owner = nullptr;

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;

  friend Tensor wrap_tensor(Shape, std::vector<double>&&);
};

// Takes ownership of the buffer; length must match the shape.
Tensor wrap_tensor(Shape s, std::vector<double>&& v);

// Reverse-mode tape. Built during one forward pass, consumed by one
// backward() call, then discarded. Confined to a single thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `value` as a differentiable leaf and returns the tracked view.
  Tensor leaf(const Tensor& value);

  // Accumulates gradients for every node reachable from `scalar_output`.
  void backward(const Tensor& scalar_output);

  bool has_grad(const Tensor& t) const;
  Tensor grad(const Tensor& t) const;  // zeros when the node was not reached

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // --- op-implementation interface ---
  using BackFn = std::function<void(Tape&, const std::vector<double>&)>;
  int alloc_node(int64_t numel, BackFn back);
  double* grad_accum(int node);  // zero-initialized on first access
  const std::vector<double>* grad_vec(int node) const;
  void check_owner(const Tensor& t, const char* op) const;

 private:
  struct Node {
    int64_t numel;
    BackFn back;  // empty for leaves
  };
  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  bool consumed_ = false;
};

}  // namespace df
