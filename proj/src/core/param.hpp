#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace df {

// Named, ordered parameter collection. Frozen entries never receive
// optimizer updates.
class ParamSet {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
  };

  void insert(const std::string& path, Tensor value, bool trainable = true);
  bool contains(const std::string& path) const { return entries_.count(path) > 0; }
  const Tensor& get(const std::string& path) const;
  void set_value(const std::string& path, Tensor value);  // shape must match
  bool trainable(const std::string& path) const;
  void set_trainable(const std::string& path, bool trainable);

  // Freeze/unfreeze every entry whose path starts with `prefix`.
  void set_trainable_prefix(const std::string& prefix, bool trainable);

  size_t size() const { return entries_.size(); }
  std::vector<std::string> paths() const;
  std::vector<std::string> trainable_paths() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::map<std::string, Entry> entries_;  // ordered: deterministic iteration
};

using GradMap = std::map<std::string, Tensor>;

// Lazily binds parameters into a tape. Trainable entries become watched
// leaves (created once, shared between call sites); frozen entries pass
// through as constants, so no gradient ever reaches them.
class BoundParams {
 public:
  BoundParams(const ParamSet& ps, Tape* tape) : ps_(&ps), tape_(tape) {}

  const Tensor& operator()(const std::string& path);

  // Gradients for exactly the trainable entries (zeros where unused).
  GradMap trainable_grads() const;

  const ParamSet& params() const { return *ps_; }
  Tape* tape() const { return tape_; }

 private:
  const ParamSet* ps_;
  Tape* tape_;
  std::map<std::string, Tensor> watched_;
};

struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// One Adam update with bias correction over the trainable entries of
// `params`. `grads` must cover exactly those entries.
void adam_step(ParamSet& params, const GradMap& grads, AdamState& state);

}  // namespace df
