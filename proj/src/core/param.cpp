#include "core/param.hpp"

#include <cmath>

namespace df {

void ParamSet::insert(const std::string& path, Tensor value, bool trainable) {
  require(!path.empty(), "ParamSet: empty path");
  require(!contains(path), "ParamSet: duplicate path '" + path + "'");
  require(value.valid() && value.node < 0, "ParamSet: value must be a plain tensor");
  entries_[path] = Entry{std::move(value), trainable};
}

const Tensor& ParamSet::get(const std::string& path) const {
  auto it = entries_.find(path);
  require(it != entries_.end(), "ParamSet: unknown path '" + path + "'");
  return it->second.value;
}

void ParamSet::set_value(const std::string& path, Tensor value) {
  auto it = entries_.find(path);
  require(it != entries_.end(), "ParamSet: unknown path '" + path + "'");
  require(value.shape() == it->second.value.shape(),
          "ParamSet: shape mismatch for '" + path + "': " + shape_str(value.shape()) + " vs " +
              shape_str(it->second.value.shape()));
  it->second.value = std::move(value);
}

bool ParamSet::trainable(const std::string& path) const {
  auto it = entries_.find(path);
  require(it != entries_.end(), "ParamSet: unknown path '" + path + "'");
  return it->second.trainable;
}

void ParamSet::set_trainable(const std::string& path, bool trainable) {
  auto it = entries_.find(path);
  require(it != entries_.end(), "ParamSet: unknown path '" + path + "'");
  it->second.trainable = trainable;
}

void ParamSet::set_trainable_prefix(const std::string& prefix, bool trainable) {
  for (auto& [path, e] : entries_)
    if (path.rfind(prefix, 0) == 0) e.trainable = trainable;
}

std::vector<std::string> ParamSet::paths() const {
  std::vector<std::string> r;
  r.reserve(entries_.size());
  for (const auto& [path, e] : entries_) r.push_back(path);
  return r;
}

std::vector<std::string> ParamSet::trainable_paths() const {
  std::vector<std::string> r;
  for (const auto& [path, e] : entries_)
    if (e.trainable) r.push_back(path);
  return r;
}

const Tensor& BoundParams::operator()(const std::string& path) {
  if (!tape_ || !ps_->trainable(path)) return ps_->get(path);
  auto it = watched_.find(path);
  if (it == watched_.end()) it = watched_.emplace(path, tape_->leaf(ps_->get(path))).first;
  return it->second;
}

GradMap BoundParams::trainable_grads() const {
  GradMap g;
  for (const auto& path : ps_->trainable_paths()) {
    auto it = watched_.find(path);
    if (it != watched_.end() && tape_ && tape_->has_grad(it->second))
      g[path] = tape_->grad(it->second);
    else
      g[path] = Tensor::zeros(ps_->get(path).shape());
  }
  return g;
}

void adam_step(ParamSet& params, const GradMap& grads, AdamState& state) {
  auto tr = params.trainable_paths();
  require(grads.size() == tr.size(), "adam_step: gradient map must cover exactly the trainable entries (" +
                                         std::to_string(grads.size()) + " vs " + std::to_string(tr.size()) + ")");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (const std::string& path : tr) {
    auto git = grads.find(path);
    require(git != grads.end(), "adam_step: missing gradient for '" + path + "'");
    const Tensor& p = params.get(path);
    const Tensor& g = git->second;
    require(g.shape() == p.shape(), "adam_step: gradient shape " + shape_str(g.shape()) +
                                        " does not match parameter '" + path + "' " + shape_str(p.shape()));
    const size_t n = static_cast<size_t>(p.numel());
    auto& m = state.m[path];
    auto& v = state.v[path];
    if (m.empty()) m.assign(n, 0.0);
    if (v.empty()) v.assign(n, 0.0);
    std::vector<double> upd(n);
    const double* pg = g.data();
    const double* pp = p.data();
    for (size_t i = 0; i < n; ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * pg[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * pg[i] * pg[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      upd[i] = pp[i] - state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
    params.set_value(path, Tensor::from(p.shape(), std::move(upd)));
  }
}

}  // namespace df
