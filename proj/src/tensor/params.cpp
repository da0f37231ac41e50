#include "hekp/params.hpp"

#include "hekp/error.hpp"

namespace hekp::ad {

Tensor ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw Error("duplicate parameter name '" + name + "'");
  value.set_requires_grad(true);
  entries_.emplace_back(std::move(name), value);
  return value;
}

bool ParamStore::contains(std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return true;
  return false;
}

const Tensor& ParamStore::at(std::string_view name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw Error("unknown parameter '" + std::string(name) + "'");
}

Tensor& ParamStore::at(std::string_view name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw Error("unknown parameter '" + std::string(name) + "'");
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [n, t] : entries_) out.push_back(t);
  return out;
}

std::vector<Tensor> ParamStore::with_prefix(std::string_view prefix) const {
  std::vector<Tensor> out;
  for (const auto& [n, t] : entries_)
    if (std::string_view(n).substr(0, prefix.size()) == prefix) out.push_back(t);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

ParamStore ParamStore::proxy() const {
  ParamStore out;
  out.entries_.reserve(entries_.size());
  for (const auto& [n, t] : entries_) out.entries_.emplace_back(n, t.clone(true));
  return out;
}

void ParamStore::accumulate_grads(const ParamStore& proxy) {
  if (proxy.entries_.size() != entries_.size())
    throw Error("accumulate_grads: parameter sets differ");
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const Tensor& src = proxy.entries_[k].second;
    if (!src.has_grad()) continue;
    auto dst = entries_[k].second.mutable_grad();
    auto g = src.grad();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }
}

void ParamStore::zero_grad() {
  for (auto& [n, t] : entries_) t.zero_grad();
}

void ParamStore::round_to_float() {
  for (auto& [n, t] : entries_)
    for (double& v : t.mutable_data()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace hekp::ad
