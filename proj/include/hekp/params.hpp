#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hekp/tensor.hpp"

namespace hekp::ad {

// Ordered collection of named learnable leaves. Order is insertion order and
// fixes the checkpoint layout.
class ParamStore {
 public:
  // Registers `value` as a gradient-requiring leaf and returns the handle.
  Tensor add(std::string name, Tensor value);

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<Tensor> tensors() const;
  std::vector<Tensor> with_prefix(std::string_view prefix) const;
  std::size_t scalar_count() const;

  // Fresh leaves holding copies of every value, for a private graph.
  ParamStore proxy() const;
  // grad += proxy.grad for every parameter the proxy touched.
  void accumulate_grads(const ParamStore& proxy);
  void zero_grad();
  // Rounds every value to the nearest 32-bit float.
  void round_to_float();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace hekp::ad
