#pragma once

#include <cstddef>
#include <vector>

#include "hekp/tensor.hpp"

namespace hekp::ad {

struct AdamWOptions {
  double lr = 1e-3;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay and independent parameter groups, each
// with its own learning rate.
class AdamW {
 public:
  void add_group(std::vector<Tensor> params, const AdamWOptions& options);

  // Applies one update from the accumulated gradients, then zeroes them.
  // Throws if any parameter has no gradient buffer.
  void step();

  std::size_t step_count() const { return step_; }
  std::size_t group_count() const { return groups_.size(); }
  const AdamWOptions& options(std::size_t group) const { return groups_.at(group).options; }

 private:
  struct Group {
    AdamWOptions options;
    std::vector<Tensor> params;
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;
  };
  std::vector<Group> groups_;
  std::size_t step_ = 0;
};

}  // namespace hekp::ad
