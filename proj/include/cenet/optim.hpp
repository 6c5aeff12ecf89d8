#pragma once

#include <cstdint>
#include <vector>

#include "cenet/tensor.hpp"

namespace cenet {

/// Adam with bias correction. Parameters are registered once; moment slots
/// follow registration order, so identical registration yields identical
/// trajectories.
class Adam {
 public:
  struct Options {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  explicit Adam(Options opt) : opt_(opt) {}

  void register_param(Parameter& p);
  void register_params(const std::vector<Parameter*>& ps) {
    for (auto* p : ps) register_param(*p);
  }

  /// One update over all registered non-frozen parameters; zeroes grads.
  void step();

  std::uint64_t step_count() const { return step_; }
  const Options& options() const { return opt_; }

 private:
  struct Slot {
    Parameter* param;
    Tensor m;
    Tensor v;
  };
  Options opt_;
  std::vector<Slot> slots_;
  std::uint64_t step_ = 0;
};

}  // namespace cenet
