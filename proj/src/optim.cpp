#include "cenet/optim.hpp"

#include <cmath>

#include "cenet/kernels.hpp"

namespace cenet {

void Adam::register_param(Parameter& p) {
  slots_.push_back({&p, Tensor::zeros(p.value.shape()),
                    Tensor::zeros(p.value.shape())});
}

void Adam::step() {
  ++step_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
  for (auto& s : slots_) {
    if (!s.param->frozen) {
      kernels::active().adam(s.param->value.data(), s.param->grad.data(),
                             s.m.data(), s.v.data(), s.param->value.numel(),
                             opt_.lr, opt_.beta1, opt_.beta2, opt_.eps, c1,
                             c2);
    }
    s.param->zero_grad();
  }
}

}  // namespace cenet
