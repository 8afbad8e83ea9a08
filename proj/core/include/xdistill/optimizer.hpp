#pragma once

#include <string>
#include <vector>

#include "xdistill/networks.hpp"

namespace xd {

// Adam with bias correction. A parameter without a gradient buffer is treated
// as having gradient zero, so disabled loss branches cause exactly zero
// updates. Any NaN/inf gradient aborts before touching parameters or state.
class Adam {
 public:
  explicit Adam(std::vector<NamedTensor> params, real lr, real beta1 = real(0.9),
                real beta2 = real(0.999), real eps = real(1e-8));

  void step();
  void zero_grad();

  int64_t t() const { return t_; }
  real lr() const { return lr_; }
  void set_lr(real lr) { lr_ = lr; }

  // moment tensors named adam.m.<param> / adam.v.<param>, plus adam.t
  std::vector<NamedTensor> state() const;
  // restores moments + step counter from checkpoint tensors (names as above)
  void load_state(const std::vector<NamedTensor>& state);

 private:
  struct Slot {
    std::string name;
    Tensor p, m, v;
  };
  std::vector<Slot> slots_;
  real lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace xd
