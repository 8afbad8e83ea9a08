#include "xdistill/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace xd {

Adam::Adam(std::vector<NamedTensor> params, real lr, real beta1, real beta2, real eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  check(lr > 0, "Adam: learning rate must be positive");
  slots_.reserve(params.size());
  for (auto& [name, p] : params) {
    Slot s;
    s.name = name;
    s.p = p;
    s.m = Tensor::zeros(p.shape(), false);
    s.v = Tensor::zeros(p.shape(), false);
    slots_.push_back(std::move(s));
  }
}

void Adam::step() {
  // scan everything first so a bad gradient leaves params and state untouched
  for (const Slot& s : slots_) {
    if (!s.p.has_grad()) continue;
    const real* g = s.p.grad_data();
    const size_t n = s.p.numel();
    for (size_t i = 0; i < n; ++i)
      if (!std::isfinite(g[i]))
        fail("adam_step: NaN gradient in parameter '" + s.name + "'");
  }
  ++t_;
  const real bc1 = real(1) - real(std::pow(double(beta1_), double(t_)));
  const real bc2 = real(1) - real(std::pow(double(beta2_), double(t_)));
  for (Slot& s : slots_) {
    real* p = s.p.data();
    real* m = s.m.data();
    real* v = s.v.data();
    const real* g = s.p.has_grad() ? s.p.grad_data() : nullptr;
    const size_t n = s.p.numel();
    for (size_t i = 0; i < n; ++i) {
      const real gi = g ? g[i] : 0;
      m[i] = beta1_ * m[i] + (real(1) - beta1_) * gi;
      v[i] = beta2_ * v[i] + (real(1) - beta2_) * gi * gi;
      const real mhat = m[i] / bc1;
      const real vhat = v[i] / bc2;
      p[i] -= lr_ * mhat / (real(std::sqrt(double(vhat))) + eps_);
    }
  }
}

void Adam::zero_grad() {
  for (Slot& s : slots_)
    if (s.p.has_grad()) s.p.zero_grad();
}

std::vector<NamedTensor> Adam::state() const {
  std::vector<NamedTensor> out;
  out.reserve(slots_.size() * 2 + 1);
  for (const Slot& s : slots_) {
    out.emplace_back("adam.m." + s.name, s.m);
    out.emplace_back("adam.v." + s.name, s.v);
  }
  Tensor t = Tensor::scalar(real(t_));  // exact for any plausible step count
  out.emplace_back("adam.t", t);
  return out;
}

void Adam::load_state(const std::vector<NamedTensor>& state) {
  std::unordered_map<std::string, Tensor> by_name;
  for (const auto& [name, t] : state) by_name.emplace(name, t);
  auto fetch = [&](const std::string& name) -> const Tensor& {
    auto it = by_name.find(name);
    check(it != by_name.end(), "Adam::load_state: missing '" + name + "'");
    return it->second;
  };
  for (Slot& s : slots_) {
    const Tensor& m = fetch("adam.m." + s.name);
    const Tensor& v = fetch("adam.v." + s.name);
    check(m.shape() == s.m.shape() && v.shape() == s.v.shape(),
          "Adam::load_state: shape mismatch for '" + s.name + "'");
    std::copy(m.data(), m.data() + m.numel(), s.m.data());
    std::copy(v.data(), v.data() + v.numel(), s.v.data());
  }
  t_ = int64_t(fetch("adam.t").value());
}

}  // namespace xd
