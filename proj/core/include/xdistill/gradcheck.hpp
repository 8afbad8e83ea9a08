#pragma once

#include <functional>
#include <string>
#include <vector>

#include "xdistill/tape.hpp"
#include "xdistill/tensor.hpp"

namespace xd::gradcheck {

// A registered check owns its fixture: `inputs` are the tensors whose analytic
// gradients get probed, `forward` rebuilds the scalar loss from their current
// data. Re-running forward after poking an input element is what makes central
// differences possible without replaying tapes.
struct Check {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Tensor(Tape&)> forward;
  // composite objectives cross non-smooth op boundaries (min selection,
  // sampler cells) under finite differencing; they get a looser gate
  real tol_scale = 1;
};

using Factory = std::function<Check(uint64_t seed)>;

const std::vector<std::pair<std::string, Factory>>& registry();

struct CheckResult {
  std::string name;
  int n_probes = 0;
  double max_rel_err = 0;
  double tol = 0;
  bool pass = false;
};

// step/tol defaults matched to the active precision
real default_step();
real default_tol();

CheckResult run_check(const std::string& name, const Factory& factory, uint64_t seed, real step,
                      real tol, int max_probes);
std::vector<CheckResult> run_all(uint64_t seed, real step, real tol, int max_probes = 100);

}  // namespace xd::gradcheck
