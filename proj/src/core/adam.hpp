// Adam with bias correction. State is kept per parameter node, so disjoint
// parameter groups can be stepped independently without cross-talk.
#pragma once

#include <unordered_map>

#include "tensor.hpp"

namespace lab {

struct AdamConfig {
  real lr = real(2e-4);
  real beta1 = real(0.9);
  real beta2 = real(0.999);
  real eps = real(1e-8);
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  AdamConfig& config() { return cfg_; }

  // applies one update to each parameter from its accumulated .grad
  void step(const std::vector<Tensor>& params);

 private:
  struct State {
    std::vector<real> m, v;
    std::int64_t t = 0;
  };
  AdamConfig cfg_;
  std::unordered_map<Node*, State> state_;
};

}  // namespace lab
