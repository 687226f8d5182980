#pragma once

#include <vector>

#include "servtime/nn/tape.hpp"

namespace servtime::nn {

// Adam with bias correction over a fixed set of parameter tensors.
class Adam {
 public:
  struct Config {
    Scalar lr = 1e-4;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
  };

  Adam() = default;
  Adam(std::vector<ParamTensor*> params, Config cfg);

  // Applies one update from the current grads. Throws std::runtime_error
  // naming the offending tensor if any grad is non-finite.
  void step();
  void zero_grad();
  long step_count() const { return step_; }
  const Config& config() const { return cfg_; }

 private:
  std::vector<ParamTensor*> params_;
  std::vector<Vec> m_, v_;
  Config cfg_;
  long step_ = 0;
};

}  // namespace servtime::nn
