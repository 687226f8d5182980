#include "servtime/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace servtime::nn {

Adam::Adam(std::vector<ParamTensor*> params, Config cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (ParamTensor* p : params_) {
    m_.push_back(Vec::Zero(p->size()));
    v_.push_back(Vec::Zero(p->size()));
  }
}

void Adam::step() {
  for (ParamTensor* p : params_) {
    if (!p->grad.allFinite())
      throw std::runtime_error("Adam: non-finite gradient in tensor '" +
                               p->name + "'");
  }
  ++step_;
  const Scalar bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<Scalar>(step_));
  const Scalar bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<Scalar>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ParamTensor& p = *params_[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] +
            (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    const Vec m_hat = m_[i] / bc1;
    const Vec v_hat = v_[i] / bc2;
    p.values -= cfg_.lr * m_hat.cwiseQuotient(
                              (v_hat.cwiseSqrt().array() + cfg_.eps).matrix());
  }
}

void Adam::zero_grad() {
  for (ParamTensor* p : params_) p->zero_grad();
}

}  // namespace servtime::nn
