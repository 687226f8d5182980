#pragma once

#include <optional>
#include <string>
#include <vector>

#include "servtime/nn/tape.hpp"
#include "servtime/rng.hpp"

namespace servtime::nn {

// Glorot-uniform fill for weight matrices; biases stay zero.
void init_uniform(ParamTensor& w, int fan_in, int fan_out, Rng& rng);

// Feed-forward net with tanh hidden activations and a linear output layer.
// When noise vectors are supplied, one standard-normal draw per hidden
// layer is added to that layer's pre-activation.
class Mlp {
 public:
  Mlp() = default;
  // dims = {input, hidden..., output}
  Mlp(const std::string& prefix, const std::vector<int>& dims, Rng& rng);

  ValueRef forward(Tape& t, ValueRef input,
                   const std::vector<Vec>* noise = nullptr) const;
  Vec forward_value(const Vec& input,
                    const std::vector<Vec>* noise = nullptr) const;

  // Forward pass that also emits d(output)/d(input[coord]) as tape values.
  // Output must be 1-dimensional. Used for Lipschitz penalties, where the
  // input gradient itself must be differentiable w.r.t. the weights.
  struct WithGrad {
    ValueRef out;        // scalar
    ValueRef din_coord;  // scalar, derivative of out w.r.t. input[coord]
  };
  WithGrad forward_with_input_grad(Tape& t, ValueRef input, int coord) const;

  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }
  const std::vector<int>& dims() const { return dims_; }
  int n_hidden() const { return static_cast<int>(dims_.size()) - 2; }

  // Draw one noise vector per hidden layer.
  std::vector<Vec> draw_noise(Rng& rng) const;

 private:
  std::vector<int> dims_;
  std::vector<ParamTensor> params_;  // W0, b0, W1, b1, ...
};

// Gated recurrent unit, h' = z .* h + (1 - z) .* tanh-candidate.
// A saturated update gate therefore carries the previous state.
class GruCell {
 public:
  GruCell() = default;
  GruCell(const std::string& prefix, int input_dim, int hidden_dim, Rng& rng);

  ValueRef step(Tape& t, ValueRef x, ValueRef h_prev) const;
  Vec step_value(const Vec& x, const Vec& h_prev) const;  // no-tape inference

  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }
  int hidden_dim() const { return hidden_dim_; }
  int input_dim() const { return input_dim_; }

 private:
  int input_dim_ = 0, hidden_dim_ = 0;
  // Wz, Uz, bz, Wr, Ur, br, Wc, Uc, bc
  std::vector<ParamTensor> params_;
};

class LstmCell {
 public:
  LstmCell() = default;
  LstmCell(const std::string& prefix, int input_dim, int hidden_dim, Rng& rng);

  struct State {
    ValueRef h, c;
  };
  State step(Tape& t, ValueRef x, State prev) const;
  std::pair<Vec, Vec> step_value(const Vec& x, const Vec& h_prev,
                                 const Vec& c_prev) const;

  std::vector<ParamTensor>& params() { return params_; }
  const std::vector<ParamTensor>& params() const { return params_; }
  int hidden_dim() const { return hidden_dim_; }
  int input_dim() const { return input_dim_; }

 private:
  int input_dim_ = 0, hidden_dim_ = 0;
  // Wi, Ui, bi, Wf, Uf, bf, Wo, Uo, bo, Wg, Ug, bg
  std::vector<ParamTensor> params_;
};

}  // namespace servtime::nn
