#pragma once

#include <functional>
#include <string>
#include <vector>

#include "servtime/types.hpp"

namespace servtime::nn {

// Named dense parameter array with matching gradient buffer. Matrices are
// stored flattened row-major with shape = {rows, cols}.
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  Vec values;
  Vec grad;

  int size() const { return static_cast<int>(values.size()); }
  int rows() const { return shape[0]; }
  int cols() const { return shape.size() > 1 ? shape[1] : 1; }
  void zero_grad() { grad.setZero(); }

  static ParamTensor matrix(const std::string& name, int rows, int cols);
  static ParamTensor vector(const std::string& name, int n);
  static ParamTensor scalar(const std::string& name);
};

struct ValueRef {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Append-only record of primitive ops over dense vectors. All values are
// Vec; scalars are length-1 vectors. Creation order is topological order,
// so the backward pass is a single reverse sweep.
class Tape {
 public:
  ValueRef constant(Vec v);
  ValueRef constant(Scalar x);
  ValueRef zeros(int n);

  // Leaf bound to a parameter tensor; backward accumulates into p.grad.
  ValueRef param(ParamTensor& p);

  ValueRef add(ValueRef a, ValueRef b);
  ValueRef sub(ValueRef a, ValueRef b);
  ValueRef mul(ValueRef a, ValueRef b);  // elementwise
  ValueRef inv(ValueRef a);              // elementwise 1/x
  // k*a + c, elementwise with scalar constants
  ValueRef affine(ValueRef a, Scalar k, Scalar c);
  ValueRef scale(ValueRef a, Scalar k) { return affine(a, k, 0.0); }
  ValueRef neg(ValueRef a) { return affine(a, -1.0, 0.0); }

  // W is a param/leaf holding a rows x cols matrix flattened row-major.
  ValueRef matvec(ValueRef w, ValueRef x, int rows, int cols);
  ValueRef dot(ValueRef a, ValueRef b);
  ValueRef sum(ValueRef a);
  ValueRef mean(ValueRef a);
  ValueRef concat(const std::vector<ValueRef>& parts);
  ValueRef slice(ValueRef a, int start, int len);

  // scalar (length-1) b broadcast over a
  ValueRef bcast_mul(ValueRef a, ValueRef b);
  ValueRef bcast_add(ValueRef a, ValueRef b);

  ValueRef tanh_(ValueRef a);
  ValueRef sigmoid_(ValueRef a);
  ValueRef exp_(ValueRef a);
  ValueRef log_(ValueRef a);
  ValueRef softplus_(ValueRef a);
  ValueRef relu_(ValueRef a);  // max(0, x)
  ValueRef abs_(ValueRef a);
  ValueRef square_(ValueRef a);
  ValueRef lgamma_(ValueRef a);

  // log of regularized upper incomplete gamma Q(a, x); scalar inputs.
  // d/dx is analytic; d/da falls back to a central difference.
  ValueRef log_gamma_q_(ValueRef a, ValueRef x);
  // log standard-normal survival, elementwise.
  ValueRef log_normal_sf_(ValueRef z);
  // phi(w, d) = (e^{w d} - 1) / w with a series branch near w = 0;
  // w scalar node, d a scalar constant.
  ValueRef expm1_over_w(ValueRef w, Scalar d);

  const Vec& value(ValueRef r) const { return nodes_[r.idx].value; }
  Scalar scalar(ValueRef r) const { return nodes_[r.idx].value[0]; }
  int size(ValueRef r) const { return static_cast<int>(nodes_[r.idx].value.size()); }

  // Reverse sweep from a scalar loss. Accumulates into bound ParamTensor
  // grads; call zero_grad on the tensors first.
  void backward(ValueRef loss);

  // Adjoint of a non-parameter node after backward (used by tests).
  const Vec& adjoint(ValueRef r) const { return nodes_[r.idx].adjoint; }

  void clear() { nodes_.clear(); }
  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Vec value;
    Vec adjoint;
    std::function<void(Tape&, const Vec&)> back;  // empty for leaves
    ParamTensor* bound = nullptr;
  };

  ValueRef push(Vec value, std::function<void(Tape&, const Vec&)> back);
  void accum(int idx, const Vec& contribution);
  const Vec& val(int idx) const { return nodes_[idx].value; }

  std::vector<Node> nodes_;
};

}  // namespace servtime::nn
