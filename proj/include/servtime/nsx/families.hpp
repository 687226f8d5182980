#pragma once

#include <string>

#include "servtime/nn/tape.hpp"
#include "servtime/rng.hpp"
#include "servtime/types.hpp"

namespace servtime::nsx {

enum class Family { Gamma, Exponential, Pareto, ChiSquare, LogNormal };

Family parse_family(const std::string& name);
std::string family_name(Family f);
int param_count(Family f);

// Closed-form log density and upper-tail log survival. Parameter vectors:
//   Gamma:       {shape alpha, rate beta}
//   Exponential: {rate beta}
//   Pareto:      {shape a, scale x_m}; support [x_m, inf)
//   ChiSquare:   {dof k}, continuous k > 0
//   LogNormal:   {mu, sigma}
// Out-of-support s yields -inf.
Scalar log_pdf(Family f, const Vec& p, Scalar s);
Scalar log_survival(Family f, const Vec& p, Scalar T);

Scalar sample(Family f, const Vec& p, Rng& rng);
Scalar family_mean(Family f, const Vec& p);

// Maps raw MLP outputs to the family's parameter domain: softplus + 1e-6
// floor on every positive parameter; log-normal mu stays unconstrained;
// the Pareto scale uses pareto_cap * sigmoid(raw) to stay below the data.
nn::ValueRef link_params(nn::Tape& t, Family f, nn::ValueRef raw,
                         Scalar pareto_cap);
Vec link_params_value(Family f, const Vec& raw, Scalar pareto_cap);

// Tape log pdf / log survival from a *linked* parameter node.
nn::ValueRef log_pdf_node(nn::Tape& t, Family f, nn::ValueRef p, Scalar s);
nn::ValueRef log_survival_node(nn::Tape& t, Family f, nn::ValueRef p,
                               Scalar T);

}  // namespace servtime::nsx
