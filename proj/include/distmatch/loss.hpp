#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "distmatch/charfn.hpp"
#include "distmatch/numerics.hpp"
#include "distmatch/rollout.hpp"

namespace distmatch {

struct GradientEstimate {
  double loss = 0.0;
  std::vector<double> grad;
  /// phi*(u_l) - phi_hat(u_l)
  std::vector<Complex> per_node_residual;
  double grad_norm = 0.0;
};

/// phi*(u_l) - phi_hat(u_l) for the empirical law of `returns`.
std::vector<Complex> cf_residual(std::span<const double> returns, const CFTable& target,
                                 const FrequencyGrid& grid);

/// sum_l beta_l |residual_l|^2
double loss_from_residual(std::span<const Complex> residual, const FrequencyGrid& grid);

/// sum_l beta_l |phi*(u_l) - phi_hat(u_l)|^2. Throws GridMismatchError when the
/// target is tabulated on other nodes.
double cf_loss(std::span<const double> returns, const CFTable& target, const FrequencyGrid& grid);
double cf_loss(const TrajectoryBatch& batch, const CFTable& target, const FrequencyGrid& grid);

/// Per-trajectory coefficients c_j with grad L_hat = sum_j c_j grad R_j:
///   c_j = (2/M) sum_l beta_l u_l Im(conj(residual_l) e^{i u_l R_j}).
std::vector<double> gradient_weights(std::span<const double> returns,
                                     std::span<const Complex> residual, const FrequencyGrid& grid);

/// Loss and its exact gradient on one batch (the same samples enter phi_hat and
/// its derivative). Throws CapabilityError when the batch has no sensitivities.
GradientEstimate cf_loss_gradient(const TrajectoryBatch& batch, const CFTable& target,
                                  const FrequencyGrid& grid);

/// Closed-form Gaussian-weighted distance to the standard normal:
///   (1/M^2) sum_jk exp(-(R_j - R_k)^2 / 2) - sqrt(2) (1/M) sum_j exp(-R_j^2 / 4) + 1/sqrt(3)
double epps_pulley_loss(std::span<const double> samples);

/// C_w = sum_l beta_l |e^{i u_l} - 1|^2
double bernoulli_constant(const FrequencyGrid& grid);

/// Loss of a Bernoulli(p) return law against the Dirac target at 1: C_w (1 - p)^2.
double bernoulli_loss(double p, const FrequencyGrid& grid);

/// 4 B sum_l |beta_l u_l| / M
double bias_bound(const FrequencyGrid& grid, double grad_r_bound, std::size_t m);

}  // namespace distmatch
