#include "distmatch/loss.hpp"

#include <cmath>
#include <numbers>

#include "distmatch/error.hpp"

namespace distmatch {

namespace {

void check_target(const CFTable& target, const FrequencyGrid& grid) {
  if (!same_nodes(target, grid)) {
    throw GridMismatchError("loss: target table is not tabulated on the grid nodes");
  }
}

}  // namespace

std::vector<Complex> cf_residual(std::span<const double> returns, const CFTable& target,
                                 const FrequencyGrid& grid) {
  check_target(target, grid);
  const CFTable empirical = empirical_cf(returns, grid);
  std::vector<Complex> residual(grid.size());
  for (std::size_t l = 0; l < grid.size(); ++l) {
    residual[l] = target.values[l] - empirical.values[l];
  }
  return residual;
}

double loss_from_residual(std::span<const Complex> residual, const FrequencyGrid& grid) {
  if (residual.size() != grid.size()) {
    throw LengthError("loss: residual length does not match the grid");
  }
  double loss = 0.0;
  for (std::size_t l = 0; l < residual.size(); ++l) loss += grid.weights[l] * std::norm(residual[l]);
  return loss;
}

double cf_loss(std::span<const double> returns, const CFTable& target, const FrequencyGrid& grid) {
  return loss_from_residual(cf_residual(returns, target, grid), grid);
}

double cf_loss(const TrajectoryBatch& batch, const CFTable& target, const FrequencyGrid& grid) {
  return cf_loss(batch.returns, target, grid);
}

std::vector<double> gradient_weights(std::span<const double> returns,
                                     std::span<const Complex> residual, const FrequencyGrid& grid) {
  if (returns.empty()) throw EmptySampleError("loss: no returns");
  if (residual.size() != grid.size()) {
    throw LengthError("loss: residual length does not match the grid");
  }
  const std::size_t n_nodes = grid.size();
  // a_l = beta_l u_l conj(residual_l); c_j = (2/M) sum_l Im(a_l e^{i u_l R_j}).
  std::vector<Complex> a(n_nodes);
  for (std::size_t l = 0; l < n_nodes; ++l) {
    a[l] = grid.weights[l] * grid.nodes[l] * std::conj(residual[l]);
  }
  const double scale = 2.0 / static_cast<double>(returns.size());
  const double du = grid.spacing();
  constexpr std::size_t kAnchor = 64;
  std::vector<double> c(returns.size());
  for (std::size_t j = 0; j < returns.size(); ++j) {
    const double r = returns[j];
    const Complex rot = std::polar(1.0, du * r);
    double acc = 0.0;
    Complex phase;
    for (std::size_t l = 0; l < n_nodes; ++l) {
      if (l % kAnchor == 0) {
        phase = std::polar(1.0, grid.nodes[l] * r);
      } else {
        phase *= rot;
      }
      acc += a[l].real() * phase.imag() + a[l].imag() * phase.real();
    }
    c[j] = scale * acc;
  }
  return c;
}

GradientEstimate cf_loss_gradient(const TrajectoryBatch& batch, const CFTable& target,
                                  const FrequencyGrid& grid) {
  if (!batch.has_gradients()) {
    throw CapabilityError("loss: batch was simulated without gradients");
  }
  GradientEstimate est;
  est.per_node_residual = cf_residual(batch.returns, target, grid);
  est.loss = loss_from_residual(est.per_node_residual, grid);
  const std::vector<double> c = gradient_weights(batch.returns, est.per_node_residual, grid);
  est.grad.assign(batch.parameters, 0.0);
  for (std::size_t j = 0; j < batch.trajectories; ++j) {
    const auto g = batch.grad_return(j);
    for (std::size_t p = 0; p < batch.parameters; ++p) est.grad[p] += c[j] * g[p];
  }
  double sq = 0.0;
  for (double g : est.grad) sq += g * g;
  est.grad_norm = std::sqrt(sq);
  return est;
}

double epps_pulley_loss(std::span<const double> samples) {
  if (samples.empty()) throw EmptySampleError("epps_pulley_loss: no samples");
  const double m = static_cast<double>(samples.size());
  double pair = 0.0;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    pair += 1.0;  // diagonal
    for (std::size_t k = j + 1; k < samples.size(); ++k) {
      const double d = samples[j] - samples[k];
      pair += 2.0 * std::exp(-0.5 * d * d);
    }
  }
  double single = 0.0;
  for (double r : samples) single += std::exp(-0.25 * r * r);
  return pair / (m * m) - std::numbers::sqrt2 * single / m + 1.0 / std::sqrt(3.0);
}

double bernoulli_constant(const FrequencyGrid& grid) {
  double c = 0.0;
  for (std::size_t l = 0; l < grid.size(); ++l) {
    // |e^{iu} - 1|^2 = 2 (1 - cos u) = 4 sin^2(u/2)
    const double s = std::sin(0.5 * grid.nodes[l]);
    c += grid.weights[l] * 4.0 * s * s;
  }
  return c;
}

double bernoulli_loss(double p, const FrequencyGrid& grid) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("bernoulli_loss: p must lie in [0, 1]");
  const double q = 1.0 - p;
  return bernoulli_constant(grid) * q * q;
}

double bias_bound(const FrequencyGrid& grid, double grad_r_bound, std::size_t m) {
  if (m < 1) throw ParameterError("bias_bound: need M >= 1");
  double s = 0.0;
  for (std::size_t l = 0; l < grid.size(); ++l) s += std::abs(grid.weights[l] * grid.nodes[l]);
  return 4.0 * grad_r_bound * s / static_cast<double>(m);
}

}  // namespace distmatch
