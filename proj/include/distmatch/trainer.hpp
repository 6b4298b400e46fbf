#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "distmatch/charfn.hpp"
#include "distmatch/environment.hpp"
#include "distmatch/loss.hpp"
#include "distmatch/policy.hpp"
#include "distmatch/rollout.hpp"

namespace distmatch {

struct StepSchedule {
  enum class Kind { constant, robbins_monro, adam };

  Kind kind = Kind::constant;
  double alpha = 0.01;  // constant and adam step
  double a = 1.0;       // robbins_monro: alpha_k = a / (k + k0)
  double k0 = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_am = 1e-8;

  static StepSchedule constant(double alpha);
  static StepSchedule robbins_monro(double a, double k0);
  static StepSchedule adam(double alpha, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8);

  void validate() const;
  /// Nominal step alpha_k for iteration k (0-based).
  double rate(std::size_t k) const;
};

std::string to_string(StepSchedule::Kind kind);
StepSchedule::Kind schedule_kind_from_string(const std::string& name);

struct TrainConfig {
  std::size_t batch_size = 1024;  // M
  std::size_t max_iters = 1000;   // per attempt
  double threshold = 1e-3;
  std::size_t stall_window = 1000;
  std::size_t restart_limit = 0;
  std::uint64_t seed = 0;
  StepSchedule schedule;
  GoodEventConfig good;
  std::size_t threads = 1;
  std::size_t memory_budget_bytes = std::size_t{4} << 30;
  /// Iterations with max|theta| above this bound are counted as box warnings.
  double param_box = 1e3;
  /// Coordinates excluded from updates; empty means all trainable.
  std::vector<bool> trainable;
  /// Starting point for the first attempt instead of init_params.
  std::optional<std::vector<double>> initial_theta;
  std::size_t checkpoint_every = 0;
  std::function<void(std::size_t iteration, const PolicyParams&)> on_checkpoint;

  void validate() const;
};

struct IterationRecord {
  std::size_t iteration = 0;  // global, across restarts
  std::size_t restart = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double alpha = 0.0;
};

struct TrainReport {
  std::vector<IterationRecord> records;
  PolicyParams final_params;
  std::size_t restarts = 0;
  bool converged = false;
  bool stalled = false;
  double best_loss = 0.0;
  /// weighted_trace[K-1] = sum_{k<K} (alpha_k / A_K) grad_norm_k^2
  std::vector<double> weighted_trace;
  std::size_t box_warnings = 0;
  double max_state_deviation = 0.0;
  double wall_seconds = 0.0;
};

/// Gradient of the empirical CF loss on one batch of M trajectories. Stores the
/// M x |theta| sensitivities when they fit the memory budget, otherwise runs a
/// second simulation pass with the same noise and accumulates sum_j c_j grad R_j.
GradientEstimate estimate_gradient(const EnvSpec& env, const PolicyParams& params,
                                   const CFTable& target, const FrequencyGrid& grid,
                                   std::size_t m, const RandomStream& stream,
                                   const GoodEventConfig& good, std::size_t threads = 1,
                                   std::size_t memory_budget_bytes = std::size_t{4} << 30,
                                   double* max_state_deviation = nullptr);

/// theta_{k+1} = theta_k - alpha_k g_k (or the adaptive-moment step) until the
/// loss drops below the threshold. A stall (no new minimum for stall_window
/// iterations) restarts from fresh parameters seeded by (seed, restart index).
TrainReport train(const EnvSpec& env, const PolicyConfig& policy, const CFTable& target,
                  const FrequencyGrid& grid, const TrainConfig& config);

/// A_K = sum_{k<K} alpha_k over the first K records.
double step_sum(const TrainReport& report, std::size_t k);

/// sum_{k<K} (alpha_k / A_K) grad_norm_k^2
double weighted_grad_average(const TrainReport& report, std::size_t k);

struct BiasProbeResult {
  double slope = 0.0;
  bool defined = false;
  std::vector<std::size_t> batch_sizes;
  /// Estimated ||E[g_M] - g_inf|| per batch size.
  std::vector<double> errors;
};

struct BiasProbeOptions {
  std::size_t reference_batch = 1000000;
  std::size_t threads = 1;
  GoodEventConfig good;
  /// Subtract the Monte-Carlo variance of the averaged estimates from the
  /// squared error before taking the square root.
  bool debias = true;
  /// Remove the first-order fluctuation of each estimate with the zero-mean
  /// control variate 2 Re sum beta [conj(phi_M - phi_ref) dphi_ref
  ///   - conj(phi* - phi_ref) (dphi_M - dphi_ref)], built from the reference batch.
  bool control_variate = true;
  /// Trajectories per simulation chunk of the reference batch.
  std::size_t chunk = 65536;
};

/// Regresses log ||mean_r g_M^(r) - g_inf|| on log M; the slope is near -1 for
/// the coupled single-batch estimator.
BiasProbeResult bias_decay_probe(const EnvSpec& env, const PolicyParams& params,
                                 const CFTable& target, const FrequencyGrid& grid,
                                 const std::vector<std::size_t>& batch_sizes,
                                 std::size_t repetitions, std::uint64_t seed,
                                 const BiasProbeOptions& options = {});

}  // namespace distmatch
