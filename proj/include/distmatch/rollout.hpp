#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "distmatch/environment.hpp"
#include "distmatch/numerics.hpp"
#include "distmatch/policy.hpp"

namespace distmatch {

/// Good-event realization: truncation of the policy noise z_t and the dynamics
/// noise eps_t. `clip` projects onto [-bound, bound], `resample` redraws until
/// inside, `off` leaves the normals untouched.
struct GoodEventConfig {
  enum class Mode { clip, resample, off };

  double z_bound = 6.0;
  double eps_bound = 6.0;
  Mode mode = Mode::clip;

  void validate() const;
};

/// M simulated trajectories, stored trajectory-major.
struct TrajectoryBatch {
  std::size_t trajectories = 0;
  std::size_t horizon = 0;
  std::size_t parameters = 0;

  std::vector<double> states;      // M x (T+1)
  std::vector<double> actions;     // M x T
  std::vector<double> cumulative;  // M x (T+1), stage rewards only
  std::vector<double> returns;     // M, cumulative[T] plus terminal reward
  std::vector<double> z;           // M x T
  std::vector<double> eps;         // M x T, eps[t] drives s_{t+1}
  std::vector<double> grad_returns;  // M x |theta|, empty without gradients

  /// Largest |s_t - mean_t(s)| over trajectories and stages.
  double max_state_deviation = 0.0;

  bool has_gradients() const noexcept { return !grad_returns.empty(); }
  double state(std::size_t j, std::size_t t) const { return states[j * (horizon + 1) + t]; }
  double action(std::size_t j, std::size_t t) const { return actions[j * horizon + t]; }
  double cumulative_reward(std::size_t j, std::size_t t) const {
    return cumulative[j * (horizon + 1) + t];
  }
  std::span<const double> grad_return(std::size_t j) const {
    return std::span<const double>(grad_returns).subspan(j * parameters, parameters);
  }
};

struct RolloutOptions {
  bool with_grad = true;
  std::size_t threads = 1;
  /// Upper bound on the dense M x |theta| sensitivity matrix.
  std::size_t memory_budget_bytes = std::size_t{4} << 30;
};

/// Trajectory j draws its noise from base_stream.substream(j): the initial
/// state (when random), then z_t followed by eps_{t+1} for every stage.
/// With gradients, pathwise sensitivities are propagated forward:
///   Da_t     = df/dtheta + df/ds Ds_t + df/dR DR_t
///   Ds_{t+1} = dF/ds Ds_t + dF/da Da_t
///   DR_{t+1} = DR_t + dr/ds Ds_t + dr/da Da_t
/// starting from Ds_0 = DR_0 = 0.
TrajectoryBatch simulate_batch(const EnvSpec& env, const PolicyParams& params, std::size_t m,
                               const RandomStream& base_stream, const GoodEventConfig& good,
                               const RolloutOptions& options = {});

/// sum_j weights[j] * grad R_T^j without storing per-trajectory sensitivities.
/// Uses the same noise as simulate_batch with the same base stream.
std::vector<double> accumulate_weighted_gradient(const EnvSpec& env, const PolicyParams& params,
                                                 const RandomStream& base_stream,
                                                 const GoodEventConfig& good,
                                                 std::span<const double> weights,
                                                 std::size_t threads = 1);

/// Fixed reference behaviour a = action(t, s, R, z) used to generate target samples.
using ReferencePolicy = std::function<double(int t, double s, double cumulative, double z)>;

/// Terminal returns of M trajectories under a reference policy (no gradients).
std::vector<double> simulate_returns(const EnvSpec& env, const ReferencePolicy& policy,
                                     std::size_t m, const RandomStream& base_stream,
                                     const GoodEventConfig& good);

/// Debug dump, CSV `traj,t,s,a,R` (a is empty at t = T).
void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryBatch& batch);

/// Time feature for stage t of a T-stage problem.
double time_feature(TimeEncoding encoding, int t, int horizon);

}  // namespace distmatch
