#pragma once

#include <limits>
#include <string>

#include "distmatch/numerics.hpp"

namespace distmatch {

enum class EnvKind { lq, wealth, cosine, torus };

std::string to_string(EnvKind kind);
EnvKind env_kind_from_string(const std::string& name);

/// Scalar controlled dynamics s_{t+1} = F(s_t, a_t, eps_{t+1}) with reward r(s, a).
///
/// - lq:     F = s + a + sigma_eps * eps,             r = -(s^2 + a^2) / 2
/// - wealth: F = exp(r dt) (s + a y(eps)),            terminal reward s_T
///           y = exp(-r dt) exp((mu - vol^2/2) dt + vol sqrt(dt) eps) - 1;
///           with fraction_actions the invested amount is a * s.
/// - cosine: F = s + a + sigma_eps * eps,             terminal reward amplitude * cos(s_T)
/// - torus:  F = (s + a + sigma_eps * eps) mod 2 pi,  terminal reward s_T
///
/// Actions are hard-clipped to [action_min, action_max]; outside the interval the
/// action derivatives vanish.
struct EnvSpec {
  EnvKind kind = EnvKind::lq;
  int horizon = 1;
  double initial_state = 0.0;
  double initial_std = 0.0;
  double sigma_eps = 0.1;
  // wealth
  double rate = 0.02;
  double drift = 0.06;
  double volatility = 0.4;
  double dt = 0.05;
  bool fraction_actions = false;
  // cosine
  double amplitude = 1.0;

  double action_min = -std::numeric_limits<double>::infinity();
  double action_max = std::numeric_limits<double>::infinity();

  bool has_terminal_reward() const noexcept { return kind != EnvKind::lq; }
  void validate() const;

  static EnvSpec lq(int horizon, double sigma_eps = 0.1, double s0 = 0.0);
  static EnvSpec wealth(int horizon = 20, double dt = 0.05, double rate = 0.02,
                        double drift = 0.06, double volatility = 0.4, double s0 = 100.0);
  static EnvSpec cosine(double sigma_eps = 0.1, double s0 = 0.0, double amplitude = 1.0);
  static EnvSpec torus(int horizon, double sigma_eps = 1.0, double s0 = 0.0);
};

struct StepResult {
  double next_state = 0.0;
  double dF_ds = 0.0;
  double dF_da = 0.0;
};

struct RewardResult {
  double value = 0.0;
  double dr_ds = 0.0;
  double dr_da = 0.0;
};

StepResult step(const EnvSpec& env, int t, double s, double a, double eps);

/// Reward at stage t. Stage t == horizon is the terminal hook (action ignored)
/// and is only valid for environments with a terminal reward.
RewardResult reward(const EnvSpec& env, int t, double s, double a);

double sample_initial(const EnvSpec& env, NormalSampler& sampler);
double sample_initial(const EnvSpec& env, const RandomStream& stream);

}  // namespace distmatch
