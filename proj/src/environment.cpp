#include "distmatch/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "distmatch/error.hpp"

namespace distmatch {

std::string to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::lq: return "lq";
    case EnvKind::wealth: return "wealth";
    case EnvKind::cosine: return "cosine";
    case EnvKind::torus: return "torus";
  }
  return "unknown";
}

EnvKind env_kind_from_string(const std::string& name) {
  if (name == "lq") return EnvKind::lq;
  if (name == "wealth") return EnvKind::wealth;
  if (name == "cosine") return EnvKind::cosine;
  if (name == "torus") return EnvKind::torus;
  throw ParameterError("unknown environment kind '" + name + "'");
}

void EnvSpec::validate() const {
  if (horizon < 1) throw ParameterError("environment: horizon must be >= 1");
  if (kind == EnvKind::cosine && horizon != 1) {
    throw ParameterError("environment: cosine environment has horizon 1");
  }
  if (!std::isfinite(initial_state) || !(initial_std >= 0.0)) {
    throw ParameterError("environment: invalid initial state");
  }
  if (kind == EnvKind::wealth) {
    if (!(volatility > 0.0)) throw ParameterError("environment: wealth volatility must be > 0");
    if (!(dt > 0.0)) throw ParameterError("environment: wealth dt must be > 0");
  } else if (!(sigma_eps >= 0.0)) {
    throw ParameterError("environment: sigma_eps must be >= 0");
  }
  if (!(action_min < action_max)) throw ParameterError("environment: empty action interval");
}

EnvSpec EnvSpec::lq(int horizon, double sigma_eps, double s0) {
  EnvSpec env;
  env.kind = EnvKind::lq;
  env.horizon = horizon;
  env.sigma_eps = sigma_eps;
  env.initial_state = s0;
  return env;
}

EnvSpec EnvSpec::wealth(int horizon, double dt, double rate, double drift, double volatility,
                        double s0) {
  EnvSpec env;
  env.kind = EnvKind::wealth;
  env.horizon = horizon;
  env.dt = dt;
  env.rate = rate;
  env.drift = drift;
  env.volatility = volatility;
  env.initial_state = s0;
  return env;
}

EnvSpec EnvSpec::cosine(double sigma_eps, double s0, double amplitude) {
  EnvSpec env;
  env.kind = EnvKind::cosine;
  env.horizon = 1;
  env.sigma_eps = sigma_eps;
  env.initial_state = s0;
  env.amplitude = amplitude;
  return env;
}

EnvSpec EnvSpec::torus(int horizon, double sigma_eps, double s0) {
  EnvSpec env;
  env.kind = EnvKind::torus;
  env.horizon = horizon;
  env.sigma_eps = sigma_eps;
  env.initial_state = s0;
  return env;
}

namespace {

struct ClippedAction {
  double value;
  double slope;  // d(clipped)/da
};

ClippedAction clip_action(const EnvSpec& env, double a) {
  if (a < env.action_min) return {env.action_min, 0.0};
  if (a > env.action_max) return {env.action_max, 0.0};
  return {a, 1.0};
}

}  // namespace

StepResult step(const EnvSpec& env, int t, double s, double a, double eps) {
  if (t < 0 || t >= env.horizon) {
    throw StageError("step: stage " + std::to_string(t) + " outside [0, " +
                     std::to_string(env.horizon) + ")");
  }
  const auto [action, slope] = clip_action(env, a);
  StepResult out;
  switch (env.kind) {
    case EnvKind::lq:
    case EnvKind::cosine:
      out = {s + action + env.sigma_eps * eps, 1.0, 1.0};
      break;
    case EnvKind::wealth: {
      const double growth = std::exp(env.rate * env.dt);
      const double excess =
          std::exp(-env.rate * env.dt) *
              std::exp((env.drift - 0.5 * env.volatility * env.volatility) * env.dt +
                       env.volatility * std::sqrt(env.dt) * eps) -
          1.0;
      if (env.fraction_actions) {
        out = {growth * (s + action * s * excess), growth * (1.0 + action * excess),
               growth * s * excess};
      } else {
        out = {growth * (s + action * excess), growth, growth * excess};
      }
      break;
    }
    case EnvKind::torus: {
      constexpr double kTwoPi = 2.0 * std::numbers::pi;
      const double raw = s + action + env.sigma_eps * eps;
      double wrapped = raw - kTwoPi * std::floor(raw / kTwoPi);
      if (wrapped >= kTwoPi) wrapped = 0.0;
      out = {wrapped, 1.0, 1.0};
      break;
    }
  }
  out.dF_da *= slope;
  return out;
}

RewardResult reward(const EnvSpec& env, int t, double s, double a) {
  if (t < 0 || t > env.horizon) {
    throw StageError("reward: stage " + std::to_string(t) + " outside [0, " +
                     std::to_string(env.horizon) + "]");
  }
  if (t == env.horizon && !env.has_terminal_reward()) {
    throw CapabilityError("reward: environment '" + to_string(env.kind) +
                          "' has no terminal reward");
  }
  const auto [action, slope] = clip_action(env, a);
  switch (env.kind) {
    case EnvKind::lq:
      return {-0.5 * (s * s + action * action), -s, -action * slope};
    case EnvKind::wealth:
    case EnvKind::torus:
      if (t < env.horizon) return {0.0, 0.0, 0.0};
      return {s, 1.0, 0.0};
    case EnvKind::cosine:
      if (t < env.horizon) return {0.0, 0.0, 0.0};
      return {env.amplitude * std::cos(s), -env.amplitude * std::sin(s), 0.0};
  }
  return {};
}

double sample_initial(const EnvSpec& env, NormalSampler& sampler) {
  if (env.initial_std > 0.0) return env.initial_state + env.initial_std * sampler.next();
  return env.initial_state;
}

double sample_initial(const EnvSpec& env, const RandomStream& stream) {
  NormalSampler sampler(stream);
  return sample_initial(env, sampler);
}

}  // namespace distmatch
