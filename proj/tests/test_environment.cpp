#include <doctest.h>

#include <cmath>
#include <numbers>

#include "distmatch/environment.hpp"
#include "distmatch/error.hpp"
#include "support.hpp"

using namespace distmatch;
using testsupport::Gen;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

EnvSpec wealth_fraction() {
  EnvSpec env = EnvSpec::wealth();
  env.fraction_actions = true;
  return env;
}

}  // namespace

TEST_CASE("step: spec examples") {
  const auto lq = step(EnvSpec::lq(3), 0, 1.0, 2.0, 0.0);
  CHECK(lq.next_state == 3.0);
  CHECK(lq.dF_ds == 1.0);
  CHECK(lq.dF_da == 1.0);

  const EnvSpec w = EnvSpec::wealth(20, 0.05, 0.02);
  for (double eps : {-3.0, 0.0, 2.5}) {
    const auto r = step(w, 0, 100.0, 0.0, eps);
    CHECK(r.next_state == doctest::Approx(100.1001).epsilon(1e-6));
    CHECK(r.next_state == 100.0 * std::exp(0.001));
  }

  const auto t = step(EnvSpec::torus(1, 1.0), 0, 6.0, 1.0, 0.0);
  CHECK(t.next_state == doctest::Approx(7.0 - kTwoPi).epsilon(1e-14));
  CHECK(t.next_state == doctest::Approx(0.71681).epsilon(1e-5));
}

TEST_CASE("step: stage bounds") {
  CHECK_THROWS_AS(step(EnvSpec::lq(2), 2, 0.0, 0.0, 0.0), StageError);
  CHECK_THROWS_AS(step(EnvSpec::lq(2), -1, 0.0, 0.0, 0.0), StageError);
}

TEST_CASE("reward: spec examples and the terminal hook") {
  const auto r = reward(EnvSpec::lq(1), 0, 1.0, 2.0);
  CHECK(r.value == -2.5);
  CHECK(r.dr_ds == -1.0);
  CHECK(r.dr_da == -2.0);

  const auto c = reward(EnvSpec::cosine(), 1, 0.0, 0.0);
  CHECK(c.value == 1.0);
  CHECK(c.dr_ds == 0.0);
  CHECK(reward(EnvSpec::cosine(), 0, 0.4, 0.1).value == 0.0);

  const auto w = reward(EnvSpec::wealth(), 20, 106.18, 0.0);
  CHECK(w.value == 106.18);
  CHECK(w.dr_ds == 1.0);
  CHECK(w.dr_da == 0.0);
  CHECK(reward(EnvSpec::wealth(), 5, 106.18, 3.0).value == 0.0);

  CHECK_THROWS_AS(reward(EnvSpec::lq(2), 2, 0.0, 0.0), CapabilityError);
  CHECK_THROWS_AS(reward(EnvSpec::wealth(), 21, 0.0, 0.0), StageError);
}

TEST_CASE("sample_initial: configured starting states") {
  CHECK(sample_initial(EnvSpec::lq(10), RandomStream{1, 2}) == 0.0);
  CHECK(sample_initial(EnvSpec::wealth(), RandomStream{1, 2}) == 100.0);
  CHECK(sample_initial(EnvSpec::torus(1, 1.0, 1.0), RandomStream{1, 2}) == 1.0);
  EnvSpec random = EnvSpec::lq(1);
  random.initial_std = 2.0;
  CHECK(sample_initial(random, RandomStream{1, 2}) == sample_initial(random, RandomStream{1, 2}));
  CHECK(sample_initial(random, RandomStream{1, 2}) != sample_initial(random, RandomStream{1, 3}));
}

TEST_CASE("environment: derivatives match central differences") {
  Gen g(12);
  const double h = 1e-5;
  const EnvSpec envs[] = {EnvSpec::lq(4), EnvSpec::wealth(), wealth_fraction(), EnvSpec::cosine(0.1, 0.0, 1.7),
                          EnvSpec::torus(3, 0.5)};
  for (const auto& env : envs) {
    CAPTURE(to_string(env.kind));
    const bool wealth = env.kind == EnvKind::wealth;
    for (int i = 0; i < 1000; ++i) {
      const double s = wealth ? g.uniform(10.0, 200.0) : g.uniform(-3.0, 3.0);
      const double a = wealth ? g.uniform(-1.0, 2.0) * (env.fraction_actions ? 1.0 : s) : g.uniform(-2.0, 2.0);
      const double eps = g.normal();
      if (env.kind == EnvKind::torus) {
        // Skip points within h of the wrap boundary.
        const double raw = s + a + env.sigma_eps * eps;
        const double frac = raw / kTwoPi - std::floor(raw / kTwoPi);
        if (frac * kTwoPi < 2 * h || (1.0 - frac) * kTwoPi < 2 * h) continue;
      }
      const auto r = step(env, 0, s, a, eps);
      const double ds = (step(env, 0, s + h, a, eps).next_state - step(env, 0, s - h, a, eps).next_state) / (2 * h);
      const double da = (step(env, 0, s, a + h, eps).next_state - step(env, 0, s, a - h, eps).next_state) / (2 * h);
      CHECK(std::abs(r.dF_ds - ds) <= 1e-6);
      CHECK(std::abs(r.dF_da - da) <= 1e-6);

      const int t = env.has_terminal_reward() ? env.horizon : 0;
      const auto rw = reward(env, t, s, a);
      const double rs = (reward(env, t, s + h, a).value - reward(env, t, s - h, a).value) / (2 * h);
      const double ra = (reward(env, t, s, a + h).value - reward(env, t, s, a - h).value) / (2 * h);
      CHECK(std::abs(rw.dr_ds - rs) <= 1e-6);
      CHECK(std::abs(rw.dr_da - ra) <= 1e-6);
    }
  }
}

TEST_CASE("environment: wealth with zero investment compounds at the riskless rate") {
  Gen g(13);
  const EnvSpec w = EnvSpec::wealth();
  for (int i = 0; i < 100; ++i) {
    const double s = g.uniform(1.0, 1000.0);
    CHECK(step(w, 3, s, 0.0, g.normal()).next_state == std::exp(w.rate * w.dt) * s);
  }
}

TEST_CASE("environment: torus states stay in [0, 2pi)") {
  Gen g(14);
  const EnvSpec t = EnvSpec::torus(5, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double next = step(t, 0, g.uniform(-50.0, 50.0), g.uniform(-50.0, 50.0), g.normal()).next_state;
    CHECK(next >= 0.0);
    CHECK(next < kTwoPi);
  }
  // Exactly representable multiples of the period wrap to zero.
  CHECK(step(t, 0, 0.0, kTwoPi, 0.0).next_state == 0.0);
}

TEST_CASE("environment: noise-free LQ follows the linear recursion") {
  const EnvSpec env = EnvSpec::lq(10, 0.0, 1.5);
  double s = sample_initial(env, RandomStream{0, 0});
  double closed = 1.5;
  for (int t = 0; t < env.horizon; ++t) {
    const double a = -0.5 * s;
    s = step(env, t, s, a, 3.0).next_state;
    closed *= 0.5;
    CHECK(s == closed);
  }
}

TEST_CASE("environment: action clipping zeroes the action derivatives") {
  EnvSpec env = EnvSpec::lq(1);
  env.action_min = -1.0;
  env.action_max = 1.0;
  const auto inside = step(env, 0, 0.0, 0.5, 0.0);
  const auto outside = step(env, 0, 0.0, 3.0, 0.0);
  CHECK(inside.dF_da == 1.0);
  CHECK(outside.next_state == doctest::Approx(1.0 + 0.0));
  CHECK(outside.dF_da == 0.0);
  CHECK(reward(env, 0, 0.0, 3.0).dr_da == 0.0);
}

TEST_CASE("environment: parameter validation") {
  CHECK_THROWS_AS(EnvSpec::lq(0).validate(), ParameterError);
  EnvSpec w = EnvSpec::wealth();
  w.volatility = 0.0;
  CHECK_THROWS_AS(w.validate(), ParameterError);
  EnvSpec c = EnvSpec::cosine();
  c.horizon = 2;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  CHECK(env_kind_from_string("torus") == EnvKind::torus);
  CHECK_THROWS_AS(env_kind_from_string("cartpole"), ParameterError);
}
