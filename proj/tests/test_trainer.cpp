#include <doctest.h>

#include <cmath>

#include "distmatch/error.hpp"
#include "distmatch/trainer.hpp"
#include "support.hpp"

using namespace distmatch;
using testsupport::Gen;

namespace {

TrainReport report_from(const std::vector<double>& alphas, const std::vector<double>& norms) {
  TrainReport r;
  for (std::size_t k = 0; k < alphas.size(); ++k) r.records.push_back({k, 0, 0.0, norms[k], alphas[k]});
  return r;
}

PolicyConfig width(std::size_t w, std::uint64_t seed = 1) {
  PolicyConfig c;
  c.width = w;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_CASE("StepSchedule: rates and validation") {
  CHECK(StepSchedule::constant(0.3).rate(17) == 0.3);
  const auto rm = StepSchedule::robbins_monro(2.0, 3.0);
  CHECK(rm.rate(0) == 2.0 / 3.0);
  CHECK(rm.rate(5) == 2.0 / 8.0);
  CHECK_THROWS_AS(StepSchedule::robbins_monro(1.0, 0.5).validate(), ParameterError);
  CHECK_THROWS_AS(StepSchedule::robbins_monro(-1.0, 1.0).validate(), ParameterError);
  CHECK(schedule_kind_from_string("robbins-monro") == StepSchedule::Kind::robbins_monro);
  CHECK(to_string(StepSchedule::Kind::adam) == "adam");
  CHECK_THROWS(schedule_kind_from_string("lbfgs"));
}

TEST_CASE("weighted_grad_average: hand examples") {
  CHECK(weighted_grad_average(report_from({0.1, 0.1, 0.1}, {0.0, 0.0, 0.0}), 3) == 0.0);
  CHECK(weighted_grad_average(report_from({0.5, 0.5}, {1.0, 1.0}), 2) == 1.0);
  const auto rm = StepSchedule::robbins_monro(1.0, 1.0);
  CHECK(weighted_grad_average(report_from({rm.rate(0), rm.rate(1)}, {2.0, 1.0}), 2) ==
        doctest::Approx(3.0).epsilon(1e-15));
  CHECK_THROWS_AS(weighted_grad_average(report_from({1.0}, {1.0}), 0), DomainError);
  CHECK_THROWS_AS(weighted_grad_average(report_from({1.0}, {1.0}), 2), ParameterError);
}

TEST_CASE("train: Robbins-Monro step sums equal the harmonic partial sums") {
  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.max_iters = 60;
  cfg.threshold = 0.0;
  cfg.schedule = StepSchedule::robbins_monro(0.5, 2.0);
  const auto grid = build_uniform_grid(2.0, 32, 0.05);
  const auto report = train(EnvSpec::lq(2), width(2), target_cf(StandardNormal{}, grid), grid, cfg);
  REQUIRE(report.records.size() == 60);
  double harmonic = 0.0;
  for (std::size_t k = 0; k < 60; ++k) {
    harmonic += 0.5 / (static_cast<double>(k) + 2.0);
    CHECK(std::abs(step_sum(report, k + 1) - harmonic) <= 1e-12);
    CHECK(report.weighted_trace[k] == doctest::Approx(weighted_grad_average(report, k + 1)).epsilon(1e-12));
    CHECK(report.records[k].iteration == k);
  }
}

TEST_CASE("train: zero-gradient fixpoint leaves the parameters unchanged") {
  const EnvSpec env = EnvSpec::lq(3);
  const auto grid = build_uniform_grid(5.0, 64, 0.05);
  PolicyConfig pc = width(3, 9);
  TrainConfig cfg;
  cfg.batch_size = 64;
  cfg.max_iters = 1;
  cfg.threshold = 0.0;
  cfg.seed = 77;
  cfg.schedule = StepSchedule::constant(0.5);
  PolicyParams p0 = init_params(pc);
  Gen g(1);
  for (auto& v : p0.theta) v = 0.3 * g.normal();
  cfg.initial_theta = p0.theta;
  // The first iteration draws from RandomStream{seed, 1}.substream(0).
  const auto self = simulate_batch(env, p0, 64, RandomStream{77, 1}.substream(0), cfg.good);
  const auto target = empirical_cf(self.returns, grid);
  const auto report = train(env, pc, target, grid, cfg);
  CHECK(report.records[0].loss == 0.0);
  CHECK(report.records[0].grad_norm == 0.0);
  CHECK(report.final_params.theta == p0.theta);
}

TEST_CASE("train: plain steps follow theta - alpha g exactly") {
  const EnvSpec env = EnvSpec::lq(3);
  const auto grid = build_uniform_grid(5.0, 64, 0.05);
  const auto target = target_cf(StandardNormal{}, grid);
  PolicyConfig pc = width(3, 4);
  TrainConfig cfg;
  cfg.batch_size = 100;
  cfg.max_iters = 3;
  cfg.threshold = 0.0;
  cfg.seed = 5;
  cfg.schedule = StepSchedule::robbins_monro(0.7, 1.0);
  const auto report = train(env, pc, target, grid, cfg);

  PolicyParams p = init_params(pc);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto est = estimate_gradient(env, p, target, grid, 100, RandomStream{5, 1}.substream(k), cfg.good);
    CHECK(est.loss == report.records[k].loss);
    for (std::size_t i = 0; i < p.size(); ++i) p.theta[i] -= cfg.schedule.rate(k) * est.grad[i];
  }
  CHECK(report.final_params.theta == p.theta);
}

TEST_CASE("estimate_gradient: the two-pass path matches stored sensitivities") {
  Gen g(2);
  const EnvSpec env = EnvSpec::lq(4);
  const auto grid = build_uniform_grid(5.0, 64, 0.05);
  const auto target = target_cf(StandardNormal{}, grid);
  PolicyParams p = init_params(width(5));
  for (auto& v : p.theta) v = 0.4 * g.normal();
  const RandomStream s{3, 3};
  const auto stored = estimate_gradient(env, p, target, grid, 500, s, {}, 1);
  const auto streamed = estimate_gradient(env, p, target, grid, 500, s, {}, 3, 64);
  CHECK(stored.loss == streamed.loss);
  for (std::size_t i = 0; i < p.size(); ++i) {
    CHECK(streamed.grad[i] == doctest::Approx(stored.grad[i]).epsilon(1e-12));
  }
}

TEST_CASE("train: one-parameter surrogate converges to the attainable Dirac target") {
  // LQ, T=1, s0=0, no dynamics noise: R = -b2^2 / 2, so the target R = -0.5 is reached at b2 = 1.
  const EnvSpec env = EnvSpec::lq(1, 0.0, 0.0);
  const auto grid = build_uniform_grid(1.5, 64, 0.05);
  const auto target = target_cf(DiracAt{-0.5}, grid);
  PolicyConfig pc = width(2);
  PolicyParams p0 = init_params(pc);
  const std::size_t b2 = p0.slice("b2").offset;
  p0.theta[b2] = 0.3;

  // Grid search confirms the minimizer on (0, 2).
  double best_b = 0.0, best_loss = 1e300;
  for (int i = 1; i < 2000; ++i) {
    const double b = i * 1e-3;
    const double l = cf_loss(std::vector<double>{-0.5 * b * b}, target, grid);
    if (l < best_loss) best_loss = l, best_b = b;
  }
  CHECK(best_b == doctest::Approx(1.0).epsilon(1e-3));

  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.max_iters = 500;
  cfg.threshold = 1e-6;
  cfg.schedule = StepSchedule::constant(0.1);
  cfg.initial_theta = p0.theta;
  cfg.trainable.assign(p0.size(), false);
  cfg.trainable[b2] = true;
  double prev = std::abs(p0.theta[b2] - 1.0);
  cfg.checkpoint_every = 1;
  bool monotone = true;
  cfg.on_checkpoint = [&](std::size_t, const PolicyParams& p) {
    const double d = std::abs(p.theta[b2] - 1.0);
    if (d > prev) monotone = false;
    prev = d;
  };
  const auto report = train(env, pc, target, grid, cfg);
  CHECK(report.converged);
  CHECK(report.records.size() <= 500);
  CHECK(report.records.back().loss < 1e-6);
  CHECK(monotone);
  for (std::size_t i = 0; i < p0.size(); ++i) {
    if (i != b2) CHECK(report.final_params.theta[i] == p0.theta[i]);
  }
}

TEST_CASE("train: unreachable target stalls and restarts deterministically") {
  const EnvSpec env = EnvSpec::lq(1, 0.0, 0.0);  // R <= 0 always
  const auto grid = build_uniform_grid(3.0, 32, 0.05);
  const auto target = target_cf(DiracAt{5.0}, grid);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.max_iters = 200;
  cfg.threshold = 1e-3;
  cfg.stall_window = 10;
  cfg.restart_limit = 2;
  cfg.seed = 3;
  cfg.schedule = StepSchedule::constant(0.05);
  const auto a = train(env, width(2), target, grid, cfg);
  const auto b = train(env, width(2), target, grid, cfg);
  CHECK_FALSE(a.converged);
  CHECK(a.stalled);
  CHECK(a.restarts == 2);
  CHECK(a.records.size() == b.records.size());
  CHECK(a.final_params.theta == b.final_params.theta);
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    CHECK(a.records[k].loss == b.records[k].loss);
    CHECK(a.records[k].iteration == k);
  }
  CHECK(a.records.back().restart == 2);
}

TEST_CASE("train: results do not depend on the thread count") {
  const EnvSpec env = EnvSpec::lq(4);
  const auto grid = build_uniform_grid(5.0, 64, 0.05);
  const auto target = target_cf(StandardNormal{}, grid);
  TrainConfig cfg;
  cfg.batch_size = 300;
  cfg.max_iters = 5;
  cfg.threshold = 0.0;
  cfg.schedule = StepSchedule::adam(0.01);
  const auto one = train(env, width(4), target, grid, cfg);
  cfg.threads = 4;
  const auto four = train(env, width(4), target, grid, cfg);
  CHECK(one.final_params.theta == four.final_params.theta);
}

TEST_CASE("train: configuration errors") {
  const auto grid = build_uniform_grid(5.0, 64, 0.05);
  TrainConfig cfg;
  cfg.stall_window = 0;
  CHECK_THROWS_AS(train(EnvSpec::lq(2), width(2), target_cf(StandardNormal{}, grid), grid, cfg), ParameterError);
  TrainConfig ok;
  CHECK_THROWS_AS(train(EnvSpec::lq(2), width(2), target_cf(StandardNormal{}, build_uniform_grid(5.0, 32, 0.05)),
                        grid, ok),
                  GridMismatchError);
}

TEST_CASE("bias_decay_probe: zero-gradient configuration has no slope") {
  // Zero policy on LQ T=1 from s0=0: R = 0 and grad R = 0 on every path.
  const EnvSpec env = EnvSpec::lq(1);
  const auto grid = build_uniform_grid(5.0, 64, 0.05);
  BiasProbeOptions opt;
  opt.reference_batch = 4096;
  const auto res = bias_decay_probe(env, init_params(width(2)), target_cf(StandardNormal{}, grid), grid,
                                    {16, 64, 256}, 5, 1, opt);
  CHECK_FALSE(res.defined);
  CHECK(std::isnan(res.slope));
  for (double e : res.errors) CHECK(e == 0.0);
  CHECK_THROWS_AS(bias_decay_probe(env, init_params(width(2)), target_cf(StandardNormal{}, grid), grid,
                                   {16, 64}, 5, 1, opt),
                  ParameterError);
}
