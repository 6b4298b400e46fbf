// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "distmatch/app.hpp"
#include "distmatch/charfn.hpp"
#include "distmatch/error.hpp"
#include "distmatch/io.hpp"
#include "distmatch/loss.hpp"
#include "distmatch/numerics.hpp"
#include "distmatch/oracle.hpp"
#include "distmatch/rollout.hpp"
#include "distmatch/trainer.hpp"

using namespace distmatch;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

fs::path preset(const std::string& name) {
  return fs::path(DISTMATCH_SOURCE_DIR) / "presets" / (name + ".json");
}

PolicyParams random_params(const PolicyConfig& cfg, RandomStream stream, double scale) {
  PolicyParams p = init_params(cfg);
  NormalSampler s(stream);
  for (auto& v : p.theta) v = scale * s.next();
  return p;
}

double mean_return(const EnvSpec& env, const PolicyParams& p, std::size_t m, const RandomStream& s) {
  RolloutOptions o;
  o.with_grad = false;
  const auto b = simulate_batch(env, p, m, s, {}, o);
  double sum = 0.0;
  for (double r : b.returns) sum += r;
  return sum / static_cast<double>(m);
}

// Largest |analytic - fd| / max(1e-5, 1e-3 |fd|) over the coordinates of the batch-mean gradient.
double pathwise_ratio(const EnvSpec& env, PolicyParams p, std::size_t m, const RandomStream& s) {
  const auto batch = simulate_batch(env, p, m, s, {});
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double analytic = 0.0;
    for (std::size_t j = 0; j < m; ++j) analytic += batch.grad_return(j)[i];
    analytic /= static_cast<double>(m);
    const double keep = p.theta[i];
    p.theta[i] = keep + h;
    const double up = mean_return(env, p, m, s);
    p.theta[i] = keep - h;
    const double down = mean_return(env, p, m, s);
    p.theta[i] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(analytic - fd) / std::max(1e-5, 1e-3 * std::abs(fd)));
  }
  return worst;
}

Outcome pathwise_gradients() {
  PolicyConfig pc;
  pc.width = 4;
  double lq = 0.0, cosine = 0.0;
  for (std::uint64_t r = 0; r < 50; ++r) {
    lq = std::max(lq, pathwise_ratio(EnvSpec::lq(3), random_params(pc, {101, r}, 0.7), 32, {102, r}));
    cosine = std::max(cosine, pathwise_ratio(EnvSpec::cosine(), random_params(pc, {103, r}, 0.7), 32, {104, r}));
  }
  return {lq <= 1.0 && cosine <= 1.0,
          "worst error/tolerance LQ " + fmt(lq) + ", cosine " + fmt(cosine) + " over 50 random theta"};
}

Outcome estimator_identity() {
  PolicyConfig pc;
  pc.width = 4;
  const EnvSpec env = EnvSpec::lq(3);
  const auto grid = build_uniform_grid(10.0, 256, 0.05);
  RolloutOptions o;
  o.with_grad = false;
  const auto ref = simulate_batch(env, random_params(pc, {201, 0}, 0.5), 4096, {202, 0}, {}, o);
  const auto target = empirical_cf(ref.returns, grid);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::uint64_t r = 0; r < 10; ++r) {
    PolicyParams p = random_params(pc, {203, r}, 0.7);
    const RandomStream s{204, r};
    const auto est = cf_loss_gradient(simulate_batch(env, p, 256, s, {}), target, grid);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.theta[i];
      p.theta[i] = keep + h;
      const double up = cf_loss(simulate_batch(env, p, 256, s, {}, o), target, grid);
      p.theta[i] = keep - h;
      const double down = cf_loss(simulate_batch(env, p, 256, s, {}, o), target, grid);
      p.theta[i] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(est.grad[i] - fd) / std::max(1e-5, 1e-3 * std::abs(fd)));
    }
  }
  return {worst <= 1.0, "worst error/tolerance " + fmt(worst) + " over 10 parameter draws"};
}

Outcome bias_decay() {
  PolicyConfig pc;
  pc.width = 2;
  const EnvSpec env = EnvSpec::lq(3);
  const PolicyParams p = random_params(pc, {301, 0}, 0.5);
  const auto grid = build_uniform_grid(10.0, 256, 0.05);
  RolloutOptions o;
  o.with_grad = false;
  const auto big = simulate_batch(env, p, 200000, {302, 0}, {}, o);
  const auto target = empirical_cf(big.returns, grid);
  const auto r = bias_decay_probe(env, p, target, grid, {256, 1024, 4096}, 200, 303);
  std::string detail = "slope " + fmt(r.slope) + ", errors";
  for (double e : r.errors) detail += " " + fmt(e);
  return {r.defined && r.slope >= -1.3 && r.slope <= -0.7, detail};
}

Outcome epps_pulley() {
  FrequencyGrid grid = build_uniform_grid(40.0, 32000, 0.5);
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (auto& w : grid.weights) w *= c;
  const auto target = target_cf(StandardNormal{}, grid);
  double worst = 0.0;
  for (std::uint64_t r = 0; r < 100; ++r) {
    NormalSampler s(RandomStream{401, r});
    const std::size_t m = 1 + static_cast<std::size_t>(s.uniform() * 50);
    const double mu = 4.0 * (s.uniform() - 0.5), sd = 0.1 + 3.0 * s.uniform();
    std::vector<double> x(m);
    for (auto& v : x) v = mu + sd * s.next();
    worst = std::max(worst, std::abs(epps_pulley_loss(x) - cf_loss(x, target, grid)));
  }
  return {worst <= 1e-6, "max gap " + fmt(worst) + " over 100 sample sets"};
}

Outcome bernoulli() {
  const auto grid = build_uniform_grid(40.0, 16000, 0.05);
  const auto target = target_cf(DiracAt{1.0}, grid);
  double worst = 0.0;
  for (double p : {0.0, 0.25, 0.5, 1.0}) {
    const std::size_t m = 4096;
    std::vector<double> x(m, 0.0);
    std::fill(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(p * m), 1.0);
    worst = std::max(worst, std::abs(cf_loss(x, target, grid) - bernoulli_loss(p, grid)));
  }
  return {worst <= 1e-10, "max error " + fmt(worst)};
}

Outcome jacobi_anger() {
  JacobiAngerProblem problem;
  problem.s0 = 0.0;
  problem.sigma = 0.1;
  problem.amplitude = 1.0;
  problem.k_modes = 16;
  problem.grid = build_uniform_grid(16.0, 8001, 0.05);
  const auto sol = solve_modes(problem, target_cf(Epanechnikov{}, problem.grid));
  const auto density = reconstruct_density(sol, {-std::numbers::pi, std::numbers::pi}, 8193);

  const std::size_t m = 100000;
  const auto actions = sample_density(density, m, {601, 0});
  const auto eps = standard_normal({601, 1}, m);
  std::vector<double> returns(m), exact(m);
  for (std::size_t j = 0; j < m; ++j) returns[j] = std::cos(problem.s0 + actions[j] + problem.sigma * eps[j]);
  NormalSampler u(RandomStream{601, 2});
  // Inverse CDF of 3/4 (1 - x^2) on [-1, 1].
  for (auto& v : exact) v = 2.0 * std::sin(std::asin(2.0 * u.uniform() - 1.0) / 3.0);
  const double w1 = wasserstein1(returns, exact);
  const bool ok = sol.residual_norm <= 1e-3 && sol.odd_mode_max <= 1e-8 && w1 <= 0.05;
  return {ok, "residual " + fmt(sol.residual_norm) + ", odd modes " + fmt(sol.odd_mode_max) + ", W1 " + fmt(w1)};
}

Outcome torus() {
  double gap = 0.0;
  int trials = 0;
  for (double s0 : {0.0, 0.7, 2.5}) {
    for (double sigma : {0.3, 0.5, 1.0}) {
      const auto target = wrapped_gaussian_modes(1.1 + s0, sigma * sigma + 0.4, 16);
      const auto nu = torus_deconvolve(target, s0, sigma);
      for (std::size_t n = 0; n < nu.size(); ++n) {
        const double dn = static_cast<double>(n);
        gap = std::max(gap, std::abs(nu[n] * std::polar(std::exp(-0.5 * sigma * sigma * dn * dn), -dn * s0) - target[n]));
      }
      ++trials;
    }
  }
  bool rejected = false;
  try {
    torus_deconvolve(wrapped_gaussian_modes(1.0, 0.0, 8), 0.0, 0.5);
  } catch (const InfeasibleTargetError& e) {
    rejected = !e.modes().empty() && e.modes().front() == 1;
  }
  return {gap <= 1e-12 && rejected,
          "max gap " + fmt(gap) + " over " + std::to_string(trials) + " targets, Dirac target " +
              (rejected ? "rejected" : "accepted")};
}

struct Loaded {
  app::RunConfig cfg;
  FrequencyGrid grid;
  CFTable target;
};

Loaded load(const std::string& name, app::Overrides o = {}) {
  Loaded l;
  l.cfg = app::load_run_config(preset(name), o);
  l.grid = app::make_grid(l.cfg.grid);
  l.target = app::target_table(l.cfg.target, l.cfg.env, l.grid);
  return l;
}

Outcome lq_training() {
  Loaded base = load("lq");
  int hits = 0;
  std::string losses;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TrainConfig tc = base.cfg.train;
    tc.seed = seed;
    const auto report = train(base.cfg.env, base.cfg.policy, base.target, base.grid, tc);
    const double last = report.records.back().loss;
    if (report.converged && last <= 5e-3) ++hits;
    losses += (losses.empty() ? "" : " ") + fmt(last);
  }
  return {hits >= 8, std::to_string(hits) + "/10 seeds reached loss <= 5e-3 (final losses " + losses + ")"};
}

// Trains a wealth preset, then scores a fresh batch against fresh target samples.
struct WealthScore {
  double loss = 0.0;
  double w1 = 0.0;
  std::size_t iterations = 0;
};

WealthScore wealth_score(const std::string& name) {
  Loaded l = load(name);
  const auto report = train(l.cfg.env, l.cfg.policy, l.target, l.grid, l.cfg.train);
  const std::size_t m = l.cfg.train.batch_size;
  RolloutOptions o;
  o.with_grad = false;
  const auto batch = simulate_batch(l.cfg.env, report.final_params, m, {l.cfg.train.seed, 0x61636365}, {}, o);
  app::TargetConfig fresh = l.cfg.target;
  fresh.seed += 1;
  const auto reference = app::target_samples(fresh, l.cfg.env, m);
  return {cf_loss(batch.returns, l.target, l.grid), wasserstein1(batch.returns, reference), report.records.size()};
}

Outcome wealth() {
  const double s0 = EnvSpec::wealth().initial_state;
  const WealthScore full = wealth_score("wealth-full");
  const WealthScore uniform = wealth_score("wealth-uniform");
  const bool ok = full.loss <= 1e-2 && full.w1 / s0 <= 0.02 && uniform.loss <= 1e-2;
  return {ok, "full investment: loss " + fmt(full.loss) + ", W1/s0 " + fmt(full.w1 / s0) + " after " +
                  std::to_string(full.iterations) + " iterations; uniform fraction: loss " + fmt(uniform.loss)};
}

Outcome diagnostic_trend() {
  Loaded base = load("lq");
  const std::size_t k = 150;
  int hits = 0;
  std::string ratios;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TrainConfig tc = base.cfg.train;
    tc.seed = seed;
    tc.threshold = 0.0;
    tc.max_iters = 2 * k;
    tc.stall_window = 4 * k;
    tc.restart_limit = 0;
    // alpha_0 = 1e-3 keeps the first plain steps small against initial gradient norms of 3 to 5.
    tc.schedule = StepSchedule::robbins_monro(0.02, 20.0);
    const auto report = train(base.cfg.env, base.cfg.policy, base.target, base.grid, tc);
    const double ratio = weighted_grad_average(report, 2 * k) / weighted_grad_average(report, k);
    if (ratio <= 1.1) ++hits;
    ratios += (ratios.empty() ? "" : " ") + fmt(ratio);
  }
  return {hits >= 8, std::to_string(hits) + "/10 runs with value(2K) <= 1.1 value(K), K=" + std::to_string(k) +
                         " (ratios " + ratios + ")"};
}

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "pathwise gradient exactness", 60, pathwise_gradients},
      {2, "estimator identity", 60, estimator_identity},
      {3, "bias decay", 600, bias_decay},
      {4, "Epps-Pulley equivalence", 60, epps_pulley},
      {5, "Bernoulli reduction", 60, bernoulli},
      {6, "Jacobi-Anger oracle", 300, jacobi_anger},
      {7, "torus deconvolution", 60, torus},
      {8, "LQ training at desk scale", 1800, lq_training},
      {9, "wealth training", 1800, wealth},
      {10, "convergence diagnostic trend", 1800, diagnostic_trend},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = out.pass && in_time;
    if (!pass) ++failures;
    std::printf("%s criterion %d: %s (%s; %.1fs of %.0fs)\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                out.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
