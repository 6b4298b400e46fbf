#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>

#include "distmatch/app.hpp"
#include "distmatch/error.hpp"
#include "distmatch/io.hpp"
#include "distmatch/loss.hpp"
#include "distmatch/oracle.hpp"
#include "distmatch/rollout.hpp"
#include "distmatch/trainer.hpp"

namespace distmatch::app {

namespace {

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

using Suite = std::function<std::vector<Check>(std::uint64_t seed)>;

PolicyParams random_params(const PolicyConfig& config, std::uint64_t seed, double scale) {
  PolicyParams p = init_params(config);
  const std::vector<double> z = standard_normal(RandomStream{seed, 0x9e11}, p.size());
  for (std::size_t i = 0; i < p.size(); ++i) p.theta[i] = scale * z[i];
  return p;
}

double mean_return(const EnvSpec& env, const PolicyParams& p, std::size_t m,
                   const RandomStream& stream) {
  RolloutOptions o;
  o.with_grad = false;
  const TrajectoryBatch b = simulate_batch(env, p, m, stream, GoodEventConfig{}, o);
  double s = 0.0;
  for (double r : b.returns) s += r;
  return s / static_cast<double>(m);
}

// Worst ratio |analytic - fd| / max(1e-5, 1e-3 |analytic|) over coordinates.
double pathwise_gradient_ratio(const EnvSpec& env, const PolicyParams& p, std::size_t m,
                               const RandomStream& stream) {
  const TrajectoryBatch b = simulate_batch(env, p, m, stream, GoodEventConfig{});
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    double analytic = 0.0;
    for (std::size_t j = 0; j < m; ++j) analytic += b.grad_return(j)[k];
    analytic /= static_cast<double>(m);
    PolicyParams plus = p, minus = p;
    plus.theta[k] += h;
    minus.theta[k] -= h;
    const double fd = (mean_return(env, plus, m, stream) - mean_return(env, minus, m, stream)) / (2 * h);
    worst = std::max(worst, std::abs(analytic - fd) / std::max(1e-5, 1e-3 * std::abs(analytic)));
  }
  return worst;
}

std::vector<Check> suite_gradients(std::uint64_t seed) {
  std::vector<Check> out;
  PolicyConfig pc;
  pc.width = 3;
  for (const auto& [name, env] :
       {std::pair<std::string, EnvSpec>{"lq T=3", EnvSpec::lq(3)},
        std::pair<std::string, EnvSpec>{"cosine T=1", EnvSpec::cosine()}}) {
    double worst = 0.0;
    for (std::uint64_t r = 0; r < 10; ++r) {
      const PolicyParams p = random_params(pc, seed * 1000 + r, 0.7);
      worst = std::max(worst, pathwise_gradient_ratio(env, p, 16, RandomStream{seed, r}));
    }
    out.push_back({"pathwise gradient " + name, worst <= 1.0,
                   "max error / tolerance " + io::format_double(worst)});
  }

  // Loss gradient against finite differences of the loss on the same streams.
  const EnvSpec env = EnvSpec::lq(3);
  const FrequencyGrid grid = build_uniform_grid(10.0, 128, 0.05);
  const PolicyParams p = random_params(pc, seed + 7, 0.7);
  const CFTable target = target_cf(StandardNormal{}, grid);
  const RandomStream stream{seed, 99};
  const GradientEstimate est = cf_loss_gradient(simulate_batch(env, p, 64, stream, GoodEventConfig{}), target, grid);
  RolloutOptions o;
  o.with_grad = false;
  double worst = 0.0;
  constexpr double h = 1e-5;
  for (std::size_t k = 0; k < p.size(); ++k) {
    PolicyParams plus = p, minus = p;
    plus.theta[k] += h;
    minus.theta[k] -= h;
    const double lp = cf_loss(simulate_batch(env, plus, 64, stream, GoodEventConfig{}, o), target, grid);
    const double lm = cf_loss(simulate_batch(env, minus, 64, stream, GoodEventConfig{}, o), target, grid);
    const double fd = (lp - lm) / (2 * h);
    worst = std::max(worst, std::abs(est.grad[k] - fd) / std::max(1e-5, 1e-3 * std::abs(est.grad[k])));
  }
  out.push_back({"loss gradient vs finite differences", worst <= 1.0,
                 "max error / tolerance " + io::format_double(worst)});
  return out;
}

std::vector<Check> suite_bias(std::uint64_t seed) {
  const EnvSpec env = EnvSpec::lq(3);
  PolicyConfig pc;
  pc.width = 2;
  const PolicyParams p = random_params(pc, seed, 0.5);
  const FrequencyGrid grid = build_uniform_grid(10.0, 256, 0.05);
  RolloutOptions o;
  o.with_grad = false;
  const TrajectoryBatch big = simulate_batch(env, p, 200000, RandomStream{seed, 0xb1a5}, GoodEventConfig{}, o);
  const CFTable target = empirical_cf(big.returns, grid);
  const BiasProbeResult r = bias_decay_probe(env, p, target, grid, {256, 1024, 4096}, 200, seed);
  const bool ok = r.defined && r.slope >= -1.3 && r.slope <= -0.7;
  std::string detail = "slope " + io::format_double(r.slope) + ", errors";
  for (double e : r.errors) detail += " " + io::format_double(e);
  return {{"bias decay slope in [-1.3, -0.7]", ok, detail}};
}

std::vector<Check> suite_epps(std::uint64_t seed) {
  FrequencyGrid grid = build_uniform_grid(40.0, 32000, 0.5);
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (double& w : grid.weights) w *= norm;
  const CFTable target = target_cf(StandardNormal{}, grid);
  double worst = 0.0;
  for (std::uint64_t r = 0; r < 20; ++r) {
    NormalSampler sampler(RandomStream{seed, 0xe995 + r});
    const std::size_t m = 1 + static_cast<std::size_t>(sampler.uniform() * 40);
    const double mu = 2.0 * (sampler.uniform() - 0.5);
    const double sd = 0.2 + 2.0 * sampler.uniform();
    std::vector<double> x(m);
    for (double& v : x) v = mu + sd * sampler.next();
    worst = std::max(worst, std::abs(epps_pulley_loss(x) - cf_loss(x, target, grid)));
  }
  return {{"closed form vs quadrature", worst <= 1e-6, "max gap " + io::format_double(worst)}};
}

std::vector<Check> suite_bernoulli(std::uint64_t) {
  const FrequencyGrid grid = build_uniform_grid(40.0, 16000, 0.05);
  const CFTable target = target_cf(DiracAt{1.0}, grid);
  double worst = 0.0;
  constexpr std::size_t m = 1024;
  for (double p : {0.0, 0.25, 0.5, 1.0}) {
    std::vector<double> x(m, 0.0);
    std::fill(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(std::floor(p * m)), 1.0);
    worst = std::max(worst, std::abs(cf_loss(x, target, grid) - bernoulli_loss(p, grid)));
  }
  return {{"Bernoulli identity", worst <= 1e-10, "max error " + io::format_double(worst)}};
}

std::vector<Check> suite_oracle(std::uint64_t seed) {
  std::vector<Check> out;
  JacobiAngerProblem problem;
  problem.grid = build_uniform_grid(16.0, 8001, 0.05);
  const ModeSolution sol = solve_modes(problem, target_cf(Epanechnikov{}, problem.grid));
  const ActionDensity density = reconstruct_density(sol, {-std::numbers::pi, std::numbers::pi}, 4097);
  constexpr std::size_t m = 1000000;
  const std::vector<double> a = sample_density(density, m, RandomStream{seed, 0x0a});
  const std::vector<Complex> psi = estimate_modes(a, problem.k_modes);
  double worst = 0.0;
  for (int k = 1; k <= problem.k_modes; ++k) worst = std::max(worst, std::abs(psi[k] - sol.psi[k]));
  const double bound = 3.0 / std::sqrt(static_cast<double>(m));
  out.push_back({"density sampling recovers modes", worst <= bound,
                 "max mode error " + io::format_double(worst) + " (bound " + io::format_double(bound) + ")"});

  const double s0 = 0.7, sigma = 0.5;
  const std::vector<Complex> target = wrapped_gaussian_modes(1.1 + s0, sigma * sigma + 0.3, 12);
  const std::vector<Complex> nu = torus_deconvolve(target, s0, sigma);
  double gap = 0.0;
  for (std::size_t n = 0; n < nu.size(); ++n) {
    const double dn = static_cast<double>(n);
    const Complex back = nu[n] * std::polar(std::exp(-0.5 * sigma * sigma * dn * dn), -dn * s0);
    gap = std::max(gap, std::abs(back - target[n]));
  }
  out.push_back({"torus deconvolution round trip", gap <= 1e-12, "max gap " + io::format_double(gap)});
  return out;
}

}  // namespace

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names = {"gradients", "bias", "epps", "bernoulli",
                                                 "oracle-roundtrip", "all"};
  return names;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, std::ostream& log) {
  const std::vector<std::pair<std::string, Suite>> suites = {
      {"gradients", suite_gradients}, {"bias", suite_bias},           {"epps", suite_epps},
      {"bernoulli", suite_bernoulli}, {"oracle-roundtrip", suite_oracle}};
  const bool all = suite == "all";
  if (!all && std::none_of(suites.begin(), suites.end(), [&](const auto& s) { return s.first == suite; })) {
    log << "unknown suite '" << suite << "'\n";
    return kExitConfig;
  }
  bool ok = true;
  try {
    for (const auto& [name, run] : suites) {
      if (!all && name != suite) continue;
      for (const Check& c : run(seed)) {
        log << (c.passed ? "PASS " : "FAIL ") << name << ": " << c.name << " (" << c.detail << ")\n";
        ok = ok && c.passed;
      }
    }
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return ok ? kExitOk : kExitRuntime;
}

}  // namespace distmatch::app
