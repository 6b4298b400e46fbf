#include "distmatch/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "distmatch/error.hpp"

namespace distmatch {

StepSchedule StepSchedule::constant(double alpha) {
  StepSchedule s;
  s.kind = Kind::constant;
  s.alpha = alpha;
  return s;
}

StepSchedule StepSchedule::robbins_monro(double a, double k0) {
  StepSchedule s;
  s.kind = Kind::robbins_monro;
  s.a = a;
  s.k0 = k0;
  return s;
}

StepSchedule StepSchedule::adam(double alpha, double beta1, double beta2, double eps) {
  StepSchedule s;
  s.kind = Kind::adam;
  s.alpha = alpha;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps_am = eps;
  return s;
}

void StepSchedule::validate() const {
  switch (kind) {
    case Kind::constant:
      if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("schedule: alpha must be > 0");
      break;
    case Kind::robbins_monro:
      if (!(a > 0.0) || !std::isfinite(a)) throw ParameterError("schedule: a must be > 0");
      if (!(k0 >= 1.0) || !std::isfinite(k0)) throw ParameterError("schedule: k0 must be >= 1");
      break;
    case Kind::adam:
      if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("schedule: alpha must be > 0");
      if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ParameterError("schedule: moment decay rates must lie in [0, 1)");
      }
      if (!(eps_am > 0.0)) throw ParameterError("schedule: eps must be > 0");
      break;
  }
}

double StepSchedule::rate(std::size_t k) const {
  if (kind == Kind::robbins_monro) return a / (static_cast<double>(k) + k0);
  return alpha;
}

std::string to_string(StepSchedule::Kind kind) {
  switch (kind) {
    case StepSchedule::Kind::constant:
      return "constant";
    case StepSchedule::Kind::robbins_monro:
      return "robbins-monro";
    case StepSchedule::Kind::adam:
      return "adam";
  }
  return "constant";
}

StepSchedule::Kind schedule_kind_from_string(const std::string& name) {
  if (name == "constant") return StepSchedule::Kind::constant;
  if (name == "robbins-monro" || name == "robbins_monro") return StepSchedule::Kind::robbins_monro;
  if (name == "adam") return StepSchedule::Kind::adam;
  throw ParameterError("unknown step schedule '" + name + "'");
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ParameterError("train: batch size must be >= 1");
  if (max_iters < 1) throw ParameterError("train: max_iters must be >= 1");
  if (!(threshold >= 0.0)) throw ParameterError("train: threshold must be >= 0");
  if (stall_window < 1) throw ParameterError("train: stall_window must be >= 1");
  if (!(param_box > 0.0)) throw ParameterError("train: param_box must be > 0");
  schedule.validate();
  good.validate();
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t restart_seed(std::uint64_t seed, std::size_t restart) {
  return mix64(seed ^ mix64(0x7265737461727400ULL + restart));
}

double sq_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

GradientEstimate estimate_gradient(const EnvSpec& env, const PolicyParams& params,
                                   const CFTable& target, const FrequencyGrid& grid,
                                   std::size_t m, const RandomStream& stream,
                                   const GoodEventConfig& good, std::size_t threads,
                                   std::size_t memory_budget_bytes, double* max_state_deviation) {
  RolloutOptions options;
  options.threads = threads;
  options.memory_budget_bytes = memory_budget_bytes;
  const double bytes = static_cast<double>(m) * static_cast<double>(params.size()) * sizeof(double);
  if (bytes <= static_cast<double>(memory_budget_bytes)) {
    const TrajectoryBatch batch = simulate_batch(env, params, m, stream, good, options);
    if (max_state_deviation) *max_state_deviation = batch.max_state_deviation;
    return cf_loss_gradient(batch, target, grid);
  }
  options.with_grad = false;
  const TrajectoryBatch batch = simulate_batch(env, params, m, stream, good, options);
  if (max_state_deviation) *max_state_deviation = batch.max_state_deviation;
  GradientEstimate est;
  est.per_node_residual = cf_residual(batch.returns, target, grid);
  est.loss = loss_from_residual(est.per_node_residual, grid);
  const std::vector<double> c = gradient_weights(batch.returns, est.per_node_residual, grid);
  est.grad = accumulate_weighted_gradient(env, params, stream, good, c, threads);
  est.grad_norm = std::sqrt(sq_norm(est.grad));
  return est;
}

TrainReport train(const EnvSpec& env, const PolicyConfig& policy, const CFTable& target,
                  const FrequencyGrid& grid, const TrainConfig& config) {
  config.validate();
  policy.validate();
  env.validate();
  if (!same_nodes(target, grid)) {
    throw GridMismatchError("train: target table is not tabulated on the grid nodes");
  }
  const auto start = std::chrono::steady_clock::now();

  TrainReport report;
  report.best_loss = std::numeric_limits<double>::infinity();
  const StepSchedule& schedule = config.schedule;
  double step_total = 0.0;
  double weighted_total = 0.0;
  std::size_t global = 0;

  for (std::size_t restart = 0;; ++restart) {
    PolicyConfig attempt_config = policy;
    if (restart > 0) attempt_config.seed = restart_seed(config.seed, restart);
    PolicyParams params = init_params(attempt_config);
    if (restart == 0 && config.initial_theta) {
      if (config.initial_theta->size() != params.size()) {
        throw LengthError("train: initial theta does not match the policy architecture");
      }
      params.theta = *config.initial_theta;
    }
    const std::size_t n = params.size();
    if (!config.trainable.empty() && config.trainable.size() != n) {
      throw LengthError("train: trainable mask does not match the policy architecture");
    }
    std::vector<double> m1(n, 0.0), m2(n, 0.0);
    const RandomStream attempt_stream{config.seed, 1 + restart};
    double attempt_best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    bool stalled = false;

    for (std::size_t k = 0; k < config.max_iters; ++k, ++global) {
      GradientEstimate est;
      double deviation = 0.0;
      try {
        est = estimate_gradient(env, params, target, grid, config.batch_size,
                                attempt_stream.substream(k), config.good, config.threads,
                                config.memory_budget_bytes, &deviation);
      } catch (const DivergenceError& e) {
        throw DivergenceError("iteration " + std::to_string(k) + " of attempt " +
                                  std::to_string(restart) + ": " + e.what(),
                              e.trajectory(), e.stage());
      }
      report.max_state_deviation = std::max(report.max_state_deviation, deviation);

      const double alpha = schedule.rate(k);
      report.records.push_back({global, restart, est.loss, est.grad_norm, alpha});
      step_total += alpha;
      weighted_total += alpha * est.grad_norm * est.grad_norm;
      report.weighted_trace.push_back(weighted_total / step_total);
      report.best_loss = std::min(report.best_loss, est.loss);

      if (est.loss < config.threshold) {
        report.converged = true;
        report.final_params = std::move(params);
        report.restarts = restart;
        break;
      }

      if (schedule.kind == StepSchedule::Kind::adam) {
        const double kk = static_cast<double>(k + 1);
        const double c1 = 1.0 - std::pow(schedule.beta1, kk);
        const double c2 = 1.0 - std::pow(schedule.beta2, kk);
        for (std::size_t p = 0; p < n; ++p) {
          if (!config.trainable.empty() && !config.trainable[p]) continue;
          const double g = est.grad[p];
          m1[p] = schedule.beta1 * m1[p] + (1.0 - schedule.beta1) * g;
          m2[p] = schedule.beta2 * m2[p] + (1.0 - schedule.beta2) * g * g;
          params.theta[p] -= alpha * (m1[p] / c1) / (std::sqrt(m2[p] / c2) + schedule.eps_am);
        }
      } else {
        for (std::size_t p = 0; p < n; ++p) {
          if (!config.trainable.empty() && !config.trainable[p]) continue;
          params.theta[p] -= alpha * est.grad[p];
        }
      }

      double box = 0.0;
      for (double v : params.theta) box = std::max(box, std::abs(v));
      if (box > config.param_box) ++report.box_warnings;

      if (config.checkpoint_every > 0 && config.on_checkpoint &&
          (global + 1) % config.checkpoint_every == 0) {
        config.on_checkpoint(global, params);
      }

      if (est.loss < attempt_best) {
        attempt_best = est.loss;
        since_best = 0;
      } else if (++since_best >= config.stall_window) {
        stalled = true;
        ++global;
        break;
      }
    }
    if (report.converged) break;
    if (stalled && restart < config.restart_limit) continue;
    report.final_params = std::move(params);
    report.restarts = restart;
    report.stalled = stalled;
    break;
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double step_sum(const TrainReport& report, std::size_t k) {
  if (k > report.records.size()) throw ParameterError("step_sum: K exceeds recorded iterations");
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += report.records[i].alpha;
  return s;
}

double weighted_grad_average(const TrainReport& report, std::size_t k) {
  if (k == 0) throw DomainError("weighted_grad_average: K must be >= 1");
  if (k > report.records.size()) {
    throw ParameterError("weighted_grad_average: K exceeds recorded iterations");
  }
  const double a_k = step_sum(report, k);
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& r = report.records[i];
    s += r.alpha * r.grad_norm * r.grad_norm;
  }
  return s / a_k;
}

namespace {

// Running sums of e^{i u_l R_j} and i u_l e^{i u_l R_j} grad R_j over trajectories.
struct CFSums {
  std::size_t nodes = 0;
  std::size_t params = 0;
  std::size_t count = 0;
  std::vector<Complex> phi;
  std::vector<Complex> dphi;  // nodes x params

  CFSums(std::size_t l, std::size_t n) : nodes(l), params(n), phi(l), dphi(l * n) {}

  void add(const TrajectoryBatch& batch, const FrequencyGrid& grid) {
    std::vector<Complex> phase(nodes);
    for (std::size_t j = 0; j < batch.trajectories; ++j) {
      const double r = batch.returns[j];
      const auto g = batch.grad_return(j);
      for (std::size_t l = 0; l < nodes; ++l) {
        const Complex e = std::polar(1.0, grid.nodes[l] * r);
        phi[l] += e;
        const Complex w = Complex(0.0, grid.nodes[l]) * e;
        Complex* row = &dphi[l * params];
        for (std::size_t p = 0; p < params; ++p) row[p] += w * g[p];
      }
    }
    count += batch.trajectories;
  }

  void normalize() {
    const double inv = 1.0 / static_cast<double>(count);
    for (auto& v : phi) v *= inv;
    for (auto& v : dphi) v *= inv;
  }
};

// -2 sum_l beta_l Re(conj(phi* - phi) dphi)
std::vector<double> gradient_from_sums(const CFSums& s, const CFTable& target,
                                       const FrequencyGrid& grid) {
  std::vector<double> g(s.params, 0.0);
  for (std::size_t l = 0; l < s.nodes; ++l) {
    const Complex res = std::conj(target.values[l] - s.phi[l]);
    for (std::size_t p = 0; p < s.params; ++p) {
      g[p] -= 2.0 * grid.weights[l] * (res * s.dphi[l * s.params + p]).real();
    }
  }
  return g;
}

}  // namespace

BiasProbeResult bias_decay_probe(const EnvSpec& env, const PolicyParams& params,
                                 const CFTable& target, const FrequencyGrid& grid,
                                 const std::vector<std::size_t>& batch_sizes,
                                 std::size_t repetitions, std::uint64_t seed,
                                 const BiasProbeOptions& options) {
  if (batch_sizes.size() < 3) throw ParameterError("bias_decay_probe: need at least 3 batch sizes");
  for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
    if (batch_sizes[i] < 1 || (i > 0 && batch_sizes[i] <= batch_sizes[i - 1])) {
      throw ParameterError("bias_decay_probe: batch sizes must be strictly increasing");
    }
  }
  if (repetitions < 2) throw ParameterError("bias_decay_probe: need at least 2 repetitions");
  if (options.reference_batch < 1 || options.chunk < 1) {
    throw ParameterError("bias_decay_probe: reference batch and chunk must be >= 1");
  }
  if (!same_nodes(target, grid)) {
    throw GridMismatchError("bias_decay_probe: target table is not tabulated on the grid nodes");
  }

  const std::size_t n = params.size();
  const std::size_t nodes = grid.size();
  RolloutOptions rollout;
  rollout.threads = options.threads;

  CFSums ref(nodes, n);
  {
    const RandomStream base{seed, 0};
    std::size_t done = 0;
    for (std::size_t c = 0; done < options.reference_batch; ++c) {
      const std::size_t m = std::min(options.chunk, options.reference_batch - done);
      ref.add(simulate_batch(env, params, m, base.substream(c), options.good, rollout), grid);
      done += m;
    }
    ref.normalize();
  }
  const std::vector<double> reference = gradient_from_sums(ref, target, grid);

  BiasProbeResult result;
  result.batch_sizes = batch_sizes;
  std::vector<double> mean(n), var(n), est(n);
  double per_sample_trace = 0.0;
  std::vector<double> squared(batch_sizes.size());
  std::vector<double> noise(batch_sizes.size());
  for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
    const std::size_t m = batch_sizes[i];
    const RandomStream base{seed, 1 + i};
    std::fill(mean.begin(), mean.end(), 0.0);
    std::fill(var.begin(), var.end(), 0.0);
    for (std::size_t r = 0; r < repetitions; ++r) {
      CFSums s(nodes, n);
      s.add(simulate_batch(env, params, m, base.substream(r), options.good, rollout), grid);
      s.normalize();
      est = gradient_from_sums(s, target, grid);
      if (options.control_variate) {
        for (std::size_t l = 0; l < nodes; ++l) {
          const Complex a = std::conj(s.phi[l] - ref.phi[l]);
          const Complex b = std::conj(target.values[l] - ref.phi[l]);
          for (std::size_t p = 0; p < n; ++p) {
            const Complex cv = a * ref.dphi[l * n + p] - b * (s.dphi[l * n + p] - ref.dphi[l * n + p]);
            est[p] -= 2.0 * grid.weights[l] * cv.real();
          }
        }
      }
      // Welford accumulation per coordinate.
      const double count = static_cast<double>(r + 1);
      for (std::size_t p = 0; p < n; ++p) {
        const double d = est[p] - mean[p];
        mean[p] += d / count;
        var[p] += d * (est[p] - mean[p]);
      }
    }
    double sq = 0.0, trace = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double d = mean[p] - reference[p];
      sq += d * d;
      trace += var[p] / static_cast<double>(repetitions - 1);
    }
    squared[i] = sq;
    noise[i] = trace / static_cast<double>(repetitions);
    per_sample_trace = trace * static_cast<double>(m);
  }

  // Without the control variate the reference carries its own sampling noise.
  const double reference_noise =
      options.control_variate ? 0.0
                              : per_sample_trace / static_cast<double>(options.reference_batch);
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < batch_sizes.size(); ++i) {
    double sq = squared[i];
    if (options.debias) sq -= noise[i] + reference_noise;
    const double err = sq > 0.0 ? std::sqrt(sq) : 0.0;
    result.errors.push_back(err);
    if (err > 0.0) {
      xs.push_back(std::log(static_cast<double>(batch_sizes[i])));
      ys.push_back(std::log(err));
    }
  }
  if (xs.size() != batch_sizes.size()) {
    result.slope = std::numeric_limits<double>::quiet_NaN();
    result.defined = false;
    return result;
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(xs.size());
  my /= static_cast<double>(xs.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  result.slope = sxy / sxx;
  result.defined = true;
  return result;
}

}  // namespace distmatch
