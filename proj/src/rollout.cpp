#include "distmatch/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <thread>

#include "distmatch/error.hpp"
#include "distmatch/io.hpp"

namespace distmatch {

void GoodEventConfig::validate() const {
  if (mode == Mode::off) return;
  if (!(z_bound >= 1.0) || !(eps_bound >= 1.0)) {
    throw ParameterError("good event: truncation bounds must be >= 1");
  }
}

double time_feature(TimeEncoding encoding, int t, int horizon) {
  if (encoding == TimeEncoding::raw) return static_cast<double>(t);
  return static_cast<double>(horizon - t) / static_cast<double>(horizon);
}

namespace {

double draw_noise(NormalSampler& sampler, double bound, GoodEventConfig::Mode mode) {
  double v = sampler.next();
  switch (mode) {
    case GoodEventConfig::Mode::off:
      return v;
    case GoodEventConfig::Mode::clip:
      return std::clamp(v, -bound, bound);
    case GoodEventConfig::Mode::resample:
      while (std::abs(v) > bound) v = sampler.next();
      return v;
  }
  return v;
}

// Output slots for one trajectory; null members are skipped.
struct TrajectorySlots {
  double* states = nullptr;
  double* actions = nullptr;
  double* cumulative = nullptr;
  double* z = nullptr;
  double* eps = nullptr;
  double* grad = nullptr;         // written with DR_T
  double* grad_accum = nullptr;   // += weight * DR_T
  double weight = 0.0;
};

class TrajectorySimulator {
 public:
  TrajectorySimulator(const EnvSpec& env, const PolicyParams& params,
                      const GoodEventConfig& good, bool with_grad)
      : env_(env),
        params_(params),
        good_(good),
        with_grad_(with_grad),
        evaluator_(params),
        n_(params.theta.size()) {
    if (with_grad_) {
      ds_.resize(n_);
      dr_.resize(n_);
    }
  }

  // Returns R_T (terminal reward included).
  double run(std::size_t index, const RandomStream& stream, const TrajectorySlots& slots) {
    NormalSampler sampler(stream);
    const int horizon = env_.horizon;
    double s = sample_initial(env_, sampler);
    double cumulative = 0.0;
    if (with_grad_) {
      std::fill(ds_.begin(), ds_.end(), 0.0);
      std::fill(dr_.begin(), dr_.end(), 0.0);
    }
    if (slots.states) slots.states[0] = s;
    if (slots.cumulative) slots.cumulative[0] = 0.0;

    for (int t = 0; t < horizon; ++t) {
      const double z = draw_noise(sampler, good_.z_bound, good_.mode);
      const double eps = draw_noise(sampler, good_.eps_bound, good_.mode);
      evaluator_.evaluate(s, cumulative, z, time_feature(params_.config.time_encoding, t, horizon),
                          eval_, with_grad_);
      const double a = eval_.action;
      const StepResult next = step(env_, t, s, a, eps);
      const RewardResult r = reward(env_, t, s, a);
      if (!std::isfinite(a) || !std::isfinite(next.next_state) || !std::isfinite(r.value)) {
        throw DivergenceError("rollout diverged in trajectory " + std::to_string(index) +
                                  " at stage " + std::to_string(t),
                              index, static_cast<std::size_t>(t));
      }
      if (with_grad_) {
        const double* g = eval_.grad_theta.data();
        for (std::size_t p = 0; p < n_; ++p) {
          const double da = g[p] + eval_.df_ds * ds_[p] + eval_.df_dR * dr_[p];
          const double ds = ds_[p];
          dr_[p] += r.dr_ds * ds + r.dr_da * da;
          ds_[p] = next.dF_ds * ds + next.dF_da * da;
        }
      }
      if (slots.z) slots.z[t] = z;
      if (slots.eps) slots.eps[t] = eps;
      if (slots.actions) slots.actions[t] = a;
      s = next.next_state;
      cumulative += r.value;
      if (slots.states) slots.states[t + 1] = s;
      if (slots.cumulative) slots.cumulative[t + 1] = cumulative;
    }

    double total = cumulative;
    if (env_.has_terminal_reward()) {
      const RewardResult terminal = reward(env_, horizon, s, 0.0);
      if (!std::isfinite(terminal.value)) {
        throw DivergenceError("rollout diverged in trajectory " + std::to_string(index) +
                                  " at terminal stage",
                              index, static_cast<std::size_t>(horizon));
      }
      total += terminal.value;
      if (with_grad_) {
        for (std::size_t p = 0; p < n_; ++p) dr_[p] += terminal.dr_ds * ds_[p];
      }
    }
    if (with_grad_) {
      if (slots.grad) std::copy(dr_.begin(), dr_.end(), slots.grad);
      if (slots.grad_accum) {
        for (std::size_t p = 0; p < n_; ++p) slots.grad_accum[p] += slots.weight * dr_[p];
      }
    }
    return total;
  }

 private:
  const EnvSpec& env_;
  const PolicyParams& params_;
  const GoodEventConfig& good_;
  bool with_grad_;
  PolicyEvaluator evaluator_;
  PolicyEval eval_;
  std::size_t n_;
  std::vector<double> ds_;
  std::vector<double> dr_;
};

// Runs body(worker, begin, end) over [0, count) split into contiguous ranges.
template <typename Body>
void parallel_ranges(std::size_t count, std::size_t threads, Body body) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    body(std::size_t{0}, std::size_t{0}, count);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t begin = count * w / threads;
    const std::size_t end = count * (w + 1) / threads;
    pool.emplace_back([&, w, begin, end] {
      try {
        body(w, begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void check_inputs(const EnvSpec& env, const PolicyParams& params, std::size_t m,
                  const GoodEventConfig& good) {
  if (m < 1) throw ParameterError("rollout: need at least one trajectory");
  env.validate();
  good.validate();
  if (params.theta.size() != params.config.parameter_count()) {
    throw LengthError("rollout: parameter vector does not match policy architecture");
  }
}

}  // namespace

TrajectoryBatch simulate_batch(const EnvSpec& env, const PolicyParams& params, std::size_t m,
                               const RandomStream& base_stream, const GoodEventConfig& good,
                               const RolloutOptions& options) {
  check_inputs(env, params, m, good);
  const std::size_t horizon = static_cast<std::size_t>(env.horizon);
  const std::size_t n = params.theta.size();
  if (options.with_grad) {
    const double bytes = static_cast<double>(m) * static_cast<double>(n) * sizeof(double);
    if (bytes > static_cast<double>(options.memory_budget_bytes)) {
      throw MemoryBudgetError("rollout: sensitivity matrix exceeds the memory budget");
    }
  }

  TrajectoryBatch batch;
  batch.trajectories = m;
  batch.horizon = horizon;
  batch.parameters = n;
  batch.states.resize(m * (horizon + 1));
  batch.actions.resize(m * horizon);
  batch.cumulative.resize(m * (horizon + 1));
  batch.returns.resize(m);
  batch.z.resize(m * horizon);
  batch.eps.resize(m * horizon);
  if (options.with_grad) batch.grad_returns.resize(m * n);

  parallel_ranges(m, options.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    TrajectorySimulator sim(env, params, good, options.with_grad);
    for (std::size_t j = begin; j < end; ++j) {
      TrajectorySlots slots;
      slots.states = &batch.states[j * (horizon + 1)];
      slots.actions = &batch.actions[j * horizon];
      slots.cumulative = &batch.cumulative[j * (horizon + 1)];
      slots.z = &batch.z[j * horizon];
      slots.eps = &batch.eps[j * horizon];
      if (options.with_grad) slots.grad = &batch.grad_returns[j * n];
      batch.returns[j] = sim.run(j, base_stream.substream(j), slots);
    }
  });

  for (std::size_t t = 0; t <= horizon; ++t) {
    double mean = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean += batch.state(j, t);
    mean /= static_cast<double>(m);
    for (std::size_t j = 0; j < m; ++j) {
      batch.max_state_deviation = std::max(batch.max_state_deviation,
                                           std::abs(batch.state(j, t) - mean));
    }
  }
  return batch;
}

std::vector<double> accumulate_weighted_gradient(const EnvSpec& env, const PolicyParams& params,
                                                 const RandomStream& base_stream,
                                                 const GoodEventConfig& good,
                                                 std::span<const double> weights,
                                                 std::size_t threads) {
  const std::size_t m = weights.size();
  check_inputs(env, params, m, good);
  const std::size_t n = params.theta.size();
  // Fixed chunking keeps the summation order independent of the thread count.
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (m + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks * n, 0.0);
  parallel_ranges(chunks, threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    TrajectorySimulator sim(env, params, good, true);
    for (std::size_t c = begin; c < end; ++c) {
      for (std::size_t j = c * kChunk; j < std::min(m, (c + 1) * kChunk); ++j) {
        TrajectorySlots slots;
        slots.grad_accum = &partial[c * n];
        slots.weight = weights[j];
        sim.run(j, base_stream.substream(j), slots);
      }
    }
  });
  std::vector<double> total(n, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t p = 0; p < n; ++p) total[p] += partial[c * n + p];
  }
  return total;
}

std::vector<double> simulate_returns(const EnvSpec& env, const ReferencePolicy& policy,
                                     std::size_t m, const RandomStream& base_stream,
                                     const GoodEventConfig& good) {
  if (m < 1) throw ParameterError("rollout: need at least one trajectory");
  env.validate();
  good.validate();
  std::vector<double> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    NormalSampler sampler(base_stream.substream(j));
    double s = sample_initial(env, sampler);
    double cumulative = 0.0;
    for (int t = 0; t < env.horizon; ++t) {
      const double z = draw_noise(sampler, good.z_bound, good.mode);
      const double eps = draw_noise(sampler, good.eps_bound, good.mode);
      const double a = policy(t, s, cumulative, z);
      cumulative += reward(env, t, s, a).value;
      s = step(env, t, s, a, eps).next_state;
    }
    if (env.has_terminal_reward()) cumulative += reward(env, env.horizon, s, 0.0).value;
    if (!std::isfinite(cumulative)) {
      throw DivergenceError("reference rollout diverged in trajectory " + std::to_string(j), j,
                            static_cast<std::size_t>(env.horizon));
    }
    out[j] = cumulative;
  }
  return out;
}

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryBatch& batch) {
  std::string out = "traj,t,s,a,R\n";
  for (std::size_t j = 0; j < batch.trajectories; ++j) {
    for (std::size_t t = 0; t <= batch.horizon; ++t) {
      out += std::to_string(j) + ',' + std::to_string(t) + ',' +
             io::format_double(batch.state(j, t)) + ',';
      if (t < batch.horizon) out += io::format_double(batch.action(j, t));
      out += ',';
      out += io::format_double(t == batch.horizon ? batch.returns[j]
                                                  : batch.cumulative_reward(j, t));
      out += '\n';
    }
  }
  io::write_atomic(path, out);
}

}  // namespace distmatch
