#include "distmatch/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include "distmatch/error.hpp"
#include "distmatch/io.hpp"
#include "distmatch/loss.hpp"
#include "distmatch/oracle.hpp"
#include "distmatch/rollout.hpp"
#include "json_convert.hpp"

namespace distmatch::app {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Typed accessors that report the JSON path of the offending key.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!allowed.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
    }
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  std::string path(const char* key) const { return join(path_, key); }
  const json& raw(const char* key) const { return j_.at(key); }
  Node child(const char* key) const {
    if (!j_.contains(key)) throw ConfigError(path(key), "missing required section");
    return Node(j_.at(key), path(key));
  }

  double number(const char* key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) throw ConfigError(path(key), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(path(key), "must be finite");
    return d;
  }

  double positive(const char* key, double fallback) const {
    const double d = number(key, fallback);
    if (!(d > 0.0)) throw ConfigError(path(key), "must be > 0");
    return d;
  }

  long long integer(const char* key, long long fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
    return v.get<long long>();
  }

  std::size_t count(const char* key, std::size_t fallback, std::size_t min = 1) const {
    const long long v = integer(key, static_cast<long long>(fallback));
    if (v < static_cast<long long>(min)) {
      throw ConfigError(path(key), "must be >= " + std::to_string(min));
    }
    return static_cast<std::size_t>(v);
  }

  std::uint64_t seed(const char* key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    throw ConfigError(path(key), "expected a non-negative integer");
  }

  bool flag(const char* key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_boolean()) throw ConfigError(path(key), "expected true or false");
    return j_.at(key).get<bool>();
  }

  std::string text(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    if (!j_.at(key).is_string()) throw ConfigError(path(key), "expected a string");
    return j_.at(key).get<std::string>();
  }

  std::string required_text(const char* key) const {
    if (!has(key)) throw ConfigError(path(key), "missing required key");
    return text(key, "");
  }

 private:
  const json& j_;
  std::string path_;
};

EnvSpec parse_env(const Node& node) {
  node.allow({"kind", "params"});
  const std::string kind_name = node.required_text("kind");
  EnvSpec env;
  try {
    env.kind = env_kind_from_string(kind_name);
  } catch (const Error& e) {
    throw ConfigError(node.path("kind"), e.what());
  }
  switch (env.kind) {
    case EnvKind::lq:
      env = EnvSpec::lq(10);
      break;
    case EnvKind::wealth:
      env = EnvSpec::wealth();
      break;
    case EnvKind::cosine:
      env = EnvSpec::cosine();
      break;
    case EnvKind::torus:
      env = EnvSpec::torus(1);
      break;
  }
  if (node.has("params")) {
    const Node p = node.child("params");
    p.allow({"horizon", "initial_state", "initial_std", "sigma_eps", "rate", "drift", "volatility",
             "dt", "fraction_actions", "amplitude", "action_min", "action_max"});
    env.horizon = static_cast<int>(p.count("horizon", static_cast<std::size_t>(env.horizon)));
    env.initial_state = p.number("initial_state", env.initial_state);
    env.initial_std = p.number("initial_std", env.initial_std);
    if (env.initial_std < 0.0) throw ConfigError(p.path("initial_std"), "must be >= 0");
    env.sigma_eps = p.number("sigma_eps", env.sigma_eps);
    if (env.sigma_eps < 0.0) throw ConfigError(p.path("sigma_eps"), "must be >= 0");
    env.rate = p.number("rate", env.rate);
    env.drift = p.number("drift", env.drift);
    env.volatility = p.positive("volatility", env.volatility);
    env.dt = p.positive("dt", env.dt);
    env.fraction_actions = p.flag("fraction_actions", env.fraction_actions);
    env.amplitude = p.positive("amplitude", env.amplitude);
    env.action_min = p.number("action_min", env.action_min);
    env.action_max = p.number("action_max", env.action_max);
  }
  try {
    env.validate();
  } catch (const Error& e) {
    throw ConfigError(node.path("params"), e.what());
  }
  return env;
}

GridSpec parse_grid(const Node& node) {
  node.allow({"K", "L", "alpha"});
  GridSpec g;
  g.k_max = node.positive("K", g.k_max);
  g.n_nodes = node.count("L", g.n_nodes);
  g.alpha = node.number("alpha", g.alpha);
  if (g.alpha < 0.0) throw ConfigError(node.path("alpha"), "must be >= 0");
  return g;
}

TargetConfig parse_target(const Node& node) {
  node.allow({"kind", "path", "gain", "location", "mean", "variance", "samples", "seed"});
  TargetConfig t;
  t.kind = node.required_text("kind");
  static const std::set<std::string> kinds = {
      "samples", "table", "lq-feedback", "lognormal", "uniform-fraction",
      "standard-normal", "epanechnikov", "dirac", "wrapped-gaussian"};
  if (!kinds.count(t.kind)) throw ConfigError(node.path("kind"), "unknown target kind '" + t.kind + "'");
  if (t.kind == "samples" || t.kind == "table") {
    t.path = node.required_text("path");
    if (!std::filesystem::exists(t.path)) {
      throw ConfigError(node.path("path"), "file not found: " + t.path.string());
    }
  }
  t.gain = node.number("gain", t.gain);
  t.location = node.number("location", t.location);
  t.mean = node.number("mean", t.mean);
  t.variance = node.positive("variance", t.variance);
  t.samples = node.count("samples", t.samples);
  t.seed = node.seed("seed", t.seed);
  return t;
}

StepSchedule parse_schedule(const Node& node) {
  node.allow({"kind", "alpha", "a", "k0", "beta1", "beta2", "eps"});
  StepSchedule s;
  try {
    s.kind = schedule_kind_from_string(node.text("kind", "constant"));
  } catch (const Error& e) {
    throw ConfigError(node.path("kind"), e.what());
  }
  s.alpha = node.positive("alpha", s.alpha);
  s.a = node.positive("a", s.a);
  s.k0 = node.number("k0", s.k0);
  if (s.k0 < 1.0) throw ConfigError(node.path("k0"), "must be >= 1");
  s.beta1 = node.number("beta1", s.beta1);
  s.beta2 = node.number("beta2", s.beta2);
  s.eps_am = node.positive("eps", s.eps_am);
  try {
    s.validate();
  } catch (const Error& e) {
    throw ConfigError(node.path("kind"), e.what());
  }
  return s;
}

GoodEventConfig parse_good(const Node& node) {
  node.allow({"z_bound", "eps_bound", "mode"});
  GoodEventConfig g;
  g.z_bound = node.number("z_bound", g.z_bound);
  g.eps_bound = node.number("eps_bound", g.eps_bound);
  const std::string mode = node.text("mode", "clip");
  if (mode == "clip") {
    g.mode = GoodEventConfig::Mode::clip;
  } else if (mode == "resample") {
    g.mode = GoodEventConfig::Mode::resample;
  } else if (mode == "off") {
    g.mode = GoodEventConfig::Mode::off;
  } else {
    throw ConfigError(node.path("mode"), "expected clip, resample or off");
  }
  if (g.mode != GoodEventConfig::Mode::off) {
    if (g.z_bound < 1.0) throw ConfigError(node.path("z_bound"), "must be >= 1");
    if (g.eps_bound < 1.0) throw ConfigError(node.path("eps_bound"), "must be >= 1");
  }
  return g;
}

TrainConfig parse_train(const Node& node) {
  node.allow({"M", "max_iters", "threshold", "stall_window", "restart_limit", "seed", "schedule",
              "good", "threads", "param_box", "memory_budget_mb"});
  TrainConfig t;
  t.batch_size = node.count("M", t.batch_size);
  t.max_iters = node.count("max_iters", t.max_iters);
  t.threshold = node.number("threshold", t.threshold);
  if (t.threshold < 0.0) throw ConfigError(node.path("threshold"), "must be >= 0");
  t.stall_window = node.count("stall_window", t.stall_window);
  t.restart_limit = node.count("restart_limit", t.restart_limit, 0);
  t.seed = node.seed("seed", t.seed);
  if (node.has("schedule")) t.schedule = parse_schedule(node.child("schedule"));
  if (node.has("good")) t.good = parse_good(node.child("good"));
  t.threads = node.count("threads", t.threads);
  t.param_box = node.positive("param_box", t.param_box);
  if (node.has("memory_budget_mb")) {
    t.memory_budget_bytes = node.count("memory_budget_mb", 1) << 20;
  }
  return t;
}

OutputConfig parse_outputs(const Node& node) {
  node.allow({"dir", "checkpoint_every", "dump_trajectories", "eval_samples"});
  OutputConfig o;
  o.dir = node.text("dir", o.dir.string());
  o.checkpoint_every = node.count("checkpoint_every", o.checkpoint_every, 0);
  o.dump_trajectories = node.flag("dump_trajectories", o.dump_trajectories);
  o.eval_samples = node.count("eval_samples", o.eval_samples, 0);
  return o;
}

OracleConfig parse_oracle(const Node& node) {
  node.allow({"kind", "s0", "sigma", "V", "k_modes", "grid", "target", "density"});
  OracleConfig o;
  o.kind = node.required_text("kind");
  if (o.kind != "jacobi-anger" && o.kind != "torus-deconvolve") {
    throw ConfigError(node.path("kind"), "expected jacobi-anger or torus-deconvolve");
  }
  o.s0 = node.number("s0", o.s0);
  o.sigma = node.positive("sigma", o.sigma);
  o.amplitude = node.positive("V", o.amplitude);
  o.k_modes = static_cast<int>(node.count("k_modes", static_cast<std::size_t>(o.k_modes)));
  if (o.k_modes > kMaxBesselOrder) {
    throw ConfigError(node.path("k_modes"), "must be <= " + std::to_string(kMaxBesselOrder));
  }
  if (node.has("grid")) o.grid = parse_grid(node.child("grid"));
  o.target = parse_target(node.child("target"));
  if (node.has("density")) {
    const Node d = node.child("density");
    d.allow({"lo", "hi", "points"});
    o.density_lo = d.number("lo", o.density_lo);
    o.density_hi = d.number("hi", o.density_hi);
    o.density_points = d.count("points", o.density_points, 2);
  }
  return o;
}

std::string iso_time(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::size_t env_threads(std::size_t fallback) {
  if (const char* v = std::getenv("DISTMATCH_THREADS")) {
    try {
      const long long n = std::stoll(v);
      if (n >= 1) return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
    }
  }
  return fallback;
}

}  // namespace

RunConfig parse_run_config(const json& document, const Overrides& overrides) {
  if (!document.is_object()) throw ConfigError("<root>", "expected an object");
  json doc = document;
  std::string scale = overrides.scale.value_or(doc.value("scale", std::string("desk")));
  if (scale != "desk" && scale != "paper") throw ConfigError("scale", "expected desk or paper");
  if (doc.contains("scales")) {
    const json& scales = doc.at("scales");
    if (!scales.is_object()) throw ConfigError("scales", "expected an object");
    if (scales.contains(scale)) {
      if (!scales.at(scale).is_object()) throw ConfigError("scales." + scale, "expected an object");
      doc.merge_patch(scales.at(scale));
    }
    doc.erase("scales");
  }
  doc["scale"] = scale;
  if (overrides.seed) doc["train"]["seed"] = *overrides.seed;
  if (overrides.threads) doc["train"]["threads"] = *overrides.threads;

  const Node root(doc, "");
  root.allow({"scale", "env", "policy", "grid", "target", "train", "outputs", "oracle"});
  RunConfig cfg;
  cfg.scale = scale;
  cfg.env = root.has("env") ? parse_env(root.child("env")) : EnvSpec::lq(10);
  if (root.has("policy")) cfg.policy = policy_config_from_json(root.raw("policy"), "policy");
  if (root.has("grid")) cfg.grid = parse_grid(root.child("grid"));
  if (root.has("target")) cfg.target = parse_target(root.child("target"));
  if (root.has("train")) cfg.train = parse_train(root.child("train"));
  if (root.has("outputs")) cfg.outputs = parse_outputs(root.child("outputs"));
  if (root.has("oracle")) cfg.oracle = parse_oracle(root.child("oracle"));
  if (!overrides.threads && !(root.has("train") && root.child("train").has("threads"))) {
    cfg.train.threads = env_threads(cfg.train.threads);
  }

  // Cross-field consistency.
  const std::string& tk = cfg.target.kind;
  if (tk == "wrapped-gaussian") {
    if (cfg.env.kind != EnvKind::torus) {
      throw ConfigError("target.kind", "wrapped-gaussian targets need the torus environment");
    }
    const double du = 2.0 * cfg.grid.k_max / static_cast<double>(cfg.grid.n_nodes);
    if (std::abs(cfg.grid.k_max - std::round(cfg.grid.k_max)) > 1e-12 ||
        std::abs(du - std::round(du)) > 1e-12 || std::round(du) < 1.0) {
      throw ConfigError("grid", "wrapped-gaussian targets need integer frequency nodes");
    }
  }
  if (tk == "lq-feedback" && cfg.env.kind != EnvKind::lq) {
    throw ConfigError("target.kind", "lq-feedback targets need the lq environment");
  }
  if ((tk == "lognormal" || tk == "uniform-fraction") && cfg.env.kind != EnvKind::wealth) {
    throw ConfigError("target.kind", tk + " targets need the wealth environment");
  }
  cfg.effective = doc;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides) {
  if (!std::filesystem::exists(path)) throw ConfigError("<file>", "config not found: " + path.string());
  json doc;
  try {
    doc = json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_run_config(doc, overrides);
}

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FrequencyGrid make_grid(const GridSpec& spec) {
  return build_uniform_grid(spec.k_max, spec.n_nodes, spec.alpha);
}

std::vector<double> target_samples(const TargetConfig& target, const EnvSpec& env,
                                   std::size_t count) {
  const RandomStream stream{target.seed, 0x7461726765740000ULL};
  const GoodEventConfig good;
  const std::string& k = target.kind;
  if (k == "samples") {
    std::vector<double> s = read_samples(target.path);
    if (s.size() > count) s.resize(count);
    return s;
  }
  if (k == "table") return {};
  if (k == "lq-feedback") {
    const double gain = target.gain;
    return simulate_returns(
        env, [gain](int, double s, double, double) { return gain * s; }, count, stream, good);
  }
  if (k == "lognormal") {
    const double horizon = env.horizon * env.dt;
    const double mu = std::log(env.initial_state) + (env.drift - 0.5 * env.volatility * env.volatility) * horizon;
    const double sd = env.volatility * std::sqrt(horizon);
    std::vector<double> z = standard_normal(stream, count);
    for (double& v : z) v = std::exp(mu + sd * v);
    return z;
  }
  if (k == "uniform-fraction") {
    const bool fraction = env.fraction_actions;
    return simulate_returns(
        env,
        [fraction](int, double s, double, double z) {
          const double u = normal_cdf(z);
          return fraction ? u : u * s;
        },
        count, stream, good);
  }
  if (k == "standard-normal") return standard_normal(stream, count);
  if (k == "dirac") return std::vector<double>(count, target.location);
  if (k == "epanechnikov") {
    NormalSampler sampler(stream);
    std::vector<double> out(count);
    for (double& v : out) v = 2.0 * std::sin(std::asin(2.0 * sampler.uniform() - 1.0) / 3.0);
    return out;
  }
  if (k == "wrapped-gaussian") {
    std::vector<double> z = standard_normal(stream, count);
    const double sd = std::sqrt(target.variance);
    const double two_pi = 2.0 * std::numbers::pi;
    for (double& v : z) {
      v = std::fmod(target.mean + sd * v, two_pi);
      if (v < 0.0) v += two_pi;
    }
    return z;
  }
  throw ParameterError("unknown target kind '" + k + "'");
}

CFTable target_table(const TargetConfig& target, const EnvSpec& env, const FrequencyGrid& grid) {
  const std::string& k = target.kind;
  if (k == "table") return read_cf_table(target.path, grid);
  if (k == "standard-normal") return target_cf(StandardNormal{}, grid);
  if (k == "epanechnikov") return target_cf(Epanechnikov{}, grid);
  if (k == "dirac") return target_cf(DiracAt{target.location}, grid);
  if (k == "wrapped-gaussian") return target_cf(WrappedGaussian{target.mean, target.variance}, grid);
  const std::vector<double> s = target_samples(target, env, target.samples);
  return empirical_cf(s, grid);
}

namespace {

struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path file(const char* name) const { return dir / name; }
};

void write_metrics(const std::filesystem::path& path, const TrainReport& report) {
  std::string out = "iter,loss,grad_norm,alpha\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.iteration) + ',' + io::format_double(r.loss) + ',' +
           io::format_double(r.grad_norm) + ',' + io::format_double(r.alpha) + '\n';
  }
  io::write_atomic(path, out);
}

void write_cf_compare(const std::filesystem::path& path, const CFTable& target, const CFTable& learned) {
  std::string out = "u,target_re,target_im,learned_re,learned_im\n";
  for (std::size_t l = 0; l < target.size(); ++l) {
    out += io::format_double(target.nodes[l]) + ',' + io::format_double(target.values[l].real()) +
           ',' + io::format_double(target.values[l].imag()) + ',' +
           io::format_double(learned.values[l].real()) + ',' +
           io::format_double(learned.values[l].imag()) + '\n';
  }
  io::write_atomic(path, out);
}

void write_histogram(const std::filesystem::path& path, const std::vector<double>& target,
                     const std::vector<double>& learned) {
  constexpr std::size_t kBins = 64;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* v : {&target, &learned}) {
    for (double x : *v) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / kBins;
  std::vector<std::size_t> ct(kBins, 0), cl(kBins, 0);
  auto bin = [&](double x) {
    const auto b = static_cast<std::size_t>((x - lo) / width);
    return std::min(b, kBins - 1);
  };
  for (double x : target) ++ct[bin(x)];
  for (double x : learned) ++cl[bin(x)];
  std::string out = "bin_lo,bin_hi,target_count,learned_count\n";
  for (std::size_t b = 0; b < kBins; ++b) {
    out += io::format_double(lo + width * b) + ',' + io::format_double(lo + width * (b + 1)) + ',' +
           std::to_string(ct[b]) + ',' + std::to_string(cl[b]) + '\n';
  }
  io::write_atomic(path, out);
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("outputs.dir", "cannot create directory " + dir.string());
  }
}

}  // namespace

int cmd_train(const std::filesystem::path& config_path, const Overrides& overrides,
              std::ostream& log) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path, overrides);
    ensure_dir(cfg.outputs.dir);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const auto started = std::chrono::system_clock::now();
  const RunPaths paths{cfg.outputs.dir};
  try {
    const FrequencyGrid grid = make_grid(cfg.grid);
    const CFTable target = target_table(cfg.target, cfg.env, grid);

    TrainConfig train_cfg = cfg.train;
    if (cfg.outputs.checkpoint_every > 0) {
      ensure_dir(paths.dir / "checkpoints");
      train_cfg.checkpoint_every = cfg.outputs.checkpoint_every;
      train_cfg.on_checkpoint = [&paths](std::size_t k, const PolicyParams& p) {
        save_checkpoint(paths.dir / "checkpoints" / ("iter_" + std::to_string(k + 1) + ".json"), p);
      };
    }
    log << "training " << to_string(cfg.env.kind) << " (" << cfg.scale << " scale, M="
        << train_cfg.batch_size << ", |theta|=" << cfg.policy.parameter_count() << ")\n";
    const TrainReport report = train(cfg.env, cfg.policy, target, grid, train_cfg);
    const auto finished = std::chrono::system_clock::now();

    // Terminal samples of both laws, equal in size, for W1 and histograms.
    const std::size_t n_eval = cfg.outputs.eval_samples > 0 ? cfg.outputs.eval_samples
                                                            : train_cfg.batch_size;
    std::vector<double> target_eval;
    if (cfg.target.kind != "table") {
      target_eval = target_samples(cfg.target, cfg.env, std::max(n_eval, cfg.target.samples));
      target_eval.resize(std::min(target_eval.size(), n_eval));
    }
    RolloutOptions eval_options;
    eval_options.with_grad = false;
    eval_options.threads = train_cfg.threads;
    const std::size_t n_learned = target_eval.empty() ? n_eval : target_eval.size();
    const TrajectoryBatch eval = simulate_batch(cfg.env, report.final_params, n_learned,
                                                RandomStream{train_cfg.seed, 0x6576616cULL}, train_cfg.good,
                                                eval_options);
    const CFTable learned = empirical_cf(eval.returns, grid);

    write_metrics(paths.file("metrics.csv"), report);
    write_cf_compare(paths.file("cf.csv"), target, learned);
    if (!target_eval.empty()) {
      write_samples(paths.file("samples_target.txt"), target_eval);
      write_histogram(paths.file("hist.csv"), target_eval, eval.returns);
    } else {
      write_histogram(paths.file("hist.csv"), {}, eval.returns);
    }
    write_samples(paths.file("samples_learned.txt"), eval.returns);
    save_checkpoint(paths.file("params.json"), report.final_params);
    if (cfg.outputs.dump_trajectories) write_trajectory_csv(paths.file("trajectories.csv"), eval);

    const double final_loss = report.records.empty() ? 0.0 : report.records.back().loss;
    json manifest = {
        {"config_hash", config_hash(cfg.effective)},
        {"config", cfg.effective},
        {"seeds", {{"train", train_cfg.seed}, {"policy", cfg.policy.seed}, {"target", cfg.target.seed}}},
        {"version", kVersion},
        {"started", iso_time(started)},
        {"finished", iso_time(finished)},
        {"metrics",
         {{"final_loss", final_loss},
          {"best_loss", report.best_loss},
          {"eval_loss", cf_loss(eval.returns, target, grid)},
          {"iterations", report.records.size()},
          {"restarts", report.restarts},
          {"converged", report.converged},
          {"box_warnings", report.box_warnings},
          {"max_state_deviation", report.max_state_deviation},
          {"wall_seconds", report.wall_seconds}}}};
    if (!target_eval.empty()) manifest["metrics"]["W1"] = wasserstein1(target_eval, eval.returns);
    io::write_atomic(paths.file("manifest.json"), manifest.dump(2) + "\n");

    log << (report.converged ? "converged" : "not converged") << " after "
        << report.records.size() << " iterations, " << report.restarts
        << " restarts, final loss " << io::format_double(final_loss) << '\n';
    if (report.box_warnings > 0) {
      log << "warning: parameters left the box |theta| <= " << train_cfg.param_box << " in "
          << report.box_warnings << " iterations\n";
    }
    return report.converged ? kExitOk : kExitStalled;
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_oracle(const std::filesystem::path& config_path, const Overrides& overrides,
               std::ostream& log) {
  RunConfig cfg;
  try {
    cfg = load_run_config(config_path, overrides);
    if (!cfg.oracle) throw ConfigError("oracle", "missing required section");
    ensure_dir(cfg.outputs.dir);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  const OracleConfig& oc = *cfg.oracle;
  const RunPaths paths{cfg.outputs.dir};
  try {
    if (oc.kind == "jacobi-anger") {
      JacobiAngerProblem problem;
      problem.s0 = oc.s0;
      problem.sigma = oc.sigma;
      problem.amplitude = oc.amplitude;
      problem.k_modes = oc.k_modes;
      problem.grid = make_grid(oc.grid);
      const CFTable target = target_table(oc.target, cfg.env, problem.grid);
      const ModeSolution sol = solve_modes(problem, target);
      const ActionDensity density =
          reconstruct_density(sol, {oc.density_lo, oc.density_hi}, oc.density_points);
      write_modes_csv(paths.file("modes.csv"), sol.psi);
      write_density_csv(paths.file("density.csv"), density);
      log << "residual norm " << io::format_double(sol.residual_norm) << ", max odd mode "
          << io::format_double(sol.odd_mode_max) << ", min density "
          << io::format_double(density.min_value) << ", period integral "
          << io::format_double(density.period_integral) << '\n';
      if (sol.ridge_used) log << "warning: ridge regularization was needed\n";
      if (!sol.clipped_modes.empty()) log << "warning: clipped modes with |psi| > 1\n";
      return kExitOk;
    }
    std::vector<Complex> target_modes;
    if (oc.target.kind == "wrapped-gaussian") {
      target_modes = wrapped_gaussian_modes(oc.target.mean, oc.target.variance, oc.k_modes);
    } else if (oc.target.kind == "dirac") {
      target_modes = wrapped_gaussian_modes(oc.target.location, 0.0, oc.k_modes);
    } else {
      throw ConfigError("oracle.target.kind", "torus deconvolution needs wrapped-gaussian or dirac");
    }
    try {
      const std::vector<Complex> nu = torus_deconvolve(target_modes, oc.s0, oc.sigma);
      write_modes_csv(paths.file("nu_modes.csv"), nu);
      log << "deconvolved " << nu.size() << " modes\n";
      return kExitOk;
    } catch (const InfeasibleTargetError& e) {
      log << "infeasible target: " << e.what() << '\n';
      return kExitInfeasible;
    }
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_report(const std::filesystem::path& run_dir, std::ostream& log) {
  const RunPaths paths{run_dir};
  for (const char* name : {"metrics.csv", "cf.csv", "samples_target.txt", "samples_learned.txt"}) {
    if (!std::filesystem::exists(paths.file(name))) {
      log << "missing artifact: " << paths.file(name).string() << '\n';
      return kExitConfig;
    }
  }
  try {
    std::istringstream metrics(io::read_text(paths.file("metrics.csv")));
    std::string line;
    std::getline(metrics, line);
    std::size_t rows = 0;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
    while (std::getline(metrics, line)) {
      if (line.empty()) continue;
      const auto a = line.find(',');
      const auto b = line.find(',', a + 1);
      if (a == std::string::npos || b == std::string::npos) throw IoError("metrics.csv: malformed row");
      final_loss = io::parse_double(line.substr(a + 1, b - a - 1));
      ++rows;
    }
    std::size_t restarts = 0;
    if (std::filesystem::exists(paths.file("manifest.json"))) {
      const json m = json::parse(io::read_text(paths.file("manifest.json")));
      restarts = m.at("metrics").value("restarts", std::size_t{0});
    }
    const std::vector<double> target = read_samples(paths.file("samples_target.txt"));
    const std::vector<double> learned = read_samples(paths.file("samples_learned.txt"));
    const double w1 = wasserstein1(target, learned);
    json summary = {{"final_loss", final_loss}, {"W1", w1}, {"iters", rows}, {"restarts", restarts}};
    io::write_atomic(paths.file("summary.json"), summary.dump(2) + "\n");
    log << summary.dump() << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace distmatch::app
