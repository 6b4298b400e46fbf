#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "distmatch/charfn.hpp"
#include "distmatch/environment.hpp"
#include "distmatch/policy.hpp"
#include "distmatch/trainer.hpp"

namespace distmatch::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitRuntime = 2,
  kExitStalled = 3,
  kExitInfeasible = 4,
};

struct GridSpec {
  double k_max = 10.0;
  std::size_t n_nodes = 512;
  double alpha = 0.05;
};

/// Where target samples or CF values come from.
///   samples, table:                 read from `path`
///   lq-feedback:                    rollouts of a_t = gain * s_t in the run's LQ env
///   lognormal:                      exact terminal wealth under full investment
///   uniform-fraction:               rollouts with invested fraction ~ U(0, 1)
///   standard-normal, epanechnikov,
///   dirac, wrapped-gaussian:        closed-form CFs (exact samples for reports)
struct TargetConfig {
  std::string kind = "standard-normal";
  std::filesystem::path path;
  double gain = -0.5;
  double location = 0.0;
  double mean = 0.0;
  double variance = 1.0;
  std::size_t samples = 16384;
  std::uint64_t seed = 0;
};

struct OutputConfig {
  std::filesystem::path dir = "run";
  std::size_t checkpoint_every = 0;
  bool dump_trajectories = false;
  /// Terminal samples persisted for both target and learned laws (0: batch size).
  std::size_t eval_samples = 0;
};

struct OracleConfig {
  std::string kind = "jacobi-anger";  // or torus-deconvolve
  double s0 = 0.0;
  double sigma = 0.1;
  double amplitude = 1.0;
  int k_modes = 16;
  GridSpec grid{16.0, 8001, 0.05};
  TargetConfig target;
  double density_lo = -3.141592653589793;
  double density_hi = 3.141592653589793;
  std::size_t density_points = 2049;
};

struct RunConfig {
  std::string scale = "desk";
  EnvSpec env;
  PolicyConfig policy;
  GridSpec grid;
  TargetConfig target;
  TrainConfig train;
  OutputConfig outputs;
  std::optional<OracleConfig> oracle;
  /// Effective configuration after scale selection and overrides.
  nlohmann::json effective;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> scale;
};

/// Applies the `scales.<scale>` block as a JSON merge patch, then the overrides,
/// and validates every field. Errors are ConfigError carrying the JSON path.
RunConfig parse_run_config(const nlohmann::json& document, const Overrides& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const Overrides& overrides = {});

/// FNV-1a 64 over the canonical (key-sorted) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

FrequencyGrid make_grid(const GridSpec& spec);

/// Terminal-return samples of the target law; empty for pure CF tables.
std::vector<double> target_samples(const TargetConfig& target, const EnvSpec& env,
                                   std::size_t count);

/// Target CF on the grid, from closed forms where available and from the
/// empirical CF of generated samples otherwise.
CFTable target_table(const TargetConfig& target, const EnvSpec& env, const FrequencyGrid& grid);

int cmd_train(const std::filesystem::path& config_path, const Overrides& overrides,
              std::ostream& log);
int cmd_oracle(const std::filesystem::path& config_path, const Overrides& overrides,
               std::ostream& log);
int cmd_verify(const std::string& suite, std::uint64_t seed, std::ostream& log);
int cmd_report(const std::filesystem::path& run_dir, std::ostream& log);

/// Names accepted by cmd_verify.
const std::vector<std::string>& verify_suites();

}  // namespace distmatch::app
