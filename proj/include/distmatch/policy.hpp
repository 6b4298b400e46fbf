#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace distmatch {

enum class Architecture { theory2layer, residual_mlp };
enum class Activation { tanh, relu };
/// Time feature fed to the network: normalized time-to-go (T - t) / T, or raw stage t.
enum class TimeEncoding { time_to_go, raw };

struct PolicyConfig {
  Architecture architecture = Architecture::theory2layer;
  std::size_t width = 1;
  std::size_t blocks = 0;
  Activation activation = Activation::tanh;
  bool layer_norm = false;
  std::optional<std::pair<double, double>> output_squash;
  std::uint64_t seed = 0;
  TimeEncoding time_encoding = TimeEncoding::time_to_go;
  /// Fixed multipliers on the inputs (s, R, z, tau) before the first layer.
  std::array<double, 4> input_scale{1.0, 1.0, 1.0, 1.0};

  void validate() const;
  std::size_t parameter_count() const;
};

/// Named tensor inside the flat parameter vector, row-major.
struct TensorSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 1;

  std::size_t size() const noexcept { return rows * cols; }
};

struct PolicyParams {
  PolicyConfig config;
  std::vector<double> theta;
  std::vector<TensorSlice> shapes;

  const TensorSlice& slice(const std::string& name) const;
  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;
  std::size_t size() const noexcept { return theta.size(); }
};

struct PolicyEval {
  double action = 0.0;
  std::vector<double> grad_theta;
  double df_ds = 0.0;
  double df_dR = 0.0;
};

/// Shape table for a configuration, in the order the tensors are stored.
std::vector<TensorSlice> parameter_layout(const PolicyConfig& config);

/// Hidden weights ~ N(0, 1/fan_in) from the config seed, biases zero, layer-norm
/// gains one, output layer exactly zero.
PolicyParams init_params(const PolicyConfig& config);

/// Network a = f(theta, s, R, z, tau) with exact reverse-mode derivatives.
/// Reuses internal buffers, so one evaluator per thread.
class PolicyEvaluator {
 public:
  explicit PolicyEvaluator(const PolicyParams& params);

  /// Fills `out`; grad_theta is skipped when `with_param_grad` is false.
  void evaluate(double s, double reward, double z, double time_input, PolicyEval& out,
                bool with_param_grad = true);

 private:
  struct Layer {
    std::size_t weight = 0;
    std::size_t bias = 0;
    std::size_t gamma = 0;
    std::size_t beta = 0;
    std::size_t fan_in = 0;
  };

  const PolicyParams& params_;
  std::size_t width_;
  bool layer_norm_;
  bool affine_;
  std::vector<Layer> layers_;  // layers_[0] is the input layer
  std::size_t out_weight_ = 0;
  std::size_t out_bias_ = 0;

  // Per-layer caches (layers_.size() x width).
  std::vector<double> pre_;
  std::vector<double> normed_;
  std::vector<double> post_;   // activation input after affine
  std::vector<double> hidden_; // hidden state after each layer
  std::vector<double> inv_std_;
  std::vector<double> grad_hidden_;
  std::vector<double> grad_pre_;
};

PolicyEval evaluate(const PolicyParams& params, double s, double reward, double z, double tau);

std::string to_string(Architecture a);
std::string to_string(Activation a);
std::string to_string(TimeEncoding t);
Architecture architecture_from_string(const std::string& name);
Activation activation_from_string(const std::string& name);
TimeEncoding time_encoding_from_string(const std::string& name);

/// Checkpoint JSON {config, theta}; doubles round-trip bit-exactly.
std::string params_to_json(const PolicyParams& params);
PolicyParams params_from_json(const std::string& text);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace distmatch
