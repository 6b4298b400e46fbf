#include "distmatch/policy.hpp"

#include <algorithm>
#include <cmath>

#include "distmatch/error.hpp"
#include "distmatch/io.hpp"
#include "distmatch/numerics.hpp"
#include "json_convert.hpp"

namespace distmatch {

namespace {

constexpr std::size_t kInputs = 4;
constexpr double kLayerNormEps = 1e-5;

bool affine_layer_norm(const PolicyConfig& c) {
  return c.layer_norm && c.architecture == Architecture::residual_mlp;
}

}  // namespace

void PolicyConfig::validate() const {
  if (width < 1) throw ParameterError("policy: width must be >= 1");
  if (architecture == Architecture::theory2layer && blocks != 0) {
    throw ParameterError("policy: theory2layer has no residual blocks");
  }
  if (layer_norm && width < 2) throw ParameterError("policy: layer norm needs width >= 2");
  if (output_squash && !(output_squash->first < output_squash->second)) {
    throw ParameterError("policy: output squash needs a_min < a_max");
  }
  for (double c : input_scale) {
    if (!std::isfinite(c)) throw ParameterError("policy: input scales must be finite");
  }
}

std::vector<TensorSlice> parameter_layout(const PolicyConfig& config) {
  config.validate();
  std::vector<TensorSlice> shapes;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    shapes.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  const std::size_t p = config.width;
  const bool affine = affine_layer_norm(config);
  if (config.architecture == Architecture::theory2layer) {
    add("W1", p, kInputs);
    add("b1", p, 1);
    add("w2", 1, p);
    add("b2", 1, 1);
    return shapes;
  }
  add("input.W", p, kInputs);
  add("input.b", p, 1);
  if (affine) {
    add("input.ln.gamma", p, 1);
    add("input.ln.beta", p, 1);
  }
  for (std::size_t b = 0; b < config.blocks; ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    add(prefix + "W", p, p);
    add(prefix + "b", p, 1);
    if (affine) {
      add(prefix + "ln.gamma", p, 1);
      add(prefix + "ln.beta", p, 1);
    }
  }
  add("output.w", 1, p);
  add("output.b", 1, 1);
  return shapes;
}

std::size_t PolicyConfig::parameter_count() const {
  const auto shapes = parameter_layout(*this);
  return shapes.back().offset + shapes.back().size();
}

const TensorSlice& PolicyParams::slice(const std::string& name) const {
  for (const auto& s : shapes) {
    if (s.name == name) return s;
  }
  throw ParameterError("policy: no tensor named '" + name + "'");
}

std::span<double> PolicyParams::tensor(const std::string& name) {
  const auto& s = slice(name);
  return std::span<double>(theta).subspan(s.offset, s.size());
}

std::span<const double> PolicyParams::tensor(const std::string& name) const {
  const auto& s = slice(name);
  return std::span<const double>(theta).subspan(s.offset, s.size());
}

PolicyParams init_params(const PolicyConfig& config) {
  PolicyParams params;
  params.config = config;
  params.shapes = parameter_layout(config);
  params.theta.assign(config.parameter_count(), 0.0);

  NormalSampler sampler(RandomStream{config.seed, 0});
  for (const auto& s : params.shapes) {
    const bool is_weight = s.name == "W1" || s.name.ends_with(".W");
    const bool is_gain = s.name.ends_with("ln.gamma");
    auto values = std::span<double>(params.theta).subspan(s.offset, s.size());
    if (is_weight) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(s.cols));
      for (auto& v : values) v = scale * sampler.next();
    } else if (is_gain) {
      std::fill(values.begin(), values.end(), 1.0);
    }
  }
  return params;
}

PolicyEvaluator::PolicyEvaluator(const PolicyParams& params)
    : params_(params),
      width_(params.config.width),
      layer_norm_(params.config.layer_norm),
      affine_(affine_layer_norm(params.config)) {
  const auto& cfg = params.config;
  if (params.theta.size() != cfg.parameter_count()) {
    throw LengthError("policy: parameter vector length does not match architecture");
  }
  if (cfg.architecture == Architecture::theory2layer) {
    layers_.push_back({params.slice("W1").offset, params.slice("b1").offset, 0, 0, kInputs});
    out_weight_ = params.slice("w2").offset;
    out_bias_ = params.slice("b2").offset;
  } else {
    Layer input{params.slice("input.W").offset, params.slice("input.b").offset, 0, 0, kInputs};
    if (affine_) {
      input.gamma = params.slice("input.ln.gamma").offset;
      input.beta = params.slice("input.ln.beta").offset;
    }
    layers_.push_back(input);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
      const std::string prefix = "block" + std::to_string(b) + ".";
      Layer layer{params.slice(prefix + "W").offset, params.slice(prefix + "b").offset, 0, 0,
                  width_};
      if (affine_) {
        layer.gamma = params.slice(prefix + "ln.gamma").offset;
        layer.beta = params.slice(prefix + "ln.beta").offset;
      }
      layers_.push_back(layer);
    }
    out_weight_ = params.slice("output.w").offset;
    out_bias_ = params.slice("output.b").offset;
  }
  const std::size_t n = layers_.size() * width_;
  pre_.resize(n);
  normed_.resize(n);
  post_.resize(n);
  hidden_.resize(n);
  inv_std_.resize(layers_.size());
  grad_hidden_.resize(width_);
  grad_pre_.resize(width_);
}

void PolicyEvaluator::evaluate(double s, double reward, double z, double time_input,
                               PolicyEval& out, bool with_param_grad) {
  const double* theta = params_.theta.data();
  const auto& cfg = params_.config;
  const std::size_t p = width_;
  const bool relu = cfg.activation == Activation::relu;
  const bool residual = cfg.architecture == Architecture::residual_mlp;
  const auto& scale = cfg.input_scale;
  const double input[kInputs] = {scale[0] * s, scale[1] * reward, scale[2] * z,
                                 scale[3] * time_input};

  // Forward pass.
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& layer = layers_[li];
    const double* x = li == 0 ? input : &hidden_[(li - 1) * p];
    double* pre = &pre_[li * p];
    for (std::size_t i = 0; i < p; ++i) {
      const double* w = theta + layer.weight + i * layer.fan_in;
      double acc = theta[layer.bias + i];
      for (std::size_t k = 0; k < layer.fan_in; ++k) acc += w[k] * x[k];
      pre[i] = acc;
    }
    double* normed = &normed_[li * p];
    double* post = &post_[li * p];
    if (layer_norm_) {
      double mean = 0.0;
      for (std::size_t i = 0; i < p; ++i) mean += pre[i];
      mean /= static_cast<double>(p);
      double var = 0.0;
      for (std::size_t i = 0; i < p; ++i) var += (pre[i] - mean) * (pre[i] - mean);
      var /= static_cast<double>(p);
      const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      inv_std_[li] = inv_std;
      for (std::size_t i = 0; i < p; ++i) {
        normed[i] = (pre[i] - mean) * inv_std;
        post[i] = affine_ ? theta[layer.gamma + i] * normed[i] + theta[layer.beta + i] : normed[i];
      }
    } else {
      std::copy(pre, pre + p, post);
    }
    double* h = &hidden_[li * p];
    for (std::size_t i = 0; i < p; ++i) {
      const double act = relu ? std::max(post[i], 0.0) : std::tanh(post[i]);
      h[i] = (residual && li > 0) ? hidden_[(li - 1) * p + i] + act : act;
    }
  }
  const double* last = &hidden_[(layers_.size() - 1) * p];
  double y = theta[out_bias_];
  for (std::size_t i = 0; i < p; ++i) y += theta[out_weight_ + i] * last[i];

  double dy = 1.0;
  if (cfg.output_squash) {
    const auto [lo, hi] = *cfg.output_squash;
    const double th = std::tanh(y);
    out.action = lo + (hi - lo) * 0.5 * (th + 1.0);
    dy = (hi - lo) * 0.5 * (1.0 - th * th);
  } else {
    out.action = y;
  }

  // Reverse pass.
  if (with_param_grad) {
    out.grad_theta.assign(params_.theta.size(), 0.0);
  }
  double* g = with_param_grad ? out.grad_theta.data() : nullptr;
  if (g) {
    g[out_bias_] = dy;
    for (std::size_t i = 0; i < p; ++i) g[out_weight_ + i] = dy * last[i];
  }
  for (std::size_t i = 0; i < p; ++i) grad_hidden_[i] = dy * theta[out_weight_ + i];

  double grad_input[kInputs] = {0.0, 0.0, 0.0, 0.0};
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& layer = layers_[li];
    const double* post = &post_[li * p];
    const double* normed = &normed_[li * p];
    // d/d(post) of the activation branch.
    for (std::size_t i = 0; i < p; ++i) {
      double slope;
      if (relu) {
        slope = post[i] > 0.0 ? 1.0 : 0.0;
      } else {
        const double th = std::tanh(post[i]);
        slope = 1.0 - th * th;
      }
      grad_pre_[i] = grad_hidden_[i] * slope;
    }
    if (layer_norm_) {
      if (affine_) {
        for (std::size_t i = 0; i < p; ++i) {
          if (g) {
            g[layer.gamma + i] = grad_pre_[i] * normed[i];
            g[layer.beta + i] = grad_pre_[i];
          }
          grad_pre_[i] *= theta[layer.gamma + i];
        }
      }
      double mean_g = 0.0;
      double mean_gn = 0.0;
      for (std::size_t i = 0; i < p; ++i) {
        mean_g += grad_pre_[i];
        mean_gn += grad_pre_[i] * normed[i];
      }
      mean_g /= static_cast<double>(p);
      mean_gn /= static_cast<double>(p);
      for (std::size_t i = 0; i < p; ++i) {
        grad_pre_[i] = inv_std_[li] * (grad_pre_[i] - mean_g - normed[i] * mean_gn);
      }
    }
    const double* x = li == 0 ? input : &hidden_[(li - 1) * p];
    if (g) {
      for (std::size_t i = 0; i < p; ++i) {
        g[layer.bias + i] = grad_pre_[i];
        double* gw = g + layer.weight + i * layer.fan_in;
        for (std::size_t k = 0; k < layer.fan_in; ++k) gw[k] = grad_pre_[i] * x[k];
      }
    }
    if (li == 0) {
      for (std::size_t i = 0; i < p; ++i) {
        const double* w = theta + layer.weight + i * kInputs;
        for (std::size_t k = 0; k < kInputs; ++k) grad_input[k] += grad_pre_[i] * w[k];
      }
    } else {
      // Residual skip passes grad_hidden_ through unchanged.
      std::vector<double>& next = grad_hidden_;
      for (std::size_t k = 0; k < p; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < p; ++i) acc += grad_pre_[i] * theta[layer.weight + i * p + k];
        next[k] += acc;
      }
    }
  }
  out.df_ds = scale[0] * grad_input[0];
  out.df_dR = scale[1] * grad_input[1];
}

PolicyEval evaluate(const PolicyParams& params, double s, double reward, double z, double tau) {
  if (params.config.time_encoding == TimeEncoding::time_to_go && !(tau >= 0.0 && tau <= 1.0)) {
    throw DomainError("policy: time-to-go must lie in [0, 1]");
  }
  PolicyEvaluator evaluator(params);
  PolicyEval out;
  evaluator.evaluate(s, reward, z, tau, out);
  return out;
}

std::string to_string(Architecture a) {
  return a == Architecture::theory2layer ? "theory2layer" : "residual-mlp";
}
std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }
std::string to_string(TimeEncoding t) {
  return t == TimeEncoding::time_to_go ? "time-to-go" : "raw";
}

Architecture architecture_from_string(const std::string& name) {
  if (name == "theory2layer") return Architecture::theory2layer;
  if (name == "residual-mlp") return Architecture::residual_mlp;
  throw ParameterError("unknown architecture '" + name + "'");
}
Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw ParameterError("unknown activation '" + name + "'");
}
TimeEncoding time_encoding_from_string(const std::string& name) {
  if (name == "time-to-go") return TimeEncoding::time_to_go;
  if (name == "raw") return TimeEncoding::raw;
  throw ParameterError("unknown time encoding '" + name + "'");
}

nlohmann::json policy_config_to_json(const PolicyConfig& c) {
  nlohmann::json j = {{"architecture", to_string(c.architecture)},
                      {"width", c.width},
                      {"blocks", c.blocks},
                      {"activation", to_string(c.activation)},
                      {"layer_norm", c.layer_norm},
                      {"seed", c.seed},
                      {"time_encoding", to_string(c.time_encoding)},
                      {"input_scale", c.input_scale}};
  if (c.output_squash) {
    j["output_squash"] = {c.output_squash->first, c.output_squash->second};
  } else {
    j["output_squash"] = nullptr;
  }
  return j;
}

PolicyConfig policy_config_from_json(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  PolicyConfig c;
  auto field = [&](const char* key) { return path + "." + key; };
  try {
    if (j.contains("architecture")) {
      c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    }
    if (j.contains("width")) {
      const auto w = j.at("width").get<long long>();
      if (w < 1) throw ConfigError(field("width"), "must be >= 1");
      c.width = static_cast<std::size_t>(w);
    }
    if (j.contains("blocks")) {
      const auto b = j.at("blocks").get<long long>();
      if (b < 0) throw ConfigError(field("blocks"), "must be >= 0");
      c.blocks = static_cast<std::size_t>(b);
    }
    if (j.contains("activation")) {
      c.activation = activation_from_string(j.at("activation").get<std::string>());
    }
    if (j.contains("layer_norm")) c.layer_norm = j.at("layer_norm").get<bool>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("time_encoding")) {
      c.time_encoding = time_encoding_from_string(j.at("time_encoding").get<std::string>());
    }
    for (const auto& item : j.items()) {
      static const char* known[] = {"architecture", "width", "blocks", "activation", "layer_norm",
                                    "seed", "time_encoding", "output_squash", "input_scale"};
      if (std::find(std::begin(known), std::end(known), item.key()) == std::end(known)) {
        throw ConfigError(field(item.key().c_str()), "unknown key");
      }
    }
    if (j.contains("input_scale")) {
      const auto& sc = j.at("input_scale");
      if (!sc.is_array() || sc.size() != 4) {
        throw ConfigError(field("input_scale"), "expected [s, R, z, tau] multipliers");
      }
      for (std::size_t k = 0; k < 4; ++k) c.input_scale[k] = sc[k].get<double>();
    }
    if (j.contains("output_squash") && !j.at("output_squash").is_null()) {
      const auto& sq = j.at("output_squash");
      if (!sq.is_array() || sq.size() != 2) {
        throw ConfigError(field("output_squash"), "expected [a_min, a_max]");
      }
      c.output_squash = std::make_pair(sq[0].get<double>(), sq[1].get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path, e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(path, e.what());
  }
  try {
    c.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(path, e.what());
  }
  return c;
}

std::string params_to_json(const PolicyParams& params) {
  const nlohmann::json j = {{"config", policy_config_to_json(params.config)},
                            {"theta", params.theta}};
  return j.dump(1);
}

PolicyParams params_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  if (!j.contains("config") || !j.contains("theta")) {
    throw IoError("checkpoint: expected fields 'config' and 'theta'");
  }
  PolicyParams params;
  params.config = policy_config_from_json(j.at("config"), "config");
  params.shapes = parameter_layout(params.config);
  params.theta = j.at("theta").get<std::vector<double>>();
  if (params.theta.size() != params.config.parameter_count()) {
    throw LengthError("checkpoint: theta length does not match architecture");
  }
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  io::write_atomic(path, params_to_json(params));
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  return params_from_json(io::read_text(path));
}

}  // namespace distmatch
