#include "distmatch/charfn.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <string>

#include "distmatch/error.hpp"
#include "distmatch/io.hpp"

namespace distmatch {

FrequencyGrid build_uniform_grid(double k_max, std::size_t n_nodes, double alpha) {
  if (!(k_max > 0.0) || !std::isfinite(k_max)) {
    throw ParameterError("frequency grid: K must be positive and finite");
  }
  if (n_nodes < 2) throw ParameterError("frequency grid: need at least 2 nodes");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
    throw ParameterError("frequency grid: alpha must be non-negative");
  }
  FrequencyGrid grid;
  grid.k_max = k_max;
  grid.n_nodes = n_nodes;
  grid.alpha = alpha;
  grid.nodes.resize(n_nodes);
  grid.weights.resize(n_nodes);
  const double du = grid.spacing();
  for (std::size_t l = 0; l < n_nodes; ++l) {
    const double u = -k_max + static_cast<double>(l) * du;
    grid.nodes[l] = u;
    grid.weights[l] = std::exp(-alpha * u * u) * du;
  }
  return grid;
}

std::string target_kind_name(const TargetSpec& spec) {
  struct Visitor {
    std::string operator()(const EmpiricalSamples&) const { return "empirical-samples"; }
    std::string operator()(const StandardNormal&) const { return "standard-normal"; }
    std::string operator()(const Epanechnikov&) const { return "epanechnikov"; }
    std::string operator()(const DiracAt&) const { return "dirac-at"; }
    std::string operator()(const WrappedGaussian&) const { return "wrapped-gaussian"; }
    std::string operator()(const TableFile&) const { return "table-file"; }
  };
  return std::visit(Visitor{}, spec);
}

void validate(const TargetSpec& spec) {
  if (const auto* s = std::get_if<EmpiricalSamples>(&spec)) {
    if (s->samples.empty()) throw EmptySampleError("target: empty sample set");
    for (double v : s->samples) {
      if (!std::isfinite(v)) throw DomainError("target: non-finite sample");
    }
  } else if (const auto* w = std::get_if<WrappedGaussian>(&spec)) {
    if (!(w->variance > 0.0)) throw ParameterError("target: wrapped-gaussian variance must be > 0");
  } else if (const auto* d = std::get_if<DiracAt>(&spec)) {
    if (!std::isfinite(d->location)) throw ParameterError("target: dirac location must be finite");
  }
}

CFTable empirical_cf(std::span<const double> samples, const FrequencyGrid& grid) {
  if (samples.empty()) throw EmptySampleError("empirical_cf: empty sample set");
  const std::size_t n = grid.size();
  std::vector<double> re(n, 0.0);
  std::vector<double> im(n, 0.0);
  const double du = grid.spacing();
  constexpr std::size_t kAnchor = 64;
  for (double x : samples) {
    const double step_re = std::cos(du * x);
    const double step_im = std::sin(du * x);
    double c = 0.0;
    double s = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      if (l % kAnchor == 0) {
        const double phase = grid.nodes[l] * x;
        c = std::cos(phase);
        s = std::sin(phase);
      } else {
        const double nc = c * step_re - s * step_im;
        s = c * step_im + s * step_re;
        c = nc;
      }
      re[l] += c;
      im[l] += s;
    }
  }
  CFTable table;
  table.nodes = grid.nodes;
  table.values.resize(n);
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t l = 0; l < n; ++l) table.values[l] = Complex(re[l] * inv, im[l] * inv);
  return table;
}

double epanechnikov_cf(double u) {
  const double a = std::abs(u);
  if (a < 0.5) {
    // 3 sum_{k>=1} (-1)^{k+1} 2k u^{2k-2} / (2k+1)!, summed from the small end.
    const double u2 = u * u;
    double terms[12];
    double factorial = 6.0;  // (2k+1)! at k = 1
    double power = 1.0;
    for (int k = 1; k <= 12; ++k) {
      terms[k - 1] = (k % 2 == 1 ? 1.0 : -1.0) * 2.0 * k * power / factorial;
      power *= u2;
      factorial *= (2.0 * k + 2.0) * (2.0 * k + 3.0);
    }
    double sum = 0.0;
    for (int k = 11; k >= 0; --k) sum += terms[k];
    return 3.0 * sum;
  }
  return 3.0 * (std::sin(a) - a * std::cos(a)) / (a * a * a);
}

CFTable target_cf(const TargetSpec& spec, const FrequencyGrid& grid) {
  validate(spec);
  if (const auto* s = std::get_if<EmpiricalSamples>(&spec)) return empirical_cf(s->samples, grid);
  if (const auto* f = std::get_if<TableFile>(&spec)) return read_cf_table(f->path, grid);

  CFTable table;
  table.nodes = grid.nodes;
  table.values.resize(grid.size());
  for (std::size_t l = 0; l < grid.size(); ++l) {
    const double u = grid.nodes[l];
    if (std::holds_alternative<StandardNormal>(spec)) {
      table.values[l] = std::exp(-0.5 * u * u);
    } else if (std::holds_alternative<Epanechnikov>(spec)) {
      table.values[l] = epanechnikov_cf(u);
    } else if (const auto* d = std::get_if<DiracAt>(&spec)) {
      table.values[l] = std::polar(1.0, u * d->location);
    } else if (const auto* w = std::get_if<WrappedGaussian>(&spec)) {
      const double n = std::round(u);
      if (std::abs(u - n) > 1e-12) {
        throw DomainError("target_cf: wrapped-gaussian needs integer nodes, got " +
                          io::format_double(u));
      }
      table.values[l] = std::polar(std::exp(-0.5 * w->variance * n * n), -n * w->mean);
    }
  }
  return table;
}

double cf_tail_mass(double k_max, double alpha) {
  if (!(k_max > 0.0)) throw ParameterError("cf_tail_mass: K must be positive");
  if (!(alpha > 0.0)) throw DomainError("cf_tail_mass: alpha = 0 gives an unbounded tail");
  if (std::isinf(k_max)) return 0.0;
  return 4.0 * std::sqrt(std::numbers::pi / alpha) * std::erfc(k_max * std::sqrt(alpha));
}

bool same_nodes(const CFTable& table, const FrequencyGrid& grid) noexcept {
  return table.nodes == grid.nodes;
}

std::vector<double> read_samples(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::vector<double> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    samples.push_back(io::parse_double(line));
  }
  if (samples.empty()) throw EmptySampleError("sample file " + path.string() + " is empty");
  return samples;
}

void write_samples(const std::filesystem::path& path, std::span<const double> samples) {
  std::string out;
  out.reserve(samples.size() * 24);
  for (double v : samples) {
    out += io::format_double(v);
    out += '\n';
  }
  io::write_atomic(path, out);
}

CFTable read_cf_table(const std::filesystem::path& path, const FrequencyGrid& grid) {
  std::istringstream in(io::read_text(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("u,re,im", 0) != 0) {
    throw IoError(path.string() + ": expected header 'u,re,im'");
  }
  CFTable table;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) {
      throw IoError(path.string() + ": malformed row '" + line + "'");
    }
    std::string_view view(line);
    table.nodes.push_back(io::parse_double(view.substr(0, c1)));
    table.values.emplace_back(io::parse_double(view.substr(c1 + 1, c2 - c1 - 1)),
                              io::parse_double(view.substr(c2 + 1)));
  }
  if (!same_nodes(table, grid)) {
    throw GridMismatchError(path.string() + ": table nodes differ from the active grid");
  }
  return table;
}

void write_cf_table(const std::filesystem::path& path, const CFTable& table) {
  std::string out = "u,re,im\n";
  for (std::size_t l = 0; l < table.size(); ++l) {
    out += io::format_double(table.nodes[l]) + ',' + io::format_double(table.values[l].real()) +
           ',' + io::format_double(table.values[l].imag()) + '\n';
  }
  io::write_atomic(path, out);
}

}  // namespace distmatch
