#include "distmatch/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "distmatch/error.hpp"
#include "distmatch/io.hpp"

namespace distmatch {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// i^p for integer p
Complex i_pow(int p) {
  switch (((p % 4) + 4) % 4) {
    case 0:
      return {1.0, 0.0};
    case 1:
      return {0.0, 1.0};
    case 2:
      return {-1.0, 0.0};
    default:
      return {0.0, -1.0};
  }
}

void check_symmetric(const CFTable& target, const FrequencyGrid& grid) {
  constexpr double kTol = 1e-9;
  const std::size_t n = grid.size();
  for (std::size_t l = 0; l < n; ++l) {
    if (std::abs(target.values[l].imag()) > kTol) {
      throw SymmetryError("solve_modes: target CF is not real at u = " +
                          io::format_double(grid.nodes[l]));
    }
  }
  // Node l mirrors node n - l on the grid [-K, K).
  for (std::size_t l = 1; l < n; ++l) {
    const std::size_t mirror = n - l;
    if (std::abs(grid.nodes[l] + grid.nodes[mirror]) > 1e-9 * std::max(1.0, grid.k_max)) continue;
    if (std::abs(target.values[l].real() - target.values[mirror].real()) > kTol) {
      throw SymmetryError("solve_modes: target CF is not even at u = " +
                          io::format_double(grid.nodes[l]));
    }
  }
}

}  // namespace

void JacobiAngerProblem::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("oracle: sigma must be > 0");
  if (!(amplitude > 0.0) || !std::isfinite(amplitude)) {
    throw ParameterError("oracle: amplitude V must be > 0");
  }
  if (k_modes < 1 || k_modes > kMaxBesselOrder) {
    throw UnsupportedOrderError("oracle: k_modes must lie in [1, " +
                                std::to_string(kMaxBesselOrder) + "]");
  }
  if (grid.size() == 0) throw ParameterError("oracle: empty frequency grid");
  if (grid.k_max * amplitude > kMaxBesselArgument) {
    throw DomainError("oracle: grid exceeds the Bessel argument range");
  }
}

ModeSolution solve_modes(const JacobiAngerProblem& problem, const CFTable& target) {
  problem.validate();
  const FrequencyGrid& grid = problem.grid;
  if (!same_nodes(target, grid)) {
    throw GridMismatchError("solve_modes: target table is not tabulated on the grid nodes");
  }
  check_symmetric(target, grid);

  const auto k_modes = static_cast<std::size_t>(problem.k_modes);
  const std::size_t n = grid.size();
  auto system_row = [&](std::size_t l, double* a_row) {
    const double z = grid.nodes[l] * problem.amplitude;
    for (std::size_t k = 1; k <= k_modes; ++k) {
      const double damp = std::exp(-0.5 * static_cast<double>(k * k) * problem.sigma * problem.sigma);
      a_row[k - 1] = 2.0 * bessel_j(static_cast<int>(k), z) * damp;
    }
    return target.values[l].real() - bessel_j(0, z);
  };

  // Odd columns are odd in u and the target is even, so on mirror-paired nodes the odd
  // modes decouple exactly. Unpaired nodes (u = -K on the left-point grid) are left out of
  // the fit and only enter the reported residual.
  std::vector<std::size_t> fit_rows;
  for (std::size_t l = 0; l < n; ++l) {
    const std::size_t mirror = (n - l) % n;
    if (std::abs(grid.nodes[l] + grid.nodes[mirror]) <= 1e-9 * std::max(1.0, grid.k_max)) {
      fit_rows.push_back(l);
    }
  }
  if (fit_rows.empty()) {
    for (std::size_t l = 0; l < n; ++l) fit_rows.push_back(l);
  }
  const std::size_t rows = fit_rows.size();
  Matrix a(rows, k_modes);
  std::vector<double> b(rows);
  for (std::size_t r = 0; r < rows; ++r) b[r] = system_row(fit_rows[r], &a.values[r * k_modes]);

  // A column that vanishes numerically leaves its mode unidentifiable.
  std::vector<double> col_norm(k_modes, 0.0);
  for (std::size_t l = 0; l < rows; ++l) {
    for (std::size_t k = 0; k < k_modes; ++k) col_norm[k] += a(l, k) * a(l, k);
  }
  const double max_norm = *std::max_element(col_norm.begin(), col_norm.end());
  for (std::size_t k = 0; k < k_modes; ++k) {
    if (!(col_norm[k] > 1e-24 * max_norm)) {
      throw RankDeficiencyError("solve_modes: mode " + std::to_string(k + 1) +
                                    " is damped below resolution",
                                k + 1);
    }
  }

  ModeSolution sol;
  try {
    sol.x = least_squares(a, b);
  } catch (const RankDeficiencyError&) {
    constexpr double kRidge = 1e-10;
    Matrix aug(rows + k_modes, k_modes);
    std::copy(a.values.begin(), a.values.end(), aug.values.begin());
    for (std::size_t k = 0; k < k_modes; ++k) aug(rows + k, k) = std::sqrt(kRidge);
    std::vector<double> baug(b);
    baug.resize(rows + k_modes, 0.0);
    try {
      sol.x = least_squares(aug, baug);
    } catch (const RankDeficiencyError& e) {
      throw RankDeficiencyError(std::string("solve_modes: ") + e.what(), e.column() + 1);
    }
    sol.ridge_used = true;
  }

  double res = 0.0;
  std::vector<double> a_row(k_modes);
  for (std::size_t l = 0; l < n; ++l) {
    double r = -system_row(l, a_row.data());
    for (std::size_t k = 0; k < k_modes; ++k) r += a_row[k] * sol.x[k];
    res += r * r;
  }
  sol.residual_norm = std::sqrt(res);

  sol.psi.assign(k_modes + 1, Complex{});
  sol.psi[0] = 1.0;
  for (std::size_t k = 1; k <= k_modes; ++k) {
    const int kk = static_cast<int>(k);
    Complex psi = i_pow(-kk) * std::polar(1.0, -static_cast<double>(kk) * problem.s0) * sol.x[k - 1];
    if (std::abs(psi) > 1.0 + 1e-9) {
      psi /= std::abs(psi);
      sol.clipped_modes.push_back(kk);
    }
    sol.psi[k] = psi;
    if (k % 2 == 1) sol.odd_mode_max = std::max(sol.odd_mode_max, std::abs(sol.x[k - 1]));
  }
  return sol;
}

CFTable forward_cf(const ModeSolution& solution, const JacobiAngerProblem& problem) {
  const FrequencyGrid& grid = problem.grid;
  const int k_modes = static_cast<int>(solution.psi.size()) - 1;
  CFTable table;
  table.nodes = grid.nodes;
  table.values.resize(grid.size());
  for (std::size_t l = 0; l < grid.size(); ++l) {
    const double z = grid.nodes[l] * problem.amplitude;
    Complex sum = bessel_j(0, z) * solution.psi[0];
    for (int k = 1; k <= k_modes; ++k) {
      const double jk = bessel_j(k, z);
      const double damp = std::exp(-0.5 * k * k * problem.sigma * problem.sigma);
      const Complex plus = i_pow(k) * jk * std::polar(1.0, k * problem.s0) * solution.psi[k];
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      const Complex minus =
          i_pow(-k) * (sign * jk) * std::polar(1.0, -k * problem.s0) * std::conj(solution.psi[k]);
      sum += damp * (plus + minus);
    }
    table.values[l] = sum;
  }
  return table;
}

ActionDensity reconstruct_density(const ModeSolution& solution, std::pair<double, double> interval,
                                  std::size_t n_points) {
  const auto [lo, hi] = interval;
  if (!(hi > lo)) throw DomainError("reconstruct_density: empty interval");
  if (hi - lo > kTwoPi * (1.0 + 1e-12)) {
    throw DomainError("reconstruct_density: interval wider than one period");
  }
  if (n_points < 2) throw ParameterError("reconstruct_density: need at least 2 points");

  const int k_modes = static_cast<int>(solution.psi.size()) - 1;
  auto p = [&](double x) {
    double s = 1.0;
    for (int k = 1; k <= k_modes; ++k) {
      s += 2.0 * (solution.psi[k] * std::polar(1.0, -k * x)).real();
    }
    return s / kTwoPi;
  };

  ActionDensity d;
  d.lo = lo;
  d.hi = hi;
  d.x.resize(n_points);
  d.values.resize(n_points);
  const double h = (hi - lo) / static_cast<double>(n_points - 1);
  for (std::size_t i = 0; i < n_points; ++i) {
    d.x[i] = lo + h * static_cast<double>(i);
    d.values[i] = p(d.x[i]);
  }
  d.min_value = *std::min_element(d.values.begin(), d.values.end());
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < n_points; ++i) integral += 0.5 * h * (d.values[i] + d.values[i + 1]);
  d.interval_integral = integral;

  // The periodic trapezoid rule is exact for trigonometric polynomials of degree < N.
  const std::size_t n_period = 4 * static_cast<std::size_t>(k_modes) + 64;
  const double hp = kTwoPi / static_cast<double>(n_period);
  double period = 0.0;
  for (std::size_t i = 0; i < n_period; ++i) period += hp * p(lo + hp * static_cast<double>(i));
  d.period_integral = period;
  return d;
}

std::vector<double> sample_density(const ActionDensity& density, std::size_t m,
                                   const RandomStream& stream) {
  const std::size_t n = density.x.size();
  if (n < 2) throw ParameterError("sample_density: density table too small");
  std::vector<double> cdf(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) {
    const double p0 = std::max(0.0, density.values[i - 1]);
    const double p1 = std::max(0.0, density.values[i]);
    cdf[i] = cdf[i - 1] + 0.5 * (p0 + p1) * (density.x[i] - density.x[i - 1]);
  }
  const double total = cdf.back();
  if (!(total > 0.0)) throw DomainError("sample_density: density has no positive mass");
  for (double& c : cdf) c /= total;

  NormalSampler sampler(stream);
  std::vector<double> out(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double u = sampler.uniform();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cdf.begin());
    i = std::clamp<std::size_t>(i, 1, n - 1);
    const double c0 = cdf[i - 1];
    const double c1 = cdf[i];
    const double t = c1 > c0 ? (u - c0) / (c1 - c0) : 0.5;
    out[j] = density.x[i - 1] + t * (density.x[i] - density.x[i - 1]);
  }
  return out;
}

std::vector<Complex> estimate_modes(std::span<const double> actions, int k_modes) {
  if (actions.empty()) throw EmptySampleError("estimate_modes: no action samples");
  if (k_modes < 0) throw ParameterError("estimate_modes: k_modes must be >= 0");
  std::vector<Complex> psi(static_cast<std::size_t>(k_modes) + 1, Complex{});
  for (double a : actions) {
    const Complex rot = std::polar(1.0, a);
    Complex phase = rot;
    for (int k = 1; k <= k_modes; ++k) {
      psi[k] += phase;
      phase *= rot;
    }
  }
  const double m = static_cast<double>(actions.size());
  psi[0] = 1.0;
  for (int k = 1; k <= k_modes; ++k) psi[k] /= m;
  return psi;
}

std::vector<Complex> torus_deconvolve(std::span<const Complex> target_modes, double s0,
                                      double sigma) {
  if (target_modes.empty()) throw EmptySampleError("torus_deconvolve: no target modes");
  if (std::abs(target_modes[0] - Complex(1.0, 0.0)) > 1e-12) {
    throw DomainError("torus_deconvolve: target mode 0 must equal 1");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ParameterError("torus_deconvolve: sigma must be > 0");
  std::vector<Complex> nu(target_modes.size());
  std::vector<int> bad;
  nu[0] = 1.0;
  for (std::size_t n = 1; n < target_modes.size(); ++n) {
    const double dn = static_cast<double>(n);
    nu[n] = target_modes[n] * std::polar(std::exp(0.5 * sigma * sigma * dn * dn), dn * s0);
    if (!(std::abs(nu[n]) <= 1.0 + 1e-9)) bad.push_back(static_cast<int>(n));
  }
  if (!bad.empty()) {
    std::string list;
    for (int n : bad) list += (list.empty() ? "" : ", ") + std::to_string(n);
    throw InfeasibleTargetError("torus_deconvolve: target is rougher than the noise allows at n = " + list,
                                bad);
  }
  return nu;
}

std::vector<Complex> wrapped_gaussian_modes(double mean, double variance, int n_max) {
  if (!(variance >= 0.0)) throw ParameterError("wrapped_gaussian_modes: variance must be >= 0");
  if (n_max < 0) throw ParameterError("wrapped_gaussian_modes: n_max must be >= 0");
  std::vector<Complex> modes(static_cast<std::size_t>(n_max) + 1);
  for (int n = 0; n <= n_max; ++n) {
    modes[n] = std::polar(std::exp(-0.5 * variance * n * n), -n * mean);
  }
  return modes;
}

void write_modes_csv(const std::filesystem::path& path, std::span<const Complex> modes) {
  std::string out = "k,re,im,abs\n";
  for (std::size_t k = 0; k < modes.size(); ++k) {
    out += std::to_string(k) + ',' + io::format_double(modes[k].real()) + ',' +
           io::format_double(modes[k].imag()) + ',' + io::format_double(std::abs(modes[k])) + '\n';
  }
  io::write_atomic(path, out);
}

void write_density_csv(const std::filesystem::path& path, const ActionDensity& density) {
  std::string out = "x,p\n";
  for (std::size_t i = 0; i < density.x.size(); ++i) {
    out += io::format_double(density.x[i]) + ',' + io::format_double(density.values[i]) + '\n';
  }
  io::write_atomic(path, out);
}

}  // namespace distmatch
