#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "distmatch/charfn.hpp"
#include "distmatch/numerics.hpp"

namespace distmatch {

/// Terminal reward V cos(s0 + a0 + sigma eps) with a0 drawn from the unknown
/// action law; the Jacobi-Anger expansion turns CF matching into a linear
/// system in the Fourier modes psi_A(k) of that law.
struct JacobiAngerProblem {
  double s0 = 0.0;
  double sigma = 0.1;
  double amplitude = 1.0;  // V
  int k_modes = 16;
  FrequencyGrid grid;

  void validate() const;
};

struct ModeSolution {
  std::vector<double> x;      // x_1..x_K
  std::vector<Complex> psi;   // psi_A(0..K)
  double residual_norm = 0.0; // ||A x - b||_2
  double odd_mode_max = 0.0;
  bool ridge_used = false;
  /// Modes whose magnitude exceeded 1 + 1e-9 and were clipped back to the unit disc.
  std::vector<int> clipped_modes;
};

struct ActionDensity {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<double> x;
  std::vector<double> values;
  double period_integral = 0.0;
  double interval_integral = 0.0;
  double min_value = 0.0;
};

/// Least-squares solve of sum_k 2 J_k(u V) e^{-k^2 sigma^2 / 2} x_k = phi*(u) - J_0(u V)
/// over all grid nodes, then psi_A(k) = i^{-k} e^{-i k s0} x_k. Throws SymmetryError
/// for targets that are not real and even.
ModeSolution solve_modes(const JacobiAngerProblem& problem, const CFTable& target);

/// phi_R(u) = sum_{|k|<=K} i^k J_k(u V) e^{i k s0} e^{-k^2 sigma^2 / 2} psi_A(k)
CFTable forward_cf(const ModeSolution& solution, const JacobiAngerProblem& problem);

/// p(x) = (1/2pi) (1 + 2 sum_k Re(psi_A(k) e^{-i k x})) on n_points uniform points
/// of [lo, hi]; the interval may not exceed one period.
ActionDensity reconstruct_density(const ModeSolution& solution, std::pair<double, double> interval,
                                  std::size_t n_points);

/// Inverse-CDF draws from the tabulated density with linear interpolation;
/// negative values are clipped to zero before normalizing.
std::vector<double> sample_density(const ActionDensity& density, std::size_t m,
                                   const RandomStream& stream);

/// psi_hat(k) = (1/M) sum_j e^{i k a_j}, k = 0..K
std::vector<Complex> estimate_modes(std::span<const double> actions, int k_modes);

/// nu(n) = mu*(n) e^{i n s0} e^{sigma^2 n^2 / 2} for n = 0..N (input index n).
/// Throws InfeasibleTargetError listing every n with |nu(n)| > 1 + 1e-9.
std::vector<Complex> torus_deconvolve(std::span<const Complex> target_modes, double s0,
                                      double sigma);

/// Modes e^{-i n m} e^{-v n^2 / 2} of a wrapped Gaussian, n = 0..N.
std::vector<Complex> wrapped_gaussian_modes(double mean, double variance, int n_max);

// CSV `k,re,im,abs` and `x,p`.
void write_modes_csv(const std::filesystem::path& path, std::span<const Complex> modes);
void write_density_csv(const std::filesystem::path& path, const ActionDensity& density);

}  // namespace distmatch
