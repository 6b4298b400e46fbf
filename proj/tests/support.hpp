#pragma once

// Small generators and reference routines shared by the unit tests.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

namespace testsupport {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  std::uint64_t bits() { return rng_(); }

  std::vector<double> normals(std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * normal();
    return v;
  }

 private:
  std::mt19937_64 rng_;
};

// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// J_k(x) from the power series in long double, summed until terms drop below 1e-14.
inline double bessel_series(int k, double x) {
  long double term = 1.0L;
  for (int i = 1; i <= k; ++i) term *= static_cast<long double>(x) / (2.0L * i);
  long double sum = term;
  const long double q = -static_cast<long double>(x) * x / 4.0L;
  for (int m = 1; m < 500; ++m) {
    term *= q / (static_cast<long double>(m) * (m + k));
    sum += term;
    if (std::fabs(static_cast<double>(term)) < 1e-14 && m > x) break;
  }
  return static_cast<double>(sum);
}

// Gaussian elimination with partial pivoting on a dense square system.
inline std::vector<double> gauss_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    }
    std::swap(a[c], a[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

}  // namespace testsupport
