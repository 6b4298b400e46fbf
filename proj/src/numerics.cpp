#include "distmatch/numerics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "distmatch/error.hpp"

namespace distmatch {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline void mulhilo32(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) noexcept {
  const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(product >> 32);
  lo = static_cast<std::uint32_t>(product);
}

// 53-bit uniform strictly inside (0,1).
inline double to_open_unit(std::uint64_t bits) noexcept {
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

RandomStream RandomStream::substream(std::uint64_t child) const noexcept {
  return RandomStream{splitmix64(seed ^ splitmix64(stream_id + 0x632BE59BD9B4E019ULL)), child};
}

std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                        std::array<std::uint32_t, 2> key) noexcept {
  constexpr std::uint32_t kM0 = 0xD2511F53U;
  constexpr std::uint32_t kM1 = 0xCD9E8D57U;
  constexpr std::uint32_t kW0 = 0x9E3779B9U;
  constexpr std::uint32_t kW1 = 0xBB67AE85U;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo32(kM0, ctr[0], hi0, lo0);
    mulhilo32(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

void NormalSampler::refill() noexcept {
  const std::array<std::uint32_t, 4> counter = {
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      static_cast<std::uint32_t>(stream_.stream_id),
      static_cast<std::uint32_t>(stream_.stream_id >> 32)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(stream_.seed),
                                            static_cast<std::uint32_t>(stream_.seed >> 32)};
  const auto out = philox4x32(counter, key);
  ++block_;
  const double u1 = to_open_unit((static_cast<std::uint64_t>(out[1]) << 32) | out[0]);
  const double u2 = to_open_unit((static_cast<std::uint64_t>(out[3]) << 32) | out[2]);
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cache_ = {radius * std::cos(angle), radius * std::sin(angle)};
  cached_ = 2;
}

double NormalSampler::next() noexcept {
  if (cached_ == 0) refill();
  return cache_[2 - cached_--];
}

double NormalSampler::uniform() noexcept {
  // A uniform consumes a whole block so normal pairs stay aligned to blocks.
  const std::array<std::uint32_t, 4> counter = {
      static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
      static_cast<std::uint32_t>(stream_.stream_id),
      static_cast<std::uint32_t>(stream_.stream_id >> 32)};
  const std::array<std::uint32_t, 2> key = {static_cast<std::uint32_t>(stream_.seed),
                                            static_cast<std::uint32_t>(stream_.seed >> 32)};
  const auto out = philox4x32(counter, key);
  ++block_;
  cached_ = 0;
  return to_open_unit((static_cast<std::uint64_t>(out[1]) << 32) | out[0]);
}

std::vector<double> standard_normal(const RandomStream& stream, std::size_t n) {
  NormalSampler sampler(stream);
  std::vector<double> out(n);
  for (auto& v : out) v = sampler.next();
  return out;
}

namespace {

double bessel_series(int order, double x) {
  const double half = 0.5 * x;
  double term = 1.0;
  for (int i = 1; i <= order; ++i) term *= half / i;
  const double q = -half * half;
  double sum = term;
  for (int m = 1; m < 200; ++m) {
    term *= q / (static_cast<double>(m) * (m + order));
    sum += term;
    if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
  }
  return sum;
}

double bessel_miller(int order, double x) {
  const double reach = std::max(static_cast<double>(order), std::ceil(x));
  int start = static_cast<int>(reach) + 30 + static_cast<int>(15.0 * std::cbrt(std::max(x, 1.0)));
  start += start % 2;

  constexpr double kBig = 1e250;
  constexpr double kSmall = 1e-250;
  double above = 0.0;  // J_{k+1}
  double current = 1e-30;  // J_k, unnormalized
  double even_sum = 0.0;
  double wanted = (order == start) ? current : 0.0;
  for (int k = start; k >= 1; --k) {
    const double below = (2.0 * k / x) * current - above;
    above = current;
    current = below;
    if (std::abs(current) > kBig) {
      current *= kSmall;
      above *= kSmall;
      even_sum *= kSmall;
      wanted *= kSmall;
    }
    const int index = k - 1;
    if (index > 0 && index % 2 == 0) even_sum += current;
    if (index == order) wanted = current;
  }
  const double norm = current + 2.0 * even_sum;
  return wanted / norm;
}

}  // namespace

double bessel_j(int order, double x) {
  if (order < 0 || order > kMaxBesselOrder) {
    throw UnsupportedOrderError("bessel_j: order " + std::to_string(order) +
                                " outside supported range [0, 64]");
  }
  if (!std::isfinite(x) || std::abs(x) > kMaxBesselArgument) {
    throw DomainError("bessel_j: |x| must not exceed 1e4");
  }
  const double sign = (x < 0.0 && order % 2 == 1) ? -1.0 : 1.0;
  const double ax = std::abs(x);
  if (ax == 0.0) return order == 0 ? 1.0 : 0.0;
  if (ax <= 0.1) return sign * bessel_series(order, ax);
  return sign * bessel_miller(order, ax);
}

std::vector<double> least_squares(const Matrix& a, std::span<const double> b) {
  if (a.cols == 0 || a.rows < a.cols) {
    throw ParameterError("least_squares: need rows >= cols >= 1");
  }
  if (b.size() != a.rows) throw LengthError("least_squares: rhs length must equal row count");
  for (double v : a.values) {
    if (!std::isfinite(v)) throw DomainError("least_squares: matrix has non-finite entries");
  }

  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> mat(a.values.data(), static_cast<Eigen::Index>(a.rows),
                                       static_cast<Eigen::Index>(a.cols));
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(mat);
  const Eigen::VectorXd diag = qr.matrixQR().diagonal().cwiseAbs();
  Eigen::Index weakest = 0;
  const double smallest = diag.minCoeff(&weakest);
  if (!(smallest >= 1e-12 * diag.maxCoeff())) {
    throw RankDeficiencyError("least_squares: numerically rank-deficient at column " +
                                  std::to_string(weakest),
                              static_cast<std::size_t>(weakest));
  }
  Eigen::VectorXd qtb = rhs;
  qtb.applyOnTheLeft(qr.householderQ().adjoint());
  const Eigen::VectorXd x = qr.matrixQR()
                                .topLeftCorner(mat.cols(), mat.cols())
                                .triangularView<Eigen::Upper>()
                                .solve(qtb.head(mat.cols()));
  return {x.data(), x.data() + x.size()};
}

double wasserstein1(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw EmptySampleError("wasserstein1: empty sample");
  if (x.size() != y.size()) throw LengthError("wasserstein1: samples must have equal length");
  std::vector<double> xs(x.begin(), x.end());
  std::vector<double> ys(y.begin(), y.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) total += std::abs(xs[i] - ys[i]);
  return total / static_cast<double>(xs.size());
}

}  // namespace distmatch
