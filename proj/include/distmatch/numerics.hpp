#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace distmatch {

using Complex = std::complex<double>;

/// Key of a counter-based random stream. Two streams with equal (seed, stream_id)
/// produce identical sequences; the sequence is a pure function of the key, so a
/// stream can be handed to any worker thread without coordination.
struct RandomStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  /// Derives an independent child stream keyed by (hash(seed, stream_id), child).
  RandomStream substream(std::uint64_t child) const noexcept;

  friend bool operator==(const RandomStream&, const RandomStream&) = default;
};

/// Philox4x32-10 block function: 128-bit counter, 64-bit key.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Sequential reader over a RandomStream. Each Philox block yields two uniforms
/// in (0,1) with 53-bit resolution, mapped to two standard normals by the
/// Box-Muller transform (cos branch first, then sin branch).
class NormalSampler {
 public:
  explicit NormalSampler(RandomStream stream) noexcept : stream_(stream) {}

  double next() noexcept;
  double uniform() noexcept;

  std::uint64_t blocks_consumed() const noexcept { return block_; }

 private:
  void refill() noexcept;

  RandomStream stream_;
  std::uint64_t block_ = 0;
  std::array<double, 2> cache_{};
  int cached_ = 0;
};

std::vector<double> standard_normal(const RandomStream& stream, std::size_t n);

inline constexpr int kMaxBesselOrder = 64;
inline constexpr double kMaxBesselArgument = 1e4;

/// Bessel function of the first kind J_order(x) for integer order in [0, 64]
/// and |x| <= 1e4. Power series for |x| <= 0.1, Miller's downward recurrence
/// normalized with J_0 + 2 sum J_2k = 1 otherwise.
double bessel_j(int order, double x);

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Minimizes ||A x - b||_2 by Householder QR. Throws RankDeficiencyError when the
/// smallest |R_kk| falls below 1e-12 times the largest.
std::vector<double> least_squares(const Matrix& a, std::span<const double> b);

/// 1-Wasserstein distance between two equal-size empirical laws.
double wasserstein1(std::span<const double> x, std::span<const double> y);

}  // namespace distmatch
