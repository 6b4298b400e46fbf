#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "distmatch/numerics.hpp"

namespace distmatch {

/// Uniform quadrature grid on [-K, K) with Gaussian weight w(u) = exp(-alpha u^2).
/// Nodes u_l = -K + l * 2K/L (l = 0..L-1), weights beta_l = w(u_l) * 2K/L.
struct FrequencyGrid {
  double k_max = 0.0;
  std::size_t n_nodes = 0;
  double alpha = 0.0;
  std::vector<double> nodes;
  std::vector<double> weights;

  double spacing() const noexcept { return 2.0 * k_max / static_cast<double>(n_nodes); }
  std::size_t size() const noexcept { return nodes.size(); }
};

FrequencyGrid build_uniform_grid(double k_max, std::size_t n_nodes, double alpha);

/// A characteristic function tabulated on the nodes of a grid.
struct CFTable {
  std::vector<double> nodes;
  std::vector<Complex> values;

  std::size_t size() const noexcept { return nodes.size(); }
};

// Target law descriptions.
struct EmpiricalSamples {
  std::vector<double> samples;
};
struct StandardNormal {};
struct Epanechnikov {};
struct DiracAt {
  double location = 0.0;
};
struct WrappedGaussian {
  double mean = 0.0;
  double variance = 1.0;
};
struct TableFile {
  std::filesystem::path path;
};

using TargetSpec =
    std::variant<EmpiricalSamples, StandardNormal, Epanechnikov, DiracAt, WrappedGaussian, TableFile>;

std::string target_kind_name(const TargetSpec& spec);
void validate(const TargetSpec& spec);

/// phi(u) = (1/M) sum_j exp(i u x_j) at every node. Evaluated with a phasor
/// rotation along the uniform node spacing, re-anchored every 64 nodes.
CFTable empirical_cf(std::span<const double> samples, const FrequencyGrid& grid);

CFTable target_cf(const TargetSpec& spec, const FrequencyGrid& grid);

/// Closed-form Epanechnikov characteristic function 3 (sin u - u cos u) / u^3.
double epanechnikov_cf(double u);

/// Upper bound 4 * integral_{|u|>K} exp(-alpha u^2) du on the truncated loss mass.
double cf_tail_mass(double k_max, double alpha);

/// True when both tables live on bit-identical node sets.
bool same_nodes(const CFTable& table, const FrequencyGrid& grid) noexcept;

// File formats: samples are one decimal per line; tables are CSV `u,re,im`.
std::vector<double> read_samples(const std::filesystem::path& path);
void write_samples(const std::filesystem::path& path, std::span<const double> samples);
CFTable read_cf_table(const std::filesystem::path& path, const FrequencyGrid& grid);
void write_cf_table(const std::filesystem::path& path, const CFTable& table);

}  // namespace distmatch
