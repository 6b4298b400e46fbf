#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace distmatch {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class EmptySampleError : public Error {
 public:
  using Error::Error;
};

class LengthError : public Error {
 public:
  using Error::Error;
};

class UnsupportedOrderError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class GridMismatchError : public Error {
 public:
  using Error::Error;
};

class CapabilityError : public Error {
 public:
  using Error::Error;
};

class StageError : public Error {
 public:
  using Error::Error;
};

class SymmetryError : public Error {
 public:
  using Error::Error;
};

class RankDeficiencyError : public Error {
 public:
  RankDeficiencyError(const std::string& what, std::size_t column)
      : Error(what), column_(column) {}
  std::size_t column() const noexcept { return column_; }

 private:
  std::size_t column_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t trajectory, std::size_t stage)
      : Error(what), trajectory_(trajectory), stage_(stage) {}
  std::size_t trajectory() const noexcept { return trajectory_; }
  std::size_t stage() const noexcept { return stage_; }

 private:
  std::size_t trajectory_;
  std::size_t stage_;
};

class InfeasibleTargetError : public Error {
 public:
  InfeasibleTargetError(const std::string& what, std::vector<int> modes)
      : Error(what), modes_(std::move(modes)) {}
  const std::vector<int>& modes() const noexcept { return modes_; }

 private:
  std::vector<int> modes_;
};

class MemoryBudgetError : public Error {
 public:
  using Error::Error;
};

// Configuration problems, carrying the JSON path of the offending key.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : Error(path + ": " + message), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace distmatch
