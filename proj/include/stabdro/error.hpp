#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stabdro {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Network or instance data violates a structural invariant.
class InvalidModelError : public Error {
 public:
  using Error::Error;
};

/// Kron reduction hit a singular passive block.
class ReductionSingularError : public Error {
 public:
  ReductionSingularError(const std::string& what, std::vector<int> buses)
      : Error(what), buses_(std::move(buses)) {}
  const std::vector<int>& buses() const { return buses_; }

 private:
  std::vector<int> buses_;
};

class InvalidOperatingPointError : public Error {
 public:
  using Error::Error;
};

class UnsupportedPlacementError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class InvalidCovarianceError : public Error {
 public:
  using Error::Error;
};

/// QP or regression infeasibility. `rows` is a subset of inequality rows that
/// cannot hold simultaneously.
class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, std::vector<int> rows)
      : Error(what), rows_(std::move(rows)) {}
  const std::vector<int>& rows() const { return rows_; }

 private:
  std::vector<int> rows_;
};

class UnboundedError : public Error {
 public:
  using Error::Error;
};

/// Regression objective has no curvature (empty boundary band).
class DegenerateObjectiveError : public Error {
 public:
  using Error::Error;
};

class DataInseparableError : public Error {
 public:
  using Error::Error;
};

/// Every coefficient was excluded from a MAPE comparison.
class UndefinedMapeError : public Error {
 public:
  using Error::Error;
};

/// Input file missing or unreadable; the CLI maps this to exit code 2.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Upstream artifact does not match the inputs it claims; CLI exit code 3.
class StaleArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace stabdro
