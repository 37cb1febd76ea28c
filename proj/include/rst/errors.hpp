#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rst {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Evaluation point outside [domain_lo, domain_hi]; bands never extrapolate.
class OutOfDomain : public Error {
 public:
  using Error::Error;
};

// Operation applied to the wrong model (e.g. nuisance fitting with p = 0).
class ModelMisuse : public Error {
 public:
  using Error::Error;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

// The lambda1/lambda3 bisection could not match the target on its bracket.
// Carries the bracket endpoint that came closest.
class BracketExhausted : public Error {
 public:
  BracketExhausted(const std::string& what, double boundary, double ratio)
      : Error(what), boundary_lambda(boundary), ratio_at_boundary(ratio) {}
  double boundary_lambda;
  double ratio_at_boundary;
};

class DegenerateSampler : public Error {
 public:
  using Error::Error;
};

// Empty feasible set when inverting the test at a grid point.
class InfeasibleBand : public Error {
 public:
  InfeasibleBand(const std::string& what, double at) : Error(what), x0(at) {}
  double x0;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line_number)
      : Error(what), line(line_number) {}
  std::size_t line;
};

}  // namespace rst
