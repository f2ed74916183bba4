#pragma once

#include <stdexcept>
#include <string>

namespace krr {

/// Inputs outside an operation's domain (bad shapes, negative ridge, s <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A well-posed call whose numerical problem has no acceptable answer:
/// no positive fixed point, degenerate denominator, ill-posed interpolation,
/// quadrature that does not settle.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace krr
