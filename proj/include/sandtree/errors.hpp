#pragma once

#include <stdexcept>
#include <string>

namespace sandtree {

// Exhaustive enumeration refused because the input exceeds a size guard.
class GuardError : public std::runtime_error {
 public:
  GuardError(const std::string& what, std::size_t requested, std::size_t limit)
      : std::runtime_error(what + " (requested " + std::to_string(requested) +
                           ", limit " + std::to_string(limit) + ")"),
        requested_(requested),
        limit_(limit) {}

  std::size_t requested() const noexcept { return requested_; }
  std::size_t limit() const noexcept { return limit_; }

 private:
  std::size_t requested_;
  std::size_t limit_;
};

// Iterative procedure hit its iteration cap before meeting its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::size_t iterations, double residual)
      : std::runtime_error(what + " (iterations " + std::to_string(iterations) +
                           ", residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  std::size_t iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  std::size_t iterations_;
  double residual_;
};

// Malformed serialized input. `position` is a byte offset or a JSON path.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::string position)
      : std::runtime_error(what + " at " + position), position_(std::move(position)) {}

  const std::string& position() const noexcept { return position_; }

 private:
  std::string position_;
};

// Argument outside the domain where a formula is defined (complex
// eigenvalues, divergent series, ...).
class NumericalDomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace sandtree
