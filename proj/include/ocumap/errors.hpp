#pragma once

#include <stdexcept>
#include <string>

namespace ocumap {

// Invalid argument values: non-positive depth, point behind the camera,
// rasters too small for an operation, camera placed inside the eye model.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed file or configuration content. The message names the field or
// byte offset that could not be parsed.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Fewer samples than a fit needs.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Rank-deficient geometry (coplanar or collinear points, imaginary radius).
class DegenerateGeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite loss while probing a finite-difference gradient.
class GradientError : public std::runtime_error {
 public:
  GradientError(const std::string& what, int parameter)
      : std::runtime_error(what), parameter_(parameter) {}
  int parameter() const noexcept { return parameter_; }

 private:
  int parameter_;
};

}  // namespace ocumap
