#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mpm_parvi {

/// Raised when a deformation gradient has det(F) <= the singularity threshold.
class SingularDeformation : public std::runtime_error {
 public:
  SingularDeformation(const std::string& what, double det)
      : std::runtime_error(what), det_(det) {}
  double determinant() const noexcept { return det_; }

 private:
  double det_;
};

/// Raised when a general matrix (e.g. the APIC inertia-like tensor) cannot be inverted.
class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A particle position violates the grid's interior margin.
class OutOfDomain : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Configuration validation failure. Carries every problem found in one pass.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems)
      : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& problems) {
    std::string out;
    for (const auto& p : problems) {
      if (!out.empty()) out += '\n';
      out += p;
    }
    return out;
  }

  std::vector<std::string> problems_;
};

}  // namespace mpm_parvi
