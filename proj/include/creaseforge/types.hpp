#pragma once

#include <array>
#include <cstddef>

namespace creaseforge {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Fourth-order polynomial, ascending powers: y = a[0] + a[1] x + ... + a[4] x^4.
struct CoefficientVector {
  static constexpr std::size_t kSize = 5;
  std::array<double, kSize> a{};

  double operator()(double x) const {
    double y = a[4];
    for (int j = 3; j >= 0; --j) y = y * x + a[j];
    return y;
  }

  bool operator==(const CoefficientVector&) const = default;
};

/// Normalized abscissa range [start, end] covered by one principal line.
struct Endpoints {
  double start = 0.0;
  double end = 1.0;

  bool operator==(const Endpoints&) const = default;
};

struct CreaseLine {
  CoefficientVector coefficients;
  Endpoints range;

  bool operator==(const CreaseLine&) const = default;
};

/// One synthetic identity: the three principal lines in normalized coordinates.
struct PolynomialCrease {
  std::array<CreaseLine, 3> lines;

  bool operator==(const PolynomialCrease&) const = default;
};

void validate(const PolynomialCrease& crease);

}  // namespace creaseforge
