#pragma once

#include "creaseforge/creasefit.hpp"
#include "creaseforge/rng.hpp"
#include "creaseforge/types.hpp"

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <array>
#include <span>
#include <vector>

namespace creaseforge {

using Vector5 = Eigen::Matrix<double, 5, 1>;
using Matrix5 = Eigen::Matrix<double, 5, 5>;

struct EndpointStats {
  double mean = 0.0;
  double std = 0.0;
};

/// Gaussian prior of one principal line: coefficients ~ N(mean, covariance),
/// endpoints as independent 1-D Gaussians.
struct LineDistribution {
  Vector5 mean = Vector5::Zero();
  Matrix5 covariance = Matrix5::Zero();
  EndpointStats start;
  EndpointStats end;
};

struct CreaseDistribution {
  std::array<LineDistribution, 3> lines;
  std::size_t sample_count = 0;
};

/// Similarity control: coefficients are drawn from N(mu, gamma^2 Sigma).
class GammaFactor {
public:
  explicit GammaFactor(double gamma);
  double value() const noexcept { return gamma_; }

private:
  double gamma_;
};

/// Sample mean and unbiased (n-1) covariance of one line's coefficient
/// vectors, plus the endpoint statistics.
LineDistribution estimate_gaussian(std::span<const CoefficientVector> vectors,
                                   std::span<const Endpoints> endpoints);

/// Per-line estimate over a fitted corpus. Lines are modeled independently.
CreaseDistribution estimate_distribution(std::span<const CreaseFit> fits);

void validate(const CreaseDistribution& dist);

/// Lower Cholesky factor of `covariance`, retrying with diagonal jitter
/// 1e-12, 1e-11, ..., 1e-8 when the plain factorization fails.
Matrix5 cholesky_with_jitter(const Matrix5& covariance);

/// Draws one identity. Coefficient draws per line are mu + gamma * L z; the
/// endpoints are drawn with std scaled by gamma, clamped to [0,1] and ordered.
PolynomialCrease sample_coefficients(const CreaseDistribution& dist, GammaFactor gamma,
                                     RandomStream& stream);

struct QQRow {
  double theoretical = 0.0;
  double empirical = 0.0;
};

/// Quantile-quantile table of coefficient `coefficient_index` against the
/// normal fitted by moments. Rows sit at probabilities k/(points+1),
/// k = 1..points; both columns are in data units.
std::vector<QQRow> export_qq(std::span<const CoefficientVector> vectors, int coefficient_index,
                             int points = 19);

/// Same as above on raw values.
std::vector<QQRow> qq_table(std::span<const double> values, int points = 19);

nlohmann::json to_json(const CreaseDistribution& dist);
CreaseDistribution distribution_from_json(const nlohmann::json& j);

}  // namespace creaseforge
