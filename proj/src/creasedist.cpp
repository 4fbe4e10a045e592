#include "creaseforge/creasedist.hpp"

#include "creaseforge/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace creaseforge {

namespace {

EndpointStats moments(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

double draw_endpoint(const EndpointStats& stats, double gamma, RandomStream& stream) {
  const double z = stream.normal();
  return std::clamp(stats.mean + gamma * stats.std * z, 0.0, 1.0);
}

// Smallest gap kept between sampled endpoints so a line never degenerates.
constexpr double kMinSpan = 1e-3;

}  // namespace

GammaFactor::GammaFactor(double gamma) : gamma_(gamma) {
  if (!std::isfinite(gamma) || gamma < 0.0) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("gamma must be finite and >= 0, got {}", gamma));
  }
}

LineDistribution estimate_gaussian(std::span<const CoefficientVector> vectors,
                                   std::span<const Endpoints> endpoints) {
  if (vectors.size() < 2) {
    throw Error(ErrorCode::InsufficientSamples, fmt::format("need >= 2 samples, got {}", vectors.size()));
  }
  if (endpoints.size() != vectors.size()) {
    throw Error(ErrorCode::InvalidArgument, "coefficient and endpoint counts differ");
  }
  const auto n = static_cast<Eigen::Index>(vectors.size());
  Eigen::Matrix<double, Eigen::Dynamic, 5> data(n, 5);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < 5; ++j) data(i, j) = vectors[i].a[j];
  }
  if (!data.allFinite()) throw Error(ErrorCode::NonFiniteInput, "coefficient vectors");

  LineDistribution out;
  out.mean = data.colwise().mean().transpose();
  const auto centered = data.rowwise() - out.mean.transpose();
  out.covariance = (centered.transpose() * centered) / static_cast<double>(n - 1);
  // exact symmetry
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();

  std::vector<double> xs, xe;
  xs.reserve(endpoints.size());
  xe.reserve(endpoints.size());
  for (const auto& e : endpoints) {
    if (!std::isfinite(e.start) || !std::isfinite(e.end)) {
      throw Error(ErrorCode::NonFiniteInput, "endpoints");
    }
    xs.push_back(e.start);
    xe.push_back(e.end);
  }
  out.start = moments(xs);
  out.end = moments(xe);
  return out;
}

CreaseDistribution estimate_distribution(std::span<const CreaseFit> fits) {
  CreaseDistribution dist;
  dist.sample_count = fits.size();
  for (int i = 0; i < 3; ++i) {
    std::vector<CoefficientVector> vectors;
    std::vector<Endpoints> endpoints;
    vectors.reserve(fits.size());
    endpoints.reserve(fits.size());
    for (const auto& f : fits) {
      vectors.push_back(f.lines[i].coefficients);
      endpoints.push_back(f.endpoints[i]);
    }
    dist.lines[i] = estimate_gaussian(vectors, endpoints);
  }
  return dist;
}

void validate(const CreaseDistribution& dist) {
  for (int i = 0; i < 3; ++i) {
    const auto& line = dist.lines[i];
    if (!line.mean.allFinite() || !line.covariance.allFinite()) {
      throw Error(ErrorCode::NonFiniteInput, fmt::format("line {} distribution", i + 1));
    }
    if ((line.covariance - line.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("line {} covariance not symmetric", i + 1));
    }
    const Eigen::SelfAdjointEigenSolver<Matrix5> eig(line.covariance, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-10) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("line {} covariance not PSD", i + 1));
    }
    for (const auto* s : {&line.start, &line.end}) {
      if (!(s->std >= 0.0) || !(s->mean >= 0.0 && s->mean <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, fmt::format("line {} endpoint statistics", i + 1));
      }
    }
  }
}

Matrix5 cholesky_with_jitter(const Matrix5& covariance) {
  Eigen::LLT<Matrix5> llt(covariance);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  for (double jitter = 1e-12; jitter <= 1e-8 * 1.0001; jitter *= 10.0) {
    llt.compute(covariance + jitter * Matrix5::Identity());
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw Error(ErrorCode::CholeskyFailure, "covariance is not positive semi-definite");
}

PolynomialCrease sample_coefficients(const CreaseDistribution& dist, GammaFactor gamma,
                                     RandomStream& stream) {
  const double g = gamma.value();
  PolynomialCrease crease;
  for (int i = 0; i < 3; ++i) {
    const auto& line = dist.lines[i];
    const Matrix5 factor = cholesky_with_jitter(line.covariance);
    Vector5 z;
    for (int j = 0; j < 5; ++j) z[j] = stream.normal();
    const Vector5 a = line.mean + g * (factor * z);
    for (int j = 0; j < 5; ++j) crease.lines[i].coefficients.a[j] = a[j];

    double xs = draw_endpoint(line.start, g, stream);
    double xe = draw_endpoint(line.end, g, stream);
    if (xs > xe) std::swap(xs, xe);
    if (xe - xs < kMinSpan) {
      if (xe + kMinSpan <= 1.0) xe = xs + kMinSpan;
      else xs = xe - kMinSpan;
    }
    crease.lines[i].range = {xs, xe};
  }
  return crease;
}

std::vector<QQRow> qq_table(std::span<const double> values, int points) {
  if (values.size() < 10) {
    throw Error(ErrorCode::InsufficientSamples, fmt::format("QQ needs >= 10 samples, got {}", values.size()));
  }
  if (points < 1) throw Error(ErrorCode::InvalidArgument, "QQ needs at least one point");
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "QQ input");
  }
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  double mean = 0.0;
  for (double v : sorted) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));

  const boost::math::normal_distribution<double> standard;
  std::vector<QQRow> rows;
  rows.reserve(points);
  for (int k = 1; k <= points; ++k) {
    const double p = static_cast<double>(k) / (points + 1);
    // type-7 sample quantile
    const double h = (static_cast<double>(n) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, n - 1);
    const double empirical = sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    const double theoretical = sd == 0.0 ? mean : mean + sd * boost::math::quantile(standard, p);
    rows.push_back({theoretical, empirical});
  }
  return rows;
}

std::vector<QQRow> export_qq(std::span<const CoefficientVector> vectors, int coefficient_index,
                             int points) {
  if (coefficient_index < 0 || coefficient_index >= static_cast<int>(CoefficientVector::kSize)) {
    throw Error(ErrorCode::IndexOutOfRange, fmt::format("coefficient index {}", coefficient_index));
  }
  std::vector<double> values;
  values.reserve(vectors.size());
  for (const auto& v : vectors) values.push_back(v.a[coefficient_index]);
  return qq_table(values, points);
}

nlohmann::json to_json(const CreaseDistribution& dist) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& line : dist.lines) {
    std::vector<double> mu(line.mean.data(), line.mean.data() + 5);
    std::vector<double> sigma;
    sigma.reserve(25);
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 5; ++c) sigma.push_back(line.covariance(r, c));
    }
    lines.push_back({{"mu", mu},
                     {"sigma", sigma},
                     {"xs", {{"mean", line.start.mean}, {"std", line.start.std}}},
                     {"xe", {{"mean", line.end.mean}, {"std", line.end.std}}}});
  }
  return {{"lines", std::move(lines)}, {"sample_count", dist.sample_count}};
}

CreaseDistribution distribution_from_json(const nlohmann::json& j) {
  CreaseDistribution dist;
  try {
    const auto& lines = j.at("lines");
    if (!lines.is_array() || lines.size() != 3) {
      throw Error(ErrorCode::ParseError, "distribution needs exactly 3 lines");
    }
    for (std::size_t i = 0; i < 3; ++i) {
      const auto mu = lines[i].at("mu").get<std::vector<double>>();
      const auto sigma = lines[i].at("sigma").get<std::vector<double>>();
      if (mu.size() != 5 || sigma.size() != 25) {
        throw Error(ErrorCode::ParseError, fmt::format("line {}: mu needs 5 and sigma 25 values", i + 1));
      }
      auto& line = dist.lines[i];
      for (int r = 0; r < 5; ++r) {
        line.mean[r] = mu[r];
        for (int c = 0; c < 5; ++c) line.covariance(r, c) = sigma[r * 5 + c];
      }
      line.start = {lines[i].at("xs").at("mean").get<double>(), lines[i].at("xs").at("std").get<double>()};
      line.end = {lines[i].at("xe").at("mean").get<double>(), lines[i].at("xe").at("std").get<double>()};
    }
    dist.sample_count = j.at("sample_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  validate(dist);
  return dist;
}

}  // namespace creaseforge
