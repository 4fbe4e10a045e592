#include "creaseforge/creasedist.hpp"
#include "creaseforge/error.hpp"
#include "creaseforge/rng.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/LU>
#include <nlohmann/json.hpp>

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

using namespace creaseforge;

namespace {

Matrix5 test_sigma() {
  Matrix5 s;
  s << 0.04, 0.01, 0.0, -0.005, 0.0,  //
      0.01, 0.09, 0.02, 0.0, 0.0,     //
      0.0, 0.02, 0.16, 0.03, 0.01,    //
      -0.005, 0.0, 0.03, 0.25, 0.05,  //
      0.0, 0.0, 0.01, 0.05, 0.36;
  return s;
}

CreaseDistribution test_distribution() {
  CreaseDistribution dist;
  for (int i = 0; i < 3; ++i) {
    auto& line = dist.lines[static_cast<std::size_t>(i)];
    line.mean << 0.3 + 0.1 * i, -0.2, 0.5, 0.1, -0.05;
    line.covariance = test_sigma() * (1.0 + i);
    line.start = {0.1 + 0.05 * i, 0.02};
    line.end = {0.8 - 0.05 * i, 0.03};
  }
  dist.sample_count = 100;
  return dist;
}

std::vector<Eigen::VectorXd> line_draws(const CreaseDistribution& dist, double gamma, int n, std::uint64_t seed,
                                        int line = 0) {
  std::vector<Eigen::VectorXd> out;
  RandomStream root(seed);
  for (int k = 0; k < n; ++k) {
    auto s = root.child(static_cast<std::uint64_t>(k));
    const auto crease = sample_coefficients(dist, GammaFactor(gamma), s);
    Eigen::VectorXd v(5);
    for (int j = 0; j < 5; ++j) v[j] = crease.lines[static_cast<std::size_t>(line)].coefficients.a[static_cast<std::size_t>(j)];
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("identical samples give zero covariance") {
  const CoefficientVector v{{0.1, 0.2, 0.3, 0.4, 0.5}};
  const std::vector<CoefficientVector> vs(4, v);
  const std::vector<Endpoints> es(4, Endpoints{0.2, 0.7});
  const auto line = estimate_gaussian(vs, es);
  for (int j = 0; j < 5; ++j) CHECK(line.mean[j] == v.a[static_cast<std::size_t>(j)]);
  CHECK(line.covariance.isZero(0.0));
  CHECK(line.start.mean == 0.2);
  CHECK(line.start.std == 0.0);
}

TEST_CASE("two samples {0, 2} give mean 1 and unbiased variance 2") {
  const std::vector<CoefficientVector> vs = {CoefficientVector{{0, 0, 0, 0, 0}}, CoefficientVector{{2, 0, 0, 0, 0}}};
  const std::vector<Endpoints> es = {{0.0, 0.5}, {0.2, 0.7}};
  const auto line = estimate_gaussian(vs, es);
  CHECK(line.mean[0] == 1.0);
  CHECK(line.covariance(0, 0) == 2.0);
  CHECK(line.start.mean == doctest::Approx(0.1));
  CHECK(line.start.std * line.start.std == doctest::Approx(0.02));
}

TEST_CASE("estimate_gaussian error paths") {
  const std::vector<CoefficientVector> one = {CoefficientVector{}};
  const std::vector<Endpoints> e1 = {{0.1, 0.2}};
  CHECK_THROWS_AS(estimate_gaussian(one, e1), Error);
  try {
    estimate_gaussian(one, e1);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSamples);
  }
  std::vector<CoefficientVector> nan = {CoefficientVector{}, CoefficientVector{}};
  nan[1].a[2] = std::numeric_limits<double>::quiet_NaN();
  const std::vector<Endpoints> e2 = {{0.1, 0.2}, {0.1, 0.2}};
  try {
    estimate_gaussian(nan, e2);
    FAIL("expected NonFiniteInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteInput);
  }
}

TEST_CASE("50k Gaussian draws are recovered by estimate_gaussian") {
  const Matrix5 sigma = test_sigma();
  const Vector5 mu(1.0, -2.0, 0.5, 0.0, 3.0);
  const Matrix5 L = sigma.llt().matrixL();
  RandomStream s(2024);
  std::vector<CoefficientVector> vs;
  std::vector<Endpoints> es;
  for (int k = 0; k < 50000; ++k) {
    Vector5 z;
    for (int j = 0; j < 5; ++j) z[j] = s.normal();
    const Vector5 a = mu + L * z;
    CoefficientVector c;
    for (int j = 0; j < 5; ++j) c.a[static_cast<std::size_t>(j)] = a[j];
    vs.push_back(c);
    es.push_back({0.1, 0.9});
  }
  const auto line = estimate_gaussian(vs, es);
  CHECK((line.mean - mu).cwiseAbs().maxCoeff() <= 0.02);
  CHECK(testutil::frobenius_rel(line.covariance, sigma) <= 0.05);
}

TEST_CASE("gamma = 0 returns the means exactly") {
  const auto dist = test_distribution();
  RandomStream s(1);
  const auto crease = sample_coefficients(dist, GammaFactor(0.0), s);
  for (int i = 0; i < 3; ++i) {
    const auto& line = crease.lines[static_cast<std::size_t>(i)];
    const auto& d = dist.lines[static_cast<std::size_t>(i)];
    for (int j = 0; j < 5; ++j) CHECK(line.coefficients.a[static_cast<std::size_t>(j)] == d.mean[j]);
    CHECK(line.range.start == d.start.mean);
    CHECK(line.range.end == d.end.mean);
  }
}

TEST_CASE("gamma scales the covariance by gamma^2") {
  const auto dist = test_distribution();
  const auto c1 = testutil::sample_covariance(line_draws(dist, 1.0, 50000, 10));
  const auto c2 = testutil::sample_covariance(line_draws(dist, 2.0, 50000, 11));
  CHECK(testutil::frobenius_rel(c2, 4.0 * dist.lines[0].covariance) <= 0.10);
  CHECK(testutil::frobenius_rel(c2, 4.0 * c1) <= 0.10);
}

TEST_CASE("documented gamma sweep is accepted, invalid gammas are not") {
  for (double g : {0.25, 0.5, 1.0, 2.0, 4.0}) CHECK(GammaFactor(g).value() == g);
  CHECK_THROWS_AS(GammaFactor(-0.1), Error);
  CHECK_THROWS_AS(GammaFactor(std::numeric_limits<double>::infinity()), Error);
  CHECK_THROWS_AS(GammaFactor(std::numeric_limits<double>::quiet_NaN()), Error);
}

TEST_CASE("sampling is reproducible") {
  const auto dist = test_distribution();
  RandomStream a(99), b(99);
  for (int k = 0; k < 10; ++k) {
    const auto x = sample_coefficients(dist, GammaFactor(1.5), a);
    const auto y = sample_coefficients(dist, GammaFactor(1.5), b);
    for (int i = 0; i < 3; ++i) {
      CHECK(x.lines[static_cast<std::size_t>(i)].coefficients == y.lines[static_cast<std::size_t>(i)].coefficients);
      CHECK(x.lines[static_cast<std::size_t>(i)].range.start == y.lines[static_cast<std::size_t>(i)].range.start);
    }
  }
}

TEST_CASE("sampled endpoints are clamped and ordered") {
  auto dist = test_distribution();
  dist.lines[0].start = {0.5, 0.5};
  dist.lines[0].end = {0.5, 0.5};
  RandomStream s(3);
  for (int k = 0; k < 2000; ++k) {
    const auto crease = sample_coefficients(dist, GammaFactor(4.0), s);
    for (const auto& line : crease.lines) {
      CHECK(line.range.start >= 0.0);
      CHECK(line.range.end <= 1.0);
      CHECK(line.range.start < line.range.end);
    }
  }
}

TEST_CASE("Mahalanobis spread grows with gamma") {
  const auto dist = test_distribution();
  const Matrix5 sigma_inv = dist.lines[0].covariance.inverse();
  auto stats = [&](double gamma, std::uint64_t seed) {
    const auto draws = line_draws(dist, gamma, 10000, seed);
    std::vector<double> d;
    for (const auto& v : draws) {
      const Vector5 diff = v - dist.lines[0].mean;
      d.push_back(std::sqrt(diff.dot(sigma_inv * diff)));
    }
    double mean = 0.0;
    for (double x : d) mean += x;
    mean /= static_cast<double>(d.size());
    double var = 0.0;
    for (double x : d) var += (x - mean) * (x - mean);
    var /= static_cast<double>(d.size() - 1);
    return std::pair{mean, std::sqrt(var / static_cast<double>(d.size()))};
  };
  const double gammas[] = {0.25, 0.5, 1.0, 2.0, 4.0};
  for (int k = 0; k + 1 < 5; ++k) {
    const auto [ma, sa] = stats(gammas[k], 100 + static_cast<std::uint64_t>(k));
    const auto [mb, sb] = stats(gammas[k + 1], 200 + static_cast<std::uint64_t>(k));
    CHECK(mb - ma > 3.0 * std::sqrt(sa * sa + sb * sb));
  }
}

TEST_CASE("estimate after sampling round-trips the prior") {
  const auto dist = test_distribution();
  const auto draws = line_draws(dist, 1.0, 20000, 5, 1);
  CHECK((testutil::sample_mean(draws) - Eigen::VectorXd(dist.lines[1].mean)).cwiseAbs().maxCoeff() <= 0.03);
  CHECK(testutil::frobenius_rel(testutil::sample_covariance(draws), dist.lines[1].covariance) <= 0.05);
}

TEST_CASE("cholesky_with_jitter handles singular and rejects indefinite covariances") {
  Matrix5 rank1 = Vector5(1, 2, 3, 4, 5) * Vector5(1, 2, 3, 4, 5).transpose();
  const Matrix5 L = cholesky_with_jitter(rank1);
  CHECK((L * L.transpose() - rank1).norm() <= 1e-6);
  CHECK(cholesky_with_jitter(Matrix5::Zero()).norm() <= 1e-3);
  Matrix5 bad = Matrix5::Identity();
  bad(2, 2) = -1.0;
  try {
    cholesky_with_jitter(bad);
    FAIL("expected CholeskyFailure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CholeskyFailure);
  }
}

TEST_CASE("distribution JSON round-trips exactly") {
  const auto dist = test_distribution();
  const auto back = distribution_from_json(nlohmann::json::parse(to_json(dist).dump()));
  CHECK(back.sample_count == dist.sample_count);
  for (int i = 0; i < 3; ++i) {
    CHECK(back.lines[static_cast<std::size_t>(i)].mean == dist.lines[static_cast<std::size_t>(i)].mean);
    CHECK(back.lines[static_cast<std::size_t>(i)].covariance == dist.lines[static_cast<std::size_t>(i)].covariance);
    CHECK(back.lines[static_cast<std::size_t>(i)].end.std == dist.lines[static_cast<std::size_t>(i)].end.std);
  }
  const auto j = to_json(dist);
  CHECK(j["lines"][0]["sigma"].size() == 25);
  CHECK(j["lines"][0].contains("xs"));
  CHECK_NOTHROW(validate(back));
}

TEST_CASE("validate rejects asymmetric covariances") {
  auto dist = test_distribution();
  dist.lines[2].covariance(0, 1) += 1e-6;
  CHECK_THROWS_AS(validate(dist), Error);
}

TEST_CASE("QQ table: Gaussian input lies on the diagonal") {
  RandomStream s(8);
  std::vector<double> values;
  for (int i = 0; i < 10000; ++i) values.push_back(s.normal());
  double gap = 0.0;
  for (const auto& row : qq_table(values)) gap = std::max(gap, std::abs(row.empirical - row.theoretical));
  CHECK(gap <= 0.05);
}

TEST_CASE("QQ table: uniform input bends away in the tails") {
  // unit variance, so gaps are comparable with the Gaussian case
  RandomStream s(9);
  std::vector<double> values;
  for (int i = 0; i < 10000; ++i) values.push_back(s.uniform(-std::sqrt(3.0), std::sqrt(3.0)));
  const auto rows = qq_table(values);
  CHECK(std::abs(rows.front().empirical - rows.front().theoretical) > 0.05);
  CHECK(std::abs(rows.back().empirical - rows.back().theoretical) > 0.05);
  // S-shape: empirical tails are lighter than the fitted normal
  CHECK(rows.front().empirical > rows.front().theoretical);
  CHECK(rows.back().empirical < rows.back().theoretical);
}

TEST_CASE("QQ table: constant input") {
  const std::vector<CoefficientVector> vs(12, CoefficientVector{{0.0, 0.0, 0.7, 0.0, 0.0}});
  for (const auto& row : export_qq(vs, 2)) {
    CHECK(row.empirical == 0.7);
    CHECK(row.theoretical == doctest::Approx(0.7).epsilon(1e-14));
  }
}

TEST_CASE("QQ error paths") {
  const std::vector<CoefficientVector> few(9);
  const std::vector<CoefficientVector> enough(10);
  try {
    export_qq(few, 0);
    FAIL("expected InsufficientSamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientSamples);
  }
  try {
    export_qq(enough, 5);
    FAIL("expected IndexOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IndexOutOfRange);
  }
}
