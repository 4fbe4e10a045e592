#include "creaseforge/creasedist.hpp"
#include "creaseforge/creasefit.hpp"
#include "creaseforge/error.hpp"
#include "creaseforge/rng.hpp"

#include "test_util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <Eigen/Cholesky>

#include <algorithm>
#include <fstream>
#include <limits>

using namespace creaseforge;

namespace {

LinePoints on_polynomial(const std::array<double, 5>& a, const std::vector<double>& xs) {
  CoefficientVector c{a};
  LinePoints line;
  for (double x : xs) line.points.push_back({x, c(x)});
  return line;
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> xs;
  for (int i = 0; i < n; ++i) xs.push_back(lo + (hi - lo) * i / (n - 1));
  return xs;
}

void check_coefficients(const CoefficientVector& got, const std::array<double, 5>& want, double tol) {
  for (int j = 0; j < 5; ++j) {
    CAPTURE(j);
    CHECK(std::abs(got.a[j] - want[j]) <= tol * std::max(1.0, std::abs(want[j])));
  }
}

// Noisy data and its normal-equations solution, computed offline in an
// independent scripting environment (numpy, cross-checked at 50 digits).
const std::vector<double> kNoisyX = {
    0.05458783368899334, 0.05907070028127104, 0.0720137202477682, 0.1124812376026858, 0.1281046483754401,
    0.14734594138493995, 0.15687360650890647, 0.18964089720394417, 0.19572036812818094, 0.22088282607657062,
    0.26571219117472955, 0.2783949338979522, 0.28634190264199477, 0.29504050610818056, 0.3155159106665759,
    0.32186723915285986, 0.34565300267713406, 0.3642170975145663, 0.42144392994333446, 0.43265199548947353,
    0.4673308024297077, 0.4917243336271605, 0.5016866089796417, 0.5083171291637282, 0.5199421137002211,
    0.5311617915896494, 0.5463451815807078, 0.586660898821824, 0.5944159741965613, 0.6358847705205822,
    0.6444869489314018, 0.646330199106327, 0.677337865096112, 0.691090164120936, 0.6934790173271421,
    0.7776007457586233, 0.7822091623310392, 0.7860251925366624, 0.7915571881523152, 0.8351005220246496,
    0.8469907463975376, 0.87582849916042, 0.8854837788549317, 0.8979572747590316, 0.9221905762097976,
    0.9231495384588826, 0.9337985145515808, 0.9362641121324758, 0.9906354506801505, 0.9998713285912085};
const std::vector<double> kNoisyY = {
    0.23086852988835083,   0.24261917235442396,  0.2081389605267131,   0.17225971493723408,
    0.1501225011290489,    0.14352862806033262,  0.11555208937365843,  0.10176555573432292,
    0.07527054170486469,   0.05042602769838747,  0.020931717456661943, 0.017612876681369346,
    -0.00437940381266998,  -0.00041102969428748713, -0.009063132083224177, -0.013331697159298349,
    -0.01774091639692219,  -0.027696517234034407, -0.05050274384331573, -0.04637568273445167,
    -0.046805219652103394, -0.06333687804602452, -0.02763142103363587,  -0.04774970893870306,
    -0.04865284293601206,  -0.031128343473767577, -0.0330572500190272, 0.011271365371335308,
    0.001036690382326566,  0.07336352225772287,  0.06671219203818088,  0.08605042052653497,
    0.13542586140921065,   0.16069402768826788,  0.17236739830238654,  0.3946919741757186,
    0.40827887991455325,   0.43307830079735915,  0.46788667361430364,  0.6093119091697442,
    0.6831658037527403,    0.8201689872368201,   0.8478270925113429,   0.9278445739484317,
    1.070310368276541,     1.0617214922719715,   1.14692086818279,     1.1603791733129054,
    1.5450305226675534,    1.6028949141621893};
const std::array<double, 5> kNoisyCoefficients = {0.30564553764999286, -1.3238390943522202, 1.0537818922220954,
                                                  -0.8604969076926752, 2.4368071315506743};

}  // namespace

TEST_CASE("zero function fits to zero coefficients") {
  const auto fit = fit_polynomial(on_polynomial({0, 0, 0, 0, 0}, linspace(0.0, 1.0, 20)));
  for (double a : fit.coefficients.a) CHECK(std::abs(a) <= 1e-15);
  CHECK(fit.residual_norm <= 1e-15);
}

TEST_CASE("monomial x^4 is recovered") {
  const auto fit = fit_polynomial(on_polynomial({0, 0, 0, 0, 1}, linspace(0.05, 0.95, 10)));
  check_coefficients(fit.coefficients, {0, 0, 0, 0, 1}, 1e-9);
}

TEST_CASE("noisy recovery matches the normal-equations oracle") {
  LinePoints line;
  for (std::size_t i = 0; i < kNoisyX.size(); ++i) line.points.push_back({kNoisyX[i], kNoisyY[i]});
  const auto fit = fit_polynomial(line);
  for (int j = 0; j < 5; ++j) CHECK(std::abs(fit.coefficients.a[j] - kNoisyCoefficients[j]) <= 1e-6);
  CHECK(fit.residual_norm > 0.0);
}

TEST_CASE("fit is exact on degree <= 4 data") {
  RandomStream s(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::array<double, 5> a;
    for (auto& v : a) v = s.uniform(-2.0, 2.0);
    std::vector<double> xs;
    for (int i = 0; i < 5 + trial; ++i) xs.push_back((i + s.uniform()) / (5 + trial));
    const auto line = on_polynomial(a, xs);
    const auto fit = fit_polynomial(line);
    Eigen::VectorXd y(static_cast<Eigen::Index>(xs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) y[static_cast<Eigen::Index>(i)] = line.points[i].y;
    CHECK(fit.residual_norm <= 1e-9 * y.norm());
  }
}

TEST_CASE("fit does not depend on point order") {
  LinePoints line;
  for (std::size_t i = 0; i < kNoisyX.size(); ++i) line.points.push_back({kNoisyX[i], kNoisyY[i]});
  const auto reference = fit_polynomial(line);
  RandomStream s(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto shuffled = line;
    for (std::size_t i = shuffled.points.size() - 1; i > 0; --i) {
      std::swap(shuffled.points[i], shuffled.points[static_cast<std::size_t>(s.uniform_int(0, static_cast<int>(i)))]);
    }
    CHECK(fit_polynomial(shuffled).coefficients == reference.coefficients);
  }
}

TEST_CASE("adding a point on the fitted curve leaves the fit unchanged") {
  LinePoints line;
  for (std::size_t i = 0; i < kNoisyX.size(); ++i) line.points.push_back({kNoisyX[i], kNoisyY[i]});
  const auto fit = fit_polynomial(line);
  auto extended = line;
  extended.points.push_back({0.5, fit.coefficients(0.5)});
  const auto refit = fit_polynomial(extended);
  for (int j = 0; j < 5; ++j) CHECK(std::abs(refit.coefficients.a[j] - fit.coefficients.a[j]) <= 1e-9);
}

TEST_CASE("fit_polynomial error paths") {
  auto code_of = [](const LinePoints& line) {
    try {
      fit_polynomial(line);
    } catch (const Error& e) {
      return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
  };
  CHECK(code_of(on_polynomial({1, 0, 0, 0, 0}, {0.1, 0.2, 0.3, 0.4})) == ErrorCode::FewerThanFivePoints);
  CHECK(code_of(on_polynomial({1, 0, 0, 0, 0}, {0.1, 0.2, 0.3, 0.4, 0.4, 0.5})) == ErrorCode::DuplicateAbscissa);
  auto bad = on_polynomial({1, 0, 0, 0, 0}, {0.1, 0.2, 0.3, 0.4, 0.5});
  bad.points[2].y = std::numeric_limits<double>::quiet_NaN();
  CHECK(code_of(bad) == ErrorCode::NonFiniteInput);
  bad.points[2] = {std::numeric_limits<double>::infinity(), 0.5};
  CHECK(code_of(bad) == ErrorCode::NonFiniteInput);
}

TEST_CASE("pixel normalization round-trips") {
  for (int size : {8, 64, 101}) {
    for (double p : {0.0, 3.0, size - 1.0}) {
      CHECK(denormalize_coordinate(normalize_coordinate(p, size), size) == doctest::Approx(p).epsilon(1e-12));
    }
  }
}

TEST_CASE("fit_annotations recovers known polynomials and endpoints") {
  const int w = 101, h = 80;
  const std::array<std::array<double, 5>, 3> truth = {{{0.3, 0.1, -0.2, 0.05, 0.0},
                                                       {0.5, 0.2, 0.1, 0.0, -0.1},
                                                       {0.4, 0.9, 0.3, -0.4, 0.1}}};
  Annotation ann;
  ann.image_id = "known";
  ann.width = w;
  ann.height = h;
  for (int i = 0; i < 3; ++i) {
    const CoefficientVector c{truth[static_cast<std::size_t>(i)]};
    for (int k = 0; k < 12; ++k) {
      const double x = 0.1 + 0.06 * k + 0.01 * i;
      ann.lines[static_cast<std::size_t>(i)].push_back({denormalize_coordinate(x, w), denormalize_coordinate(c(x), h)});
    }
  }
  const std::vector<Annotation> corpus{ann};
  const auto fits = fit_annotations(corpus);
  REQUIRE(fits.size() == 1);
  CHECK(fits[0].image_id == "known");
  for (int i = 0; i < 3; ++i) {
    check_coefficients(fits[0].lines[static_cast<std::size_t>(i)].coefficients, truth[static_cast<std::size_t>(i)], 1e-9);
    CHECK(fits[0].endpoints[static_cast<std::size_t>(i)].start == doctest::Approx(0.1 + 0.01 * i).epsilon(1e-12));
    CHECK(fits[0].endpoints[static_cast<std::size_t>(i)].end == doctest::Approx(0.76 + 0.01 * i).epsilon(1e-12));
  }
}

TEST_CASE("empty corpus fits to nothing") { CHECK(fit_annotations(std::vector<Annotation>{}).empty()); }

TEST_CASE("fit errors carry the image id") {
  Annotation ann;
  ann.image_id = "broken_17";
  ann.width = ann.height = 32;
  for (auto& line : ann.lines) line = {{1, 1}, {2, 2}, {3, 3}};
  const std::vector<Annotation> corpus{ann};
  try {
    fit_annotations(corpus);
    FAIL("expected FewerThanFivePoints");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FewerThanFivePoints);
    CHECK(std::string(e.what()).find("broken_17") != std::string::npos);
  }
}

TEST_CASE("fitted corpus drawn from a known prior recovers that prior") {
  // Oracle: coefficient vectors drawn test-side, evaluated exactly; the fit is
  // exact, so the estimate must equal the moments of the drawn vectors.
  Eigen::Matrix<double, 5, 5> sigma;
  sigma << 4e-4, 1e-4, 0, 0, 0, 1e-4, 3e-4, 5e-5, 0, 0, 0, 5e-5, 2e-4, 0, 0, 0, 0, 0, 1e-4, 2e-5, 0, 0, 0, 2e-5,
      1e-4;
  const Eigen::Matrix<double, 5, 1> mu(0.3, 0.2, -0.1, 0.05, 0.02);
  const Eigen::Matrix<double, 5, 5> L = sigma.llt().matrixL();
  RandomStream s(77);
  const int w = 128, h = 128;
  std::vector<Annotation> corpus;
  std::array<std::vector<Eigen::VectorXd>, 3> drawn;
  for (int n = 0; n < 100; ++n) {
    Annotation ann;
    ann.image_id = "syn" + std::to_string(n);
    ann.width = w;
    ann.height = h;
    for (int i = 0; i < 3; ++i) {
      Eigen::Matrix<double, 5, 1> z;
      for (int k = 0; k < 5; ++k) z[k] = s.normal();
      const Eigen::Matrix<double, 5, 1> a = mu + L * z;
      drawn[static_cast<std::size_t>(i)].push_back(a);
      CoefficientVector c;
      for (int k = 0; k < 5; ++k) c.a[static_cast<std::size_t>(k)] = a[k];
      for (int p = 0; p < 15; ++p) {
        const double x = 0.05 + 0.06 * p;
        ann.lines[static_cast<std::size_t>(i)].push_back({denormalize_coordinate(x, w), denormalize_coordinate(c(x), h)});
      }
    }
    corpus.push_back(std::move(ann));
  }
  const auto dist = estimate_distribution(fit_annotations(corpus));
  for (int i = 0; i < 3; ++i) {
    const auto& line = dist.lines[static_cast<std::size_t>(i)];
    const auto& vecs = drawn[static_cast<std::size_t>(i)];
    CHECK((line.mean - testutil::sample_mean(vecs)).norm() <= 1e-9);
    CHECK((line.covariance - testutil::sample_covariance(vecs)).norm() <= 1e-9);
    // and the drawn moments are an MC estimate of the prior
    CHECK((line.mean - mu).cwiseAbs().maxCoeff() <= 0.01);
    CHECK(testutil::frobenius_rel(line.covariance, sigma) <= 0.4);
  }
}

TEST_CASE("annotation JSON round-trips through a JSON Lines corpus") {
  Annotation ann;
  ann.image_id = "rt";
  ann.width = 64;
  ann.height = 48;
  ann.lines[0] = {{1, 2}, {3, 4}};
  ann.lines[1] = {{5.5, 6.25}};
  ann.lines[2] = {{7, 8}, {9, 10}, {11, 12}};
  const auto dir = testutil::scratch_dir("annotations");
  {
    std::ofstream out(dir / "corpus.jsonl");
    out << to_json(ann).dump() << "\n\n" << to_json(ann).dump() << "\n";
  }
  const auto corpus = read_annotations(dir / "corpus.jsonl");
  REQUIRE(corpus.size() == 2);
  CHECK(corpus[1].image_id == "rt");
  CHECK(corpus[1].width == 64);
  CHECK(corpus[1].lines[1].size() == 1);
  CHECK(corpus[1].lines[1][0].y == 6.25);
  CHECK_THROWS_AS(annotation_from_json(nlohmann::json::parse(R"({"image_id":"x","width":4})")), Error);
}
