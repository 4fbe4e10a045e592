#include "creaseforge/denoise.hpp"

#include "creaseforge/error.hpp"

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include <cmath>

namespace creaseforge {

std::optional<AffineNoiseMap> Denoiser::affine_map(int, const Eigen::VectorXd&) const { return std::nullopt; }

Eigen::VectorXd GaussianToyModel::condition(const Eigen::VectorXd& y) const {
  return condition_map ? condition_map(y) : y;
}

Eigen::VectorXd GaussianToyModel::draw(const Eigen::VectorXd& y, RandomStream& stream) const {
  const Eigen::VectorXd c = condition(y);
  return c + spread * stream.normal_vector(c.size());
}

void GaussianToyModel::validate() const {
  if (!(spread > 0.0) || !std::isfinite(spread)) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("toy model spread must be > 0, got {}", spread));
  }
}

AnalyticDenoiser::AnalyticDenoiser(GaussianToyModel model, DiffusionSchedule sched)
    : model_(std::move(model)), sched_(std::move(sched)) {
  model_.validate();
}

// Posterior mean m = (sqrt(ab) s^2 x + (1 - ab) c) / (ab s^2 + 1 - ab), then
// eps_hat = (x - sqrt(ab) m) / sqrt(1 - ab) = x_gain * x + c_gain * c.
AnalyticDenoiser::Coefficients AnalyticDenoiser::coefficients(int t) const {
  const double ab = sched_.alpha_bar(t);
  const double s2 = model_.spread * model_.spread;
  const double denom = ab * s2 + (1.0 - ab);
  const double root_ab = std::sqrt(ab);
  const double root_1m = std::sqrt(1.0 - ab);
  const double m_x = root_ab * s2 / denom;
  const double m_c = (1.0 - ab) / denom;
  return {(1.0 - root_ab * m_x) / root_1m, -root_ab * m_c / root_1m};
}

Eigen::VectorXd AnalyticDenoiser::predict_noise(const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& y) const {
  const Eigen::VectorXd c = model_.condition(y);
  if (c.size() != x_t.size()) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("x_t has {} values, condition {}", x_t.size(), c.size()));
  }
  const auto k = coefficients(t);
  return k.x_gain * x_t + k.c_gain * c;
}

std::optional<AffineNoiseMap> AnalyticDenoiser::affine_map(int t, const Eigen::VectorXd& y) const {
  const Eigen::VectorXd c = model_.condition(y);
  const auto k = coefficients(t);
  return AffineNoiseMap{k.x_gain * Eigen::MatrixXd::Identity(c.size(), c.size()), k.c_gain * c};
}

double AnalyticDenoiser::minimum_mse_per_dim(int t) const {
  const double ab = sched_.alpha_bar(t);
  const double s2 = model_.spread * model_.spread;
  return ab * s2 / (ab * s2 + 1.0 - ab);
}

nlohmann::json AnalyticDenoiser::descriptor() const {
  return {{"kind", "analytic"}, {"spread", model_.spread}};
}

LinearDenoiser::LinearDenoiser(Shape shape, int steps, double lambda, std::vector<Eigen::MatrixXd> weights)
    : shape_(shape), steps_(steps), lambda_(lambda), weights_(std::move(weights)) {
  const Eigen::Index d = shape_.size();
  if (weights_.empty()) throw Error(ErrorCode::InvalidArgument, "linear denoiser needs >= 1 bucket");
  if (steps_ < 1) throw Error(ErrorCode::InvalidArgument, "linear denoiser needs T >= 1");
  for (const auto& w : weights_) {
    if (w.rows() != d || w.cols() != 2 * d + 1) {
      throw Error(ErrorCode::ShapeMismatch, fmt::format("bucket weights must be {}x{}", d, 2 * d + 1));
    }
    if (!w.allFinite()) throw Error(ErrorCode::NonFiniteInput, "linear denoiser weights");
  }
}

int LinearDenoiser::bucket_of(int t) const {
  if (t < 1 || t > steps_) throw Error(ErrorCode::StepOutOfRange, fmt::format("step {} outside 1..{}", t, steps_));
  return static_cast<int>((static_cast<long long>(t - 1) * bucket_count()) / steps_);
}

Eigen::VectorXd LinearDenoiser::predict_noise(const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& y) const {
  const Eigen::Index d = shape_.size();
  if (x_t.size() != d || y.size() != d) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("expected {} values per tensor", d));
  }
  const auto& w = weights_[bucket_of(t)];
  return w.leftCols(d) * x_t + w.middleCols(d, d) * y + w.col(2 * d);
}

std::optional<AffineNoiseMap> LinearDenoiser::affine_map(int t, const Eigen::VectorXd& y) const {
  const Eigen::Index d = shape_.size();
  if (y.size() != d) throw Error(ErrorCode::ShapeMismatch, fmt::format("expected {} condition values", d));
  const auto& w = weights_[bucket_of(t)];
  return AffineNoiseMap{w.leftCols(d), w.middleCols(d, d) * y + w.col(2 * d)};
}

nlohmann::json LinearDenoiser::descriptor() const {
  return {{"kind", "linear"}, {"buckets", bucket_count()}, {"lambda", lambda_}, {"T", steps_}};
}

nlohmann::json LinearDenoiser::to_json() const {
  nlohmann::json weights = nlohmann::json::array();
  for (const auto& w : weights_) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    }
    weights.push_back(std::move(flat));
  }
  return {{"buckets", bucket_count()},
          {"lambda", lambda_},
          {"resolution", {shape_.height, shape_.width}},
          {"T", steps_},
          {"weights", std::move(weights)}};
}

LinearDenoiser LinearDenoiser::from_json(const nlohmann::json& j) {
  try {
    const auto res = j.at("resolution").get<std::vector<int>>();
    if (res.size() != 2) throw Error(ErrorCode::ParseError, "resolution must be [H, W]");
    const Shape shape{res[0], res[1]};
    const Eigen::Index d = shape.size();
    const int buckets = j.at("buckets").get<int>();
    const auto& arrays = j.at("weights");
    if (!arrays.is_array() || static_cast<int>(arrays.size()) != buckets) {
      throw Error(ErrorCode::ParseError, "weights must hold one array per bucket");
    }
    std::vector<Eigen::MatrixXd> weights;
    for (const auto& a : arrays) {
      const auto flat = a.get<std::vector<double>>();
      if (static_cast<Eigen::Index>(flat.size()) != d * (2 * d + 1)) {
        throw Error(ErrorCode::ParseError, "bucket weight array has the wrong length");
      }
      Eigen::MatrixXd w(d, 2 * d + 1);
      for (Eigen::Index r = 0; r < d; ++r) {
        for (Eigen::Index c = 0; c < 2 * d + 1; ++c) w(r, c) = flat[static_cast<std::size_t>(r * (2 * d + 1) + c)];
      }
      weights.push_back(std::move(w));
    }
    return LinearDenoiser(shape, j.at("T").get<int>(), j.at("lambda").get<double>(), std::move(weights));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

Eigen::VectorXd denoiser_features(const Eigen::VectorXd& x_t, const Eigen::VectorXd& y) {
  Eigen::VectorXd phi(x_t.size() + y.size() + 1);
  phi << x_t, y, 1.0;
  return phi;
}

Eigen::MatrixXd solve_ridge(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& cross, double lambda) {
  const Eigen::MatrixXd system = gram + lambda * Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(system);
  // LDLT quietly tolerates zero pivots, so test the pivot spread directly.
  const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
  const double largest = pivots.maxCoeff();
  if (ldlt.info() != Eigen::Success || !(largest > 0.0) || pivots.minCoeff() < 1e-13 * largest) {
    throw Error(ErrorCode::SingularSystem,
                lambda == 0.0 ? "rank-deficient features; use lambda > 0" : "ridge system is singular");
  }
  // cross is d_out x p, solution is d_out x p
  return ldlt.solve(cross.transpose()).transpose();
}

LinearDenoiser fit_linear_denoiser(std::span<const TrainingExample> dataset,
                                   std::span<const std::vector<NoiseDraw>> draws, Shape shape,
                                   const DiffusionSchedule& sched, int buckets, double lambda) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyBatch, "training set is empty");
  if (buckets < 1) throw Error(ErrorCode::InvalidArgument, "buckets must be >= 1");
  if (!(lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  if (draws.size() != dataset.size()) throw Error(ErrorCode::InvalidArgument, "draws must match the dataset");
  const Eigen::Index d = shape.size();
  const Eigen::Index p = 2 * d + 1;

  std::vector<Eigen::MatrixXd> gram(buckets, Eigen::MatrixXd::Zero(p, p));
  std::vector<Eigen::MatrixXd> cross(buckets, Eigen::MatrixXd::Zero(d, p));
  std::vector<std::size_t> counts(buckets, 0);
  // Bucket mapping mirrors LinearDenoiser::bucket_of.
  const int steps = sched.steps();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& ex = dataset[i];
    if (ex.x0.size() != d || ex.y.size() != d) {
      throw Error(ErrorCode::ShapeMismatch, fmt::format("example {} does not match {}x{}", i, shape.width, shape.height));
    }
    for (const auto& draw : draws[i]) {
      const int b = static_cast<int>((static_cast<long long>(draw.t - 1) * buckets) / steps);
      const Eigen::VectorXd phi = denoiser_features(q_sample(ex.x0, draw.t, draw.noise, sched), ex.y);
      gram[b].selfadjointView<Eigen::Lower>().rankUpdate(phi);
      cross[b].noalias() += draw.noise * phi.transpose();
      ++counts[b];
    }
  }

  std::vector<Eigen::MatrixXd> weights;
  weights.reserve(buckets);
  for (int b = 0; b < buckets; ++b) {
    Eigen::MatrixXd full = gram[b].selfadjointView<Eigen::Lower>();
    if (counts[b] == 0 && lambda == 0.0) {
      throw Error(ErrorCode::SingularSystem, fmt::format("bucket {} received no draws", b));
    }
    weights.push_back(counts[b] == 0 ? Eigen::MatrixXd::Zero(d, p) : solve_ridge(full, cross[b], lambda));
  }
  return LinearDenoiser(shape, steps, lambda, std::move(weights));
}

LinearDenoiser fit_linear_denoiser(std::span<const TrainingExample> dataset, Shape shape,
                                   const DiffusionSchedule& sched, const LinearFitOptions& options,
                                   const RandomStream& stream) {
  if (options.draws_per_example < 1) throw Error(ErrorCode::InvalidArgument, "draws_per_example must be >= 1");
  std::vector<std::vector<NoiseDraw>> draws(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    draws[i] = draw_batch_noise(stream.child(static_cast<std::uint64_t>(i)),
                                static_cast<std::size_t>(options.draws_per_example), shape.size(), sched.steps());
  }
  return fit_linear_denoiser(dataset, draws, shape, sched, options.buckets, options.lambda);
}

}  // namespace creaseforge
