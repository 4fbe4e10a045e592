#pragma once

#include "creaseforge/diffusion.hpp"
#include "creaseforge/rng.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace creaseforge {

/// eps_hat = gain * x_t + offset, valid for one (t, y).
struct AffineNoiseMap {
  Eigen::MatrixXd gain;
  Eigen::VectorXd offset;
};

/// Noise predictor eps_theta(x_t, t, y). Implementations must be
/// deterministic and return finite values for finite input. The condition y
/// is passed alongside x_t; how it is combined (e.g. channel concatenation)
/// is up to the implementation.
class Denoiser {
public:
  virtual ~Denoiser() = default;

  virtual Eigen::VectorXd predict_noise(const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& y) const = 0;

  /// The exact affine form in x_t, when the denoiser has one.
  virtual std::optional<AffineNoiseMap> affine_map(int t, const Eigen::VectorXd& y) const;

  /// Short JSON description recorded in run manifests.
  virtual nlohmann::json descriptor() const = 0;
};

/// Toy data model x0 = c(y) + spread * eta, eta ~ N(0, I).
struct GaussianToyModel {
  double spread = 0.5;
  /// Condition map; identity when empty (y is already in [-1, 1]).
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> condition_map;

  Eigen::VectorXd condition(const Eigen::VectorXd& y) const;
  Eigen::VectorXd draw(const Eigen::VectorXd& y, RandomStream& stream) const;
  void validate() const;
};

/// MMSE noise predictor under the toy model (closed-form Gaussian posterior).
class AnalyticDenoiser final : public Denoiser {
public:
  AnalyticDenoiser(GaussianToyModel model, DiffusionSchedule sched);

  Eigen::VectorXd predict_noise(const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& y) const override;
  std::optional<AffineNoiseMap> affine_map(int t, const Eigen::VectorXd& y) const override;
  nlohmann::json descriptor() const override;

  /// Per-coordinate minimum E||eps - eps_hat||^2 at step t.
  double minimum_mse_per_dim(int t) const;

  const GaussianToyModel& model() const noexcept { return model_; }

private:
  struct Coefficients {
    double x_gain;
    double c_gain;
  };
  Coefficients coefficients(int t) const;

  GaussianToyModel model_;
  DiffusionSchedule sched_;
};

/// Affine noise predictor per timestep bucket:
/// eps_hat = W_b [x_t; y; 1], with b = floor((t - 1) * B / T).
class LinearDenoiser final : public Denoiser {
public:
  LinearDenoiser(Shape shape, int steps, double lambda, std::vector<Eigen::MatrixXd> weights);

  Eigen::VectorXd predict_noise(const Eigen::VectorXd& x_t, int t, const Eigen::VectorXd& y) const override;
  std::optional<AffineNoiseMap> affine_map(int t, const Eigen::VectorXd& y) const override;
  nlohmann::json descriptor() const override;

  int bucket_count() const noexcept { return static_cast<int>(weights_.size()); }
  int bucket_of(int t) const;
  Shape shape() const noexcept { return shape_; }
  int steps() const noexcept { return steps_; }
  double lambda() const noexcept { return lambda_; }
  const Eigen::MatrixXd& weights(int bucket) const { return weights_.at(bucket); }

  nlohmann::json to_json() const;
  static LinearDenoiser from_json(const nlohmann::json& j);

private:
  Shape shape_;
  int steps_;
  double lambda_;
  std::vector<Eigen::MatrixXd> weights_;  // each d x (2d + 1)
};

/// Feature vector [x_t; y; 1].
Eigen::VectorXd denoiser_features(const Eigen::VectorXd& x_t, const Eigen::VectorXd& y);

struct LinearFitOptions {
  int buckets = 10;
  double lambda = 1e-3;
  int draws_per_example = 1;
};

/// Ridge least squares of eps on [x_t; y; 1] per bucket:
/// W_b = argmin sum ||eps - W phi||^2 + lambda ||W||_F^2.
/// Draws for example i come from stream/i, so results do not depend on
/// example order within a parallel split.
LinearDenoiser fit_linear_denoiser(std::span<const TrainingExample> dataset, Shape shape,
                                   const DiffusionSchedule& sched, const LinearFitOptions& options,
                                   const RandomStream& stream);

/// Same, with explicit draws: draws[i] holds the draws for dataset[i].
LinearDenoiser fit_linear_denoiser(std::span<const TrainingExample> dataset,
                                   std::span<const std::vector<NoiseDraw>> draws, Shape shape,
                                   const DiffusionSchedule& sched, int buckets, double lambda);

/// Solves (A + lambda I) W^T = B^T for the ridge normal equations; throws
/// SingularSystem when the system is numerically singular.
Eigen::MatrixXd solve_ridge(const Eigen::MatrixXd& gram, const Eigen::MatrixXd& cross, double lambda);

/// Always predicts zero noise; the reference for "no better than chance".
class ZeroDenoiser final : public Denoiser {
public:
  Eigen::VectorXd predict_noise(const Eigen::VectorXd& x_t, int, const Eigen::VectorXd&) const override {
    return Eigen::VectorXd::Zero(x_t.size());
  }
  std::optional<AffineNoiseMap> affine_map(int, const Eigen::VectorXd& y) const override {
    return AffineNoiseMap{Eigen::MatrixXd::Zero(y.size(), y.size()), Eigen::VectorXd::Zero(y.size())};
  }
  nlohmann::json descriptor() const override { return {{"kind", "zero"}}; }
};

}  // namespace creaseforge
