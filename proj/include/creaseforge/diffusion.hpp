#pragma once

#include "creaseforge/raster.hpp"
#include "creaseforge/rng.hpp"

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <span>
#include <utility>
#include <vector>

namespace creaseforge {

class Denoiser;

struct Shape {
  int height = 0;
  int width = 0;

  Eigen::Index size() const { return static_cast<Eigen::Index>(height) * width; }
  bool operator==(const Shape&) const = default;
};

/// Linear variance schedule. Steps are 1-based: t = 1..T.
class DiffusionSchedule {
public:
  static DiffusionSchedule make(int steps, double beta_start, double beta_end);

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }

  double beta(int t) const { return beta_[index(t)]; }
  double alpha(int t) const { return alpha_[index(t)]; }
  double alpha_bar(int t) const { return alpha_bar_[index(t)]; }
  double sigma(int t) const { return sigma_[index(t)]; }

  void check_step(int t) const;

private:
  std::size_t index(int t) const;

  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
};

/// Conventional DDPM endpoints (1e-4, 0.02) rescaled by 1000 / T, so short
/// schedules still end near pure noise. Equal to the conventional pair at T = 1000.
std::pair<double, double> default_beta_range(int steps);

nlohmann::json to_json(const DiffusionSchedule& sched);
DiffusionSchedule schedule_from_json(const nlohmann::json& j);

/// Closed-form forward marginal: sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
Eigen::VectorXd q_sample(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& noise,
                         const DiffusionSchedule& sched);

/// 8-bit pixel -> [-1, 1].
Eigen::VectorXd image_to_tensor(const CreaseImage& image);
/// [-1, 1] -> 8-bit pixel, clamped, round-half-even.
CreaseImage tensor_to_image(const Eigen::VectorXd& values, Shape shape);

struct TrainingExample {
  Eigen::VectorXd x0;
  Eigen::VectorXd y;
};

struct NoiseDraw {
  int t = 1;
  Eigen::VectorXd noise;
};

/// One (t, eps) draw: t uniform on 1..T, eps ~ N(0, I).
NoiseDraw draw_noise(RandomStream& stream, Eigen::Index dim, int steps);

/// Per-element draws derived from stream/index, so each element's draw does
/// not depend on its batch neighbors.
std::vector<NoiseDraw> draw_batch_noise(const RandomStream& stream, std::size_t count, Eigen::Index dim,
                                        int steps);

/// Mean over the batch of ||eps - eps_hat(x_t, t, y)||^2 with one draw per element.
double training_loss(const Denoiser& denoiser, std::span<const TrainingExample> batch,
                     const DiffusionSchedule& sched, const RandomStream& stream);

/// Same with explicit draws; draws[i] belongs to batch[i]. Per-element losses
/// are summed in sorted order, which makes the result exactly invariant to
/// permuting (batch, draws) together.
double training_loss(const Denoiser& denoiser, std::span<const TrainingExample> batch,
                     std::span<const NoiseDraw> draws, const DiffusionSchedule& sched);

}  // namespace creaseforge
