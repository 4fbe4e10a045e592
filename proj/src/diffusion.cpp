#include "creaseforge/diffusion.hpp"

#include "creaseforge/denoise.hpp"
#include "creaseforge/error.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace creaseforge {

DiffusionSchedule DiffusionSchedule::make(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw Error(ErrorCode::InvalidRange, fmt::format("T = {} must be >= 1", steps));
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw Error(ErrorCode::InvalidRange,
                fmt::format("need 0 < beta_start <= beta_end < 1, got [{}, {}]", beta_start, beta_end));
  }
  DiffusionSchedule s;
  s.beta_start_ = beta_start;
  s.beta_end_ = beta_end;
  s.beta_.resize(steps);
  s.alpha_.resize(steps);
  s.alpha_bar_.resize(steps);
  s.sigma_.resize(steps);
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    const double b = beta_start + (beta_end - beta_start) * frac;
    s.beta_[i] = b;
    s.alpha_[i] = 1.0 - b;
    running *= s.alpha_[i];
    s.alpha_bar_[i] = running;
    s.sigma_[i] = std::sqrt(b);
  }
  return s;
}

std::size_t DiffusionSchedule::index(int t) const {
  check_step(t);
  return static_cast<std::size_t>(t - 1);
}

void DiffusionSchedule::check_step(int t) const {
  if (t < 1 || t > steps()) {
    throw Error(ErrorCode::StepOutOfRange, fmt::format("step {} outside 1..{}", t, steps()));
  }
}

std::pair<double, double> default_beta_range(int steps) {
  if (steps < 1) throw Error(ErrorCode::InvalidRange, fmt::format("T = {} must be >= 1", steps));
  const double scale = 1000.0 / steps;
  const double end = std::min(0.02 * scale, 0.999);
  const double start = std::min(1e-4 * scale, end);
  return {start, end};
}

nlohmann::json to_json(const DiffusionSchedule& sched) {
  return {{"T", sched.steps()}, {"beta_start", sched.beta_start()}, {"beta_end", sched.beta_end()}};
}

DiffusionSchedule schedule_from_json(const nlohmann::json& j) {
  try {
    return DiffusionSchedule::make(j.at("T").get<int>(), j.at("beta_start").get<double>(),
                                   j.at("beta_end").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

Eigen::VectorXd q_sample(const Eigen::VectorXd& x0, int t, const Eigen::VectorXd& noise,
                         const DiffusionSchedule& sched) {
  sched.check_step(t);
  if (x0.size() != noise.size()) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("x0 has {} values, noise {}", x0.size(), noise.size()));
  }
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

Eigen::VectorXd image_to_tensor(const CreaseImage& image) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(image.pixels.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = image.pixels[i] / 127.5 - 1.0;
  return v;
}

CreaseImage tensor_to_image(const Eigen::VectorXd& values, Shape shape) {
  if (values.size() != shape.size()) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("{} values for {}x{}", values.size(), shape.width, shape.height));
  }
  CreaseImage image(shape.width, shape.height);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    const double scaled = std::clamp((values[i] + 1.0) * 127.5, 0.0, 255.0);
    // default FE_TONEAREST rounding: ties go to even
    image.pixels[i] = static_cast<std::uint8_t>(std::nearbyint(scaled));
  }
  return image;
}

NoiseDraw draw_noise(RandomStream& stream, Eigen::Index dim, int steps) {
  NoiseDraw d;
  d.t = stream.uniform_int(1, steps);
  d.noise = stream.normal_vector(dim);
  return d;
}

std::vector<NoiseDraw> draw_batch_noise(const RandomStream& stream, std::size_t count, Eigen::Index dim,
                                        int steps) {
  std::vector<NoiseDraw> draws;
  draws.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto s = stream.child(static_cast<std::uint64_t>(i));
    draws.push_back(draw_noise(s, dim, steps));
  }
  return draws;
}

double training_loss(const Denoiser& denoiser, std::span<const TrainingExample> batch,
                     const DiffusionSchedule& sched, const RandomStream& stream) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "training batch is empty");
  const auto draws = draw_batch_noise(stream, batch.size(), batch.front().x0.size(), sched.steps());
  return training_loss(denoiser, batch, draws, sched);
}

double training_loss(const Denoiser& denoiser, std::span<const TrainingExample> batch,
                     std::span<const NoiseDraw> draws, const DiffusionSchedule& sched) {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "training batch is empty");
  if (draws.size() != batch.size()) throw Error(ErrorCode::InvalidArgument, "one draw per batch element required");
  std::vector<double> losses;
  losses.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& ex = batch[i];
    if (ex.y.size() != ex.x0.size() && ex.y.size() != 0) {
      throw Error(ErrorCode::ShapeMismatch, fmt::format("element {}: condition and sample differ in size", i));
    }
    const Eigen::VectorXd xt = q_sample(ex.x0, draws[i].t, draws[i].noise, sched);
    losses.push_back((draws[i].noise - denoiser.predict_noise(xt, draws[i].t, ex.y)).squaredNorm());
  }
  std::sort(losses.begin(), losses.end());
  double total = 0.0;
  for (double l : losses) total += l;
  return total / static_cast<double>(losses.size());
}

}  // namespace creaseforge
