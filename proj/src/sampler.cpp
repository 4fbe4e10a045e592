#include "creaseforge/sampler.hpp"

#include "creaseforge/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace creaseforge {

std::string_view to_string(ShareMode mode) { return mode == ShareMode::First ? "first" : "last"; }

ShareMode share_mode_from_string(std::string_view text) {
  if (text == "first") return ShareMode::First;
  if (text == "last") return ShareMode::Last;
  throw Error(ErrorCode::InvalidArgument, fmt::format("mode must be 'first' or 'last', got '{}'", text));
}

void NoiseSharingPlan::validate() const {
  if (T < 1) throw Error(ErrorCode::InvalidArgument, fmt::format("T = {} must be >= 1", T));
  if (K < 0 || K > T) throw Error(ErrorCode::InvalidArgument, fmt::format("K = {} outside [0, T = {}]", K, T));
}

bool NoiseSharingPlan::is_shared(int t) const {
  if (mode == ShareMode::Last) return t >= 1 && t <= K;
  return t <= T && t > T - K;
}

int NoiseSharingPlan::shared_steps() const {
  int n = 0;
  for (int t = 1; t <= T; ++t) n += is_shared(t) ? 1 : 0;
  return n;
}

NoiseSharingPlan NoiseSharingPlan::default_for(int steps) {
  return {steps / 2, ShareMode::Last, steps, false};
}

namespace {

void check_sampling_inputs(const DiffusionSchedule& sched, const Eigen::VectorXd& y) {
  if (y.size() == 0) throw Error(ErrorCode::ShapeMismatch, "empty condition");
  if (sched.steps() < 1) throw Error(ErrorCode::InvalidArgument, "empty schedule");
}

bool injects_noise(int t, const SamplerOptions& options) { return !(t == 1 && options.zero_final_noise); }

void check_finite(const Eigen::VectorXd& x, int t) {
  if (!x.allFinite()) throw Error(ErrorCode::NonFiniteState, fmt::format("state became non-finite at step {}", t));
}

}  // namespace

Eigen::VectorXd reverse_step(const Eigen::VectorXd& x_t, const Eigen::VectorXd& eps_hat, int t,
                             const DiffusionSchedule& sched, const Eigen::VectorXd* z) {
  if (eps_hat.size() != x_t.size()) {
    throw Error(ErrorCode::ShapeMismatch, fmt::format("denoiser returned {} values for {}", eps_hat.size(), x_t.size()));
  }
  const double noise_coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  Eigen::VectorXd next = (x_t - noise_coef * eps_hat) / std::sqrt(sched.alpha(t));
  if (z != nullptr) next += sched.sigma(t) * (*z);
  return next;
}

RandomStream identity_stream(const RandomStream& root, int identity_id) {
  return root.child("sample").child(static_cast<std::uint64_t>(identity_id));
}

Eigen::VectorXd ancestral_sample(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                 const Eigen::VectorXd& y, const RandomStream& stream,
                                 const SamplerOptions& options) {
  check_sampling_inputs(sched, y);
  auto init = stream.child("init");
  Eigen::VectorXd x = init.normal_vector(y.size());
  for (int t = sched.steps(); t >= 1; --t) {
    const Eigen::VectorXd eps = denoiser.predict_noise(x, t, y);
    if (injects_noise(t, options)) {
      auto zs = stream.child(static_cast<std::uint64_t>(t));
      const Eigen::VectorXd z = zs.normal_vector(y.size());
      x = reverse_step(x, eps, t, sched, &z);
    } else {
      x = reverse_step(x, eps, t, sched, nullptr);
    }
    check_finite(x, t);
  }
  return x;
}

std::vector<Eigen::VectorXd> noise_sharing_sample(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                                  const Eigen::VectorXd& y, int sample_count,
                                                  const NoiseSharingPlan& plan, const RandomStream& identity,
                                                  const SamplerOptions& options) {
  check_sampling_inputs(sched, y);
  plan.validate();
  if (plan.T != sched.steps()) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("plan T = {} but schedule has {} steps", plan.T, sched.steps()));
  }
  if (sample_count < 1) throw Error(ErrorCode::InvalidArgument, "sample_count must be >= 1");

  const auto d = y.size();
  const auto shared = identity.child("shared");
  std::vector<RandomStream> per_sample;
  std::vector<Eigen::VectorXd> states;
  per_sample.reserve(sample_count);
  states.reserve(sample_count);
  for (int j = 0; j < sample_count; ++j) {
    per_sample.push_back(identity.child(static_cast<std::uint64_t>(j)));
    auto init = plan.share_initial_noise ? shared.child("init") : per_sample.back().child("init");
    states.push_back(init.normal_vector(d));
  }

  for (int t = sched.steps(); t >= 1; --t) {
    Eigen::VectorXd shared_z;
    const bool noisy = injects_noise(t, options);
    if (noisy && plan.is_shared(t)) {
      auto zs = shared.child(static_cast<std::uint64_t>(t));
      shared_z = zs.normal_vector(d);
    }
    for (int j = 0; j < sample_count; ++j) {
      auto& x = states[j];
      const Eigen::VectorXd eps = denoiser.predict_noise(x, t, y);
      if (!noisy) {
        x = reverse_step(x, eps, t, sched, nullptr);
      } else if (plan.is_shared(t)) {
        x = reverse_step(x, eps, t, sched, &shared_z);
      } else {
        auto zs = per_sample[j].child(static_cast<std::uint64_t>(t));
        const Eigen::VectorXd z = zs.normal_vector(d);
        x = reverse_step(x, eps, t, sched, &z);
      }
      check_finite(x, t);
    }
  }
  return states;
}

std::vector<Eigen::VectorXd> noise_sharing_sample(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                                  const IdentityBatch& batch, const NoiseSharingPlan& plan,
                                                  const RandomStream& root, const SamplerOptions& options) {
  return noise_sharing_sample(denoiser, sched, image_to_tensor(batch.condition), batch.sample_count, plan,
                              identity_stream(root, batch.identity_id), options);
}

AffinePropagation propagate_affine(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                   const Eigen::VectorXd& y, const SamplerOptions& options) {
  check_sampling_inputs(sched, y);
  const auto d = y.size();
  const int steps = sched.steps();
  // Track x_{t-1} = P x_T + sum_s Q_s z_s + m, walking t = T..1.
  AffinePropagation out;
  out.initial_gain = Eigen::MatrixXd::Identity(d, d);
  out.noise_gains.assign(steps, Eigen::MatrixXd::Zero(d, d));
  out.mean = Eigen::VectorXd::Zero(d);
  for (int t = steps; t >= 1; --t) {
    const auto map = denoiser.affine_map(t, y);
    if (!map) throw Error(ErrorCode::NonAffineDenoiser, "denoiser exposes no affine form");
    if (map->gain.rows() != d || map->gain.cols() != d || map->offset.size() != d) {
      throw Error(ErrorCode::ShapeMismatch, "affine map does not match the condition size");
    }
    const double noise_coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
    const double inv_root_alpha = 1.0 / std::sqrt(sched.alpha(t));
    const Eigen::MatrixXd step =
        inv_root_alpha * (Eigen::MatrixXd::Identity(d, d) - noise_coef * map->gain);
    const Eigen::VectorXd shift = -inv_root_alpha * noise_coef * map->offset;

    out.initial_gain = step * out.initial_gain;
    for (int s = steps; s > t; --s) out.noise_gains[s - 1] = step * out.noise_gains[s - 1];
    out.mean = step * out.mean + shift;
    if (injects_noise(t, options)) {
      out.noise_gains[t - 1] = sched.sigma(t) * Eigen::MatrixXd::Identity(d, d);
    }
  }
  return out;
}

IntraClassMoments affine_variance_oracle(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                         const Eigen::VectorXd& y, const NoiseSharingPlan& plan,
                                         const SamplerOptions& options) {
  plan.validate();
  if (plan.T != sched.steps()) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("plan T = {} but schedule has {} steps", plan.T, sched.steps()));
  }
  const auto prop = propagate_affine(denoiser, sched, y, options);
  const auto d = y.size();
  IntraClassMoments out;
  out.mean = prop.mean;
  out.covariance = Eigen::MatrixXd::Zero(d, d);
  if (!plan.share_initial_noise) out.covariance.noalias() += prop.initial_gain * prop.initial_gain.transpose();
  for (int t = 1; t <= sched.steps(); ++t) {
    if (plan.is_shared(t)) continue;
    const auto& b = prop.noise_gains[t - 1];
    out.covariance.noalias() += b * b.transpose();
  }
  return out;
}

}  // namespace creaseforge
