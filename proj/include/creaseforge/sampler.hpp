#pragma once

#include "creaseforge/denoise.hpp"
#include "creaseforge/diffusion.hpp"
#include "creaseforge/raster.hpp"
#include "creaseforge/rng.hpp"

#include <Eigen/Core>

#include <string_view>
#include <vector>

namespace creaseforge {

enum class ShareMode { First, Last };

std::string_view to_string(ShareMode mode);
ShareMode share_mode_from_string(std::string_view text);

/// Which reverse steps reuse one noise draw per identity.
/// Last: t = K..1. First: t = T..T-K+1.
struct NoiseSharingPlan {
  int K = 0;
  ShareMode mode = ShareMode::Last;
  int T = 1;
  /// Also share the initial x_T across an identity's samples.
  bool share_initial_noise = false;

  void validate() const;
  bool is_shared(int t) const;
  int shared_steps() const;

  /// K = T/2, last-K.
  static NoiseSharingPlan default_for(int steps);
};

struct SamplerOptions {
  /// Drop z at t = 1 (standard DDPM practice); false injects noise at every step.
  bool zero_final_noise = true;
};

struct IdentityBatch {
  int identity_id = 0;
  CreaseImage condition;
  int sample_count = 1;
};

/// One reverse step:
/// x_{t-1} = (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t) + sigma_t z.
Eigen::VectorXd reverse_step(const Eigen::VectorXd& x_t, const Eigen::VectorXd& eps_hat, int t,
                             const DiffusionSchedule& sched, const Eigen::VectorXd* z);

/// Stream addressing. The sample stream of (seed, id, j) is
/// root/"sample"/id/j; x_T comes from its child "init", z_t from its child t.
/// Shared noise of an identity comes from root/"sample"/id/"shared"/t.
RandomStream identity_stream(const RandomStream& root, int identity_id);

/// Ancestral sampling from x_T ~ N(0, I) down to x_0. `stream` is a per-sample stream.
Eigen::VectorXd ancestral_sample(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                 const Eigen::VectorXd& y, const RandomStream& stream,
                                 const SamplerOptions& options = {});

/// M samples of one identity. Inside the plan's window z_t is drawn once from
/// identity/"shared"/t and reused for every sample; elsewhere each sample j
/// draws from identity/j. With K = 0 sample j equals
/// ancestral_sample(identity/j) bit for bit.
std::vector<Eigen::VectorXd> noise_sharing_sample(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                                  const Eigen::VectorXd& y, int sample_count,
                                                  const NoiseSharingPlan& plan, const RandomStream& identity,
                                                  const SamplerOptions& options = {});

std::vector<Eigen::VectorXd> noise_sharing_sample(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                                  const IdentityBatch& batch, const NoiseSharingPlan& plan,
                                                  const RandomStream& root, const SamplerOptions& options = {});

/// Exact decomposition x_0 = A x_T + sum_t B_t z_t + mean for a denoiser that
/// is affine in x_t.
struct AffinePropagation {
  Eigen::MatrixXd initial_gain;              // A
  std::vector<Eigen::MatrixXd> noise_gains;  // B_t at index t - 1 (zero when sigma is unused)
  Eigen::VectorXd mean;
};

AffinePropagation propagate_affine(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                   const Eigen::VectorXd& y, const SamplerOptions& options = {});

struct IntraClassMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// Within-identity covariance of x_0: A A^T (unless x_T is shared) plus
/// B_t B_t^T over the steps the plan does not share.
IntraClassMoments affine_variance_oracle(const Denoiser& denoiser, const DiffusionSchedule& sched,
                                         const Eigen::VectorXd& y, const NoiseSharingPlan& plan,
                                         const SamplerOptions& options = {});

}  // namespace creaseforge
