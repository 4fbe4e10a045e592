#pragma once

#include "creaseforge/rng.hpp"

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace creaseforge {

/// Identity-grouped feature vectors. classes[c][i] is f_i^c.
struct EmbeddingSet {
  std::vector<std::vector<Eigen::VectorXd>> classes;
  std::vector<std::string> class_ids;  // optional labels, parallel to classes

  std::size_t class_count() const noexcept { return classes.size(); }
  void validate() const;
};

struct ScoreSummary {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t count = 0;
};

struct ScoreDistribution {
  std::vector<double> genuine;
  std::vector<double> imposter;
  ScoreSummary genuine_summary;
  ScoreSummary imposter_summary;
  bool imposter_subsampled = false;
};

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

ScoreSummary summarize(std::span<const double> scores);

/// Cross-class pairs are enumerated exhaustively up to this many; above it a
/// seeded uniform subsample of this size is used instead.
inline constexpr std::uint64_t kMaxImposterPairs = 10'000'000;

/// Cosine similarity over every within-class pair (genuine) and every
/// cross-class pair (imposter).
ScoreDistribution score_distribution(const EmbeddingSet& emb, std::uint64_t subsample_seed = 0);

/// L2-normalized mean of the L2-normalized class samples.
Eigen::VectorXd spherical_mean(std::span<const Eigen::VectorXd> samples);

/// Fraction of classes whose center is at cosine distance > r from the center
/// of every earlier class (all of them, not only those counted as unique).
/// Each class's test is a minimum over earlier distances, so the result is
/// non-increasing in r.
double class_uniqueness(const EmbeddingSet& emb, double r);

/// Mean over classes of the fraction of samples at cosine distance < r from
/// their class center.
double identity_consistency(const EmbeddingSet& emb, double r);

/// Mean over classes and samples of ||X_i^c - mean_c||_1, divided by
/// `baseline` when given.
double intra_class_diversity(std::span<const std::vector<Eigen::VectorXd>> images,
                             std::optional<double> baseline = std::nullopt);

struct TarAtFar {
  double far = 0.0;
  double tar = 0.0;
  double threshold = 0.0;
  /// Fewer than 1/far imposter scores: the threshold is the top imposter score.
  bool underpowered = false;
};

/// threshold: the smallest value whose imposter acceptance (score >= threshold)
/// fraction is <= far. tar: fraction of genuine scores >= threshold.
TarAtFar tar_at_far(std::span<const double> genuine, std::span<const double> imposter, double far);
TarAtFar tar_at_far(const ScoreDistribution& scores, double far);

struct MetricReport {
  double r = 0.0;
  double u_class = 0.0;
  double c_identity = 0.0;
  std::optional<double> d_intra;
  std::optional<double> d_intra_baseline;
  ScoreSummary genuine;
  ScoreSummary imposter;
  bool imposter_subsampled = false;
  std::vector<TarAtFar> tar;
};

nlohmann::json to_json(const ScoreSummary& s);
nlohmann::json to_json(const MetricReport& report);

/// CSV with rows class_id,sample_id,e0,...,e{d-1}; a header line is optional.
/// Classes keep first-appearance order.
EmbeddingSet read_embeddings_csv(const std::filesystem::path& path);
void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingSet& emb);

}  // namespace creaseforge
