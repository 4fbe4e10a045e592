#pragma once

#include "creaseforge/config.hpp"
#include "creaseforge/creasedist.hpp"
#include "creaseforge/denoise.hpp"
#include "creaseforge/diffusion.hpp"
#include "creaseforge/metrics.hpp"
#include "creaseforge/raster.hpp"
#include "creaseforge/rng.hpp"
#include "creaseforge/sampler.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace creaseforge {

std::string tool_version();

/// Built-in stand-in for a recognizer: 4x4 block means of the intensity
/// (mapped to [-1, 1]) followed by 4x4 block means of the absolute
/// horizontal and vertical forward differences, L2-normalized. 48 values.
Eigen::VectorXd toy_embed(const CreaseImage& image);
inline constexpr int kToyEmbedDim = 48;

/// Runs fn(0..n-1) on up to `workers` threads. The first exception thrown by
/// any task is rethrown after all workers stop.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// File names of the dataset layout.
std::string crease_file_name(int id);
std::string sample_file_name(int id, int j);

/// Fitted prior: the distribution JSON when configured, else a fit of the
/// annotation corpus.
CreaseDistribution load_prior(const RunConfig& config);

RenderParams render_params(const RunConfig& config);

/// Draws and renders config.ids identities from stream seed/"identity"/i and
/// writes dir/id{i:05}.pgm.
std::vector<IdentitySample> synthesize_identities(const CreaseDistribution& prior, const RunConfig& config,
                                                  const std::filesystem::path& dir, int workers);

/// {"coefficients": [[a0..a4] x 3], "endpoints": [[start, end] x 3]}
nlohmann::json crease_json(const PolynomialCrease& crease);

DiffusionSchedule make_schedule(const RunConfig& config);
NoiseSharingPlan make_plan(const RunConfig& config);

/// Analytic toy denoiser, a linear denoiser fitted on toy data drawn around
/// `conditions`, or a linear denoiser loaded from JSON.
std::unique_ptr<Denoiser> make_denoiser(const RunConfig& config, const DiffusionSchedule& sched,
                                        const std::vector<CreaseImage>& conditions);

/// Toy training pairs x0 = y + spread * eta, `draws` per condition, each from
/// stream/(i * draws + k).
std::vector<TrainingExample> toy_training_set(const std::vector<CreaseImage>& conditions, double spread,
                                              int draws, const RandomStream& stream);

/// Sample images grouped by identity, in ascending id order.
struct Dataset {
  std::vector<int> ids;
  std::vector<std::vector<CreaseImage>> classes;
};

/// Samples `per_id` images for each condition and writes them as
/// dir/id{i:05}_s{j:03}.pgm. Identities run in parallel; every sample's noise
/// is path-derived, so the output does not depend on `workers`.
Dataset sample_dataset(const Denoiser& denoiser, const DiffusionSchedule& sched,
                       const std::vector<CreaseImage>& conditions, const std::vector<int>& ids, int per_id,
                       const NoiseSharingPlan& plan, const SamplerOptions& options, const RandomStream& root,
                       const std::filesystem::path& dir, int workers);

/// Loads every id*_s*.pgm of a directory.
Dataset load_dataset(const std::filesystem::path& dir);

EmbeddingSet embed_dataset(const Dataset& dataset);

/// Unnormalized D_intra over pixel intensities scaled to [0, 1].
double dataset_diversity(const Dataset& dataset);

/// Full metric report of a dataset under the toy embedding.
MetricReport evaluate_dataset(const Dataset& dataset, double r, const std::vector<double>& fars,
                              std::optional<double> d_intra_baseline, std::uint64_t seed);

/// SHA-256 over (relative path, NUL, byte length, bytes) for each file in
/// sorted path order.
std::string content_digest(const std::filesystem::path& root, std::vector<std::string> relative_files);

struct PipelineResult {
  std::filesystem::path out;
  std::string digest;
  MetricReport report;
  std::optional<MetricReport> baseline;
  nlohmann::json manifest;
};

/// Prior -> identities -> denoiser -> samples -> metrics -> manifest. The
/// manifest is written last so a partial run never references missing files.
PipelineResult run_pipeline(const RunConfig& config);

}  // namespace creaseforge
