#include "creaseforge/pipeline.hpp"

#include "creaseforge/creasefit.hpp"
#include "creaseforge/error.hpp"
#include "creaseforge/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <exception>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

namespace creaseforge {

namespace fs = std::filesystem;

std::string tool_version() { return CREASEFORGE_VERSION; }

Eigen::VectorXd toy_embed(const CreaseImage& image) {
  if (image.width < 4 || image.height < 4 ||
      image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw Error(ErrorCode::ImageTooSmall, fmt::format("toy_embed needs a valid image of at least 4x4, got {}x{}",
                                                      image.width, image.height));
  }
  constexpr int kGrid = 4;
  constexpr int kCells = kGrid * kGrid;
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(3 * kCells);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(3 * kCells);
  auto cell = [&](int x, int y) { return (y * kGrid / image.height) * kGrid + x * kGrid / image.width; };
  auto value = [&](int x, int y) { return image.at(x, y) / 127.5 - 1.0; };
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int c = cell(x, y);
      sums[c] += value(x, y);
      counts[c] += 1.0;
      if (x + 1 < image.width) {
        sums[kCells + c] += std::abs(value(x + 1, y) - value(x, y));
        counts[kCells + c] += 1.0;
      }
      if (y + 1 < image.height) {
        sums[2 * kCells + c] += std::abs(value(x, y + 1) - value(x, y));
        counts[2 * kCells + c] += 1.0;
      }
    }
  }
  Eigen::VectorXd f = sums.cwiseQuotient(counts.cwiseMax(1.0));
  const double norm = f.norm();
  if (!(norm > 0.0)) throw Error(ErrorCode::InvalidArgument, "toy_embed: descriptor has zero norm");
  return f / norm;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto work = [&] {
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

RenderParams render_params(const RunConfig& c) {
  RenderParams params;
  params.width = c.width;
  params.height = c.height;
  params.thickness = c.thickness;
  params.wrinkles.count_min = c.wrinkle_min;
  params.wrinkles.count_max = c.wrinkle_max;
  params.wrinkles.length_min = c.wrinkle_length_min;
  params.wrinkles.length_max = c.wrinkle_length_max;
  params.wrinkles.intensity = static_cast<std::uint8_t>(c.wrinkle_intensity);
  params.validate();
  return params;
}

std::vector<IdentitySample> synthesize_identities(const CreaseDistribution& prior, const RunConfig& config,
                                                  const fs::path& dir, int workers) {
  const GammaFactor gamma(config.gamma);
  const auto params = render_params(config);
  const auto identity_root = RandomStream(config.seed).child("identity");
  fs::create_directories(dir);
  std::vector<IdentitySample> identities(static_cast<std::size_t>(config.ids));
  parallel_for(identities.size(), workers, [&](std::size_t i) {
    identities[i] = synthesize_identity(prior, gamma, params, identity_root.child(i));
    write_pgm(dir / crease_file_name(static_cast<int>(i)), identities[i].image);
  });
  return identities;
}

nlohmann::json crease_json(const PolynomialCrease& crease) {
  nlohmann::json coefficients = nlohmann::json::array();
  nlohmann::json endpoints = nlohmann::json::array();
  for (const auto& line : crease.lines) {
    coefficients.push_back(std::vector<double>(line.coefficients.a.begin(), line.coefficients.a.end()));
    endpoints.push_back({line.range.start, line.range.end});
  }
  return {{"coefficients", std::move(coefficients)}, {"endpoints", std::move(endpoints)}};
}

std::string crease_file_name(int id) { return fmt::format("id{:05}.pgm", id); }
std::string sample_file_name(int id, int j) { return fmt::format("id{:05}_s{:03}.pgm", id, j); }

CreaseDistribution load_prior(const RunConfig& config) {
  if (!config.distribution.empty()) {
    auto dist = distribution_from_json(read_json(config.distribution));
    validate(dist);
    return dist;
  }
  if (config.annotations.empty()) {
    throw Error(ErrorCode::UsageError, "either 'distribution' or 'annotations' must be set");
  }
  const auto corpus = read_annotations(config.annotations);
  const auto fits = fit_annotations(corpus);
  return estimate_distribution(fits);
}

DiffusionSchedule make_schedule(const RunConfig& config) {
  const auto c = config.resolved();
  return DiffusionSchedule::make(c.T, *c.beta_start, *c.beta_end);
}

NoiseSharingPlan make_plan(const RunConfig& config) {
  const auto c = config.resolved();
  NoiseSharingPlan plan;
  plan.K = *c.K;
  plan.T = c.T;
  plan.mode = share_mode_from_string(c.mode);
  plan.share_initial_noise = c.share_initial_noise;
  plan.validate();
  return plan;
}

std::vector<TrainingExample> toy_training_set(const std::vector<CreaseImage>& conditions, double spread,
                                              int draws, const RandomStream& stream) {
  GaussianToyModel model{spread, {}};
  model.validate();
  std::vector<TrainingExample> out;
  out.reserve(conditions.size() * static_cast<std::size_t>(draws));
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    const Eigen::VectorXd y = image_to_tensor(conditions[i]);
    for (int k = 0; k < draws; ++k) {
      auto s = stream.child(static_cast<std::uint64_t>(i * draws + k));
      out.push_back({model.draw(y, s), y});
    }
  }
  return out;
}

std::unique_ptr<Denoiser> make_denoiser(const RunConfig& config, const DiffusionSchedule& sched,
                                        const std::vector<CreaseImage>& conditions) {
  const Shape shape{config.height, config.width};
  if (config.denoiser == "analytic") {
    return std::make_unique<AnalyticDenoiser>(GaussianToyModel{config.spread, {}}, sched);
  }
  if (config.denoiser == "linear") {
    const RandomStream stream = RandomStream(config.seed).child("denoiser");
    const auto data = toy_training_set(conditions, config.spread, config.train_draws, stream.child("data"));
    LinearFitOptions options;
    options.buckets = config.buckets;
    options.lambda = config.lambda;
    return std::make_unique<LinearDenoiser>(fit_linear_denoiser(data, shape, sched, options, stream.child("fit")));
  }
  auto loaded = LinearDenoiser::from_json(read_json(config.denoiser));
  if (!(loaded.shape() == shape)) {
    throw Error(ErrorCode::ResolutionMismatch,
                fmt::format("denoiser '{}' is {}x{}, run is {}x{}", config.denoiser, loaded.shape().width,
                            loaded.shape().height, shape.width, shape.height));
  }
  if (loaded.steps() != sched.steps()) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("denoiser '{}' was trained for T = {}, run uses T = {}", config.denoiser, loaded.steps(),
                            sched.steps()));
  }
  return std::make_unique<LinearDenoiser>(std::move(loaded));
}

Dataset sample_dataset(const Denoiser& denoiser, const DiffusionSchedule& sched,
                       const std::vector<CreaseImage>& conditions, const std::vector<int>& ids, int per_id,
                       const NoiseSharingPlan& plan, const SamplerOptions& options, const RandomStream& root,
                       const fs::path& dir, int workers) {
  if (conditions.size() != ids.size()) throw Error(ErrorCode::ShapeMismatch, "one id per condition image");
  if (per_id < 1) throw Error(ErrorCode::InvalidArgument, "per_id must be >= 1");
  fs::create_directories(dir);
  Dataset out;
  out.ids = ids;
  out.classes.resize(ids.size());
  parallel_for(ids.size(), workers, [&](std::size_t i) {
    const auto& y = conditions[i];
    const Shape shape{y.height, y.width};
    IdentityBatch batch{ids[i], y, per_id};
    const auto samples = noise_sharing_sample(denoiser, sched, batch, plan, root, options);
    auto& images = out.classes[i];
    images.reserve(samples.size());
    for (std::size_t j = 0; j < samples.size(); ++j) {
      images.push_back(tensor_to_image(samples[j], shape));
      write_pgm(dir / sample_file_name(ids[i], static_cast<int>(j)), images.back());
    }
  });
  return out;
}

Dataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, fmt::format("'{}' is not a directory", dir.string()));
  static const std::regex pattern(R"(id(\d+)_s(\d+)\.pgm)");
  std::map<int, std::map<int, fs::path>> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    std::smatch m;
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) {
      files[std::stoi(m[1].str())][std::stoi(m[2].str())] = entry.path();
    }
  }
  if (files.empty()) throw Error(ErrorCode::EmptyBatch, fmt::format("no id*_s*.pgm images in '{}'", dir.string()));
  Dataset out;
  for (const auto& [id, samples] : files) {
    out.ids.push_back(id);
    auto& images = out.classes.emplace_back();
    for (const auto& [j, path] : samples) images.push_back(read_pgm(path));
  }
  return out;
}

EmbeddingSet embed_dataset(const Dataset& dataset) {
  EmbeddingSet emb;
  for (std::size_t c = 0; c < dataset.classes.size(); ++c) {
    auto& features = emb.classes.emplace_back();
    for (const auto& image : dataset.classes[c]) features.push_back(toy_embed(image));
    emb.class_ids.push_back(std::to_string(dataset.ids.at(c)));
  }
  return emb;
}

double dataset_diversity(const Dataset& dataset) {
  std::vector<std::vector<Eigen::VectorXd>> images;
  images.reserve(dataset.classes.size());
  for (const auto& cls : dataset.classes) {
    auto& out = images.emplace_back();
    for (const auto& image : cls) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(image.pixels.size()));
      for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = image.pixels[static_cast<std::size_t>(k)] / 255.0;
      out.push_back(std::move(v));
    }
  }
  return intra_class_diversity(images);
}

MetricReport evaluate_dataset(const Dataset& dataset, double r, const std::vector<double>& fars,
                              std::optional<double> d_intra_baseline, std::uint64_t seed) {
  const auto emb = embed_dataset(dataset);
  MetricReport report;
  report.r = r;
  report.u_class = class_uniqueness(emb, r);
  report.c_identity = identity_consistency(emb, r);
  const double raw = dataset_diversity(dataset);
  if (d_intra_baseline) {
    if (!(*d_intra_baseline > 0.0)) {
      throw Error(ErrorCode::InvalidArgument, "D_intra baseline must be > 0");
    }
    report.d_intra = raw / *d_intra_baseline;
    report.d_intra_baseline = d_intra_baseline;
  } else {
    report.d_intra = raw;
  }
  const bool have_pairs = emb.class_count() >= 2 &&
                          std::any_of(emb.classes.begin(), emb.classes.end(), [](const auto& c) { return c.size() >= 2; });
  if (have_pairs) {
    const auto scores = score_distribution(emb, seed);
    report.genuine = scores.genuine_summary;
    report.imposter = scores.imposter_summary;
    report.imposter_subsampled = scores.imposter_subsampled;
    for (double far : fars) report.tar.push_back(tar_at_far(scores, far));
  }
  return report;
}

std::string content_digest(const fs::path& root, std::vector<std::string> relative_files) {
  std::sort(relative_files.begin(), relative_files.end());
  Sha256 sha;
  for (const auto& rel : relative_files) {
    const auto bytes = read_file(root / rel);
    sha.update(rel);
    sha.update(std::string_view("\0", 1));
    sha.update(fmt::format("{}\n", bytes.size()));
    sha.update(bytes);
  }
  return sha.hex_digest();
}

namespace {

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config) {
  config.validate();
  if (!config.r) throw Error(ErrorCode::UsageError, "the cosine-distance threshold 'r' must be set");
  const RunConfig c = config.resolved();
  const fs::path out = c.out;
  const int workers = worker_count(c);

  fs::create_directories(out / "creases");
  std::error_code ec;
  fs::remove(out / "manifest.json", ec);

  const auto prior = load_prior(c);
  write_json(out / "distribution.json", to_json(prior));
  const auto sched = make_schedule(c);
  const auto plan = make_plan(c);
  SamplerOptions options;
  options.zero_final_noise = c.zero_final_noise;

  const RandomStream root(c.seed);
  const auto identity_root = root.child("identity");
  std::vector<int> ids(static_cast<std::size_t>(c.ids));
  for (int i = 0; i < c.ids; ++i) ids[static_cast<std::size_t>(i)] = i;
  const auto identities = synthesize_identities(prior, c, out / "creases", workers);
  std::vector<CreaseImage> conditions;
  conditions.reserve(identities.size());
  for (const auto& s : identities) conditions.push_back(s.image);

  const auto denoiser = make_denoiser(c, sched, conditions);
  if (const auto* linear = dynamic_cast<const LinearDenoiser*>(denoiser.get()); linear && c.denoiser == "linear") {
    write_json(out / "denoiser.json", linear->to_json());
  }

  const auto dataset = sample_dataset(*denoiser, sched, conditions, ids, c.per_id, plan, options, root, out, workers);

  const bool with_baseline = c.baseline && plan.K != 0;
  std::optional<Dataset> baseline;
  if (with_baseline) {
    NoiseSharingPlan k0 = plan;
    k0.K = 0;
    k0.share_initial_noise = false;
    baseline = sample_dataset(*denoiser, sched, conditions, ids, c.per_id, k0, options, root, out / "baseline_k0",
                              workers);
  }

  PipelineResult result;
  result.out = out;
  std::optional<double> reference;
  if (baseline) {
    reference = dataset_diversity(*baseline);
    result.baseline = evaluate_dataset(*baseline, *c.r, c.far, reference, c.seed);
  } else if (plan.K == 0 && c.baseline) {
    reference = dataset_diversity(dataset);
  }
  result.report = evaluate_dataset(dataset, *c.r, c.far, reference, c.seed);

  nlohmann::json metrics = to_json(result.report);
  metrics["K"] = plan.K;
  metrics["mode"] = std::string(to_string(plan.mode));
  metrics["embedding"] = "toy";
  if (result.baseline) {
    auto b = to_json(*result.baseline);
    b["K"] = 0;
    metrics["baseline"] = std::move(b);
  }
  write_json(out / "metrics.json", metrics);

  const nlohmann::json sampler = {{"T", c.T},
                                  {"K", plan.K},
                                  {"mode", std::string(to_string(plan.mode))},
                                  {"seed", c.seed},
                                  {"ids", c.ids},
                                  {"per_id", c.per_id},
                                  {"denoiser", denoiser->descriptor()},
                                  {"share_initial_noise", plan.share_initial_noise},
                                  {"zero_final_noise", options.zero_final_noise}};
  write_json(out / "sampler.json", sampler);

  std::vector<std::string> all_files;
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int id = ids[i];
    std::vector<std::string> files{(fs::path("creases") / crease_file_name(id)).generic_string()};
    for (int j = 0; j < c.per_id; ++j) files.push_back(sample_file_name(id, j));
    if (baseline) {
      for (int j = 0; j < c.per_id; ++j) {
        files.push_back((fs::path("baseline_k0") / sample_file_name(id, j)).generic_string());
      }
    }
    nlohmann::json record = crease_json(identities[i].crease);
    record["id"] = id;
    record["gamma"] = c.gamma;
    record["seed"] = c.seed;
    record["stream"] = identity_root.child(static_cast<std::uint64_t>(id)).path();
    record["sample_stream"] = identity_stream(root, id).path();
    record["files"] = files;
    records.push_back(std::move(record));
    all_files.insert(all_files.end(), files.begin(), files.end());
  }
  result.digest = content_digest(out, all_files);

  nlohmann::json manifest = {{"tool", "creaseforge"},
                             {"version", tool_version()},
                             {"created", iso8601_now()},
                             {"config", to_json(config)},
                             {"schedule", to_json(sched)},
                             {"sampler", sampler},
                             {"identities", std::move(records)},
                             {"digest", {{"algorithm", "sha256"}, {"value", result.digest}, {"files", all_files.size()}}}};
  write_json(out / "manifest.json", manifest);
  result.manifest = std::move(manifest);
  return result;
}

}  // namespace creaseforge
