#include "creaseforge/cli.hpp"

#include "creaseforge/config.hpp"
#include "creaseforge/creasedist.hpp"
#include "creaseforge/creasefit.hpp"
#include "creaseforge/error.hpp"
#include "creaseforge/io.hpp"
#include "creaseforge/metrics.hpp"
#include "creaseforge/pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <regex>

namespace creaseforge {

namespace fs = std::filesystem;

namespace {

void emit_json(const std::string& out, const nlohmann::json& j) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json(out, j);
  }
}

void emit_text(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_file_atomic(out, text);
  }
}

// Condition images id{i:05}.pgm of a directory, in ascending id order.
std::pair<std::vector<int>, std::vector<CreaseImage>> load_creases(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, fmt::format("'{}' is not a directory", dir.string()));
  static const std::regex pattern(R"(id(\d+)\.pgm)");
  std::map<int, fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    std::smatch m;
    if (entry.is_regular_file() && std::regex_match(name, m, pattern)) files[std::stoi(m[1].str())] = entry.path();
  }
  if (files.empty()) throw Error(ErrorCode::EmptyBatch, fmt::format("no id*.pgm crease images in '{}'", dir.string()));
  std::pair<std::vector<int>, std::vector<CreaseImage>> out;
  for (const auto& [id, path] : files) {
    out.first.push_back(id);
    out.second.push_back(read_pgm(path));
  }
  return out;
}

EmbeddingSet load_embeddings(const std::string& embeddings, const std::string& dataset) {
  if (!embeddings.empty() == !dataset.empty()) {
    throw Error(ErrorCode::UsageError, "give exactly one of --embeddings or --dataset");
  }
  if (!embeddings.empty()) return read_embeddings_csv(embeddings);
  return embed_dataset(load_dataset(dataset));
}

// Command-line override value: TOML syntax, a bare comma list, or a bare string.
ConfigValue parse_override(const std::string& raw) {
  std::string text = raw;
  if (!text.empty() && text.find(',') != std::string::npos && text.front() != '[' && text.front() != '"') {
    text = "[" + text + "]";
  }
  try {
    return parse_config_value(text);
  } catch (const Error&) {
    return raw;
  }
}

struct ScheduleFlags {
  int T = 100;
  std::optional<double> beta_start;
  std::optional<double> beta_end;

  void add(CLI::App* app) {
    app->add_option("--T", T, "diffusion steps")->capture_default_str();
    app->add_option("--beta-start", beta_start, "first beta (default scales with T)");
    app->add_option("--beta-end", beta_end, "last beta (default scales with T)");
  }
  void apply(RunConfig& c) const {
    c.T = T;
    c.beta_start = beta_start;
    c.beta_end = beta_end;
  }
};

int run(CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> reversed;
  if (!args.empty()) reversed.assign(args.rbegin(), args.rend() - 1);
  app.parse(reversed);
  return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Synthetic palm-crease datasets via polynomial crease priors and noise-sharing diffusion",
               "creaseforge"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);
  std::function<void()> action;

  // fit-creases
  auto* fit = app.add_subcommand("fit-creases", "fit polynomials to annotations and estimate the crease prior");
  std::string fit_annotations_path, fit_out, fit_fits;
  fit->add_option("--annotations", fit_annotations_path, "annotation corpus (JSON Lines)")->required();
  fit->add_option("--out", fit_out, "distribution JSON (stdout when omitted)");
  fit->add_option("--fits", fit_fits, "also write per-image fits as JSON Lines");
  fit->callback([&] {
    action = [&] {
      const auto corpus = read_annotations(fit_annotations_path);
      const auto fits = fit_annotations(corpus);
      const auto dist = estimate_distribution(fits);
      if (!fit_fits.empty()) {
        std::string lines;
        for (const auto& f : fits) lines += to_json(f).dump() + "\n";
        write_file_atomic(fit_fits, lines);
      }
      emit_json(fit_out, to_json(dist));
    };
  });

  // qq-export
  auto* qq = app.add_subcommand("qq-export", "normal QQ table of fitted coefficients");
  std::string qq_annotations, qq_out;
  int qq_points = 19;
  std::optional<int> qq_line, qq_coefficient;
  qq->add_option("--annotations", qq_annotations, "annotation corpus (JSON Lines)")->required();
  qq->add_option("--line", qq_line, "principal line 1..3 (all when omitted)")->check(CLI::Range(1, 3));
  qq->add_option("--coefficient", qq_coefficient, "coefficient 0..4 (all when omitted)")->check(CLI::Range(0, 4));
  qq->add_option("--points", qq_points, "quantile rows")->capture_default_str()->check(CLI::PositiveNumber);
  qq->add_option("--out", qq_out, "CSV output (stdout when omitted)");
  qq->callback([&] {
    action = [&] {
      const auto fits = fit_annotations(read_annotations(qq_annotations));
      std::string csv = "line,coefficient,p,theoretical,empirical\n";
      for (int line = 1; line <= 3; ++line) {
        if (qq_line && *qq_line != line) continue;
        std::vector<CoefficientVector> vectors;
        for (const auto& f : fits) vectors.push_back(f.lines[static_cast<std::size_t>(line - 1)].coefficients);
        for (int k = 0; k < 5; ++k) {
          if (qq_coefficient && *qq_coefficient != k) continue;
          const auto rows = export_qq(vectors, k, qq_points);
          for (std::size_t i = 0; i < rows.size(); ++i) {
            const double p = static_cast<double>(i + 1) / (qq_points + 1);
            csv += fmt::format("{},{},{},{},{}\n", line, k, p, rows[i].theoretical, rows[i].empirical);
          }
        }
      }
      emit_text(qq_out, csv);
    };
  });

  // synth-creases
  auto* synth = app.add_subcommand("synth-creases", "sample identities from the prior and render crease images");
  RunConfig synth_cfg;
  bool synth_bezier = false;
  std::string synth_out = "creases";
  synth->add_option("--distribution", synth_cfg.distribution, "fitted prior JSON");
  synth->add_option("--annotations", synth_cfg.annotations, "annotation corpus to fit on the fly");
  synth->add_option("--gamma", synth_cfg.gamma, "similarity factor")->capture_default_str();
  synth->add_option("--ids", synth_cfg.ids, "identities")->capture_default_str();
  synth->add_option("--seed", synth_cfg.seed, "master seed")->capture_default_str();
  synth->add_option("--width", synth_cfg.width)->capture_default_str();
  synth->add_option("--height", synth_cfg.height)->capture_default_str();
  synth->add_option("--thickness", synth_cfg.thickness)->capture_default_str();
  synth->add_option("--wrinkle-min", synth_cfg.wrinkle_min)->capture_default_str();
  synth->add_option("--wrinkle-max", synth_cfg.wrinkle_max)->capture_default_str();
  synth->add_option("--threads", synth_cfg.threads, "worker threads (0: auto)");
  synth->add_flag("--bezier", synth_bezier, "quadratic Bezier baseline instead of the polynomial prior");
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->callback([&] {
    action = [&] {
      synth_cfg.validate();
      nlohmann::json records = nlohmann::json::array();
      const fs::path dir = synth_out;
      if (synth_bezier) {
        const auto params = render_params(synth_cfg);
        const auto config = BezierConfig::three_bands();
        const auto root = RandomStream(synth_cfg.seed).child("bezier");
        fs::create_directories(dir);
        std::vector<BezierCrease> creases(static_cast<std::size_t>(synth_cfg.ids));
        parallel_for(creases.size(), worker_count(synth_cfg), [&](std::size_t i) {
          auto s = root.child(i).child("crease");
          auto w = root.child(i).child("wrinkles");
          creases[i] = sample_bezier_crease(config, s);
          write_pgm(dir / crease_file_name(static_cast<int>(i)), render_bezier_crease(creases[i], params, w));
        });
        for (std::size_t i = 0; i < creases.size(); ++i) {
          nlohmann::json points = nlohmann::json::array();
          for (const auto& line : creases[i].control_points) {
            nlohmann::json l = nlohmann::json::array();
            for (const auto& p : line) l.push_back({p.x, p.y});
            points.push_back(std::move(l));
          }
          records.push_back({{"id", i}, {"seed", synth_cfg.seed}, {"control_points", std::move(points)},
                             {"file", crease_file_name(static_cast<int>(i))}});
        }
      } else {
        const auto prior = load_prior(synth_cfg);
        const auto identities = synthesize_identities(prior, synth_cfg, dir, worker_count(synth_cfg));
        const auto root = RandomStream(synth_cfg.seed).child("identity");
        for (std::size_t i = 0; i < identities.size(); ++i) {
          auto record = crease_json(identities[i].crease);
          record["id"] = i;
          record["gamma"] = synth_cfg.gamma;
          record["seed"] = synth_cfg.seed;
          record["stream"] = root.child(i).path();
          record["file"] = crease_file_name(static_cast<int>(i));
          records.push_back(std::move(record));
        }
      }
      write_json(dir / "identities.json", records);
    };
  });

  // train-denoiser
  auto* train = app.add_subcommand("train-denoiser", "fit the per-bucket linear denoiser on toy data");
  std::string train_creases, train_out = "denoiser.json";
  ScheduleFlags train_sched;
  RunConfig train_cfg;
  train->add_option("--creases", train_creases, "directory of id*.pgm condition images")->required();
  train_sched.add(train);
  train->add_option("--buckets", train_cfg.buckets)->capture_default_str();
  train->add_option("--lambda", train_cfg.lambda, "ridge penalty")->capture_default_str();
  train->add_option("--spread", train_cfg.spread, "toy data spread")->capture_default_str();
  train->add_option("--draws", train_cfg.train_draws, "toy draws per condition")->capture_default_str();
  train->add_option("--seed", train_cfg.seed)->capture_default_str();
  train->add_option("--out", train_out)->capture_default_str();
  train->callback([&] {
    action = [&] {
      train_sched.apply(train_cfg);
      train_cfg.validate();
      const auto [ids, conditions] = load_creases(train_creases);
      train_cfg.width = conditions.front().width;
      train_cfg.height = conditions.front().height;
      train_cfg.denoiser = "linear";
      const auto denoiser = make_denoiser(train_cfg, make_schedule(train_cfg), conditions);
      write_json(train_out, dynamic_cast<const LinearDenoiser&>(*denoiser).to_json());
    };
  });

  // sample
  auto* sample = app.add_subcommand("sample", "noise-sharing diffusion sampling for each condition image");
  std::string sample_creases, sample_out = "samples";
  ScheduleFlags sample_sched;
  RunConfig sample_cfg;
  bool sample_final_noise = false;
  sample->add_option("--creases", sample_creases, "directory of id*.pgm condition images");
  sample_sched.add(sample);
  sample->add_option("--K", sample_cfg.K, "shared steps (default T/2)");
  sample->add_option("--mode", sample_cfg.mode, "first | last")->capture_default_str();
  sample->add_flag("--share-initial-noise", sample_cfg.share_initial_noise, "also share x_T within an identity");
  sample->add_flag("--final-noise", sample_final_noise, "inject noise at t = 1 as well");
  sample->add_option("--denoiser", sample_cfg.denoiser, "analytic | linear | path to denoiser JSON")
      ->capture_default_str();
  sample->add_option("--spread", sample_cfg.spread, "toy data spread")->capture_default_str();
  sample->add_option("--per-id", sample_cfg.per_id, "samples per identity")->capture_default_str();
  sample->add_option("--seed", sample_cfg.seed)->capture_default_str();
  sample->add_option("--threads", sample_cfg.threads, "worker threads (0: auto)");
  sample->add_option("--out", sample_out)->capture_default_str();
  sample->callback([&] {
    action = [&] {
      sample_sched.apply(sample_cfg);
      sample_cfg.zero_final_noise = !sample_final_noise;
      sample_cfg.validate();
      if (sample_creases.empty()) throw Error(ErrorCode::UsageError, "--creases is required");
      const auto [ids, conditions] = load_creases(sample_creases);
      sample_cfg.width = conditions.front().width;
      sample_cfg.height = conditions.front().height;
      const auto c = sample_cfg.resolved();
      const auto sched = make_schedule(c);
      const auto plan = make_plan(c);
      const auto denoiser = make_denoiser(c, sched, conditions);
      SamplerOptions options;
      options.zero_final_noise = c.zero_final_noise;
      sample_dataset(*denoiser, sched, conditions, ids, c.per_id, plan, options, RandomStream(c.seed), sample_out,
                     worker_count(c));
      write_json(fs::path(sample_out) / "sampler.json",
                 {{"T", c.T},
                  {"K", plan.K},
                  {"mode", std::string(to_string(plan.mode))},
                  {"seed", c.seed},
                  {"ids", ids.size()},
                  {"per_id", c.per_id},
                  {"denoiser", denoiser->descriptor()},
                  {"share_initial_noise", plan.share_initial_noise},
                  {"zero_final_noise", options.zero_final_noise}});
    };
  });

  // score-dist
  auto* scores = app.add_subcommand("score-dist", "genuine and imposter cosine score distributions");
  std::string sd_embeddings, sd_dataset, sd_out, sd_scores;
  std::uint64_t sd_seed = 0;
  scores->add_option("--embeddings", sd_embeddings, "CSV class_id,sample_id,e0,...");
  scores->add_option("--dataset", sd_dataset, "sample directory, embedded with the toy descriptor");
  scores->add_option("--seed", sd_seed, "imposter subsampling seed")->capture_default_str();
  scores->add_option("--scores", sd_scores, "also write raw scores as CSV kind,score");
  scores->add_option("--out", sd_out, "summary JSON (stdout when omitted)");
  scores->callback([&] {
    action = [&] {
      const auto dist = score_distribution(load_embeddings(sd_embeddings, sd_dataset), sd_seed);
      if (!sd_scores.empty()) {
        std::string csv = "kind,score\n";
        for (double s : dist.genuine) csv += fmt::format("genuine,{}\n", s);
        for (double s : dist.imposter) csv += fmt::format("imposter,{}\n", s);
        write_file_atomic(sd_scores, csv);
      }
      nlohmann::json j = {{"genuine", to_json(dist.genuine_summary)}, {"imposter", to_json(dist.imposter_summary)}};
      if (dist.imposter_subsampled) j["imposter_subsampled"] = true;
      emit_json(sd_out, j);
    };
  });

  // metrics
  auto* metrics = app.add_subcommand("metrics", "class uniqueness, identity consistency, diversity and TAR@FAR");
  std::string m_embeddings, m_dataset, m_baseline_dataset, m_out;
  double m_r = 0.0;
  std::optional<double> m_baseline;
  std::vector<double> m_far = {1e-3, 1e-2, 1e-1};
  std::uint64_t m_seed = 0;
  metrics->add_option("--dataset", m_dataset, "sample directory (id*_s*.pgm)");
  metrics->add_option("--embeddings", m_embeddings, "CSV embeddings; D_intra needs --dataset");
  metrics->add_option("--r", m_r, "cosine-distance threshold")->required()->check(CLI::Range(0.0, 2.0));
  metrics->add_option("--far", m_far, "false-accept rates")->delimiter(',')->capture_default_str();
  auto* baseline_value = metrics->add_option("--baseline", m_baseline, "D_intra normalizer");
  metrics->add_option("--baseline-dataset", m_baseline_dataset, "dataset whose D_intra is the normalizer")
      ->excludes(baseline_value);
  metrics->add_option("--seed", m_seed, "imposter subsampling seed")->capture_default_str();
  metrics->add_option("--out", m_out, "report JSON (stdout when omitted)");
  metrics->callback([&] {
    action = [&] {
      for (double f : m_far) {
        if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::UsageError, fmt::format("far {} outside (0, 1)", f));
      }
      if (!m_baseline_dataset.empty()) m_baseline = dataset_diversity(load_dataset(m_baseline_dataset));
      if (!m_dataset.empty() && m_embeddings.empty()) {
        emit_json(m_out, to_json(evaluate_dataset(load_dataset(m_dataset), m_r, m_far, m_baseline, m_seed)));
        return;
      }
      const auto emb = load_embeddings(m_embeddings, m_dataset);
      MetricReport report;
      report.r = m_r;
      report.u_class = class_uniqueness(emb, m_r);
      report.c_identity = identity_consistency(emb, m_r);
      const auto dist = score_distribution(emb, m_seed);
      report.genuine = dist.genuine_summary;
      report.imposter = dist.imposter_summary;
      report.imposter_subsampled = dist.imposter_subsampled;
      for (double f : m_far) report.tar.push_back(tar_at_far(dist, f));
      emit_json(m_out, to_json(report));
    };
  });

  // tar-far
  auto* tar = app.add_subcommand("tar-far", "true-accept rate at fixed false-accept rates");
  std::string t_embeddings, t_dataset, t_out;
  std::vector<double> t_far;
  std::uint64_t t_seed = 0;
  tar->add_option("--embeddings", t_embeddings, "CSV class_id,sample_id,e0,...");
  tar->add_option("--dataset", t_dataset, "sample directory, embedded with the toy descriptor");
  tar->add_option("--far", t_far, "false-accept rates")->delimiter(',')->required();
  tar->add_option("--seed", t_seed, "imposter subsampling seed")->capture_default_str();
  tar->add_option("--out", t_out, "JSON (stdout when omitted)");
  tar->callback([&] {
    action = [&] {
      const auto dist = score_distribution(load_embeddings(t_embeddings, t_dataset), t_seed);
      nlohmann::json rows = nlohmann::json::array();
      for (double f : t_far) {
        if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::UsageError, fmt::format("far {} outside (0, 1)", f));
        const auto r = tar_at_far(dist, f);
        nlohmann::json row = {{"far", r.far}, {"tar", r.tar}, {"threshold", r.threshold}};
        if (r.underpowered) row["underpowered"] = true;
        rows.push_back(std::move(row));
      }
      emit_json(t_out, {{"tar_at_far", std::move(rows)}});
    };
  });

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "prior, identities, samples, metrics and manifest in one run");
  std::string p_config;
  std::map<std::string, std::string> p_overrides;
  pipe->add_option("--config", p_config, "flat TOML run configuration");
  for (const auto& key : config_keys()) {
    pipe->add_option("--" + key, p_overrides[key], "override config key '" + key + "'");
  }
  pipe->callback([&] {
    action = [&] {
      RunConfig config = p_config.empty() ? RunConfig{} : load_run_config(p_config);
      for (const auto& [key, raw] : p_overrides) {
        if (pipe->count("--" + key) > 0) set_config_value(config, key, parse_override(raw));
      }
      const auto result = run_pipeline(config);
      nlohmann::json summary = {{"out", result.out.string()},
                                {"digest", result.digest},
                                {"c_identity", result.report.c_identity},
                                {"u_class", result.report.u_class}};
      if (result.report.d_intra) summary["d_intra"] = *result.report.d_intra;
      if (result.baseline) summary["baseline_c_identity"] = result.baseline->c_identity;
      std::cout << summary.dump(2) << "\n";
    };
  });

  try {
    run(app, args);
    if (action) action();
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::UsageError || e.code() == ErrorCode::InvalidArgument ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int cli_dispatch(int argc, char** argv) { return cli_dispatch(std::vector<std::string>(argv, argv + argc)); }

}  // namespace creaseforge
