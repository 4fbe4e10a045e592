#pragma once

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace creaseforge {

// Flat TOML subset: `key = value` lines with strings, integers, floats,
// booleans and one-line arrays of numbers; `#` comments. Section headers are
// rejected since the config is flat.
using ConfigValue = std::variant<bool, std::int64_t, double, std::string, std::vector<double>>;
using ConfigTable = std::map<std::string, ConfigValue, std::less<>>;

ConfigTable parse_flat_toml(std::string_view text);
/// Parses a single TOML value, e.g. a command-line override.
ConfigValue parse_config_value(std::string_view text);

/// Every tunable of a dataset run.
struct RunConfig {
  // crease prior
  std::string annotations;   // JSONL corpus, fitted on the fly
  std::string distribution;  // fitted prior JSON; takes precedence over annotations
  double gamma = 1.0;

  // condition images
  int width = 32;
  int height = 32;
  double thickness = 1.0;
  int wrinkle_min = 3;
  int wrinkle_max = 8;
  double wrinkle_length_min = 0.10;
  double wrinkle_length_max = 0.25;
  int wrinkle_intensity = 160;

  // diffusion + sampling
  int T = 100;
  std::optional<double> beta_start;  // default_beta_range(T) when unset
  std::optional<double> beta_end;
  std::optional<int> K;  // T / 2 when unset
  std::string mode = "last";
  bool share_initial_noise = false;
  bool zero_final_noise = true;

  // denoiser
  std::string denoiser = "analytic";  // analytic | linear | path to a linear denoiser JSON
  double spread = 0.5;
  int buckets = 10;
  double lambda = 1e-3;
  int train_draws = 4;

  // dataset
  int ids = 50;
  int per_id = 10;
  std::uint64_t seed = 0;
  int threads = 0;  // 0: CREASEFORGE_THREADS or hardware concurrency

  // evaluation
  std::optional<double> r;
  std::vector<double> far = {1e-3, 1e-2, 1e-1};
  bool baseline = true;

  std::string out = "run";

  /// Fills K and the beta endpoints from T when unset.
  RunConfig resolved() const;
  /// Cross-field checks; throws UsageError.
  void validate() const;

  /// T = 1000, 2000 ids x 20 samples, 128 x 128.
  static RunConfig production();

  bool operator==(const RunConfig&) const = default;
};

/// Applies one key; unknown keys and type mismatches are UsageErrors.
void set_config_value(RunConfig& config, std::string_view key, const ConfigValue& value);
void apply_config(RunConfig& config, const ConfigTable& table);
RunConfig load_run_config(const std::filesystem::path& path);

std::vector<std::string> config_keys();

std::string to_toml(const RunConfig& config);
nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Worker count: config.threads if > 0, else CREASEFORGE_THREADS, else the
/// hardware concurrency; never below 1.
int worker_count(const RunConfig& config);

}  // namespace creaseforge
