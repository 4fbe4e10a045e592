#include "creaseforge/config.hpp"

#include "creaseforge/diffusion.hpp"
#include "creaseforge/error.hpp"
#include "creaseforge/io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

namespace creaseforge {

namespace {

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorCode::UsageError, message); }

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Cuts a trailing comment that is not inside a string.
std::string_view strip_comment(std::string_view line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote != 0) {
      if (c == '\\' && quote == '"') ++i;
      else if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

std::string parse_string(std::string_view text) {
  const char quote = text.front();
  if (text.size() < 2 || text.back() != quote) config_error(fmt::format("unterminated string {}", text));
  const auto body = text.substr(1, text.size() - 2);
  if (quote == '\'') return std::string(body);
  std::string out;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] != '\\') {
      out += body[i];
      continue;
    }
    if (++i >= body.size()) config_error("dangling escape");
    switch (body[i]) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      default: config_error(fmt::format("unsupported escape \\{}", body[i]));
    }
  }
  return out;
}

ConfigValue parse_number(std::string_view text) {
  std::string cleaned;
  for (char c : text) {
    if (c != '_') cleaned += c;
  }
  if (!cleaned.empty() && cleaned.front() == '+') cleaned.erase(0, 1);
  if (cleaned == "inf" || cleaned == "-inf" || cleaned == "nan") {
    config_error(fmt::format("non-finite value '{}' is not allowed", text));
  }
  const bool is_float = cleaned.find_first_of(".eE") != std::string::npos;
  const char* first = cleaned.data();
  const char* last = cleaned.data() + cleaned.size();
  if (is_float) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) config_error(fmt::format("bad number '{}'", text));
    return v;
  }
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) config_error(fmt::format("bad number '{}'", text));
  return v;
}

double as_double(const ConfigValue& v, std::string_view key) {
  if (const auto* d = std::get_if<double>(&v)) return *d;
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  config_error(fmt::format("'{}' must be a number", key));
}

std::int64_t as_integer(const ConfigValue& v, std::string_view key) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v); d != nullptr && std::floor(*d) == *d && std::abs(*d) < 9e15) {
    return static_cast<std::int64_t>(*d);
  }
  config_error(fmt::format("'{}' must be an integer", key));
}

int as_int(const ConfigValue& v, std::string_view key) {
  const auto i = as_integer(v, key);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    config_error(fmt::format("'{}' out of range", key));
  }
  return static_cast<int>(i);
}

using Member = std::variant<std::string RunConfig::*, double RunConfig::*, int RunConfig::*, bool RunConfig::*,
                            std::uint64_t RunConfig::*, std::optional<double> RunConfig::*,
                            std::optional<int> RunConfig::*, std::vector<double> RunConfig::*>;

struct Field {
  std::string_view key;
  Member member;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      {"annotations", &RunConfig::annotations},
      {"distribution", &RunConfig::distribution},
      {"gamma", &RunConfig::gamma},
      {"width", &RunConfig::width},
      {"height", &RunConfig::height},
      {"thickness", &RunConfig::thickness},
      {"wrinkle_min", &RunConfig::wrinkle_min},
      {"wrinkle_max", &RunConfig::wrinkle_max},
      {"wrinkle_length_min", &RunConfig::wrinkle_length_min},
      {"wrinkle_length_max", &RunConfig::wrinkle_length_max},
      {"wrinkle_intensity", &RunConfig::wrinkle_intensity},
      {"T", &RunConfig::T},
      {"beta_start", &RunConfig::beta_start},
      {"beta_end", &RunConfig::beta_end},
      {"K", &RunConfig::K},
      {"mode", &RunConfig::mode},
      {"share_initial_noise", &RunConfig::share_initial_noise},
      {"zero_final_noise", &RunConfig::zero_final_noise},
      {"denoiser", &RunConfig::denoiser},
      {"spread", &RunConfig::spread},
      {"buckets", &RunConfig::buckets},
      {"lambda", &RunConfig::lambda},
      {"train_draws", &RunConfig::train_draws},
      {"ids", &RunConfig::ids},
      {"per_id", &RunConfig::per_id},
      {"seed", &RunConfig::seed},
      {"threads", &RunConfig::threads},
      {"r", &RunConfig::r},
      {"far", &RunConfig::far},
      {"baseline", &RunConfig::baseline},
      {"out", &RunConfig::out},
  };
  return table;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string toml_double(double v) {
  std::string s = fmt::format("{}", v);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string toml_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

ConfigValue from_json_value(const nlohmann::json& v, std::string_view key) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_number_unsigned()) {
    const auto u = v.get<std::uint64_t>();
    if (u > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
      config_error(fmt::format("'{}' out of range", key));
    }
    return static_cast<std::int64_t>(u);
  }
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float()) return v.get<double>();
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) return v.get<std::vector<double>>();
  config_error(fmt::format("'{}' has an unsupported JSON type", key));
}

}  // namespace

ConfigValue parse_config_value(std::string_view raw) {
  const auto text = trim(raw);
  if (text.empty()) config_error("missing value");
  if (text.front() == '"' || text.front() == '\'') return parse_string(text);
  if (text == "true") return true;
  if (text == "false") return false;
  if (text.front() == '[') {
    if (text.back() != ']') config_error(fmt::format("unterminated array {}", text));
    std::vector<double> values;
    auto body = trim(text.substr(1, text.size() - 2));
    while (!body.empty()) {
      const auto comma = body.find(',');
      const auto item = trim(body.substr(0, comma));
      if (!item.empty()) {
        const auto v = parse_number(item);
        values.push_back(as_double(v, "array element"));
      }
      if (comma == std::string_view::npos) break;
      body = body.substr(comma + 1);
    }
    return values;
  }
  return parse_number(text);
}

ConfigTable parse_flat_toml(std::string_view text) {
  ConfigTable table;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = trim(strip_comment(text.substr(0, nl)));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '[') config_error(fmt::format("line {}: sections are not supported (flat keys only)", line_no));
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) config_error(fmt::format("line {}: expected key = value", line_no));
    const auto key = trim(line.substr(0, eq));
    if (key.empty() || !std::all_of(key.begin(), key.end(), [](char c) {
          return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
        })) {
      config_error(fmt::format("line {}: bad key '{}'", line_no, key));
    }
    if (table.count(key) != 0) config_error(fmt::format("line {}: duplicate key '{}'", line_no, key));
    try {
      table.emplace(std::string(key), parse_config_value(line.substr(eq + 1)));
    } catch (const Error& e) {
      config_error(fmt::format("line {}: {}", line_no, e.message()));
    }
  }
  return table;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, const ConfigValue& value) {
  const auto& table = fields();
  const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
  if (it == table.end()) config_error(fmt::format("unknown config key '{}'", key));
  std::visit(Overloaded{
                 [&](std::string RunConfig::*m) {
                   const auto* s = std::get_if<std::string>(&value);
                   if (s == nullptr) config_error(fmt::format("'{}' must be a string", key));
                   config.*m = *s;
                 },
                 [&](double RunConfig::*m) { config.*m = as_double(value, key); },
                 [&](int RunConfig::*m) { config.*m = as_int(value, key); },
                 [&](bool RunConfig::*m) {
                   const auto* b = std::get_if<bool>(&value);
                   if (b == nullptr) config_error(fmt::format("'{}' must be true or false", key));
                   config.*m = *b;
                 },
                 [&](std::uint64_t RunConfig::*m) {
                   // TOML integers are signed 64-bit, which bounds what a config can hold
                   const auto i = as_integer(value, key);
                   if (i < 0) config_error(fmt::format("'{}' must be in [0, 2^63 - 1]", key));
                   config.*m = static_cast<std::uint64_t>(i);
                 },
                 [&](std::optional<double> RunConfig::*m) { config.*m = as_double(value, key); },
                 [&](std::optional<int> RunConfig::*m) { config.*m = as_int(value, key); },
                 [&](std::vector<double> RunConfig::*m) {
                   if (const auto* v = std::get_if<std::vector<double>>(&value)) config.*m = *v;
                   else config.*m = {as_double(value, key)};
                 },
             },
             it->member);
}

void apply_config(RunConfig& config, const ConfigTable& table) {
  for (const auto& [key, value] : table) set_config_value(config, key, value);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig config;
  const std::string text = read_file(path);
  try {
    apply_config(config, parse_flat_toml(text));
  } catch (const Error& e) {
    config_error(fmt::format("{}: {}", path.string(), e.message()));
  }
  // relative data paths are relative to the config file
  const auto base = path.parent_path();
  for (auto* p : {&config.annotations, &config.distribution}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  if (config.denoiser != "analytic" && config.denoiser != "linear" &&
      std::filesystem::path(config.denoiser).is_relative()) {
    config.denoiser = (base / config.denoiser).lexically_normal().string();
  }
  return config;
}

std::string to_toml(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) {
    std::visit(Overloaded{
                   [&](std::string RunConfig::*m) { out += fmt::format("{} = {}\n", f.key, toml_string(config.*m)); },
                   [&](double RunConfig::*m) { out += fmt::format("{} = {}\n", f.key, toml_double(config.*m)); },
                   [&](int RunConfig::*m) { out += fmt::format("{} = {}\n", f.key, config.*m); },
                   [&](bool RunConfig::*m) { out += fmt::format("{} = {}\n", f.key, config.*m ? "true" : "false"); },
                   [&](std::uint64_t RunConfig::*m) { out += fmt::format("{} = {}\n", f.key, config.*m); },
                   [&](std::optional<double> RunConfig::*m) {
                     if (config.*m) out += fmt::format("{} = {}\n", f.key, toml_double(*(config.*m)));
                   },
                   [&](std::optional<int> RunConfig::*m) {
                     if (config.*m) out += fmt::format("{} = {}\n", f.key, *(config.*m));
                   },
                   [&](std::vector<double> RunConfig::*m) {
                     std::vector<std::string> items;
                     for (double v : config.*m) items.push_back(toml_double(v));
                     out += fmt::format("{} = [{}]\n", f.key, fmt::join(items, ", "));
                   },
               },
               f.member);
  }
  return out;
}

nlohmann::json to_json(const RunConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : fields()) {
    const std::string key(f.key);
    std::visit(Overloaded{
                   [&](std::optional<double> RunConfig::*m) {
                     if (config.*m) j[key] = *(config.*m);
                   },
                   [&](std::optional<int> RunConfig::*m) {
                     if (config.*m) j[key] = *(config.*m);
                   },
                   [&](auto m) { j[key] = config.*m; },
               },
               f.member);
  }
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) config_error("config snapshot must be an object");
  RunConfig config;
  for (const auto& [key, value] : j.items()) set_config_value(config, key, from_json_value(value, key));
  return config;
}

RunConfig RunConfig::resolved() const {
  RunConfig c = *this;
  if (!c.K) c.K = c.T / 2;
  if (!c.beta_start || !c.beta_end) {
    const auto [b0, b1] = default_beta_range(std::max(c.T, 1));
    if (!c.beta_start) c.beta_start = b0;
    if (!c.beta_end) c.beta_end = b1;
  }
  return c;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { config_error(m); };
  if (width < 8 || height < 8) fail(fmt::format("resolution {}x{} is below 8x8", width, height));
  if (ids < 1 || per_id < 1) fail("ids and per_id must be >= 1");
  if (T < 1) fail(fmt::format("T = {} must be >= 1", T));
  if (K && (*K < 0 || *K > T)) fail(fmt::format("K = {} must lie in [0, T = {}]", *K, T));
  if (mode != "first" && mode != "last") fail(fmt::format("mode must be 'first' or 'last', got '{}'", mode));
  if (!std::isfinite(gamma) || gamma < 0.0) fail("gamma must be finite and >= 0");
  if (!(thickness >= 1.0)) fail("thickness must be >= 1");
  if (wrinkle_min < 0 || wrinkle_max < wrinkle_min) fail("wrinkle count range is invalid");
  if (!(wrinkle_length_min >= 0.0) || wrinkle_length_max < wrinkle_length_min) fail("wrinkle length range is invalid");
  if (wrinkle_intensity < 0 || wrinkle_intensity > 255) fail("wrinkle_intensity must be 0..255");
  if (beta_start && beta_end && !(*beta_start > 0.0 && *beta_start <= *beta_end && *beta_end < 1.0)) {
    fail("need 0 < beta_start <= beta_end < 1");
  }
  if (!(spread > 0.0)) fail("spread must be > 0");
  if (buckets < 1) fail("buckets must be >= 1");
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (train_draws < 1) fail("train_draws must be >= 1");
  if (r && !(*r >= 0.0 && *r <= 2.0)) fail("r must lie in [0, 2]");
  for (double f : far) {
    if (!(f > 0.0 && f < 1.0)) fail(fmt::format("far {} outside (0, 1)", f));
  }
  if (threads < 0) fail("threads must be >= 0");
}

RunConfig RunConfig::production() {
  RunConfig c;
  c.T = 1000;
  c.ids = 2000;
  c.per_id = 20;
  c.width = 128;
  c.height = 128;
  return c;
}

int worker_count(const RunConfig& config) {
  if (config.threads > 0) return config.threads;
  if (const char* env = std::getenv("CREASEFORGE_THREADS"); env != nullptr) {
    int n = 0;
    const std::string_view s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec == std::errc() && ptr == s.data() + s.size() && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace creaseforge
