#include "creaseforge/config.hpp"
#include "creaseforge/error.hpp"

#include "test_util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>

using namespace creaseforge;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("flat TOML values") {
  const auto t = parse_flat_toml(R"(
# comment
name = "demo run"   # trailing comment
path = 'C:\raw\path'
count = 1_000
neg = -3
ratio = 2.5e-3
flag = true
off = false
list = [0.001, 1e-2, 3]
empty = []
hash = "a # not a comment"
)");
  CHECK(std::get<std::string>(t.at("name")) == "demo run");
  CHECK(std::get<std::string>(t.at("path")) == "C:\\raw\\path");
  CHECK(std::get<std::int64_t>(t.at("count")) == 1000);
  CHECK(std::get<std::int64_t>(t.at("neg")) == -3);
  CHECK(std::get<double>(t.at("ratio")) == 2.5e-3);
  CHECK(std::get<bool>(t.at("flag")));
  CHECK_FALSE(std::get<bool>(t.at("off")));
  CHECK(std::get<std::vector<double>>(t.at("list")) == std::vector<double>{0.001, 0.01, 3.0});
  CHECK(std::get<std::vector<double>>(t.at("empty")).empty());
  CHECK(std::get<std::string>(t.at("hash")) == "a # not a comment");
  CHECK(std::get<std::string>(parse_config_value("\"tab\\there\"")) == "tab\there");
}

TEST_CASE("flat TOML rejects what it does not support") {
  CHECK(code_of([] { parse_flat_toml("[section]\nx = 1\n"); }) == ErrorCode::UsageError);
  CHECK(code_of([] { parse_flat_toml("x = 1\nx = 2\n"); }) == ErrorCode::UsageError);
  CHECK(code_of([] { parse_flat_toml("x = \"open\n"); }) == ErrorCode::UsageError);
  CHECK(code_of([] { parse_flat_toml("x = nan\n"); }) == ErrorCode::UsageError);
  CHECK(code_of([] { parse_flat_toml("just words\n"); }) == ErrorCode::UsageError);
  CHECK(code_of([] { parse_flat_toml("x = [1, \"a\"]\n"); }) == ErrorCode::UsageError);
}

TEST_CASE("setting config keys") {
  RunConfig c;
  set_config_value(c, "gamma", std::int64_t{2});
  CHECK(c.gamma == 2.0);
  set_config_value(c, "K", std::int64_t{30});
  CHECK(c.K == 30);
  set_config_value(c, "far", 0.05);
  CHECK(c.far == std::vector<double>{0.05});
  set_config_value(c, "mode", std::string("first"));
  CHECK(c.mode == "first");
  CHECK(code_of([&] { set_config_value(c, "gama", 1.0); }) == ErrorCode::UsageError);
  CHECK(code_of([&] { set_config_value(c, "T", std::string("x")); }) == ErrorCode::UsageError);
  CHECK(code_of([&] { set_config_value(c, "ids", 2.5); }) == ErrorCode::UsageError);
  CHECK(config_keys().size() >= 30);
}

TEST_CASE("cross-field validation") {
  RunConfig c;
  c.r = 0.1;
  CHECK_NOTHROW(c.validate());
  auto bad = [&](auto mutate) {
    RunConfig x = c;
    mutate(x);
    return code_of([&] { x.validate(); });
  };
  CHECK(bad([](RunConfig& x) { x.K = 150; }) == ErrorCode::UsageError);
  CHECK(bad([](RunConfig& x) { x.width = 7; }) == ErrorCode::UsageError);
  CHECK(bad([](RunConfig& x) { x.ids = 0; }) == ErrorCode::UsageError);
  CHECK(bad([](RunConfig& x) { x.per_id = 0; }) == ErrorCode::UsageError);
  CHECK(bad([](RunConfig& x) { x.mode = "middle"; }) == ErrorCode::UsageError);
  CHECK(bad([](RunConfig& x) { x.gamma = -1; }) == ErrorCode::UsageError);
  CHECK(bad([](RunConfig& x) { x.r = 3.0; }) == ErrorCode::UsageError);
  CHECK(bad([](RunConfig& x) { x.far = {0.0}; }) == ErrorCode::UsageError);
  CHECK(bad([](RunConfig& x) { x.wrinkle_min = 9; }) == ErrorCode::UsageError);
  CHECK(bad([](RunConfig& x) { x.beta_start = 0.5, x.beta_end = 0.1; }) == ErrorCode::UsageError);
}

TEST_CASE("resolved defaults and production preset") {
  RunConfig c;
  c.T = 100;
  const auto r = c.resolved();
  CHECK(r.K == 50);
  CHECK(*r.beta_start == doctest::Approx(1e-3));
  CHECK(*r.beta_end == doctest::Approx(0.2));
  const auto p = RunConfig::production();
  CHECK(p.T == 1000);
  CHECK(p.ids == 2000);
  CHECK(p.per_id == 20);
  CHECK(p.width == 128);
  CHECK(*p.resolved().beta_end == 0.02);
}

TEST_CASE("config round trips through TOML and JSON") {
  RunConfig c;
  c.annotations = "corpus with spaces.jsonl";
  c.gamma = 0.3;
  c.T = 40;
  c.K = 12;
  c.beta_start = 1.5e-3;
  c.mode = "first";
  c.seed = 9223372036854775807ull;
  c.r = 0.004;
  c.far = {1e-3, 0.25};
  c.baseline = false;
  c.out = "runs/x";
  c.lambda = 0.1;

  const auto dir = testutil::scratch_dir("config");
  {
    std::ofstream f(dir / "c.toml");
    f << to_toml(c);
  }
  // relative paths are resolved against the file's directory
  RunConfig expect = c;
  expect.annotations = (dir / c.annotations).string();
  CHECK(load_run_config(dir / "c.toml") == expect);

  CHECK(run_config_from_json(nlohmann::json::parse(to_json(c).dump())) == c);
  RunConfig unset;
  CHECK(run_config_from_json(to_json(unset)) == unset);
  CHECK_FALSE(to_json(unset).contains("K"));
}

TEST_CASE("config file errors") {
  const auto dir = testutil::scratch_dir("config_err");
  {
    std::ofstream f(dir / "bad.toml");
    f << "unknown_key = 3\n";
  }
  CHECK(code_of([&] { load_run_config(dir / "bad.toml"); }) == ErrorCode::UsageError);
  {
    std::ofstream f(dir / "seed.toml");
    f << "seed = 18446744073709551615\n";
  }
  CHECK(code_of([&] { load_run_config(dir / "seed.toml"); }) == ErrorCode::UsageError);
  CHECK(code_of([&] { load_run_config(dir / "missing.toml"); }) == ErrorCode::IoError);
}

TEST_CASE("worker count") {
  RunConfig c;
  c.threads = 3;
  CHECK(worker_count(c) == 3);
  c.threads = 0;
  ::setenv("CREASEFORGE_THREADS", "5", 1);
  CHECK(worker_count(c) == 5);
  ::unsetenv("CREASEFORGE_THREADS");
  CHECK(worker_count(c) >= 1);
}
