#include "creaseforge/cli.hpp"
#include "creaseforge/config.hpp"
#include "creaseforge/error.hpp"
#include "creaseforge/io.hpp"
#include "creaseforge/pipeline.hpp"

#include "test_util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <fstream>
#include <iterator>
#include <stdexcept>

using namespace creaseforge;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

RunConfig small_config(const fs::path& out) {
  RunConfig c;
  c.annotations = (fs::path(CREASEFORGE_DATA_DIR) / "demo_annotations.jsonl").string();
  c.ids = 5;
  c.per_id = 4;
  c.T = 20;
  c.seed = 7;
  c.r = 0.05;
  c.out = out.string();
  return c;
}

}  // namespace

TEST_CASE("toy embedding") {
  // A flat image has no gradients, so only the 16 intensity cells survive.
  CreaseImage flat(16, 16);
  std::fill(flat.pixels.begin(), flat.pixels.end(), std::uint8_t{255});
  const auto e = toy_embed(flat);
  REQUIRE(e.size() == kToyEmbedDim);
  for (int i = 0; i < 16; ++i) CHECK(e[i] == doctest::Approx(0.25).epsilon(1e-15));
  for (int i = 16; i < kToyEmbedDim; ++i) CHECK(e[i] == 0.0);

  CreaseImage img(32, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) img.at(x, y) = static_cast<std::uint8_t>((x * 7 + y * y) % 256);
  }
  CHECK(toy_embed(img).dot(toy_embed(img)) == doctest::Approx(1.0).epsilon(1e-14));
  CreaseImage inverse = img;
  for (auto& p : inverse.pixels) p = static_cast<std::uint8_t>(255 - p);
  CHECK(toy_embed(img).dot(toy_embed(inverse)) < 0.999);

  CHECK_THROWS_AS(toy_embed(CreaseImage(3, 3)), Error);
}

TEST_CASE("parallel_for covers every index once and propagates failures") {
  for (int workers : {1, 3, 16}) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i].fetch_add(1); });
    for (const auto& h : hits) CHECK(h.load() == 1);
  }
  CHECK_THROWS_AS(parallel_for(100, 4,
                               [](std::size_t i) {
                                 if (i == 37) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
  CHECK_NOTHROW(parallel_for(0, 4, [](std::size_t) { throw std::runtime_error("never"); }));
}

TEST_CASE("pipeline smoke run writes a complete, reproducible dataset") {
  const auto dir = testutil::scratch_dir("pipeline");
  auto config = small_config(dir / "a");
  config.threads = 1;
  const auto result = run_pipeline(config);

  int samples = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    if (entry.path().extension() == ".pgm") ++samples;
  }
  CHECK(samples == 20);
  CHECK(fs::exists(dir / "a" / "metrics.json"));
  CHECK(fs::exists(dir / "a" / "distribution.json"));

  const auto manifest = read_json(dir / "a" / "manifest.json");
  CHECK(manifest == result.manifest);
  CHECK(manifest["identities"].size() == 5);
  std::size_t listed = 0;
  for (const auto& rec : manifest["identities"]) {
    for (const auto& f : rec["files"]) {
      CHECK(fs::exists(dir / "a" / f.get<std::string>()));
      ++listed;
    }
  }
  // crease + 4 samples + 4 K=0 baseline samples per identity
  CHECK(listed == 45);
  CHECK(manifest["digest"]["files"] == listed);
  CHECK(run_config_from_json(manifest["config"]) == config);

  const auto metrics = read_json(dir / "a" / "metrics.json");
  CHECK(metrics.contains("baseline"));
  CHECK(metrics["K"] == 10);
  CHECK(*result.baseline->d_intra == doctest::Approx(1.0).epsilon(1e-12));

  // different out dir and thread count, same bytes
  auto again = config;
  again.out = (dir / "b").string();
  again.threads = 4;
  const auto second = run_pipeline(again);
  CHECK(second.digest == result.digest);
  for (const auto& rec : manifest["identities"]) {
    for (const auto& f : rec["files"]) {
      const auto rel = f.get<std::string>();
      CHECK(slurp(dir / "a" / rel) == slurp(dir / "b" / rel));
    }
  }
  CHECK(slurp(dir / "a" / "metrics.json") == slurp(dir / "b" / "metrics.json"));

  const auto reloaded = load_dataset(dir / "a");
  CHECK(reloaded.ids == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(reloaded.classes.front().size() == 4);
}

TEST_CASE("toy embedding separates identities from a shared-noise run") {
  const auto dir = testutil::scratch_dir("pipeline_sep");
  auto config = small_config(dir);
  config.ids = 8;
  config.per_id = 6;
  config.baseline = false;
  const auto result = run_pipeline(config);
  CHECK(result.report.genuine.mean > result.report.imposter.mean);
}

TEST_CASE("command-line exit codes") {
  const auto dir = testutil::scratch_dir("cli");
  CHECK(cli_dispatch({"creaseforge", "sample", "--K", "150", "--T", "100", "--creases", dir.string()}) == 1);
  CHECK(cli_dispatch({"creaseforge", "no-such-command"}) == 1);
  CHECK(cli_dispatch({"creaseforge"}) == 1);
  CHECK(cli_dispatch({"creaseforge", "metrics", "--dataset", (dir / "missing").string(), "--r", "0.1"}) == 2);
  CHECK(cli_dispatch({"creaseforge", "metrics", "--dataset", dir.string(), "--r", "5"}) == 1);
  CHECK(cli_dispatch({"creaseforge", "--help"}) == 0);

  const auto out = dir / "run";
  CHECK(cli_dispatch({"creaseforge", "pipeline", "--config", (fs::path(CREASEFORGE_DATA_DIR) / "demo.toml").string(),
                      "--ids", "3", "--per_id", "2", "--T", "10", "--K", "5", "--out", out.string()}) == 0);
  const auto manifest = read_json(out / "manifest.json");
  CHECK(manifest["sampler"]["K"] == 5);
  CHECK(manifest["identities"].size() == 3);
}
