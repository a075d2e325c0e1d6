#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "pathopaint/config.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/manifest.hpp"
#include "pathopaint/pipeline.hpp"
#include "test_util.hpp"

using namespace pathopaint;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct CliResult {
  int code = -1;
  std::string output;
};

CliResult cli(const std::string& args, const fs::path& scratch, const std::string& env = "") {
  const auto log = scratch / "cli.log";
  const std::string cmd = env + " " + PATHOPAINT_CLI + std::string(" ") + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

/// Env-var guard so a developer's PATHOPAINT_CACHE never leaks into these runs.
struct NoCache {
  NoCache() { unsetenv("PATHOPAINT_CACHE"); }
};

}  // namespace

TEST_SUITE("integration") {
  TEST_CASE("killed diffusion stage resumes to the uninterrupted report") {
    NoCache guard;
    const auto config = preset_config("tiny");
    testutil::TempDir clean("clean"), killed("killed");
    const auto reference = run_pipeline(config, clean.path);

    PipelineOptions faulty;
    faulty.fail_diffusion_after = 10;
    Pipeline first(config, killed.path, faulty);
    try {
      first.run();
      FAIL("fault injection did not fire");
    } catch (const StageError& e) {
      CHECK(e.stage() == "diffusion");
    }
    CHECK(fs::exists(killed.path / "stages" / "diffusion.failed"));
    CHECK(fs::exists(killed.path / "checkpoints" / "denoiser.partial.ppdm"));
    CHECK(first.stage_done("bank"));
    CHECK_FALSE(first.stage_done("diffusion"));
    CHECK_FALSE(fs::exists(killed.path / "checkpoints" / "denoiser.ppdm"));

    const auto resumed = run_pipeline(config, killed.path);
    CHECK(resumed.to_json() == reference.to_json());
    CHECK(slurp(killed.path / "report.json") == slurp(clean.path / "report.json"));
    CHECK(slurp(killed.path / "checkpoints" / "denoiser.ppdm") == slurp(clean.path / "checkpoints" / "denoiser.ppdm"));
    CHECK_FALSE(fs::exists(killed.path / "stages" / "diffusion.failed"));
    CHECK_FALSE(fs::exists(killed.path / "checkpoints" / "denoiser.partial.ppdm"));
  }

  TEST_CASE("rerun with a finished workspace skips to the same report") {
    NoCache guard;
    const auto config = preset_config("tiny");
    testutil::TempDir dir("rerun");
    const auto a = run_pipeline(config, dir.path);
    const auto stamp = fs::last_write_time(dir.path / "checkpoints" / "denoiser.ppdm");
    const auto b = run_pipeline(config, dir.path);
    CHECK(a.to_json() == b.to_json());
    CHECK(fs::last_write_time(dir.path / "checkpoints" / "denoiser.ppdm") == stamp);
  }

  TEST_CASE("generation ratio 0 makes baseline and augmented identical") {
    NoCache guard;
    auto config = preset_config("tiny");
    config.generation.ratio = 0.0;
    testutil::TempDir dir("ratio0");
    const auto r = run_pipeline(config, dir.path);
    CHECK(r.synthetic_pairs == 0);
    CHECK(r.baseline.per_sample_iou == r.augmented.per_sample_iou);
    CHECK(r.baseline.mean_iou == r.augmented.mean_iou);
    CHECK(r.baseline.variance == r.augmented.variance);
  }

  TEST_CASE("report carries the metrics layout and the caveat") {
    NoCache guard;
    testutil::TempDir dir("report");
    run_pipeline(preset_config("tiny"), dir.path);
    const auto j = nlohmann::json::parse(slurp(dir.path / "report.json"));
    for (const char* arm : {"baseline", "augmented"}) {
      CHECK(j.at(arm).contains("mean_iou"));
      CHECK(j.at(arm).contains("variance"));
      CHECK(j.at(arm).at("per_sample").is_array());
    }
    const auto text = slurp(dir.path / "report.txt");
    CHECK(text.find("None") != std::string::npos);
    CHECK(text.find(non_reproducibility_caveat()) != std::string::npos);
    CHECK(PipelineReport::from_json(j).to_json() == j);
  }

  TEST_CASE("PATHOPAINT_CACHE redirects checkpoints") {
    testutil::TempDir out("cache-out"), cache("cache");
    setenv("PATHOPAINT_CACHE", cache.path.c_str(), 1);
    Pipeline p(preset_config("tiny"), out.path);
    p.corpus();
    p.codec();
    unsetenv("PATHOPAINT_CACHE");
    CHECK(fs::exists(cache.path / "codec.ppvc"));
    CHECK_FALSE(fs::exists(out.path / "checkpoints" / "codec.ppvc"));
  }

  TEST_CASE("stage order is enforced with a named failure") {
    NoCache guard;
    testutil::TempDir dir("order");
    Pipeline p(preset_config("tiny"), dir.path);
    try {
      p.diffusion();
      FAIL("diffusion ran without a codec");
    } catch (const StageError& e) {
      CHECK(e.stage() == "diffusion");
    }
  }

  TEST_CASE("cli: stage-by-stage run, audit and metrics") {
    testutil::TempDir dir("cli");
    const auto out = (dir.path / "ws").string();
    const std::string g = "-q --preset tiny --seed 3 --out " + out + " ";
    const std::string env = "env -u PATHOPAINT_CACHE";
    for (const char* stage : {"corpus", "codec", "extractor", "bank build", "bank cluster", "diffusion", "generate",
                              "filter", "seg train"}) {
      const auto r = cli(g + stage, dir.path, env);
      CHECK_MESSAGE(r.code == 0, stage, ": ", r.output);
    }
    auto r = cli(g + "audit", dir.path, env);
    CHECK(r.code == 0);
    CHECK(r.output.find("orphan") == std::string::npos);

    const auto metrics = dir.path / "m.json";
    r = cli(g + "seg eval --ckpt " + out + "/checkpoints/segmenter_augmented.ppsg --metrics " + metrics.string(),
            dir.path, env);
    CHECK(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(metrics));
    CHECK(j.at("per_sample").size() == 6);

    std::ofstream(fs::path(out) / "synthetic" / "images" / "stray.png") << "x";
    r = cli(g + "audit", dir.path, env);
    CHECK(r.code != 0);
    CHECK(r.output.find("stray.png") != std::string::npos);

    r = cli(g + "bank inspect", dir.path, env);
    CHECK(r.code == 0);
  }

  TEST_CASE("cli: failures exit nonzero and name the stage") {
    testutil::TempDir dir("cli-fail");
    const std::string env = "env -u PATHOPAINT_CACHE";
    const std::string g = "-q --preset tiny --out " + (dir.path / "ws").string() + " ";
    auto r = cli(g + "diffusion", dir.path, env);
    CHECK(r.code != 0);
    CHECK(r.output.find("stage 'diffusion'") != std::string::npos);

    r = cli(g + "generate", dir.path, env);
    CHECK(r.code != 0);
    CHECK(r.output.find("stage 'generate'") != std::string::npos);

    std::ofstream(dir.path / "bad.yaml") << "bank:\n  clusters: 3\n";
    r = cli("--config " + (dir.path / "bad.yaml").string() + " --out " + (dir.path / "ws").string() + " corpus",
            dir.path, env);
    CHECK(r.code != 0);
    CHECK(r.output.find("corpus") != std::string::npos);

    r = cli(g + "corpus", dir.path, env);
    CHECK(r.code == 0);
    r = cli(g + "diffusion --fail-after 3", dir.path, env);
    CHECK(r.code != 0);
  }

  TEST_CASE("cli: config file, print-config and cache env") {
    testutil::TempDir dir("cli-cfg"), cache("cli-cache");
    std::ofstream(dir.path / "c.yaml") << "preset: tiny\nseed: 9\nbank:\n  k: 2\n";
    auto r = cli("--config " + (dir.path / "c.yaml").string() + " --print-config corpus", dir.path);
    CHECK(r.code == 0);
    const auto cfg = parse_config(r.output);
    CHECK(cfg.seed == 9);
    CHECK(cfg.bank.k == 2);

    const std::string g = "-q --config " + (dir.path / "c.yaml").string() + " --out " + (dir.path / "ws").string() + " ";
    const std::string env = "PATHOPAINT_CACHE=" + cache.path.string();
    CHECK(cli(g + "corpus", dir.path, env).code == 0);
    CHECK(cli(g + "codec", dir.path, env).code == 0);
    CHECK(fs::exists(cache.path / "codec.ppvc"));
  }
}
