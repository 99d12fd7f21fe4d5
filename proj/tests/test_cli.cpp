#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "driftsim/io.hpp"

using namespace driftsim;
namespace fs = std::filesystem;

namespace {

const std::string kBinary = DRIFTSIM_CLI_PATH;

fs::path work_root() {
  static const fs::path root = [] {
    const auto dir = fs::temp_directory_path() / "driftsim_test_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }();
  return root;
}

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CmdResult run(const std::string& args) {
  static int serial = 0;
  const fs::path out = work_root() / ("stdout_" + std::to_string(serial));
  const fs::path err = work_root() / ("stderr_" + std::to_string(serial));
  ++serial;
  const std::string cmd = kBinary + " " + args + " > " + out.string() +
                          " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::string slurp_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string tiny_config() {
  static const std::string path = [] {
    const fs::path p = work_root() / "tiny.cfg";
    std::ofstream os(p);
    os << "trainer.n_envs = 16\n"
       << "trainer.rollout_length = 8\n"
       << "trainer.minibatch_size = 32\n"
       << "trainer.total_env_steps = 256\n"
       << "track.kind = circle\n"
       << "eval.n_trials = 2\n";
    return p.string();
  }();
  return path;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(is, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("gen-path writes the circle with the expected row count") {
  const fs::path dir = work_root() / "gen";
  const auto r = run("gen-path --kind circle --radius 1 --out " +
                     dir.string() + " --quiet");
  CHECK(r.exit_code == 0);
  // comment + header + round(2*pi/0.005) waypoints + duplicated closure row
  CHECK(line_count(dir / "path_circle.csv") == 1260);
}

TEST_CASE("gen-path rejects bad parameters with usage errors") {
  CHECK(run("gen-path --kind circle --radius 0").exit_code == 2);
  CHECK(run("gen-path --kind circle --radius -2").exit_code == 2);
  CHECK(run("gen-path --kind moebius").exit_code == 2);
  CHECK(run("gen-path").exit_code == 2);
  CHECK(run("").exit_code == 2);
}

TEST_CASE("random path generation is seed reproducible") {
  const fs::path a = work_root() / "rand_a.csv";
  const fs::path b = work_root() / "rand_b.csv";
  const fs::path c = work_root() / "rand_c.csv";
  CHECK(run("gen-path --kind random --seed 7 --file " + a.string() +
            " --quiet")
            .exit_code == 0);
  CHECK(run("gen-path --kind random --seed 7 --file " + b.string() +
            " --quiet")
            .exit_code == 0);
  CHECK(run("gen-path --kind random --seed 8 --file " + c.string() +
            " --quiet")
            .exit_code == 0);
  CHECK(slurp_file(a) == slurp_file(b));
  CHECK(slurp_file(a) != slurp_file(c));
}

TEST_CASE("train produces checkpoint, curve and verifying manifest") {
  const fs::path dir = work_root() / "train1";
  const auto r = run("train --config " + tiny_config() + " --seed 5 --out " +
                     dir.string() + " --quiet");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(dir / "checkpoint.bin"));
  CHECK(fs::exists(dir / "checkpoint.bin.json"));
  CHECK(fs::exists(dir / "curve.csv"));
  CHECK(fs::exists(dir / "config.txt"));
  std::string err;
  CHECK(verify_manifest(dir.string(), &err));
  CHECK(!fs::exists(dir / ".lock"));

  const PolicyNet net = load_checkpoint((dir / "checkpoint.bin").string());
  CHECK(net.obs_dim() == 56);
  CHECK(net.act_dim() == 5);
  const auto side = load_checkpoint_config((dir / "checkpoint.bin").string());
  REQUIRE(side.has_value());
  CHECK(side->total_env_steps == 256);
  CHECK(side->seed == 5);

  // 256 steps / (16 envs * 8 rollout) = 2 updates
  CHECK(line_count(dir / "curve.csv") == 3);
}

TEST_CASE("training runs are byte identical across repeats and threads") {
  const fs::path d1 = work_root() / "rep1";
  const fs::path d2 = work_root() / "rep2";
  const fs::path d3 = work_root() / "rep3";
  const std::string base = "train --config " + tiny_config() + " --seed 5 ";
  CHECK(run(base + "--out " + d1.string() + " --threads 1 --quiet")
            .exit_code == 0);
  CHECK(run(base + "--out " + d2.string() + " --threads 1 --quiet")
            .exit_code == 0);
  CHECK(run(base + "--out " + d3.string() + " --threads 2 --quiet")
            .exit_code == 0);
  CHECK(slurp_file(d1 / "curve.csv") == slurp_file(d2 / "curve.csv"));
  CHECK(slurp_file(d1 / "checkpoint.bin") == slurp_file(d2 / "checkpoint.bin"));
  CHECK(slurp_file(d1 / "curve.csv") == slurp_file(d3 / "curve.csv"));
  CHECK(slurp_file(d1 / "checkpoint.bin") == slurp_file(d3 / "checkpoint.bin"));

  const fs::path d4 = work_root() / "rep4";
  CHECK(run("train --config " + tiny_config() + " --seed 6 --out " +
            d4.string() + " --quiet")
            .exit_code == 0);
  CHECK(slurp_file(d1 / "checkpoint.bin") != slurp_file(d4 / "checkpoint.bin"));
}

TEST_CASE("zero-step training still writes a loadable initial checkpoint") {
  const fs::path dir = work_root() / "zero";
  const auto r = run("train --config " + tiny_config() +
                     " --steps 0 --seed 1 --out " + dir.string() + " --quiet");
  CHECK(r.exit_code == 0);
  CHECK_NOTHROW(load_checkpoint((dir / "checkpoint.bin").string()));
  std::string err;
  CHECK(verify_manifest(dir.string(), &err));
  CHECK(line_count(dir / "curve.csv") == 1);
}

TEST_CASE("eval emits report json, traces and plots") {
  const fs::path train_dir = work_root() / "train_for_eval";
  REQUIRE(run("train --config " + tiny_config() + " --seed 5 --out " +
              train_dir.string() + " --quiet")
              .exit_code == 0);
  const fs::path dir = work_root() / "eval1";
  const auto r = run("eval --config " + tiny_config() + " --seed 5 --out " +
                     dir.string() + " --checkpoint " +
                     (train_dir / "checkpoint.bin").string() + " --quiet");
  CHECK(r.exit_code == 0);
  const auto j = nlohmann::json::parse(slurp_file(dir / "report.json"));
  CHECK(j["n_trials"] == 2);
  CHECK(j["path_id"] == "circle");
  CHECK(j.contains("rmse_mean"));
  CHECK(j.contains("success_rate"));
  CHECK(fs::exists(dir / "trace_0.csv"));
  CHECK(fs::exists(dir / "trace_1.csv"));
  CHECK(fs::exists(dir / "phase/trial_0.csv"));
  CHECK(fs::exists(dir / "overlay.svg"));
  CHECK(fs::exists(dir / "phase.svg"));
  std::string err;
  CHECK(verify_manifest(dir.string(), &err));

  const fs::path dir2 = work_root() / "eval2";
  REQUIRE(run("eval --config " + tiny_config() + " --seed 5 --out " +
              dir2.string() + " --checkpoint " +
              (train_dir / "checkpoint.bin").string() + " --quiet")
              .exit_code == 0);
  CHECK(slurp_file(dir / "report.json") == slurp_file(dir2 / "report.json"));
  CHECK(slurp_file(dir / "trace_0.csv") == slurp_file(dir2 / "trace_0.csv"));
}

TEST_CASE("corrupted checkpoints and bad configs map to exit code 3") {
  const fs::path ck = work_root() / "corrupt.bin";
  {
    std::ofstream os(ck, std::ios::binary);
    os << "XXXXXXXXnot a checkpoint";
  }
  const auto r = run("eval --checkpoint " + ck.string() + " --out " +
                     (work_root() / "ev_bad").string() + " --quiet");
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("magic") != std::string::npos);

  const fs::path bad = work_root() / "bad.cfg";
  {
    std::ofstream os(bad);
    os << "trainer.bogus = 1\n";
  }
  CHECK(run("train --config " + bad.string() + " --out " +
            (work_root() / "bad_out").string())
            .exit_code == 3);
  CHECK(run("train --config " + (work_root() / "absent.cfg").string())
            .exit_code == 3);
}

TEST_CASE("concurrent runs on one out_dir are rejected") {
  const fs::path dir = work_root() / "locked";
  fs::create_directories(dir);
  {
    std::ofstream os(dir / ".lock");
    os << "12345\n";
  }
  const auto r = run("train --config " + tiny_config() + " --out " +
                     dir.string() + " --quiet");
  CHECK(r.exit_code == 4);
  CHECK(r.err.find("locked") != std::string::npos);
}

TEST_CASE("bench guards the zero-step case and reports a table") {
  const auto r0 = run("bench --steps 0");
  CHECK(r0.exit_code == 0);
  CHECK(r0.out.find("n/a") != std::string::npos);

  const auto r = run("bench --steps 2000 --quiet");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("instances") != std::string::npos);
  CHECK(r.out.find("8192") != std::string::npos);
  CHECK(r.out.find("hash (1024 instances): match") != std::string::npos);
}
