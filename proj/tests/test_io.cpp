#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "driftsim/config.hpp"
#include "driftsim/io.hpp"
#include "driftsim/path.hpp"
#include "driftsim/rng.hpp"

using namespace driftsim;
namespace fs = std::filesystem;

namespace {

std::string test_dir() {
  const auto dir = fs::temp_directory_path() / "driftsim_test_io";
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
}

PolicyNet sample_net() {
  Eigen::VectorXd lo(3), hi(3);
  lo << -0.46, 1.0, -2.0;
  hi << 0.46, 7.0, 2.0;
  PolicyNet net(12, 3, lo, hi);
  Rng rng(31);
  net.init(rng);
  return net;
}

TrainerConfig sample_trainer() {
  TrainerConfig t;
  t.n_envs = 7;
  t.rollout_length = 5;
  t.gamma = 0.9;
  t.gae_lambda = 0.8;
  t.clip_eps = 0.3;
  t.lr = 1e-3;
  t.lr_decay = false;
  t.epochs_per_update = 2;
  t.minibatch_size = 11;
  t.entropy_coef = 0.01;
  t.value_coef = 0.7;
  t.max_grad_norm = 0.4;
  t.total_env_steps = 12345;
  t.seed = 99;
  return t;
}

}  // namespace

TEST_CASE("config dump lists every key and survives a round trip") {
  RunConfig cfg;
  cfg.vehicle.mass = 1.0 / 3.0;
  cfg.trainer.lr = 2.0 / 7.0;
  cfg.seed = (1ull << 63) + 5;
  cfg.vehicle.drivetrain = Drivetrain::kRwd;
  cfg.track.kind = TrackKind::kFile;
  cfg.track.file = "some dir/track.csv";
  cfg.env.rand.randomize_tires = false;
  cfg.timing_in_curve = true;

  const std::string text = dump_run_config(cfg);
  for (const std::string& key : config_keys()) {
    CHECK(text.find(key + " = ") != std::string::npos);
  }
  std::istringstream is(text);
  const RunConfig back = load_run_config(is, "roundtrip");
  CHECK(dump_run_config(back) == text);
  CHECK(back.vehicle.mass == cfg.vehicle.mass);
  CHECK(back.trainer.lr == cfg.trainer.lr);
  CHECK(back.seed == cfg.seed);
  CHECK(back.vehicle.drivetrain == Drivetrain::kRwd);
  CHECK(back.track.kind == TrackKind::kFile);
  CHECK(back.track.file == "some dir/track.csv");
  CHECK(back.env.rand.randomize_tires == false);
  CHECK(back.timing_in_curve == true);
}

TEST_CASE("config lines tolerate whitespace and comments") {
  RunConfig cfg;
  apply_config_line(cfg, "   trainer.gamma =  0.5   ", "t:1");
  CHECK(cfg.trainer.gamma == 0.5);
  apply_config_line(cfg, "# a comment", "t:2");
  apply_config_line(cfg, "", "t:3");
  apply_config_line(cfg, "rand.tires = false", "t:4");
  CHECK(cfg.env.rand.randomize_tires == false);
  apply_config_line(cfg, "rand.tires = 1", "t:5");
  CHECK(cfg.env.rand.randomize_tires == true);
}

TEST_CASE("malformed config input is rejected with location info") {
  RunConfig cfg;
  CHECK_THROWS_AS(apply_config_line(cfg, "no equals sign here", "f:3"),
                  ConfigError);
  CHECK_THROWS_AS(apply_config_line(cfg, "bogus.key = 1", "f:4"),
                  ConfigError);
  CHECK_THROWS_AS(apply_config_line(cfg, "trainer.gamma = fast", "f:5"),
                  ConfigError);
  CHECK_THROWS_AS(apply_config_line(cfg, "trainer.n_envs = 1.5", "f:6"),
                  ConfigError);
  CHECK_THROWS_AS(apply_config_line(cfg, "rand.tires = maybe", "f:7"),
                  ConfigError);
  CHECK_THROWS_AS(apply_config_line(cfg, "run.seed = -1", "f:8"), ConfigError);
  try {
    apply_config_line(cfg, "bogus.key = 1", "file.cfg:12");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("file.cfg:12") != std::string::npos);
    CHECK(std::string(e.what()).find("bogus.key") != std::string::npos);
  }
}

TEST_CASE("track kinds round trip through their names") {
  for (TrackKind k :
       {TrackKind::kCircle, TrackKind::kEight, TrackKind::kVariable,
        TrackKind::kRings, TrackKind::kRandom, TrackKind::kPool,
        TrackKind::kFile}) {
    CHECK(parse_track_kind(track_kind_name(k)) == k);
  }
  CHECK_THROWS_AS(parse_track_kind("oval"), ConfigError);
}

TEST_CASE("task paths cover every kind") {
  RunConfig cfg;
  cfg.track.kind = TrackKind::kCircle;
  auto circle = make_task_paths(cfg, 4);
  REQUIRE(circle.size() == 1);
  CHECK(circle[0]->closed);

  cfg.track.kind = TrackKind::kEight;
  CHECK(make_task_paths(cfg, 4)[0]->closed);
  cfg.track.kind = TrackKind::kVariable;
  CHECK(!make_task_paths(cfg, 4)[0]->closed);
  cfg.track.kind = TrackKind::kRings;
  CHECK(!make_task_paths(cfg, 4)[0]->closed);

  cfg.track.kind = TrackKind::kRandom;
  auto r1 = make_task_paths(cfg, 4);
  auto r2 = make_task_paths(cfg, 4);
  REQUIRE(r1.size() == 1);
  CHECK(r1[0]->waypoints.size() == r2[0]->waypoints.size());

  cfg.track.kind = TrackKind::kPool;
  cfg.track.pool_size = 5;
  CHECK(make_task_paths(cfg, 4).size() == 5);

  cfg.track.kind = TrackKind::kCircle;
  cfg.track.radius = 0.0;
  CHECK_THROWS_AS(make_task_paths(cfg, 4), ConfigError);
}

TEST_CASE("file tracks reproduce the generated waypoints exactly") {
  const std::string dir = test_dir();
  const ReferencePath path = gen_eight(1.0);
  const std::string file = dir + "/eight.csv";
  {
    std::ofstream os(file);
    write_path_csv(path, os);
  }
  RunConfig cfg;
  cfg.track.kind = TrackKind::kFile;
  cfg.track.file = file;
  const auto back = make_task_paths(cfg, 0);
  REQUIRE(back.size() == 1);
  REQUIRE(back[0]->waypoints.size() == path.waypoints.size());
  CHECK(back[0]->closed == path.closed);
  CHECK(back[0]->total_length == path.total_length);
  for (std::size_t i = 0; i < path.waypoints.size(); i += 97) {
    CHECK(back[0]->waypoints[i].x == path.waypoints[i].x);
    CHECK(back[0]->waypoints[i].kappa == path.waypoints[i].kappa);
    CHECK(back[0]->waypoints[i].beta_ref == path.waypoints[i].beta_ref);
  }

  cfg.track.file = dir + "/missing.csv";
  CHECK_THROWS_AS(make_task_paths(cfg, 0), ConfigError);
  cfg.track.file.clear();
  CHECK_THROWS_AS(make_task_paths(cfg, 0), ConfigError);
}

TEST_CASE("drift env factory honors trainer env count") {
  RunConfig cfg;
  cfg.trainer.n_envs = 6;
  auto env = make_drift_env(cfg, 3);
  CHECK(env->num_envs() == 6);
  CHECK(env->obs_dim() == observation_dim(cfg.env));
  auto env2 = make_drift_env(cfg, 3, 2);
  CHECK(env2->num_envs() == 2);
}

TEST_CASE("fnv1a64 matches the published test vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ull);
}

TEST_CASE("atomic writes land complete and leave no temp files") {
  const std::string dir = test_dir();
  const std::string file = dir + "/x.txt";
  atomic_write_file(file, "hello");
  CHECK(slurp(file) == "hello");
  atomic_write_file(file, "replaced");
  CHECK(slurp(file) == "replaced");
  CHECK(!fs::exists(file + ".tmp"));
}

TEST_CASE("checkpoints round trip bitwise with their trainer sidecar") {
  const std::string dir = test_dir();
  const std::string file = dir + "/ck.bin";
  const PolicyNet net = sample_net();
  const TrainerConfig tcfg = sample_trainer();
  save_checkpoint(net, tcfg, file);
  CHECK(fs::exists(file + ".json"));

  const PolicyNet back = load_checkpoint(file);
  CHECK(back.obs_dim() == net.obs_dim());
  CHECK(back.act_dim() == net.act_dim());
  CHECK(back.action_low() == net.action_low());
  CHECK(back.action_high() == net.action_high());
  REQUIRE(back.params.size() == net.params.size());
  CHECK(back.params == net.params);

  const auto side = load_checkpoint_config(file);
  REQUIRE(side.has_value());
  CHECK(side->n_envs == tcfg.n_envs);
  CHECK(side->rollout_length == tcfg.rollout_length);
  CHECK(side->gamma == tcfg.gamma);
  CHECK(side->gae_lambda == tcfg.gae_lambda);
  CHECK(side->clip_eps == tcfg.clip_eps);
  CHECK(side->lr == tcfg.lr);
  CHECK(side->lr_decay == tcfg.lr_decay);
  CHECK(side->epochs_per_update == tcfg.epochs_per_update);
  CHECK(side->minibatch_size == tcfg.minibatch_size);
  CHECK(side->entropy_coef == tcfg.entropy_coef);
  CHECK(side->value_coef == tcfg.value_coef);
  CHECK(side->max_grad_norm == tcfg.max_grad_norm);
  CHECK(side->total_env_steps == tcfg.total_env_steps);
  CHECK(side->seed == tcfg.seed);

  CHECK(!load_checkpoint_config(dir + "/absent.bin").has_value());
}

TEST_CASE("corrupt checkpoints are rejected, not loaded") {
  const std::string dir = test_dir();
  const std::string file = dir + "/ck.bin";
  save_checkpoint(sample_net(), sample_trainer(), file);
  const std::string good = slurp(file);

  std::string bad = good;
  bad[0] = 'X';
  spit(file, bad);
  CHECK_THROWS_AS(load_checkpoint(file), FormatError);

  bad = good;
  bad[8] = 9;  // version field
  spit(file, bad);
  CHECK_THROWS_AS(load_checkpoint(file), FormatError);

  spit(file, good.substr(0, good.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(file), FormatError);

  spit(file, good + "junk");
  CHECK_THROWS_AS(load_checkpoint(file), FormatError);

  bad = good;
  bad[20] = 7;  // hidden layer count
  spit(file, bad);
  CHECK_THROWS_AS(load_checkpoint(file), FormatError);

  spit(file, good);
  CHECK_NOTHROW(load_checkpoint(file));
  CHECK_THROWS_AS(load_checkpoint(dir + "/absent.bin"), FormatError);
}

TEST_CASE("curve csv emits the documented columns") {
  std::vector<CurveRow> rows(2);
  rows[0].update = 1;
  rows[0].env_steps = 2048;
  rows[0].mean_return = -1.5;
  rows[0].mean_abs_beta = 0.25;
  rows[0].rmse_proxy = 0.125;
  rows[0].steps_per_sec = 0.0;
  rows[1].update = 2;
  rows[1].env_steps = 4096;
  rows[1].mean_return = -0.75;
  rows[1].mean_abs_beta = 0.5;
  rows[1].rmse_proxy = 0.0625;
  rows[1].steps_per_sec = 0.0;
  std::ostringstream ss;
  write_curve_csv(rows, ss);
  CHECK(ss.str() ==
        "update,env_steps,mean_return,mean_abs_beta,rmse_proxy,steps_per_sec\n"
        "1,2048,-1.5,0.25,0.125,0\n"
        "2,4096,-0.75,0.5,0.0625,0\n");
}

TEST_CASE("state trace rows carry all fifteen columns") {
  std::ostringstream ss;
  write_state_trace_header(ss);
  VehicleState s;
  s.xdot = 2.0;
  s.psidot = 1.5;
  ControlInput u;
  u.delta = 0.1;
  u.omega = {10, 20, 30, 40};
  write_state_trace_row(ss, 0.01, s, u);
  std::istringstream is(ss.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header ==
        "t,x,y,psi,xdot,ydot,psidot,delta,omega_fl,omega_fr,omega_rl,"
        "omega_rr,beta,V,r");
  CHECK(std::count(row.begin(), row.end(), ',') == 14);
  CHECK(row.substr(0, 5) == "0.01,");
}

TEST_CASE("json summaries parse back with the same content") {
  EpisodeSummary s;
  s.instance = 3;
  s.path_index = 1;
  s.reason = Termination::kOffTrack;
  s.steps = 120;
  s.ep_return = -4.5;
  s.mean_abs_beta = 0.7;
  s.rmse_epos = 0.21;
  s.progress_s = 2.5;
  const auto j = nlohmann::json::parse(episode_summary_json(s));
  CHECK(j["instance"] == 3);
  CHECK(j["reason"] == "off_track");
  CHECK(j["steps"] == 120);
  CHECK(j["return"] == -4.5);
  CHECK(j["progress_s"] == 2.5);

  EvalReport r;
  r.path_id = "eight";
  r.n_trials = 6;
  r.rmse_mean = 0.138;
  r.rmse_std = 0.001;
  r.mean_abs_beta = 0.82;
  r.mean_v = 1.9;
  r.success_rate = 1.0;
  r.equilibrium = Equilibrium{1.85, -0.85, 1.84};
  const auto jr = nlohmann::json::parse(eval_report_json(r));
  CHECK(jr["path_id"] == "eight");
  CHECK(jr["n_trials"] == 6);
  CHECK(jr["rmse_mean"] == 0.138);
  CHECK(jr["equilibrium"]["beta"] == -0.85);
  r.equilibrium.reset();
  const auto jn = nlohmann::json::parse(eval_report_json(r));
  CHECK(jn["equilibrium"].is_null());
}

TEST_CASE("manifest hashes verify and catch tampering") {
  const std::string dir = test_dir();
  spit(dir + "/a.csv", "1,2,3\n");
  spit(dir + "/b.txt", "content\n");
  RunConfig cfg;
  cfg.seed = 17;
  write_manifest(dir, cfg, {"a.csv", "b.txt"}, "2026-01-01T00:00:00Z",
                 "2026-01-01T00:01:00Z");
  std::string err;
  CHECK(verify_manifest(dir, &err));

  const auto j = nlohmann::json::parse(slurp(dir + "/manifest.json"));
  CHECK(j["tool_version"] == kToolVersion);
  CHECK(j["seed"] == 17);
  CHECK(j["files"].size() == 2);
  CHECK(j["config"].size() == config_keys().size());

  spit(dir + "/a.csv", "1,2,3,tampered\n");
  CHECK(!verify_manifest(dir, &err));
  CHECK(err.find("a.csv") != std::string::npos);

  fs::remove(dir + "/a.csv");
  CHECK(!verify_manifest(dir, &err));
  CHECK(err.find("missing") != std::string::npos);
}

TEST_CASE("run locks are exclusive and released on destruction") {
  const std::string dir = test_dir();
  {
    RunLock lock(dir);
    CHECK(fs::exists(dir + "/.lock"));
    CHECK_THROWS_AS(RunLock{dir}, std::runtime_error);
  }
  CHECK(!fs::exists(dir + "/.lock"));
  CHECK_NOTHROW(RunLock{dir});
}

TEST_CASE("svg plots are well formed for normal and empty inputs") {
  const ReferencePath path = gen_circle(1.0);
  std::vector<TrialTrace> traces(2);
  for (int i = 0; i < 50; ++i) {
    TraceSample s;
    s.x = 0.02 * i;
    s.y = 0.01 * i;
    s.beta = -0.5 - 0.001 * i;
    s.r = 1.5 + 0.002 * i;
    traces[0].samples.push_back(s);
    s.y = -0.01 * i;
    traces[1].samples.push_back(s);
  }
  std::ostringstream overlay;
  write_overlay_svg(path, traces, overlay);
  const std::string ov = overlay.str();
  CHECK(ov.rfind("<svg", 0) == 0);
  CHECK(ov.find("</svg>") != std::string::npos);
  // one polyline for the path plus one per trial
  std::size_t n = 0;
  for (std::size_t p = ov.find("<polyline"); p != std::string::npos;
       p = ov.find("<polyline", p + 1)) {
    ++n;
  }
  CHECK(n == 3);

  std::ostringstream phase;
  write_phase_svg(traces, phase);
  CHECK(phase.str().rfind("<svg", 0) == 0);
  CHECK(phase.str().find("beta [rad]") != std::string::npos);

  std::ostringstream empty;
  write_phase_svg({}, empty);
  CHECK(empty.str().find("</svg>") != std::string::npos);
}

TEST_CASE("timestamps are utc and iso formatted") {
  const std::string t = utc_timestamp();
  REQUIRE(t.size() == 20);
  CHECK(t[4] == '-');
  CHECK(t[10] == 'T');
  CHECK(t[19] == 'Z');
}
