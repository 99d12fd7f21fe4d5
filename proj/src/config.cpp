#include "driftsim/config.hpp"

#include <climits>
#include <cstdio>
#include <fstream>
#include <functional>

#include "driftsim/path.hpp"
#include "driftsim/rng.hpp"

namespace driftsim {
namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double d) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", d);
  return buf;
}

double parse_double(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size() || v.empty()) {
    throw ConfigError("bad numeric value '" + v + "' for " + key);
  }
  return d;
}

long long parse_ll(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  long long n = 0;
  try {
    n = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size() || v.empty()) {
    throw ConfigError("bad integer value '" + v + "' for " + key);
  }
  return n;
}

int parse_int(const std::string& v, const std::string& key) {
  const long long n = parse_ll(v, key);
  if (n < INT_MIN || n > INT_MAX) {
    throw ConfigError("integer out of range for " + key);
  }
  return static_cast<int>(n);
}

std::uint64_t parse_u64(const std::string& v, const std::string& key) {
  std::size_t pos = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != v.size() || v.empty() || v[0] == '-') {
    throw ConfigError("bad unsigned value '" + v + "' for " + key);
  }
  return n;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("bad boolean value '" + v + "' for " + key +
                    " (want true/false)");
}

struct KeyDef {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Acc>
KeyDef dkey(std::string name, Acc acc) {
  return {name,
          [acc, name](RunConfig& c, const std::string& v) {
            acc(c) = parse_double(v, name);
          },
          [acc](const RunConfig& c) {
            return fmt_double(acc(const_cast<RunConfig&>(c)));
          }};
}

template <typename Acc>
KeyDef ikey(std::string name, Acc acc) {
  return {name,
          [acc, name](RunConfig& c, const std::string& v) {
            acc(c) = parse_int(v, name);
          },
          [acc](const RunConfig& c) {
            return std::to_string(acc(const_cast<RunConfig&>(c)));
          }};
}

template <typename Acc>
KeyDef llkey(std::string name, Acc acc) {
  return {name,
          [acc, name](RunConfig& c, const std::string& v) {
            acc(c) = parse_ll(v, name);
          },
          [acc](const RunConfig& c) {
            return std::to_string(acc(const_cast<RunConfig&>(c)));
          }};
}

template <typename Acc>
KeyDef u64key(std::string name, Acc acc) {
  return {name,
          [acc, name](RunConfig& c, const std::string& v) {
            acc(c) = parse_u64(v, name);
          },
          [acc](const RunConfig& c) {
            return std::to_string(acc(const_cast<RunConfig&>(c)));
          }};
}

template <typename Acc>
KeyDef bkey(std::string name, Acc acc) {
  return {name,
          [acc, name](RunConfig& c, const std::string& v) {
            acc(c) = parse_bool(v, name);
          },
          [acc](const RunConfig& c) {
            return acc(const_cast<RunConfig&>(c)) ? "true" : "false";
          }};
}

template <typename Acc>
KeyDef skey(std::string name, Acc acc) {
  return {name,
          [acc](RunConfig& c, const std::string& v) { acc(c) = v; },
          [acc](const RunConfig& c) {
            return acc(const_cast<RunConfig&>(c));
          }};
}

const char* drivetrain_name(Drivetrain d) {
  switch (d) {
    case Drivetrain::kIwd: return "iwd";
    case Drivetrain::kRwd: return "rwd";
    case Drivetrain::kAwd: return "awd";
  }
  return "iwd";
}

std::vector<KeyDef> build_defs() {
  std::vector<KeyDef> defs;
  defs.push_back(dkey("vehicle.mass",
                      [](RunConfig& c) -> double& { return c.vehicle.mass; }));
  defs.push_back(dkey("vehicle.inertia_z", [](RunConfig& c) -> double& {
    return c.vehicle.inertia_z;
  }));
  defs.push_back(
      dkey("vehicle.lf", [](RunConfig& c) -> double& { return c.vehicle.lf; }));
  defs.push_back(
      dkey("vehicle.lr", [](RunConfig& c) -> double& { return c.vehicle.lr; }));
  defs.push_back(dkey("vehicle.track", [](RunConfig& c) -> double& {
    return c.vehicle.track;
  }));
  defs.push_back(dkey("vehicle.wheel_radius", [](RunConfig& c) -> double& {
    return c.vehicle.wheel_radius;
  }));
  defs.push_back(dkey("vehicle.h_cg", [](RunConfig& c) -> double& {
    return c.vehicle.h_cg;
  }));
  defs.push_back(dkey("vehicle.delta_max", [](RunConfig& c) -> double& {
    return c.vehicle.delta_max;
  }));
  defs.push_back(dkey("vehicle.gravity", [](RunConfig& c) -> double& {
    return c.vehicle.gravity;
  }));
  defs.push_back(
      {"vehicle.drivetrain",
       [](RunConfig& c, const std::string& v) {
         if (v == "iwd") {
           c.vehicle.drivetrain = Drivetrain::kIwd;
         } else if (v == "rwd") {
           c.vehicle.drivetrain = Drivetrain::kRwd;
         } else if (v == "awd") {
           c.vehicle.drivetrain = Drivetrain::kAwd;
         } else {
           throw ConfigError("bad vehicle.drivetrain '" + v +
                             "' (want iwd|rwd|awd)");
         }
       },
       [](const RunConfig& c) {
         return std::string(drivetrain_name(c.vehicle.drivetrain));
       }});

  defs.push_back(
      dkey("tire.b", [](RunConfig& c) -> double& { return c.tire.b; }));
  defs.push_back(
      dkey("tire.c", [](RunConfig& c) -> double& { return c.tire.c; }));
  defs.push_back(
      dkey("tire.d", [](RunConfig& c) -> double& { return c.tire.d; }));

  defs.push_back(ikey("env.n_preview", [](RunConfig& c) -> int& {
    return c.env.n_preview;
  }));
  defs.push_back(dkey("env.preview_spacing", [](RunConfig& c) -> double& {
    return c.env.preview_spacing;
  }));
  defs.push_back(dkey("env.off_track_limit", [](RunConfig& c) -> double& {
    return c.env.off_track_limit;
  }));
  defs.push_back(ikey("env.max_steps", [](RunConfig& c) -> int& {
    return c.env.max_steps;
  }));
  defs.push_back(
      dkey("env.dt", [](RunConfig& c) -> double& { return c.env.dt; }));
  defs.push_back(dkey("env.v_cmd_min", [](RunConfig& c) -> double& {
    return c.env.v_cmd_min;
  }));
  defs.push_back(dkey("env.v_cmd_max", [](RunConfig& c) -> double& {
    return c.env.v_cmd_max;
  }));

  defs.push_back(dkey("reward.w_pos", [](RunConfig& c) -> double& {
    return c.env.weights.w_pos;
  }));
  defs.push_back(dkey("reward.w_dir", [](RunConfig& c) -> double& {
    return c.env.weights.w_dir;
  }));
  defs.push_back(dkey("reward.w_curv", [](RunConfig& c) -> double& {
    return c.env.weights.w_curv;
  }));
  defs.push_back(dkey("reward.w_drift", [](RunConfig& c) -> double& {
    return c.env.weights.w_drift;
  }));
  defs.push_back(dkey("reward.w_smooth", [](RunConfig& c) -> double& {
    return c.env.weights.w_smooth;
  }));
  defs.push_back(dkey("reward.w_slip", [](RunConfig& c) -> double& {
    return c.env.weights.w_slip;
  }));
  defs.push_back(dkey("reward.w_speed", [](RunConfig& c) -> double& {
    return c.env.weights.w_speed;
  }));
  defs.push_back(dkey("reward.w_prog", [](RunConfig& c) -> double& {
    return c.env.weights.w_prog;
  }));
  defs.push_back(dkey("reward.w_term", [](RunConfig& c) -> double& {
    return c.env.weights.w_term;
  }));

  defs.push_back(dkey("rand.sigma_pos", [](RunConfig& c) -> double& {
    return c.env.rand.sigma_pos;
  }));
  defs.push_back(dkey("rand.sigma_heading", [](RunConfig& c) -> double& {
    return c.env.rand.sigma_heading;
  }));
  defs.push_back(dkey("rand.r_init_min", [](RunConfig& c) -> double& {
    return c.env.rand.r_init_min;
  }));
  defs.push_back(dkey("rand.r_init_max", [](RunConfig& c) -> double& {
    return c.env.rand.r_init_max;
  }));
  defs.push_back(dkey("rand.beta_init_min", [](RunConfig& c) -> double& {
    return c.env.rand.beta_init_min;
  }));
  defs.push_back(dkey("rand.beta_init_max", [](RunConfig& c) -> double& {
    return c.env.rand.beta_init_max;
  }));
  defs.push_back(dkey("rand.v_init_min", [](RunConfig& c) -> double& {
    return c.env.rand.v_init_min;
  }));
  defs.push_back(dkey("rand.v_init_max", [](RunConfig& c) -> double& {
    return c.env.rand.v_init_max;
  }));
  defs.push_back(dkey("rand.b_min", [](RunConfig& c) -> double& {
    return c.env.rand.b_min;
  }));
  defs.push_back(dkey("rand.b_max", [](RunConfig& c) -> double& {
    return c.env.rand.b_max;
  }));
  defs.push_back(dkey("rand.c_min", [](RunConfig& c) -> double& {
    return c.env.rand.c_min;
  }));
  defs.push_back(dkey("rand.c_max", [](RunConfig& c) -> double& {
    return c.env.rand.c_max;
  }));
  defs.push_back(dkey("rand.d_min", [](RunConfig& c) -> double& {
    return c.env.rand.d_min;
  }));
  defs.push_back(dkey("rand.d_max", [](RunConfig& c) -> double& {
    return c.env.rand.d_max;
  }));
  defs.push_back(dkey("rand.ar_a", [](RunConfig& c) -> double& {
    return c.env.rand.ar_a;
  }));
  defs.push_back(dkey("rand.ar_w", [](RunConfig& c) -> double& {
    return c.env.rand.ar_w;
  }));
  defs.push_back(bkey("rand.init_state", [](RunConfig& c) -> bool& {
    return c.env.rand.randomize_init_state;
  }));
  defs.push_back(bkey("rand.tires", [](RunConfig& c) -> bool& {
    return c.env.rand.randomize_tires;
  }));
  defs.push_back(bkey("rand.disturbance", [](RunConfig& c) -> bool& {
    return c.env.rand.randomize_disturbance;
  }));
  defs.push_back(bkey("rand.trajectory", [](RunConfig& c) -> bool& {
    return c.env.rand.randomize_trajectory;
  }));

  defs.push_back(ikey("trainer.n_envs", [](RunConfig& c) -> int& {
    return c.trainer.n_envs;
  }));
  defs.push_back(ikey("trainer.rollout_length", [](RunConfig& c) -> int& {
    return c.trainer.rollout_length;
  }));
  defs.push_back(dkey("trainer.gamma", [](RunConfig& c) -> double& {
    return c.trainer.gamma;
  }));
  defs.push_back(dkey("trainer.gae_lambda", [](RunConfig& c) -> double& {
    return c.trainer.gae_lambda;
  }));
  defs.push_back(dkey("trainer.clip_eps", [](RunConfig& c) -> double& {
    return c.trainer.clip_eps;
  }));
  defs.push_back(
      dkey("trainer.lr", [](RunConfig& c) -> double& { return c.trainer.lr; }));
  defs.push_back(bkey("trainer.lr_decay", [](RunConfig& c) -> bool& {
    return c.trainer.lr_decay;
  }));
  defs.push_back(ikey("trainer.epochs_per_update", [](RunConfig& c) -> int& {
    return c.trainer.epochs_per_update;
  }));
  defs.push_back(ikey("trainer.minibatch_size", [](RunConfig& c) -> int& {
    return c.trainer.minibatch_size;
  }));
  defs.push_back(dkey("trainer.entropy_coef", [](RunConfig& c) -> double& {
    return c.trainer.entropy_coef;
  }));
  defs.push_back(dkey("trainer.value_coef", [](RunConfig& c) -> double& {
    return c.trainer.value_coef;
  }));
  defs.push_back(dkey("trainer.max_grad_norm", [](RunConfig& c) -> double& {
    return c.trainer.max_grad_norm;
  }));
  defs.push_back(llkey("trainer.total_env_steps",
                       [](RunConfig& c) -> long long& {
                         return c.trainer.total_env_steps;
                       }));

  defs.push_back({"track.kind",
                  [](RunConfig& c, const std::string& v) {
                    c.track.kind = parse_track_kind(v);
                  },
                  [](const RunConfig& c) {
                    return std::string(track_kind_name(c.track.kind));
                  }});
  defs.push_back(dkey("track.radius", [](RunConfig& c) -> double& {
    return c.track.radius;
  }));
  defs.push_back(ikey("track.direction", [](RunConfig& c) -> int& {
    return c.track.direction;
  }));
  defs.push_back(ikey("track.pool_size", [](RunConfig& c) -> int& {
    return c.track.pool_size;
  }));
  defs.push_back(skey("track.file", [](RunConfig& c) -> std::string& {
    return c.track.file;
  }));

  defs.push_back(ikey("eval.n_trials", [](RunConfig& c) -> int& {
    return c.eval.n_trials;
  }));
  defs.push_back(bkey("eval.stochastic", [](RunConfig& c) -> bool& {
    return c.eval.stochastic;
  }));
  defs.push_back(ikey("eval.max_steps", [](RunConfig& c) -> int& {
    return c.eval.max_steps;
  }));

  defs.push_back(skey("run.out_dir", [](RunConfig& c) -> std::string& {
    return c.out_dir;
  }));
  defs.push_back(u64key("run.seed", [](RunConfig& c) -> std::uint64_t& {
    return c.seed;
  }));
  defs.push_back(
      ikey("run.threads", [](RunConfig& c) -> int& { return c.threads; }));
  defs.push_back(ikey("run.checkpoint_every", [](RunConfig& c) -> int& {
    return c.checkpoint_every;
  }));
  defs.push_back(bkey("run.timing_in_curve", [](RunConfig& c) -> bool& {
    return c.timing_in_curve;
  }));
  return defs;
}

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = build_defs();
  return defs;
}

const KeyDef* find_key(const std::string& name) {
  for (const KeyDef& d : key_defs()) {
    if (d.name == name) return &d;
  }
  return nullptr;
}

}  // namespace

const char* track_kind_name(TrackKind k) {
  switch (k) {
    case TrackKind::kCircle: return "circle";
    case TrackKind::kEight: return "eight";
    case TrackKind::kVariable: return "variable";
    case TrackKind::kRings: return "rings";
    case TrackKind::kRandom: return "random";
    case TrackKind::kPool: return "pool";
    case TrackKind::kFile: return "file";
  }
  return "circle";
}

TrackKind parse_track_kind(const std::string& s) {
  if (s == "circle") return TrackKind::kCircle;
  if (s == "eight") return TrackKind::kEight;
  if (s == "variable") return TrackKind::kVariable;
  if (s == "rings") return TrackKind::kRings;
  if (s == "random") return TrackKind::kRandom;
  if (s == "pool") return TrackKind::kPool;
  if (s == "file") return TrackKind::kFile;
  throw ConfigError(
      "bad track kind '" + s +
      "' (want circle|eight|variable|rings|random|pool|file)");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const KeyDef& d : key_defs()) keys.push_back(d.name);
  return keys;
}

std::string dump_run_config(const RunConfig& cfg) {
  std::string out;
  for (const KeyDef& d : key_defs()) {
    out += d.name;
    out += " = ";
    out += d.get(cfg);
    out += '\n';
  }
  return out;
}

void apply_config_line(RunConfig& cfg, const std::string& raw,
                       const std::string& where) {
  const std::string line = trim(raw);
  if (line.empty() || line[0] == '#') return;
  const auto eq = line.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(where + ": expected 'section.key = value', got '" +
                      line + "'");
  }
  const std::string key = trim(line.substr(0, eq));
  const std::string value = trim(line.substr(eq + 1));
  const KeyDef* def = find_key(key);
  if (def == nullptr) {
    throw ConfigError(where + ": unknown config key '" + key + "'");
  }
  try {
    def->set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

RunConfig load_run_config(std::istream& is, const std::string& name) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    apply_config_line(cfg, line, name + ":" + std::to_string(line_no));
  }
  return cfg;
}

RunConfig load_run_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  return load_run_config(is, path);
}

std::vector<std::shared_ptr<const ReferencePath>> make_task_paths(
    const RunConfig& cfg, std::uint64_t master_seed) {
  using Ptr = std::shared_ptr<const ReferencePath>;
  auto one = [](ReferencePath p) {
    return std::vector<Ptr>{std::make_shared<const ReferencePath>(std::move(p))};
  };
  const TrackConfig& t = cfg.track;
  switch (t.kind) {
    case TrackKind::kCircle:
    case TrackKind::kEight:
    case TrackKind::kRings:
      if (!(t.radius > 0.0)) {
        throw ConfigError("track.radius must be positive");
      }
      break;
    default:
      break;
  }
  switch (t.kind) {
    case TrackKind::kCircle:
      return one(gen_circle(t.radius, t.direction >= 0 ? 1 : -1));
    case TrackKind::kEight:
      return one(gen_eight(t.radius));
    case TrackKind::kVariable:
      return one(gen_variable_curvature());
    case TrackKind::kRings:
      return one(gen_rings(t.radius));
    case TrackKind::kRandom:
      return one(
          gen_random_path(stream_seed(master_seed, stream_id::kPathPool)));
    case TrackKind::kPool:
      if (t.pool_size < 1) throw ConfigError("track.pool_size must be >= 1");
      return make_random_path_pool(master_seed, t.pool_size);
    case TrackKind::kFile: {
      if (t.file.empty()) {
        throw ConfigError("track.kind = file requires track.file");
      }
      std::ifstream is(t.file);
      if (!is) throw ConfigError("cannot open track file: " + t.file);
      try {
        return one(read_path_csv(is));
      } catch (const std::exception& e) {
        throw ConfigError("bad track file " + t.file + ": " + e.what());
      }
    }
  }
  throw ConfigError("unhandled track kind");
}

std::unique_ptr<DriftEnv> make_drift_env(const RunConfig& cfg,
                                         std::uint64_t master_seed,
                                         int n_envs) {
  if (n_envs <= 0) n_envs = cfg.trainer.n_envs;
  return std::make_unique<DriftEnv>(make_task_paths(cfg, master_seed), cfg.env,
                                    cfg.vehicle, master_seed, n_envs);
}

}  // namespace driftsim
