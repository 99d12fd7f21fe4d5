#include "driftsim/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace driftsim {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

}  // namespace

std::optional<Equilibrium> detect_equilibrium(const std::vector<double>& r,
                                              const std::vector<double>& beta,
                                              const std::vector<double>& v,
                                              double dt, double window_s,
                                              double rel_tol) {
  const std::size_t window =
      static_cast<std::size_t>(std::llround(window_s / dt));
  if (window < 2 || r.size() <= window || beta.size() != r.size() ||
      v.size() != r.size()) {
    return std::nullopt;
  }
  const auto tail_stats = [&](const std::vector<double>& series) {
    std::vector<double> tail(series.end() - static_cast<std::ptrdiff_t>(window),
                             series.end());
    return std::pair<double, double>(mean_of(tail), std_of(tail));
  };
  const auto [mr, sr] = tail_stats(r);
  const auto [mb, sb] = tail_stats(beta);
  const auto [mv, sv] = tail_stats(v);
  if (sr < rel_tol * std::abs(mr) && sb < rel_tol * std::abs(mb) &&
      sv < rel_tol * std::abs(mv)) {
    return Equilibrium{mr, mb, mv};
  }
  return std::nullopt;
}

std::optional<Equilibrium> detect_equilibrium(const TrialTrace& trace,
                                              double dt, double window_s,
                                              double rel_tol) {
  std::vector<double> r, beta, v;
  r.reserve(trace.samples.size());
  beta.reserve(trace.samples.size());
  v.reserve(trace.samples.size());
  for (const TraceSample& s : trace.samples) {
    r.push_back(s.r);
    beta.push_back(s.beta);
    v.push_back(s.v);
  }
  return detect_equilibrium(r, beta, v, dt, window_s, rel_tol);
}

EvalReport summarize_trials(const std::vector<TrialTrace>& traces,
                            const std::string& path_id, double dt) {
  EvalReport rep;
  rep.path_id = path_id;
  rep.n_trials = static_cast<int>(traces.size());
  if (traces.empty()) return rep;

  std::vector<double> rmse, beta, vel;
  int successes = 0;
  for (const TrialTrace& t : traces) {
    rmse.push_back(t.rmse);
    beta.push_back(t.mean_abs_beta);
    vel.push_back(t.mean_v);
    if (t.success) ++successes;
  }
  rep.rmse_mean = mean_of(rmse);
  rep.rmse_std = std_of(rmse);
  rep.mean_abs_beta = mean_of(beta);
  rep.mean_v = mean_of(vel);
  rep.success_rate =
      static_cast<double>(successes) / static_cast<double>(traces.size());
  for (const TrialTrace& t : traces) {
    if (auto eq = detect_equilibrium(t, dt)) {
      rep.equilibrium = eq;
      break;
    }
  }
  return rep;
}

EvalResult rollout_eval(const PolicyNet& policy,
                        std::shared_ptr<const ReferencePath> path,
                        int n_trials, std::uint64_t seed,
                        const EvalOptions& opt) {
  EvalResult out;
  out.report.path_id = opt.path_id;
  if (n_trials <= 0) return out;

  EnvConfig cfg = opt.env;
  cfg.auto_reset = false;
  if (opt.max_steps_override > 0) {
    cfg.max_steps = opt.max_steps_override;
  } else {
    // Enough steps to cover the whole path at a conservative 1 m/s.
    const int needed =
        static_cast<int>(std::ceil(1.2 * path->total_length / cfg.dt));
    cfg.max_steps = std::max(cfg.max_steps, needed);
  }

  const std::uint64_t env_master = stream_seed(seed, stream_id::kEvalTrial);
  DriftEnv env({std::move(path)}, cfg, opt.vehicle, env_master, n_trials);
  const ReferencePath& ref = env.path_of(0);

  Eigen::MatrixXd obs(env.obs_dim(), n_trials);
  env.reset_all(obs);

  out.traces.assign(static_cast<std::size_t>(n_trials), TrialTrace{});
  std::vector<std::uint8_t> active(static_cast<std::size_t>(n_trials), 1);
  int n_active = n_trials;
  for (int i = 0; i < n_trials; ++i) {
    TrialTrace& tr = out.traces[static_cast<std::size_t>(i)];
    tr.required_s = ref.closed ? ref.total_length
                               : ref.total_length - env.errors(i).s_proj;
    const VehicleState& s = env.state(i);
    tr.samples.push_back({0.0, s.x, s.y, s.psi, s.psidot, s.sideslip(),
                          s.speed(), env.errors(i).e_pos,
                          env.errors(i).s_proj, 0.0});
  }

  Rng noise = Rng::stream(env_master, 1);  // stochastic mode only
  PolicyNet::Forward fwd;
  Eigen::MatrixXd actions;
  Eigen::VectorXd rewards(n_trials);
  std::vector<std::uint8_t> dones;
  int step = 0;
  while (n_active > 0 && step < cfg.max_steps) {
    ++step;
    policy.forward(obs, fwd);
    if (opt.stochastic) {
      Eigen::MatrixXd u;
      policy.sample_pre_squash(fwd.mean(), noise, u);
      actions = policy.squash(u);
    } else {
      actions = policy.squash(fwd.mean());
    }
    env.step(actions, obs, rewards, dones);
    for (int i = 0; i < n_trials; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      TrialTrace& tr = out.traces[static_cast<std::size_t>(i)];
      const VehicleState& s = env.state(i);
      tr.samples.push_back({step * cfg.dt, s.x, s.y, s.psi, s.psidot,
                            s.sideslip(), s.speed(), env.errors(i).e_pos,
                            env.errors(i).s_proj,
                            env.prev_action(i).delta});
      tr.progress_s = env.status(i).progress_s;
      if (tr.progress_s >= tr.required_s - 1e-9) {
        tr.success = true;
        tr.end = env.status(i).terminated;
        active[static_cast<std::size_t>(i)] = 0;
        --n_active;
      } else if (env.status(i).terminated != Termination::kRunning) {
        tr.end = env.status(i).terminated;
        active[static_cast<std::size_t>(i)] = 0;
        --n_active;
      }
    }
  }

  for (TrialTrace& tr : out.traces) {
    double sq = 0.0, ab = 0.0, vs = 0.0;
    const std::size_t n = tr.samples.size() > 1 ? tr.samples.size() - 1 : 0;
    for (std::size_t k = 1; k < tr.samples.size(); ++k) {
      sq += tr.samples[k].e_pos * tr.samples[k].e_pos;
      ab += std::abs(tr.samples[k].beta);
      vs += tr.samples[k].v;
    }
    if (n > 0) {
      tr.rmse = std::sqrt(sq / static_cast<double>(n));
      tr.mean_abs_beta = ab / static_cast<double>(n);
      tr.mean_v = vs / static_cast<double>(n);
    }
  }

  const std::string path_id = out.report.path_id;
  out.report = summarize_trials(out.traces, path_id, cfg.dt);
  return out;
}

std::vector<std::string> phase_plane_export(
    const std::vector<TrialTrace>& traces, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const std::string file =
        (std::filesystem::path(dir) / ("trial_" + std::to_string(i) + ".csv"))
            .string();
    std::ofstream os(file);
    if (!os) throw std::runtime_error("phase_plane_export: cannot open " + file);
    os << "t,r,beta\n";
    for (const TraceSample& s : traces[i].samples) {
      os << g17(s.t) << ',' << g17(s.r) << ',' << g17(s.beta) << '\n';
    }
    files.push_back(file);
  }
  return files;
}

void write_trace_csv(const TrialTrace& trace, const std::string& file) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("write_trace_csv: cannot open " + file);
  os << "t,x,y,psi,r,beta,v,e_pos,s_proj,delta\n";
  for (const TraceSample& s : trace.samples) {
    os << g17(s.t) << ',' << g17(s.x) << ',' << g17(s.y) << ',' << g17(s.psi)
       << ',' << g17(s.r) << ',' << g17(s.beta) << ',' << g17(s.v) << ','
       << g17(s.e_pos) << ',' << g17(s.s_proj) << ',' << g17(s.delta) << '\n';
  }
}

TrialTrace read_trace_csv(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("read_trace_csv: cannot open " + file);
  std::string line;
  if (!std::getline(is, line) ||
      line != "t,x,y,psi,r,beta,v,e_pos,s_proj,delta") {
    throw std::runtime_error("read_trace_csv: bad header in " + file);
  }
  TrialTrace out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    TraceSample s;
    std::istringstream ss(line);
    char comma;
    if (!(ss >> s.t >> comma >> s.x >> comma >> s.y >> comma >> s.psi >>
          comma >> s.r >> comma >> s.beta >> comma >> s.v >> comma >>
          s.e_pos >> comma >> s.s_proj >> comma >> s.delta)) {
      throw std::runtime_error("read_trace_csv: bad row in " + file);
    }
    out.samples.push_back(s);
  }
  return out;
}

std::vector<AblationSpec> default_ablation_specs() {
  std::vector<AblationSpec> specs(5);
  specs[0].name = "full";
  specs[1].name = "no_tire";
  specs[1].train_rand.randomize_tires = false;
  specs[2].name = "no_init_state";
  specs[2].train_rand.randomize_init_state = false;
  specs[3].name = "no_disturbance";
  specs[3].train_rand.randomize_disturbance = false;
  specs[4].name = "no_trajectory";
  specs[4].train_rand.randomize_trajectory = false;
  return specs;
}

std::vector<AblationRow> run_ablation(
    const AblationTrainFn& train_fn, const std::vector<AblationSpec>& specs,
    std::shared_ptr<const ReferencePath> eval_path, std::uint64_t seed) {
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const AblationSpec& spec = specs[i];
    AblationRow row;
    row.name = spec.name;
    const std::uint64_t train_seed =
        stream_seed(seed, stream_id::kAblationBase + 2 * i);
    // Shared evaluation stream: every row sees identical test conditions.
    const std::uint64_t eval_seed =
        stream_seed(seed, stream_id::kAblationBase + 1);
    try {
      PolicyNet net = train_fn(spec.train_rand, train_seed);
      if (!net.params.allFinite()) throw std::runtime_error("non-finite net");
      EvalOptions opt;
      opt.path_id = "eight";
      opt.env.rand.b_min = spec.test_b_min;
      opt.env.rand.b_max = spec.test_b_max;
      opt.env.rand.c_min = spec.test_c_min;
      opt.env.rand.c_max = spec.test_c_max;
      opt.env.rand.d_min = spec.test_d_min;
      opt.env.rand.d_max = spec.test_d_max;
      opt.env.rand.ar_w = spec.test_ar_w;
      const EvalResult res =
          rollout_eval(net, eval_path, spec.n_trials, eval_seed, opt);
      row.trained_ok = true;
      row.success_rate = res.report.success_rate;
      row.rmse_mean = res.report.rmse_mean;
      row.rmse_std = res.report.rmse_std;
      std::vector<double> betas;
      for (const TrialTrace& t : res.traces) betas.push_back(t.mean_abs_beta);
      row.beta_mean = mean_of(betas);
      row.beta_std = std_of(betas);
    } catch (const std::exception&) {
      row.trained_ok = false;
    }
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::string& file) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("write_ablation_csv: cannot open " + file);
  os << "method,success,rmse_mean,rmse_std,beta_mean,beta_std\n";
  for (const AblationRow& r : rows) {
    os << r.name << ',' << g17(r.success_rate) << ',' << g17(r.rmse_mean)
       << ',' << g17(r.rmse_std) << ',' << g17(r.beta_mean) << ','
       << g17(r.beta_std) << '\n';
  }
}

}  // namespace driftsim
