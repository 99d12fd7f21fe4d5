#include "driftsim/ppo.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <numeric>

#include "driftsim/env.hpp"

namespace driftsim {

void RolloutBuffer::resize(int steps_, int n_envs_, int obs_dim, int act_dim) {
  steps = steps_;
  n_envs = n_envs_;
  obs.assign(steps, Eigen::MatrixXd(obs_dim, n_envs));
  pre_squash.assign(steps, Eigen::MatrixXd(act_dim, n_envs));
  actions.assign(steps, Eigen::MatrixXd(act_dim, n_envs));
  log_probs.assign(steps, Eigen::VectorXd(n_envs));
  rewards.assign(steps, Eigen::VectorXd(n_envs));
  values.assign(steps, Eigen::VectorXd(n_envs));
  dones.assign(steps, std::vector<std::uint8_t>(n_envs, 0));
  timeouts.assign(steps, std::vector<std::uint8_t>(n_envs, 0));
  timeout_values = Eigen::MatrixXd::Zero(steps, n_envs);
  bootstrap_value = Eigen::VectorXd::Zero(n_envs);
  advantages.resize(steps, n_envs);
  returns.resize(steps, n_envs);
}

void compute_gae(RolloutBuffer& buf, double gamma, double lambda) {
  const int T = buf.steps;
  const int n = buf.n_envs;
  buf.advantages.resize(T, n);
  buf.returns.resize(T, n);
  Eigen::VectorXd next_adv = Eigen::VectorXd::Zero(n);
  for (int t = T - 1; t >= 0; --t) {
    const Eigen::VectorXd& v_next =
        (t == T - 1) ? buf.bootstrap_value : buf.values[t + 1];
    for (int e = 0; e < n; ++e) {
      const double mask = buf.dones[t][e] ? 0.0 : 1.0;
      const double v_end = buf.dones[t][e] && buf.timeouts[t][e]
                               ? buf.timeout_values(t, e)
                               : mask * v_next(e);
      const double delta =
          buf.rewards[t](e) + gamma * v_end - buf.values[t](e);
      next_adv(e) = delta + gamma * lambda * mask * next_adv(e);
      buf.advantages(t, e) = next_adv(e);
      buf.returns(t, e) = next_adv(e) + buf.values[t](e);
    }
  }
}

void normalize_advantages(RolloutBuffer& buf) {
  const double n = static_cast<double>(buf.advantages.size());
  const double mean = buf.advantages.sum() / n;
  const double var = (buf.advantages.array() - mean).square().sum() / n;
  const double std = std::max(std::sqrt(var), 1e-8);
  buf.advantages = (buf.advantages.array() - mean) / std;
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
                double lr) {
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v.array() + (1.0 - beta2) * grad.array().square();
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -=
      lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

double ppo_minibatch_loss(const PolicyNet& net,
                          const Eigen::Ref<const Eigen::MatrixXd>& obs,
                          const Eigen::Ref<const Eigen::MatrixXd>& pre_squash,
                          const Eigen::Ref<const Eigen::VectorXd>& logp_old,
                          const Eigen::Ref<const Eigen::VectorXd>& advantages,
                          const Eigen::Ref<const Eigen::VectorXd>& returns,
                          const TrainerConfig& cfg, Eigen::VectorXd& grad,
                          MinibatchStats* stats) {
  const int m = static_cast<int>(obs.cols());
  const int act_dim = net.act_dim();

  PolicyNet::Forward fwd;
  net.forward(obs, fwd);
  const Eigen::VectorXd logp_new = net.log_prob(pre_squash, fwd.mean());

  const Eigen::ArrayXd ls = net.log_std().array();
  const Eigen::ArrayXd inv_var = (-2.0 * ls).exp();
  Eigen::MatrixXd d_mean = Eigen::MatrixXd::Zero(act_dim, m);
  Eigen::VectorXd d_log_std = Eigen::VectorXd::Zero(act_dim);
  Eigen::MatrixXd d_value(1, m);

  double pl = 0.0, vl = 0.0, kl = 0.0;
  long clipped = 0;
  for (int k = 0; k < m; ++k) {
    const double ratio = std::exp(logp_new(k) - logp_old(k));
    const double adv = advantages(k);
    const double raw = ratio * adv;
    const double cl =
        std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
    pl -= std::min(raw, cl);
    kl += logp_old(k) - logp_new(k);
    if (std::abs(ratio - 1.0) > cfg.clip_eps) ++clipped;
    // Gradient flows only while the raw surrogate is the active branch.
    const double g = (raw <= cl) ? -adv * ratio / static_cast<double>(m) : 0.0;
    if (g != 0.0) {
      for (int i = 0; i < act_dim; ++i) {
        const double diff = pre_squash(i, k) - fwd.mean()(i, k);
        d_mean(i, k) = g * diff * inv_var(i);
        d_log_std(i) += g * (diff * diff * inv_var(i) - 1.0);
      }
    }
    const double verr = fwd.value(k) - returns(k);
    vl += verr * verr;
    d_value(0, k) = cfg.value_coef * 2.0 * verr / static_cast<double>(m);
  }
  pl /= m;
  vl /= m;
  kl /= m;
  const double entropy = net.entropy();
  d_log_std.array() -= cfg.entropy_coef;

  grad = Eigen::VectorXd::Zero(net.param_count());
  net.actor().backward(net.actor_params(), fwd.actor_ws, d_mean,
                       grad.segment(net.actor_offset(),
                                    net.actor().param_count()));
  grad.segment(net.log_std_offset(), act_dim) = d_log_std;
  net.critic().backward(net.critic_params(), fwd.critic_ws, d_value,
                        grad.segment(net.critic_offset(),
                                     net.critic().param_count()));

  if (stats) {
    stats->policy_loss = pl;
    stats->value_loss = vl;
    stats->entropy = entropy;
    stats->kl = kl;
    stats->clipped = clipped;
  }
  return pl + cfg.value_coef * vl - cfg.entropy_coef * entropy;
}

UpdateStats ppo_update(PolicyNet& net, const RolloutBuffer& buf,
                       const TrainerConfig& cfg, double lr, Adam& opt,
                       Rng& shuffle_rng) {
  const int T = buf.steps;
  const int n = buf.n_envs;
  const int num_samples = T * n;
  const int obs_dim = net.obs_dim();
  const int act_dim = net.act_dim();

  const Eigen::VectorXd params_before = net.params;
  const Adam opt_before = opt;

  UpdateStats stats;
  double acc_pl = 0.0, acc_vl = 0.0, acc_ent = 0.0, acc_kl = 0.0;
  long clipped = 0;
  long sample_total = 0;
  int minibatches = 0;

  std::vector<int> order(static_cast<std::size_t>(num_samples));
  std::iota(order.begin(), order.end(), 0);

  Eigen::VectorXd grad;
  const auto abort = [&] {
    net.params = params_before;
    opt = opt_before;
    UpdateStats s;
    s.aborted = true;
    return s;
  };

  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    shuffle_rng.shuffle(order);
    for (int start = 0; start < num_samples; start += cfg.minibatch_size) {
      const int m = std::min(cfg.minibatch_size, num_samples - start);
      Eigen::MatrixXd mb_obs(obs_dim, m);
      Eigen::MatrixXd mb_pre(act_dim, m);
      Eigen::VectorXd mb_logp(m), mb_adv(m), mb_ret(m);
      for (int k = 0; k < m; ++k) {
        const int flat = order[static_cast<std::size_t>(start + k)];
        const int t = flat / n;
        const int e = flat % n;
        mb_obs.col(k) = buf.obs[t].col(e);
        mb_pre.col(k) = buf.pre_squash[t].col(e);
        mb_logp(k) = buf.log_probs[t](e);
        mb_adv(k) = buf.advantages(t, e);
        mb_ret(k) = buf.returns(t, e);
      }

      MinibatchStats ms;
      const double loss = ppo_minibatch_loss(net, mb_obs, mb_pre, mb_logp,
                                             mb_adv, mb_ret, cfg, grad, &ms);
      if (!std::isfinite(loss) || !grad.allFinite()) return abort();

      const double gnorm = grad.norm();
      if (gnorm > cfg.max_grad_norm) grad *= cfg.max_grad_norm / gnorm;
      opt.step(net.params, grad, lr);

      acc_pl += ms.policy_loss;
      acc_vl += ms.value_loss;
      acc_ent += ms.entropy;
      acc_kl += ms.kl;
      clipped += ms.clipped;
      sample_total += m;
      ++minibatches;
    }
  }

  const double mb = std::max(1, minibatches);
  stats.policy_loss = acc_pl / mb;
  stats.value_loss = acc_vl / mb;
  stats.entropy = acc_ent / mb;
  stats.approx_kl = acc_kl / mb;
  stats.clip_fraction = static_cast<double>(clipped) /
                        static_cast<double>(std::max(1l, sample_total));
  return stats;
}

TrainResult train(VecEnv& env, const TrainerConfig& cfg,
                  const TrainHooks& hooks) {
  assert(cfg.valid());
  const int n = env.num_envs();
  const int obs_dim = env.obs_dim();
  const int act_dim = env.action_dim();

  PolicyNet net(obs_dim, act_dim, env.action_low(), env.action_high());
  Rng init_rng = Rng::stream(cfg.seed, stream_id::kTrainerInit);
  net.init(init_rng);
  Rng sample_rng = Rng::stream(cfg.seed, stream_id::kTrainerSampling);
  Rng shuffle_rng = Rng::stream(cfg.seed, stream_id::kTrainerShuffle);
  Adam opt(net.param_count());

  TrainResult result{net, {}, 0};
  const long long steps_per_update =
      static_cast<long long>(cfg.rollout_length) * n;
  const long long n_updates =
      cfg.total_env_steps > 0
          ? (cfg.total_env_steps + steps_per_update - 1) / steps_per_update
          : 0;
  if (n_updates == 0) return result;

  RolloutBuffer buf;
  buf.resize(cfg.rollout_length, n, obs_dim, act_dim);
  Eigen::MatrixXd obs(obs_dim, n);
  env.reset_all(obs);

  // Episode-return accounting that works for any auto-resetting VecEnv.
  Eigen::VectorXd ep_ret = Eigen::VectorXd::Zero(n);
  double last_mean_return = 0.0;
  double last_mean_abs_beta = 0.0;
  double last_rmse = 0.0;
  auto* drift_env = dynamic_cast<DriftEnv*>(&env);

  PolicyNet::Forward fwd;
  PolicyNet::Forward timeout_fwd;
  Eigen::MatrixXd timeout_obs;
  std::vector<int> timeout_idx;
  for (long long update = 1; update <= n_updates; ++update) {
    const auto t_start = std::chrono::steady_clock::now();
    double ret_sum = 0.0;
    int ret_count = 0;
    for (int t = 0; t < cfg.rollout_length; ++t) {
      buf.obs[t] = obs;
      result.net.forward(obs, fwd);
      result.net.sample_pre_squash(fwd.mean(), sample_rng, buf.pre_squash[t]);
      buf.actions[t] = result.net.squash(buf.pre_squash[t]);
      buf.log_probs[t] = result.net.log_prob(buf.pre_squash[t], fwd.mean());
      buf.values[t] = fwd.value;
      env.step(buf.actions[t], obs, buf.rewards[t], buf.dones[t]);
      std::fill(buf.timeouts[t].begin(), buf.timeouts[t].end(),
                std::uint8_t{0});
      buf.timeout_values.row(t).setZero();
      if (drift_env) {
        timeout_idx.clear();
        const auto& reasons = drift_env->last_step_terminations();
        for (int e = 0; e < n; ++e) {
          if (buf.dones[t][e] && reasons[e] == Termination::kMaxSteps) {
            buf.timeouts[t][e] = 1;
            timeout_idx.push_back(e);
          }
        }
        if (!timeout_idx.empty()) {
          const Eigen::MatrixXd& term_obs =
              drift_env->last_step_terminal_obs();
          timeout_obs.resize(obs_dim,
                             static_cast<Eigen::Index>(timeout_idx.size()));
          for (std::size_t k = 0; k < timeout_idx.size(); ++k) {
            timeout_obs.col(static_cast<Eigen::Index>(k)) =
                term_obs.col(timeout_idx[k]);
          }
          result.net.forward(timeout_obs, timeout_fwd);
          for (std::size_t k = 0; k < timeout_idx.size(); ++k) {
            buf.timeout_values(t, timeout_idx[k]) =
                timeout_fwd.value(static_cast<Eigen::Index>(k));
          }
        }
      }
      ep_ret += buf.rewards[t];
      for (int e = 0; e < n; ++e) {
        if (buf.dones[t][e]) {
          ret_sum += ep_ret(e);
          ++ret_count;
          ep_ret(e) = 0.0;
        }
      }
    }
    result.net.forward(obs, fwd);
    buf.bootstrap_value = fwd.value;

    compute_gae(buf, cfg.gamma, cfg.gae_lambda);
    normalize_advantages(buf);

    const double frac =
        cfg.lr_decay ? 1.0 - static_cast<double>(update - 1) /
                                 static_cast<double>(n_updates)
                     : 1.0;
    const UpdateStats stats =
        ppo_update(result.net, buf, cfg, cfg.lr * frac, opt, shuffle_rng);

    result.env_steps += steps_per_update;
    CurveRow row;
    row.update = static_cast<int>(update);
    row.env_steps = result.env_steps;
    row.stats = stats;
    if (ret_count > 0) last_mean_return = ret_sum / ret_count;
    row.mean_return = last_mean_return;
    row.episodes = ret_count;
    if (drift_env) {
      const auto summaries = drift_env->drain_summaries();
      if (!summaries.empty()) {
        double beta_sum = 0.0, rmse_sum = 0.0;
        for (const EpisodeSummary& s : summaries) {
          beta_sum += s.mean_abs_beta;
          rmse_sum += s.rmse_epos;
          if (s.reason == Termination::kDiverged) ++row.diverged;
        }
        last_mean_abs_beta = beta_sum / static_cast<double>(summaries.size());
        last_rmse = rmse_sum / static_cast<double>(summaries.size());
      }
    }
    row.mean_abs_beta = last_mean_abs_beta;
    row.rmse_proxy = last_rmse;
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      t_start)
            .count();
    row.steps_per_sec =
        elapsed > 0.0 ? static_cast<double>(steps_per_update) / elapsed : 0.0;
    result.curve.push_back(row);
    if (hooks.on_update) hooks.on_update(row, result.net);
  }
  return result;
}

}  // namespace driftsim
