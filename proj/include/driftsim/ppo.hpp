#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "driftsim/policy.hpp"
#include "driftsim/rng.hpp"
#include "driftsim/vec_env.hpp"

namespace driftsim {

struct TrainerConfig {
  int n_envs = 4096;
  int rollout_length = 128;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double lr = 3e-4;
  bool lr_decay = true;  // linear to zero over the run
  int epochs_per_update = 4;
  int minibatch_size = 8192;
  double entropy_coef = 0.003;
  double value_coef = 0.5;
  double max_grad_norm = 0.5;
  long long total_env_steps = 20'000'000;
  std::uint64_t seed = 0;

  bool valid() const {
    return n_envs > 0 && rollout_length > 0 && gamma >= 0.0 && gamma < 1.0 &&
           gae_lambda >= 0.0 && gae_lambda < 1.0 && clip_eps > 0.0 &&
           epochs_per_update > 0 && minibatch_size > 0;
  }
};

/// One on-policy rollout, laid out as per-step matrices with one column per
/// environment instance. values carries rollout_length + 1 rows worth of
/// entries via the extra bootstrap vector for the post-rollout state.
struct RolloutBuffer {
  int steps = 0;
  int n_envs = 0;
  std::vector<Eigen::MatrixXd> obs;         // (obs_dim x n) per step
  std::vector<Eigen::MatrixXd> pre_squash;  // Gaussian samples, (act x n)
  std::vector<Eigen::MatrixXd> actions;     // squashed, (act x n)
  std::vector<Eigen::VectorXd> log_probs;   // (n)
  std::vector<Eigen::VectorXd> rewards;     // (n)
  std::vector<Eigen::VectorXd> values;      // (n)
  std::vector<std::vector<std::uint8_t>> dones;
  std::vector<std::vector<std::uint8_t>> timeouts;  // done by time limit
  Eigen::MatrixXd timeout_values;   // V(pre-reset final obs), (steps x n)
  Eigen::VectorXd bootstrap_value;  // V(s_T), (n)
  Eigen::MatrixXd advantages;       // (steps x n)
  Eigen::MatrixXd returns;          // (steps x n)

  void resize(int steps_, int n_envs_, int obs_dim, int act_dim);
};

/// Backward GAE recursion
///   A_t = delta_t + gamma*lambda*(1-done_t)*A_{t+1},
///   delta_t = r_t + gamma*v_next_t - V_t,
/// with returns = advantages + values. v_next_t is V_{t+1} while the episode
/// runs; on a done step it is 0 for a real failure but V of the pre-reset
/// state when the episode was merely cut by the step limit, so truncation is
/// not mistaken for a zero-value outcome. The lambda trace still stops at
/// every done.
void compute_gae(RolloutBuffer& buf, double gamma, double lambda);

/// In-place standardization of buf.advantages to mean 0, std 1.
void normalize_advantages(RolloutBuffer& buf);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  bool aborted = false;  // non-finite loss or gradient; params kept
};

struct MinibatchStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  long clipped = 0;
};

/// Loss and analytic gradient of one PPO minibatch:
///   L = -mean(min(ratio*A, clip(ratio)*A))
///       + value_coef * mean((V - R)^2) - entropy_coef * H.
/// grad is resized and overwritten. Returns the loss value. This is the
/// exact quantity ppo_update descends, factored out so the tests can check
/// the gradient against central finite differences.
double ppo_minibatch_loss(const PolicyNet& net,
                          const Eigen::Ref<const Eigen::MatrixXd>& obs,
                          const Eigen::Ref<const Eigen::MatrixXd>& pre_squash,
                          const Eigen::Ref<const Eigen::VectorXd>& logp_old,
                          const Eigen::Ref<const Eigen::VectorXd>& advantages,
                          const Eigen::Ref<const Eigen::VectorXd>& returns,
                          const TrainerConfig& cfg, Eigen::VectorXd& grad,
                          MinibatchStats* stats = nullptr);

/// Adam with bias correction; one slot per policy parameter.
struct Adam {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit Adam(int n = 0)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr);
};

/// One PPO update: epochs_per_update passes of shuffled minibatches with the
/// clipped surrogate, value MSE and entropy bonus. Deterministic given the
/// shuffle stream. On a non-finite loss/gradient the whole update is rolled
/// back (params and optimizer state restored) and stats.aborted is set.
UpdateStats ppo_update(PolicyNet& net, const RolloutBuffer& buf,
                       const TrainerConfig& cfg, double lr, Adam& opt,
                       Rng& shuffle_rng);

struct CurveRow {
  int update = 0;
  long long env_steps = 0;
  double mean_return = 0.0;
  double mean_abs_beta = 0.0;
  double rmse_proxy = 0.0;
  double steps_per_sec = 0.0;  // wall clock; excluded from determinism checks
  UpdateStats stats;
  int episodes = 0;
  int diverged = 0;
};

struct TrainHooks {
  std::function<void(const CurveRow&, const PolicyNet&)> on_update;
};

struct TrainResult {
  PolicyNet net;
  std::vector<CurveRow> curve;
  long long env_steps = 0;
};

/// Alternates rollout collection and ppo_update until total_env_steps.
/// All randomness comes from cfg.seed: net init, action noise and minibatch
/// shuffling use their own streams, the env owns its instance streams.
TrainResult train(VecEnv& env, const TrainerConfig& cfg,
                  const TrainHooks& hooks = {});

}  // namespace driftsim
