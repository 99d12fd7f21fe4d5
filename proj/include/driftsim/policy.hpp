#pragma once

#include <Eigen/Dense>

#include "driftsim/nn.hpp"
#include "driftsim/rng.hpp"

namespace driftsim {

/// Actor-critic pair over the fixed (64, 32, 16) architecture. The actor
/// outputs a pre-squash action mean; a state-independent log-std vector
/// completes a diagonal Gaussian. Samples are squashed through
///   a = mid + half * tanh(u),  mid = (lo+hi)/2,  half = (hi-lo)/2,
/// so actions always respect the bounds. The flat parameter vector is
///   [actor params | log_std (act_dim) | critic params]
/// with each net laid out as documented in nn.hpp.
class PolicyNet {
 public:
  PolicyNet(int obs_dim, int act_dim, Eigen::VectorXd act_low,
            Eigen::VectorXd act_high);

  int obs_dim() const { return actor_.in_dim(); }
  int act_dim() const { return actor_.out_dim(); }
  int param_count() const { return static_cast<int>(params.size()); }
  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  const Eigen::VectorXd& action_low() const { return lo_; }
  const Eigen::VectorXd& action_high() const { return hi_; }

  int actor_offset() const { return 0; }
  int log_std_offset() const { return actor_.param_count(); }
  int critic_offset() const { return actor_.param_count() + act_dim(); }

  Eigen::VectorXd params;

  static constexpr double kLogStdInit = -0.5;
  /// Xavier init with a 0.01-scaled actor output layer; log_std constant.
  void init(Rng& rng);

  auto actor_params() const { return params.segment(0, actor_.param_count()); }
  auto log_std() const { return params.segment(log_std_offset(), act_dim()); }
  auto critic_params() const {
    return params.segment(critic_offset(), critic_.param_count());
  }

  struct Forward {
    Mlp::Workspace actor_ws;
    Mlp::Workspace critic_ws;
    const Eigen::MatrixXd& mean() const { return actor_ws.out; }
    Eigen::VectorXd value;  // one entry per column of the input batch
  };

  /// Batched; obs is (obs_dim x n).
  void forward(const Eigen::Ref<const Eigen::MatrixXd>& obs, Forward& f) const;

  Eigen::MatrixXd squash(const Eigen::Ref<const Eigen::MatrixXd>& u) const;

  /// Draws pre-squash samples u = mean + std * eps, one column per batch
  /// entry, consuming act_dim normals per column in column order.
  void sample_pre_squash(const Eigen::Ref<const Eigen::MatrixXd>& mean,
                         Rng& rng, Eigen::MatrixXd& u) const;

  /// Log-density of the squashed action for pre-squash samples u under the
  /// current log_std, including the tanh-affine Jacobian correction.
  Eigen::VectorXd log_prob(const Eigen::Ref<const Eigen::MatrixXd>& u,
                           const Eigen::Ref<const Eigen::MatrixXd>& mean) const;

  /// Entropy of the pre-squash Gaussian (state independent).
  double entropy() const;

  /// Mean action for evaluation: squash(actor(obs)).
  Eigen::VectorXd act_deterministic(
      const Eigen::Ref<const Eigen::VectorXd>& obs) const;

  double value_of(const Eigen::Ref<const Eigen::VectorXd>& obs) const;

 private:
  Mlp actor_;
  Mlp critic_;
  Eigen::VectorXd lo_, hi_, mid_, half_;
};

/// log(1 - tanh(u)^2), computed without catastrophic cancellation.
inline double log_one_minus_tanh_sq(double u) {
  const double a = std::abs(u);
  return 2.0 * (std::log(2.0) - a - std::log1p(std::exp(-2.0 * a)));
}

}  // namespace driftsim
