#pragma once

#include <cstdint>
#include <vector>

#include "driftsim/rng.hpp"
#include "driftsim/vec_env.hpp"

namespace driftsim {

/// Tiny 1D regulation task used to sanity-check the trainer: state x,
/// action a in [-1, 1], x' = x + 0.5 a, reward -(x^2 + 0.01 a^2), reset
/// x ~ U[-2, 2], 50-step episodes with auto-reset. A competent policy
/// steers x to zero within a few steps.
class ToyEnv : public VecEnv {
 public:
  ToyEnv(std::uint64_t master_seed, int n_envs);

  int num_envs() const override { return static_cast<int>(x_.size()); }
  int obs_dim() const override { return 1; }
  int action_dim() const override { return 1; }
  Eigen::VectorXd action_low() const override;
  Eigen::VectorXd action_high() const override;
  void reset_all(Eigen::Ref<Eigen::MatrixXd> obs) override;
  void step(const Eigen::Ref<const Eigen::MatrixXd>& actions,
            Eigen::Ref<Eigen::MatrixXd> obs,
            Eigen::Ref<Eigen::VectorXd> rewards,
            std::vector<std::uint8_t>& dones) override;

  static constexpr int kHorizon = 50;

 private:
  std::vector<double> x_;
  std::vector<int> steps_;
  std::vector<Rng> rng_;
};

}  // namespace driftsim
