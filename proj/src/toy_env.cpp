#include "driftsim/toy_env.hpp"

#include <algorithm>

namespace driftsim {

ToyEnv::ToyEnv(std::uint64_t master_seed, int n_envs)
    : x_(static_cast<std::size_t>(n_envs), 0.0),
      steps_(static_cast<std::size_t>(n_envs), 0),
      rng_(static_cast<std::size_t>(n_envs)) {
  for (int i = 0; i < n_envs; ++i) {
    rng_[i] = Rng::stream(master_seed,
                          stream_id::kInstanceBase +
                              static_cast<std::uint64_t>(i));
    x_[i] = rng_[i].uniform(-2.0, 2.0);
  }
}

Eigen::VectorXd ToyEnv::action_low() const {
  return Eigen::VectorXd::Constant(1, -1.0);
}

Eigen::VectorXd ToyEnv::action_high() const {
  return Eigen::VectorXd::Constant(1, 1.0);
}

void ToyEnv::reset_all(Eigen::Ref<Eigen::MatrixXd> obs) {
  for (int i = 0; i < num_envs(); ++i) {
    x_[i] = rng_[i].uniform(-2.0, 2.0);
    steps_[i] = 0;
    obs(0, i) = x_[i];
  }
}

void ToyEnv::step(const Eigen::Ref<const Eigen::MatrixXd>& actions,
                  Eigen::Ref<Eigen::MatrixXd> obs,
                  Eigen::Ref<Eigen::VectorXd> rewards,
                  std::vector<std::uint8_t>& dones) {
  const int n = num_envs();
  dones.assign(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const double a = std::clamp(actions(0, i), -1.0, 1.0);
    x_[i] += 0.5 * a;
    rewards(i) = -(x_[i] * x_[i] + 0.01 * a * a);
    if (++steps_[i] >= kHorizon) {
      dones[i] = 1;
      x_[i] = rng_[i].uniform(-2.0, 2.0);
      steps_[i] = 0;
    }
    obs(0, i) = x_[i];
  }
}

}  // namespace driftsim
