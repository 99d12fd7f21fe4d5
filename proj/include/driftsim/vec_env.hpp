#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace driftsim {

/// Batched environment interface. Observations and actions are matrices
/// with one column per instance (column-major, so each instance's vector is
/// contiguous). Implementations own all per-instance state; step() is the
/// only mutator and may parallelize internally across instances as long as
/// results are independent of the partitioning.
class VecEnv {
 public:
  virtual ~VecEnv() = default;

  virtual int num_envs() const = 0;
  virtual int obs_dim() const = 0;
  virtual int action_dim() const = 0;

  /// Per-dimension action bounds; the environment clamps incoming actions.
  virtual Eigen::VectorXd action_low() const = 0;
  virtual Eigen::VectorXd action_high() const = 0;

  /// Resets every instance and writes initial observations.
  virtual void reset_all(Eigen::Ref<Eigen::MatrixXd> obs) = 0;

  /// Advances every instance one step. dones[i] is 1 when instance i
  /// terminated this step; with auto-reset, obs column i then holds the
  /// first observation of the next episode.
  virtual void step(const Eigen::Ref<const Eigen::MatrixXd>& actions,
                    Eigen::Ref<Eigen::MatrixXd> obs,
                    Eigen::Ref<Eigen::VectorXd> rewards,
                    std::vector<std::uint8_t>& dones) = 0;
};

}  // namespace driftsim
