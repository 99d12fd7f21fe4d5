#pragma once

#include <Eigen/Dense>
#include <array>

#include "driftsim/rng.hpp"

namespace driftsim {

/// Feedforward network with the fixed hidden stack (64, 32, 16), tanh
/// activations and a linear output layer. Parameters live in a caller-owned
/// flat vector with the layout
///   [W0 | b0 | W1 | b1 | W2 | b2 | W3 | b3]
/// where W_l is (dims[l+1] x dims[l]) stored column-major and
/// dims = (in, 64, 32, 16, out). The backward pass is written by hand
/// against this layout; a finite-difference oracle in the tests checks every
/// parameter.
class Mlp {
 public:
  static constexpr std::array<int, 3> kHidden = {64, 32, 16};
  static constexpr int kNumLayers = 4;

  Mlp(int in_dim, int out_dim);

  int in_dim() const { return dims_[0]; }
  int out_dim() const { return dims_[kNumLayers]; }
  int param_count() const { return param_count_; }
  int weight_offset(int layer) const { return w_off_[layer]; }
  int bias_offset(int layer) const { return b_off_[layer]; }
  int rows(int layer) const { return dims_[layer + 1]; }
  int cols(int layer) const { return dims_[layer]; }

  /// Xavier-uniform weights, zero biases. final_scale shrinks the output
  /// layer (small initial action means help early PPO exploration).
  void init_params(Eigen::Ref<Eigen::VectorXd> params, Rng& rng,
                   double final_scale = 1.0) const;

  /// Cached activations of one batched forward pass. act[0] is the input,
  /// act[l] for l >= 1 the post-tanh hidden activations; out is linear.
  struct Workspace {
    std::array<Eigen::MatrixXd, kNumLayers> act;
    Eigen::MatrixXd out;
  };

  /// x is (in_dim x n); fills ws.out with (out_dim x n).
  void forward(const Eigen::Ref<const Eigen::VectorXd>& params,
               const Eigen::Ref<const Eigen::MatrixXd>& x,
               Workspace& ws) const;

  /// Accumulates d(loss)/d(params) into grad for the batch cached in ws,
  /// given dY = d(loss)/d(out). grad must already be sized param_count().
  void backward(const Eigen::Ref<const Eigen::VectorXd>& params,
                const Workspace& ws,
                const Eigen::Ref<const Eigen::MatrixXd>& dY,
                Eigen::Ref<Eigen::VectorXd> grad) const;

 private:
  std::array<int, kNumLayers + 1> dims_;
  std::array<int, kNumLayers> w_off_;
  std::array<int, kNumLayers> b_off_;
  int param_count_ = 0;
};

}  // namespace driftsim
