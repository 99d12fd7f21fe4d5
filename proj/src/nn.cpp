#include "driftsim/nn.hpp"

#include <cassert>
#include <cmath>

namespace driftsim {

namespace {

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using MutMap = Eigen::Map<Eigen::MatrixXd>;

}  // namespace

Mlp::Mlp(int in_dim, int out_dim) {
  assert(in_dim > 0 && out_dim > 0);
  dims_ = {in_dim, kHidden[0], kHidden[1], kHidden[2], out_dim};
  int off = 0;
  for (int l = 0; l < kNumLayers; ++l) {
    w_off_[l] = off;
    off += dims_[l + 1] * dims_[l];
    b_off_[l] = off;
    off += dims_[l + 1];
  }
  param_count_ = off;
}

void Mlp::init_params(Eigen::Ref<Eigen::VectorXd> params, Rng& rng,
                      double final_scale) const {
  assert(params.size() == param_count_);
  for (int l = 0; l < kNumLayers; ++l) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(dims_[l] + dims_[l + 1]));
    const double scale = (l == kNumLayers - 1) ? final_scale : 1.0;
    for (int k = 0; k < dims_[l + 1] * dims_[l]; ++k) {
      params[w_off_[l] + k] = scale * rng.uniform(-limit, limit);
    }
    params.segment(b_off_[l], dims_[l + 1]).setZero();
  }
}

void Mlp::forward(const Eigen::Ref<const Eigen::VectorXd>& params,
                  const Eigen::Ref<const Eigen::MatrixXd>& x,
                  Workspace& ws) const {
  assert(params.size() == param_count_);
  assert(x.rows() == dims_[0]);
  ws.act[0] = x;
  for (int l = 0; l < kNumLayers; ++l) {
    const ConstMap W(params.data() + w_off_[l], dims_[l + 1], dims_[l]);
    const auto b = params.segment(b_off_[l], dims_[l + 1]);
    Eigen::MatrixXd z = (W * ws.act[l]).colwise() + b;
    if (l < kNumLayers - 1) {
      ws.act[l + 1] = z.array().tanh();
    } else {
      ws.out = std::move(z);
    }
  }
}

void Mlp::backward(const Eigen::Ref<const Eigen::VectorXd>& params,
                   const Workspace& ws,
                   const Eigen::Ref<const Eigen::MatrixXd>& dY,
                   Eigen::Ref<Eigen::VectorXd> grad) const {
  assert(grad.size() == param_count_);
  assert(dY.rows() == dims_[kNumLayers]);
  Eigen::MatrixXd delta = dY;
  for (int l = kNumLayers - 1; l >= 0; --l) {
    MutMap gW(grad.data() + w_off_[l], dims_[l + 1], dims_[l]);
    gW.noalias() += delta * ws.act[l].transpose();
    grad.segment(b_off_[l], dims_[l + 1]) += delta.rowwise().sum();
    if (l > 0) {
      const ConstMap W(params.data() + w_off_[l], dims_[l + 1], dims_[l]);
      delta = (W.transpose() * delta).cwiseProduct(
          (1.0 - ws.act[l].array().square()).matrix());
    }
  }
}

}  // namespace driftsim
