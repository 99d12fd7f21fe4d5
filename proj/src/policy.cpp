#include "driftsim/policy.hpp"

#include <cassert>
#include <cmath>

namespace driftsim {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*log(2*pi)
}

PolicyNet::PolicyNet(int obs_dim, int act_dim, Eigen::VectorXd act_low,
                     Eigen::VectorXd act_high)
    : actor_(obs_dim, act_dim),
      critic_(obs_dim, 1),
      lo_(std::move(act_low)),
      hi_(std::move(act_high)) {
  assert(lo_.size() == act_dim && hi_.size() == act_dim);
  assert((hi_.array() > lo_.array()).all());
  mid_ = 0.5 * (lo_ + hi_);
  half_ = 0.5 * (hi_ - lo_);
  params = Eigen::VectorXd::Zero(actor_.param_count() + act_dim +
                                 critic_.param_count());
  params.segment(log_std_offset(), act_dim).setConstant(kLogStdInit);
}

void PolicyNet::init(Rng& rng) {
  actor_.init_params(params.segment(0, actor_.param_count()), rng, 0.01);
  params.segment(log_std_offset(), act_dim()).setConstant(kLogStdInit);
  critic_.init_params(params.segment(critic_offset(), critic_.param_count()),
                      rng, 1.0);
}

void PolicyNet::forward(const Eigen::Ref<const Eigen::MatrixXd>& obs,
                        Forward& f) const {
  actor_.forward(actor_params(), obs, f.actor_ws);
  critic_.forward(critic_params(), obs, f.critic_ws);
  f.value = f.critic_ws.out.row(0).transpose();
}

Eigen::MatrixXd PolicyNet::squash(
    const Eigen::Ref<const Eigen::MatrixXd>& u) const {
  return ((u.array().tanh().colwise() * half_.array()).colwise() +
          mid_.array())
      .matrix();
}

void PolicyNet::sample_pre_squash(const Eigen::Ref<const Eigen::MatrixXd>& mean,
                                  Rng& rng, Eigen::MatrixXd& u) const {
  const Eigen::ArrayXd std = log_std().array().exp();
  u.resize(mean.rows(), mean.cols());
  for (Eigen::Index j = 0; j < mean.cols(); ++j) {
    for (Eigen::Index i = 0; i < mean.rows(); ++i) {
      u(i, j) = mean(i, j) + std(i) * rng.normal();
    }
  }
}

Eigen::VectorXd PolicyNet::log_prob(
    const Eigen::Ref<const Eigen::MatrixXd>& u,
    const Eigen::Ref<const Eigen::MatrixXd>& mean) const {
  const Eigen::ArrayXd ls = log_std().array();
  const Eigen::ArrayXd inv_std = (-ls).exp();
  Eigen::VectorXd out(u.cols());
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    double lp = 0.0;
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
      const double z = (u(i, j) - mean(i, j)) * inv_std(i);
      lp += -0.5 * z * z - ls(i) - kHalfLog2Pi;
      lp -= std::log(half_(i)) + log_one_minus_tanh_sq(u(i, j));
    }
    out(j) = lp;
  }
  return out;
}

double PolicyNet::entropy() const {
  return log_std().sum() +
         0.5 * act_dim() * (1.0 + 2.0 * kHalfLog2Pi);
}

Eigen::VectorXd PolicyNet::act_deterministic(
    const Eigen::Ref<const Eigen::VectorXd>& obs) const {
  Mlp::Workspace ws;
  actor_.forward(actor_params(), obs, ws);
  return squash(ws.out).col(0);
}

double PolicyNet::value_of(
    const Eigen::Ref<const Eigen::VectorXd>& obs) const {
  Mlp::Workspace ws;
  critic_.forward(critic_params(), obs, ws);
  return ws.out(0, 0);
}

}  // namespace driftsim
