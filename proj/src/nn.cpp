#include "adamrc/nn.hpp"

#include <cmath>

namespace adamrc::nn {

LstmWeights::LstmWeights(const std::string& prefix, int input, int hidden)
    : wx(prefix + ".wx", input, 4 * hidden), wh(prefix + ".wh", hidden, 4 * hidden), b(prefix + ".b", 1, 4 * hidden) {}

void LstmWeights::init(Rng& rng) {
  ag::init_glorot(wx, rng);
  ag::init_glorot(wh, rng);
  b.value.setZero();
  // Forget-gate bias starts at one.
  const Eigen::Index h = wh.rows();
  b.value.middleCols(h, h).setConstant(1.0f);
  b.zero_grad();
}

Var LstmWeights::run(Graph& g, Var x, bool reverse, Var h0, Var c0) {
  return ag::lstm(x, g.param(wx), g.param(wh), g.param(b), reverse, h0, c0);
}

BiLstm::BiLstm(const std::string& prefix, int input, int hidden)
    : fwd(prefix + ".fwd", input, hidden), bwd(prefix + ".bwd", input, hidden) {}

Var BiLstm::run(Graph& g, Var x) {
  const Var parts[] = {fwd.run(g, x, false), bwd.run(g, x, true)};
  return ag::hcat(parts);
}

Adamax::Adamax(ParamRefs params, Options opt) : params_(std::move(params)), opt_(opt) {
  m_.reserve(params_.size());
  u_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    u_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

double global_grad_norm(const ParamRefs& params) {
  double sq = 0.0;
  for (const Parameter* p : params)
    if (p->grad.size() == p->value.size()) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

bool all_finite(const ParamRefs& params) {
  for (const Parameter* p : params)
    if (!p->value.allFinite() || (p->grad.size() > 0 && !p->grad.allFinite())) return false;
  return true;
}

double Adamax::step(double lr) {
  const double norm = global_grad_norm(params_);
  const double clip = (opt_.clip_norm > 0 && norm > opt_.clip_norm) ? opt_.clip_norm / norm : 1.0;
  ++t_;
  const double bias = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    if (p.grad.size() != p.value.size()) p.zero_grad();
    Matrix g = p.grad * clip;
    m_[k] = opt_.beta1 * m_[k] + (1.0 - opt_.beta1) * g;
    u_[k] = (opt_.beta2 * u_[k]).cwiseMax(g.cwiseAbs());
    if (lr == 0.0) continue;
    const Matrix delta = (lr / bias) * m_[k].cwiseQuotient((u_[k].array() + opt_.eps).matrix());
    p.value = (p.value.cast<double>() - delta).cast<float>();
  }
  return norm;
}

void Adamax::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace adamrc::nn
