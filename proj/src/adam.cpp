#include "fairbide/adam.hpp"

#include <cmath>

namespace fairbide {

void AdamState::step(const std::vector<Matrix*>& params,
                     const std::vector<const Matrix*>& grads) {
  if (params.size() != grads.size())
    throw DimensionError("adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Matrix* p : params) {
      m_.emplace_back(p->rows(), p->cols(), 0.0);
      v_.emplace_back(p->rows(), p->cols(), 0.0);
    }
  }
  if (m_.size() != params.size())
    throw DimensionError("adam: parameter count changed between steps");
  ++step_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    const Matrix& g = *grads[k];
    if (!p.same_shape(g) || !p.same_shape(m_[k]))
      throw DimensionError("adam: shape mismatch at parameter " + std::to_string(k));
    double* __restrict__ pd = p.data();
    const double* __restrict__ gd = g.data();
    double* __restrict__ md = m_[k].data();
    double* __restrict__ vd = v_[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      md[i] = cfg_.beta1 * md[i] + (1.0 - cfg_.beta1) * gd[i];
      vd[i] = cfg_.beta2 * vd[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
      const double mhat = md[i] / c1;
      const double vhat = vd[i] / c2;
      pd[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

}  // namespace fairbide
