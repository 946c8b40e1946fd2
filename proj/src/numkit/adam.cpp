#include "trade/numkit/adam.hpp"

#include <cmath>

#include "trade/errors.hpp"

namespace trade::numkit {

void Adam::step(ParamStore& params, const Gradients& grads) {
  if (grads.size() != params.size()) throw ShapeError("Adam: gradient count differs from parameter count");
  for (std::size_t i = 0; i < params.size(); ++i) require_same_shape(params.value(i), grads[i], "Adam::step");
  if (!grads.all_finite()) throw NumericError("Adam: non-finite gradient, refusing step (training diverged)");

  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Tensor::zeros_like(params.value(i)));
      v_.push_back(Tensor::zeros_like(params.value(i)));
    }
  }

  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params.value(i).data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (1.0 - b1) * g[k];
      v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
      const double mhat = m[k] / c1;
      const double vhat = v[k] / c2;
      p[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace trade::numkit
