#pragma once

#include <cstdint>
#include <vector>

#include "trade/numkit/params.hpp"

namespace trade::numkit {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam. Moments are created lazily on the first step so one
/// state can be constructed before the parameter shapes are known.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// Applies one update in place. Throws NumericError and leaves both the
  /// parameters and the optimizer state untouched when any gradient entry is
  /// not finite.
  void step(ParamStore& params, const Gradients& grads);

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return t_; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace trade::numkit
