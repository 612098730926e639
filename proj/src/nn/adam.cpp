#include "itowave/nn/adam.hpp"

#include <cmath>

#include "itowave/errors.hpp"

namespace itowave::nn {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("adam learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be > 0");
  if (step_count < 0) throw ConfigError("adam step_count must be >= 0");
}

void adam_step(std::span<Parameter* const> params, AdamConfig& config) {
  for (const Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) {
      throw ShapeError("gradient shape " + shape_string(p->grad.shape()) + " of '" + p->name +
                       "' differs from value shape " + shape_string(p->value.shape()));
    }
    if (!p->grad.all_finite()) {
      throw NumericalError("non-finite gradient in parameter '" + p->name + "'");
    }
  }
  ++config.step_count;
  const double t = static_cast<double>(config.step_count);
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, t);
  const double c2 = 1.0 - std::pow(b2, t);
  for (Parameter* p : params) {
    if (p->adam_m.shape() != p->value.shape()) p->adam_m = Tensor(p->value.shape());
    if (p->adam_v.shape() != p->value.shape()) p->adam_v = Tensor(p->value.shape());
    double* w = p->value.ptr();
    double* m = p->adam_m.ptr();
    double* v = p->adam_v.ptr();
    const double* g = p->grad.ptr();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

}  // namespace itowave::nn
