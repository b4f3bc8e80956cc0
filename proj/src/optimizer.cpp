#include "jmod2/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace jmod2 {
namespace {

void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                 std::vector<double>& v, const AdamConfig& c, double step_size, double v_correction) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
    p[i] -= step_size * m[i] / (std::sqrt(v[i] / v_correction) + c.epsilon);
  }
}

}  // namespace

Adam::Adam(const ParameterSet& like, AdamConfig config)
    : config_(config), m_(like.zeros_like()), v_(like.zeros_like()) {
  if (!(config_.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
}

void Adam::step(ParameterSet& params, const ParameterSet& grads) {
  if (params.layers.size() != m_.layers.size() || grads.layers.size() != m_.layers.size()) {
    throw ShapeError("optimizer state does not match the parameters");
  }
  ++t_;
  const double step_size = config_.learning_rate / (1.0 - std::pow(config_.beta1, static_cast<double>(t_)));
  const double v_correction = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    adam_update(params.layers[l].weights, grads.layers[l].weights, m_.layers[l].weights, v_.layers[l].weights,
                config_, step_size, v_correction);
    adam_update(params.layers[l].bias, grads.layers[l].bias, m_.layers[l].bias, v_.layers[l].bias, config_,
                step_size, v_correction);
  }
}

}  // namespace jmod2
