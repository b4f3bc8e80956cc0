#pragma once

#include "jmod2/model.hpp"

namespace jmod2 {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive-moment optimiser with bias-corrected first/second moments.
class Adam {
 public:
  Adam(const ParameterSet& like, AdamConfig config = {});

  void step(ParameterSet& params, const ParameterSet& grads);
  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  ParameterSet m_;
  ParameterSet v_;
  long t_ = 0;
};

}  // namespace jmod2
