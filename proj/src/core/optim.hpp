#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/common.hpp"
#include "core/tensor.hpp"

namespace voxpipe::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-7;
};

// Adam with bias correction. Moments live in float, updates are computed
// in double per element in a fixed order.
class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int64_t step_count() const { return t_; }

  void zero_grad();
  void step();

  // Moments and step counter as named tensors, for checkpointing.
  std::vector<std::pair<std::string, Tensor>> state_tensors(const std::string& prefix) const;
  void load_state(const std::string& prefix,
                  const std::vector<std::pair<std::string, Tensor>>& tensors);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

struct CosineRestartConfig {
  double eta0 = 1e-3;
  double alpha = 1e-6;
  double l0 = 1;      // length of the first cycle, in steps
  double t_mul = 1.5; // each cycle is t_mul times longer than the last
  double m_mul = 1.0; // peak rate decay across cycles
};

// Learning rate at a given 0-based step of a cosine schedule with warm
// restarts. Cycle lengths are real-valued; the step is located inside
// its cycle before the half-cosine is evaluated.
double cosine_restart_lr(int64_t step, const CosineRestartConfig& cfg);

struct PlateauConfig {
  int patience = 5;
  double factor = 0.5;
  double min_delta = 1e-4;
  double min_lr = 0.0;
};

// Reduce-on-plateau for a metric that should decrease. update() is called
// once per epoch; the rate is cut after `patience` consecutive epochs
// without an improvement of at least min_delta.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, PlateauConfig cfg = {});
  double update(double metric);
  double lr() const { return lr_; }

 private:
  double lr_;
  double best_;
  int bad_ = 0;
  PlateauConfig cfg_;
};

}  // namespace voxpipe::nn
