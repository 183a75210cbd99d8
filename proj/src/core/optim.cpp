#include "core/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace voxpipe::nn {

Adam::Adam(std::vector<Tensor> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  if (cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1) {
    throw ConfigError("adam betas must lie in [0,1)");
  }
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Tensor& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
    v_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
  }
}

void Adam::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor& p = params_[k];
    const float* g = p.grad_data();
    float* th = p.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    const int64_t n = p.numel();
    for (int64_t i = 0; i < n; ++i) {
      double gi = g ? g[i] : 0.0;
      double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      th[i] = static_cast<float>(th[i] - cfg_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps));
    }
  }
}

std::vector<std::pair<std::string, Tensor>> Adam::state_tensors(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  Tensor t = Tensor::zeros(Shape{1});
  t.data()[0] = static_cast<float>(t_);
  out.emplace_back(prefix + ".t", std::move(t));
  for (size_t k = 0; k < params_.size(); ++k) {
    Tensor tm = Tensor::zeros(params_[k].shape());
    Tensor tv = Tensor::zeros(params_[k].shape());
    std::copy(m_[k].begin(), m_[k].end(), tm.data());
    std::copy(v_[k].begin(), v_[k].end(), tv.data());
    out.emplace_back(prefix + ".m." + std::to_string(k), std::move(tm));
    out.emplace_back(prefix + ".v." + std::to_string(k), std::move(tv));
  }
  return out;
}

void Adam::load_state(const std::string& prefix,
                      const std::vector<std::pair<std::string, Tensor>>& tensors) {
  auto find = [&](const std::string& name) -> const Tensor* {
    for (const auto& [n, t] : tensors) {
      if (n == name) return &t;
    }
    return nullptr;
  };
  const Tensor* ts = find(prefix + ".t");
  if (!ts) throw VoxError("optimizer state missing " + prefix + ".t");
  t_ = static_cast<int64_t>(ts->data()[0]);
  for (size_t k = 0; k < params_.size(); ++k) {
    const Tensor* tm = find(prefix + ".m." + std::to_string(k));
    const Tensor* tv = find(prefix + ".v." + std::to_string(k));
    if (!tm || !tv || tm->shape() != params_[k].shape() ||
        tv->shape() != params_[k].shape()) {
      throw VoxError("optimizer state does not match parameter " + std::to_string(k));
    }
    std::copy(tm->data(), tm->data() + tm->numel(), m_[k].begin());
    std::copy(tv->data(), tv->data() + tv->numel(), v_[k].begin());
  }
}

double cosine_restart_lr(int64_t step, const CosineRestartConfig& cfg) {
  if (cfg.l0 <= 0 || cfg.t_mul < 1.0 || step < 0) {
    throw ConfigError("cosine restart schedule needs l0 > 0, t_mul >= 1, step >= 0");
  }
  double s = static_cast<double>(step);
  double len = cfg.l0;
  double peak = cfg.eta0;
  while (s >= len) {
    s -= len;
    len *= cfg.t_mul;
    peak *= cfg.m_mul;
  }
  double frac = s / len;
  return cfg.alpha + (peak - cfg.alpha) * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

PlateauScheduler::PlateauScheduler(double initial_lr, PlateauConfig cfg)
    : lr_(initial_lr), best_(std::numeric_limits<double>::infinity()), cfg_(cfg) {
  if (cfg_.patience < 1 || cfg_.factor <= 0 || cfg_.factor >= 1) {
    throw ConfigError("plateau scheduler needs patience >= 1 and factor in (0,1)");
  }
}

double PlateauScheduler::update(double metric) {
  if (metric < best_ - cfg_.min_delta) {
    best_ = metric;
    bad_ = 0;
  } else if (++bad_ >= cfg_.patience) {
    lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
    bad_ = 0;
  }
  return lr_;
}

}  // namespace voxpipe::nn
