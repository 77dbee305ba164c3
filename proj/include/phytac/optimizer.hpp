#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "phytac/errors.hpp"
#include "phytac/rng.hpp"

namespace phytac {

// Adam with bias correction. One state object per parameter block; moment
// buffers are sized on first use and the shape is locked from then on.
class AdamState {
 public:
  explicit AdamState(double lr = 1e-3, double beta1 = 0.9,
                     double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  std::size_t steps() const { return t_; }

  void step(std::vector<double>& params, const std::vector<double>& grad,
            const std::string& block_name = "params") {
    if (m_.empty()) {
      m_.assign(params.size(), 0.0);
      v_.assign(params.size(), 0.0);
    }
    if (params.size() != m_.size() || grad.size() != params.size())
      throw contract_error("adam: size mismatch for block '" + block_name +
                           "': params " + std::to_string(params.size()) +
                           ", grad " + std::to_string(grad.size()) +
                           ", state " + std::to_string(m_.size()));
    for (double g : grad)
      if (!std::isfinite(g))
        throw numeric_error("adam: non-finite gradient in block '" +
                            block_name + "'");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

// Central-difference check of an analytic gradient at `probe_count` random
// coordinates. Returns the worst relative error
//   |analytic - numeric| / max(|numeric|, 1e-8).
// `loss_fn` must be a pure function of the parameter vector.
inline double check_gradient(
    const std::function<double(const std::vector<double>&)>& loss_fn,
    std::vector<double> params, const std::vector<double>& analytic_grad,
    std::size_t probe_count, Rng& rng) {
  if (params.size() != analytic_grad.size())
    throw contract_error("check_gradient: gradient size " +
                         std::to_string(analytic_grad.size()) +
                         " does not match parameter size " +
                         std::to_string(params.size()));
  if (params.empty()) return 0.0;
  double worst = 0.0;
  for (std::size_t probe = 0; probe < probe_count; ++probe) {
    const std::size_t i = rng.uniform_int(params.size());
    const double p0 = params[i];
    const double h = 1e-5 * std::max(1.0, std::abs(p0));
    params[i] = p0 + h;
    const double fp = loss_fn(params);
    params[i] = p0 - h;
    const double fm = loss_fn(params);
    params[i] = p0;
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic_grad[i] - numeric) /
                       std::max(std::abs(numeric), 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace phytac
