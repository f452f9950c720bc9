#ifndef MULVULN_OPTIM_HPP
#define MULVULN_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "mulvuln/errors.hpp"

namespace mulvuln {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter first/second moment buffers plus the shared step counter.
struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  bool operator==(const AdamState&) const = default;
};

// One bias-corrected Adam update of a single parameter array at step t >= 1.
inline void adam_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
                      std::span<double> v, std::uint64_t t, const AdamConfig& cfg) {
  if (param.size() != grad.size() || m.size() != param.size() || v.size() != param.size())
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  if (t < 1) throw ConfigError("adam_step: step counter must start at 1");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  const AdamState& state() const { return state_; }
  AdamState& state() { return state_; }

  // Applies one update to every parameter; grads[i] pairs with params[i].
  void step(const std::vector<std::span<double>>& params, const std::vector<std::span<const double>>& grads) {
    if (params.size() != grads.size()) throw ShapeError("adam: parameter and gradient counts differ");
    if (state_.m.empty()) {
      for (const auto& p : params) {
        state_.m.emplace_back(p.size(), 0.0);
        state_.v.emplace_back(p.size(), 0.0);
      }
    }
    if (state_.m.size() != params.size()) throw ShapeError("adam: state does not match parameter list");
    ++state_.step;
    for (std::size_t i = 0; i < params.size(); ++i)
      adam_step(params[i], grads[i], state_.m[i], state_.v[i], state_.step, cfg_);
  }

 private:
  AdamConfig cfg_;
  AdamState state_;
};

}  // namespace mulvuln

#endif  // MULVULN_OPTIM_HPP
