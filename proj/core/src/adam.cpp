#include "pve/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace pve {

bool adam_step(std::span<Tensor> params, AdamState& state) {
  for (const auto& p : params) {
    if (!p.has_grad()) throw std::invalid_argument("adam_step: parameter without gradient buffer");
    for (float g : p.grad())
      if (!std::isfinite(g)) {
        ++state.skipped;
        return false;
      }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0f);
      state.v.emplace_back(p.size(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameter set");

  ++state.step;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(double(h.beta1), double(state.step));
  const double c2 = 1.0 - std::pow(double(h.beta2), double(state.step));
  const float step_size = float(double(h.learning_rate) / c1);
  const float inv_c2 = float(1.0 / c2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].data();
    auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != w.size()) throw std::invalid_argument("adam_step: moment size mismatch");
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0f - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0f - h.beta2) * g[k] * g[k];
      w[k] -= step_size * m[k] / (std::sqrt(v[k] * inv_c2) + h.epsilon);
    }
  }
  return true;
}

}  // namespace pve
