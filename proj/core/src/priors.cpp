#include "pve/priors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "pve/encoder.hpp"

namespace pve {
namespace {

double norm(const float* x, std::size_t n) {
  double s = 0;
  for (std::size_t k = 0; k < n; ++k) s += double(x[k]) * double(x[k]);
  return std::sqrt(s);
}

double sq_norm(const float* x, std::size_t n) {
  double s = 0;
  for (std::size_t k = 0; k < n; ++k) s += double(x[k]) * double(x[k]);
  return s;
}

std::size_t size_of(const PriorBatch& b) { return b.sequences * b.steps * b.dim; }

void require_steps(const PriorBatch& b, std::size_t min_steps, const char* what) {
  if (b.steps < min_steps)
    throw std::invalid_argument(std::string(what) + " needs sequences of at least " + std::to_string(min_steps) +
                                " steps, got " + std::to_string(b.steps));
}

/// Folds velocity/acceleration gradients into a position gradient.
std::vector<float> chain(const PriorBatch& b, const std::vector<float>& dv, const std::vector<float>& da) {
  std::vector<float> dp(size_of(b), 0.0f);
  finite_differences_backward(b.sequences, b.steps, b.dim, b.alpha, dv, da, dp);
  return dp;
}

}  // namespace

PriorBatch make_prior_batch(std::vector<float> positions, std::vector<float> actions, std::size_t sequences,
                            std::size_t steps, std::size_t dim, std::size_t action_dim, float alpha) {
  PriorBatch b;
  b.sequences = sequences;
  b.steps = steps;
  b.dim = dim;
  b.action_dim = action_dim;
  b.alpha = alpha;
  if (positions.size() != sequences * steps * dim)
    throw std::invalid_argument("make_prior_batch: positions must be [sequences][steps][dim]");
  if (actions.size() != sequences * steps * action_dim)
    throw std::invalid_argument("make_prior_batch: actions must be [sequences][steps][action_dim]");
  b.positions = std::move(positions);
  b.actions = std::move(actions);
  b.velocities.resize(b.positions.size());
  b.accelerations.resize(b.positions.size());
  finite_differences(b.positions, sequences, steps, dim, alpha, b.velocities, b.accelerations);
  return b;
}

PriorTerm variation_loss(const PriorBatch& b, bool with_grad) {
  if (b.sequences < 2) throw std::invalid_argument("variation_loss needs at least two sequences");
  PriorTerm out;
  if (with_grad) out.grad.assign(size_of(b), 0.0f);
  const double pairs = double(b.steps) * double(b.sequences * (b.sequences - 1) / 2);
  std::vector<double> diff(b.dim);
  double sum = 0;
  for (std::size_t t = 0; t < b.steps; ++t) {
    for (std::size_t i = 0; i < b.sequences; ++i) {
      const float* pi = &b.positions[(i * b.steps + t) * b.dim];
      for (std::size_t j = i + 1; j < b.sequences; ++j) {
        const float* pj = &b.positions[(j * b.steps + t) * b.dim];
        double d2 = 0;
        for (std::size_t k = 0; k < b.dim; ++k) {
          diff[k] = double(pi[k]) - double(pj[k]);
          d2 += diff[k] * diff[k];
        }
        const double d = std::sqrt(d2);
        const double e = std::exp(-d);
        sum += e;
        if (with_grad && d > 0) {
          const double c = -e / (d * pairs);
          float* gi = &out.grad[(i * b.steps + t) * b.dim];
          float* gj = &out.grad[(j * b.steps + t) * b.dim];
          for (std::size_t k = 0; k < b.dim; ++k) {
            gi[k] += float(c * diff[k]);
            gj[k] -= float(c * diff[k]);
          }
        }
      }
    }
  }
  out.value = sum / pairs;
  return out;
}

PriorTerm slowness_loss(const PriorBatch& b, bool with_grad) {
  require_steps(b, 2, "slowness_loss");
  PriorTerm out;
  if (with_grad) out.grad.assign(size_of(b), 0.0f);
  const double count = double(b.sequences * (b.steps - 1));
  double sum = 0;
  for (std::size_t s = 0; s < b.sequences; ++s)
    for (std::size_t t = 1; t < b.steps; ++t) {
      const std::size_t i = (s * b.steps + t) * b.dim;
      for (std::size_t k = 0; k < b.dim; ++k) {
        const double d = double(b.positions[i + k]) - double(b.positions[i + k - b.dim]);
        sum += d * d;
        if (with_grad) {
          out.grad[i + k] += float(2.0 * d / count);
          out.grad[i + k - b.dim] -= float(2.0 * d / count);
        }
      }
    }
  out.value = sum / count;
  return out;
}

std::pair<PriorTerm, PriorTerm> inertia_losses(const PriorBatch& b, bool with_grad) {
  require_steps(b, 3, "inertia_losses");
  PriorTerm sq, abs;
  const double count = double(b.sequences * (b.steps - 2));
  std::vector<float> da_sq, da_abs;
  if (with_grad) {
    da_sq.assign(size_of(b), 0.0f);
    da_abs.assign(size_of(b), 0.0f);
  }
  for (std::size_t s = 0; s < b.sequences; ++s)
    for (std::size_t t = 2; t < b.steps; ++t) {
      const std::size_t i = (s * b.steps + t) * b.dim;
      const float* a = &b.accelerations[i];
      const double n2 = sq_norm(a, b.dim);
      const double n = std::sqrt(n2);
      sq.value += n2;
      abs.value += n;
      if (with_grad)
        for (std::size_t k = 0; k < b.dim; ++k) {
          da_sq[i + k] = float(2.0 * a[k] / count);
          da_abs[i + k] = n > 0 ? float(a[k] / (n * count)) : 0.0f;
        }
    }
  sq.value /= count;
  abs.value /= count;
  if (with_grad) {
    const std::vector<float> zero(size_of(b), 0.0f);
    sq.grad = chain(b, zero, da_sq);
    abs.grad = chain(b, zero, da_abs);
  }
  return {std::move(sq), std::move(abs)};
}

PriorTerm conservation_loss(const PriorBatch& b, bool with_grad) {
  require_steps(b, 3, "conservation_loss");
  PriorTerm out;
  const double count = double(b.sequences * (b.steps - 2));
  std::vector<float> dv;
  if (with_grad) dv.assign(size_of(b), 0.0f);
  for (std::size_t s = 0; s < b.sequences; ++s)
    for (std::size_t t = 2; t < b.steps; ++t) {
      const std::size_t i = (s * b.steps + t) * b.dim;
      const float* v1 = &b.velocities[i];
      const float* v0 = &b.velocities[i - b.dim];
      const double n1 = norm(v1, b.dim), n0 = norm(v0, b.dim);
      const double d = n1 - n0;
      out.value += d * d;
      if (with_grad) {
        const double c = 2.0 * d / count;
        for (std::size_t k = 0; k < b.dim; ++k) {
          if (n1 > 0) dv[i + k] += float(c * v1[k] / n1);
          if (n0 > 0) dv[i + k - b.dim] -= float(c * v0[k] / n0);
        }
      }
    }
  out.value /= count;
  if (with_grad) out.grad = chain(b, dv, std::vector<float>(size_of(b), 0.0f));
  return out;
}

PriorTerm controlability_loss(const PriorBatch& b, std::size_t i, bool with_grad) {
  if (i >= b.action_dim || i >= b.dim)
    throw std::invalid_argument("controlability_loss: dimension " + std::to_string(i) + " out of range");
  if (b.steps < 3 || b.sequences * (b.steps - 2) < 2)
    throw std::invalid_argument("controlability_loss needs at least two (action, acceleration) samples");
  // Samples: a[s, t, i] paired with s_a[s, t + 1, i] for t = 1 .. steps - 2.
  const std::size_t n = b.sequences * (b.steps - 2);
  double mean_a = 0, mean_s = 0;
  for (std::size_t s = 0; s < b.sequences; ++s)
    for (std::size_t t = 1; t + 1 < b.steps; ++t) {
      mean_a += b.actions[(s * b.steps + t) * b.action_dim + i];
      mean_s += b.accelerations[(s * b.steps + t + 1) * b.dim + i];
    }
  mean_a /= double(n);
  mean_s /= double(n);
  double cov = 0;
  for (std::size_t s = 0; s < b.sequences; ++s)
    for (std::size_t t = 1; t + 1 < b.steps; ++t)
      cov += (b.actions[(s * b.steps + t) * b.action_dim + i] - mean_a) *
             (b.accelerations[(s * b.steps + t + 1) * b.dim + i] - mean_s);
  cov /= double(n);

  PriorTerm out;
  out.value = std::exp(-cov);
  if (with_grad) {
    std::vector<float> da(size_of(b), 0.0f);
    for (std::size_t s = 0; s < b.sequences; ++s)
      for (std::size_t t = 1; t + 1 < b.steps; ++t)
        da[(s * b.steps + t + 1) * b.dim + i] =
            float(-out.value * (b.actions[(s * b.steps + t) * b.action_dim + i] - mean_a) / double(n));
    out.grad = chain(b, std::vector<float>(size_of(b), 0.0f), da);
  }
  return out;
}

LossReport evaluate_priors(const PriorBatch& b, bool with_controlability, PriorGradients* grads) {
  const bool g = grads != nullptr;
  LossReport r;
  auto var = variation_loss(b, g);
  auto slow = slowness_loss(b, g);
  auto [in_sq, in_abs] = inertia_losses(b, g);
  auto cons = conservation_loss(b, g);
  r.variation = var.value;
  r.slowness = slow.value;
  r.inertia = in_sq.value;
  r.inertia_abs = in_abs.value;
  r.conservation = cons.value;
  if (g) {
    grads->variation = std::move(var.grad);
    grads->slowness = std::move(slow.grad);
    grads->inertia = std::move(in_sq.grad);
    grads->inertia_abs = std::move(in_abs.grad);
    grads->conservation = std::move(cons.grad);
    grads->controlability.clear();
  }
  if (with_controlability) {
    const std::size_t dims = std::min(b.action_dim, b.dim);
    for (std::size_t i = 0; i < dims; ++i) {
      auto c = controlability_loss(b, i, g);
      r.controlability.push_back(c.value);
      if (g) grads->controlability.push_back(std::move(c.grad));
    }
  }
  return r;
}

}  // namespace pve
