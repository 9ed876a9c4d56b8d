#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pve {

/// Encoded mini-batch of `sequences` aligned windows of `steps` observations.
/// All arrays are [sequences][steps][width]; velocity rows at t = 0 and
/// acceleration rows at t < 2 are zero and never read. actions[b][t] is the
/// action applied between observations t and t + 1.
struct PriorBatch {
  std::size_t sequences = 0;
  std::size_t steps = 0;
  std::size_t dim = 0;
  std::size_t action_dim = 0;
  float alpha = 0.0f;
  std::vector<float> positions;
  std::vector<float> velocities;
  std::vector<float> accelerations;
  std::vector<float> actions;

  float position(std::size_t b, std::size_t t, std::size_t k) const { return positions[(b * steps + t) * dim + k]; }
};

/// Builds velocities and accelerations from `positions` by finite differences.
PriorBatch make_prior_batch(std::vector<float> positions, std::vector<float> actions, std::size_t sequences,
                            std::size_t steps, std::size_t dim, std::size_t action_dim, float alpha);

/// A loss value and, when requested, its gradient with respect to the batch
/// positions (already chained through the finite differences).
struct PriorTerm {
  double value = 0.0;
  std::vector<float> grad;
};

/// Mean of exp(-|s_a - s_b|) over all same-timestep pairs of different
/// sequences. Requires at least two sequences.
PriorTerm variation_loss(const PriorBatch& batch, bool with_grad = false);
/// Mean squared distance between consecutive positions. Independent of alpha.
PriorTerm slowness_loss(const PriorBatch& batch, bool with_grad = false);
/// {mean |s_a|^2, mean |s_a|} over all defined accelerations.
std::pair<PriorTerm, PriorTerm> inertia_losses(const PriorBatch& batch, bool with_grad = false);
/// Mean of (|s_v[t]| - |s_v[t-1]|)^2 over consecutive velocity pairs.
PriorTerm conservation_loss(const PriorBatch& batch, bool with_grad = false);
/// exp(-Cov(a[t, i], s_a[t + 1, i])) with the biased covariance over every
/// (sequence, t) sample of the batch.
PriorTerm controlability_loss(const PriorBatch& batch, std::size_t i, bool with_grad = false);

struct LossReport {
  double variation = 0.0;
  double slowness = 0.0;
  double inertia = 0.0;
  double inertia_abs = 0.0;
  double conservation = 0.0;
  std::vector<double> controlability;  // one per constrained action dimension
  double total = 0.0;                  // filled in by the weighted combination
};

/// Per-prior position gradients, index-aligned with LossReport.
struct PriorGradients {
  std::vector<float> variation, slowness, inertia, inertia_abs, conservation;
  std::vector<std::vector<float>> controlability;
};

/// Evaluates every prior. Controlability is evaluated for
/// i < min(action_dim, dim) when `with_controlability` is set.
LossReport evaluate_priors(const PriorBatch& batch, bool with_controlability, PriorGradients* grads = nullptr);

}  // namespace pve
