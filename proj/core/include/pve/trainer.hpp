#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pve/adam.hpp"
#include "pve/config.hpp"
#include "pve/dataset.hpp"
#include "pve/encoder.hpp"
#include "pve/priors.hpp"
#include "pve/random.hpp"

namespace pve {

struct LossWeights {
  double variation = 1.0;
  double slowness = 1.0;
  double inertia = 0.1;
  double inertia_abs = 0.1;
  double conservation = 0.2;
  double controlability = 0.0;

  /// Per-task defaults: pendulum and cart-pole share one set, ball-in-cup
  /// weakens the velocity priors and enables controlability.
  static LossWeights for_task(Task task);
};

/// Weighted sum of the prior losses (controlability summed over action
/// dimensions). Returns NaN if any component is non-finite.
double combine(const LossReport& report, const LossWeights& weights);

/// Two-phase velocity-scaling schedule: alpha = 0 until the phase-1 loss
/// converges, a linear ramp to alpha_max over `ramp_epochs`, then alpha_max
/// until phase 2 converges.
struct Curriculum {
  float alpha_max = 10.0f;
  std::size_t phase1_epochs = 100;  // cap
  std::size_t ramp_epochs = 50;
  std::size_t phase2_epochs = 100;  // cap
  std::size_t window = 10;
  double min_improvement = 0.005;  // relative, over `window` epochs
  double ema = 0.9;

  /// Alpha for an epoch `epochs_into_ramp` epochs after phase 1 ended
  /// (negative values are still in phase 1).
  float alpha_after_phase1(long epochs_into_ramp) const;
};

struct TrainConfig {
  Task task = Task::pendulum;
  std::size_t batch_sequences = 32;
  std::size_t batch_steps = 10;
  std::uint64_t seed = 1;
  AdamHyper adam;
  LossWeights weights;
  Curriculum curriculum;
  float noise_sigma = 1e-6f;
  std::size_t checkpoint_every = 10;  // epochs; 0 disables periodic checkpoints

  static TrainConfig defaults_for(Task task);
  /// Reads every field from a flat config; missing keys keep `base` values.
  static TrainConfig from_config(const KeyValueConfig& kv, const TrainConfig& base);
  KeyValueConfig to_config() const;
};

/// One mini-batch: distinct trajectories sharing a window offset.
struct BatchWindow {
  std::vector<std::size_t> trajectories;
  std::size_t offset = 0;
};

/// floor(n_traj / sequences) batches covering a random permutation of the
/// trajectories, each with its own offset in [0, traj_len + 1 - steps].
std::vector<BatchWindow> make_batches(const DatasetInfo& info, const TrainConfig& config, std::uint64_t epoch_seed);

/// Encodes one batch window, evaluates the priors at `alpha`, and leaves the
/// gradient of the weighted total in the encoder parameters' gradient buffers
/// (zeroed first). Position noise is drawn from `noise` when sigma > 0.
LossReport batch_gradients(EncoderParams& encoder, const Dataset& data, const BatchWindow& window,
                           const TrainConfig& config, float alpha, Rng* noise);

struct StepMetrics {
  std::size_t step = 0;
  std::size_t epoch = 0;
  int phase = 1;  // 1, ramp = 2, 3
  float alpha = 0.0f;
  LossReport report;
  bool skipped = false;
};

struct EpochSummary {
  std::size_t epoch = 0;
  int phase = 1;
  float alpha = 0.0f;
  double mean_total = 0.0;
  double smoothed_total = 0.0;
  std::size_t skipped_batches = 0;
};

enum class TrainStatus { completed, diverged };

struct TrainResult {
  TrainStatus status = TrainStatus::completed;
  EncoderParams params;
  AdamState adam;
  std::vector<StepMetrics> steps;
  std::vector<EpochSummary> epochs;
  std::optional<std::size_t> phase1_end;  // first ramp epoch
  std::optional<std::size_t> ramp_end;    // first phase-2 epoch
};

struct TrainOptions {
  std::optional<std::filesystem::path> out_dir;  // checkpoints + metrics.csv
  std::function<void(const EpochSummary&)> on_epoch;
};

/// Runs the curriculum. On divergence (non-finite total loss for three
/// consecutive batches) returns the last good checkpoint with status
/// `diverged`.
TrainResult train(const Dataset& data, const TrainConfig& config, EncoderParams params,
                  const TrainOptions& options = {});

/// Encoder-gradient norm of each weighted prior term on the first batch of
/// an epoch, for manual weight tuning.
struct GradientReport {
  double variation = 0, slowness = 0, inertia = 0, inertia_abs = 0, conservation = 0;
  std::vector<double> controlability;
};
GradientReport gradient_magnitude_report(const Dataset& data, EncoderParams params, const TrainConfig& config,
                                         float alpha);

std::string metrics_csv_header(std::size_t controlability_dims);
std::string metrics_csv_row(const StepMetrics& m, std::size_t controlability_dims);

}  // namespace pve
