#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pve/dataset.hpp"
#include "pve/encoder.hpp"

namespace pve {

/// Ground-truth regression targets per task. Angles appear as (cos, sin).
std::vector<std::string> feature_names(Task task);
std::vector<double> true_features(Task task, const EnvState& state);
/// Indices into feature_names() that are velocities.
std::vector<std::size_t> velocity_features(Task task);

/// One row per (trajectory, t >= 1): encoded position and velocity, the
/// reward received with the observation, and the true features.
struct Embedding {
  Task task = Task::pendulum;
  std::size_t dim = kPositionDim;
  std::vector<std::string> feature_names;
  std::vector<std::size_t> traj, step;
  std::vector<float> positions;   // [rows][dim]
  std::vector<float> velocities;  // [rows][dim]
  std::vector<float> rewards;
  std::vector<float> features;    // [rows][feature_names.size()]

  std::size_t rows() const { return traj.size(); }
  std::size_t feature_count() const { return feature_names.size(); }
  /// [s_p; s_v] rows.
  std::vector<float> combined() const;
};

Embedding embed(const Dataset& data, const EncoderParams& encoder, float alpha);

struct PcaResult {
  std::size_t dim = 0;
  std::vector<double> mean;        // [dim]
  std::vector<double> components;  // [dim][dim], row k = k-th component
  std::vector<double> eigenvalues;  // descending
  std::vector<double> ratios;       // descending, sum to 1 unless degenerate
  std::vector<double> projected;    // [rows][dim]
  bool degenerate = false;          // zero total variance
};

/// Exact eigendecomposition of the sample covariance of `rows` ([n][dim]).
/// Requires n >= dim + 1.
PcaResult pca(std::span<const float> rows, std::size_t dim);
/// Inverse of the projection onto all components.
std::vector<double> pca_reconstruct(const PcaResult& result);

/// Smallest k whose cumulative ratio reaches `threshold`. Throws on
/// degenerate (empty, non-finite or all-zero) ratios.
std::size_t effective_dim(std::span<const double> ratios, double threshold = 0.95);

struct ProbeSpec {
  std::size_t hidden = 256;
  std::size_t hidden_layers = 3;
  std::size_t steps = 200;
  std::size_t batch = 256;
  float learning_rate = 1e-3f;
  std::uint64_t seed = 7;
};

struct ProbeResult {
  std::vector<std::string> names;
  std::vector<double> test_mse;  // on standardized targets
  std::vector<bool> failed;      // NaN during training
};

/// Trains a ReLU MLP from `train_x` to standardized `train_y` and reports the
/// per-target test MSE (targets standardized with the training statistics).
ProbeResult probe_regression(std::span<const float> train_x, std::span<const float> train_y,
                             std::span<const float> test_x, std::span<const float> test_y, std::size_t in_dim,
                             std::size_t out_dim, const ProbeSpec& spec);
/// Probe from combined states to true features.
ProbeResult probe(const Embedding& train, const Embedding& test, const ProbeSpec& spec);

}  // namespace pve
