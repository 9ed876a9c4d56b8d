#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pve/envs.hpp"

namespace pve {

/// One rollout: steps + 1 observations, `steps` actions and rewards, and the
/// ground-truth state behind every observation (evaluation only).
struct Trajectory {
  std::vector<std::uint8_t> pixels;  // [steps + 1][height][width][channels]
  std::vector<float> actions;        // [steps][action_dim]
  std::vector<float> rewards;        // [steps]
  std::vector<float> states;         // [steps + 1][2 * position_count]: q then qdot
};

struct DatasetInfo {
  Task task = Task::pendulum;
  Camera camera = Camera::fixed;
  std::uint64_t n_traj = 0;
  std::uint64_t traj_len = 0;  // actions per trajectory
  std::uint64_t height = 64;
  std::uint64_t width = 64;
  std::uint64_t channels = 3;
  std::uint64_t action_dim = 1;
  std::uint64_t seed = 0;
  double timestep = 0.05;

  std::size_t frame_size() const { return std::size_t(height * width * channels); }
  std::size_t state_dim() const { return 2 * position_count(task); }
};

struct Dataset {
  DatasetInfo info;
  std::vector<Trajectory> trajectories;

  std::span<const std::uint8_t> frame(std::size_t traj, std::size_t t) const;
  std::span<const float> state(std::size_t traj, std::size_t t) const;
  EnvState env_state(std::size_t traj, std::size_t t) const;
};

/// Random-policy data collection. Each trajectory draws its start state from
/// `sample_start` and i.i.d. uniform actions in [-1, 1], using an RNG stream
/// derived from (seed, trajectory index), so the result does not depend on
/// collection order.
Dataset collect(Task task, Camera camera, const EnvConfig& cfg, std::size_t n_traj, std::size_t traj_len,
                std::uint64_t seed);

/// PVED container:
///   "PVED", header of 9 u64 little-endian values (task, camera, n_traj,
///   traj_len, height, width, channels, action_dim, seed), then per trajectory
///   the observations as u8 (value * 255, rounded), actions f32, rewards f32.
///   A trailing "PVES" section carries timestep (f64), state width (u64) and
///   per-trajectory ground-truth states as f32.
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);
/// Header only; does not read the payload.
DatasetInfo read_dataset_info(const std::filesystem::path& path);

/// Converts 8-bit pixels to floats in [0, 1].
void frame_to_float(std::span<const std::uint8_t> frame, std::span<float> out);
std::uint8_t quantize_pixel(float v);

}  // namespace pve
