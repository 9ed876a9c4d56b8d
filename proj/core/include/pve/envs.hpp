#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pve/random.hpp"

namespace pve {

enum class Task { pendulum = 0, cartpole = 1, ball_in_cup = 2 };
enum class Camera { fixed = 0, moving = 1 };

std::string_view task_name(Task task);
std::string_view camera_name(Camera camera);
/// Accepts "pendulum", "cartpole"/"cart-pole", "ball_in_cup"/"ball-in-cup".
Task parse_task(std::string_view name);
/// Accepts "static" and "moving".
Camera parse_camera(std::string_view name);

/// Pendulum: q = {theta}, theta = 0 upright, positive to the right.
struct PendulumParams {
  double mass = 1.0;
  double length = 1.0;
  double damping = 0.0;
  /// Torque limit as a fraction of m*g*l. Constant torque from rest cannot
  /// lift the mass above the pivot when this is below ~0.65.
  double torque_ratio = 0.5;
  double start_speed = 4.0;  // collection starts: |theta_dot| bound
};

/// Cart-pole: q = {x, theta}; theta = 0 upright, the pole joint is passive.
struct CartPoleParams {
  double cart_mass = 1.0;
  double pole_mass = 0.1;
  double pole_length = 1.0;  // full length
  double max_force = 10.0;
  double track_half = 2.0;
  double start_cart_speed = 1.5;
  double start_pole_speed = 4.0;
};

/// Ball-in-cup: q = {cup_x, cup_y, ball_x, ball_y}. The cup position is the
/// center of its bottom, which is also the string anchor.
struct BallInCupParams {
  double cup_mass = 1.0;
  double max_force = 40.0;
  double cup_damping = 10.0;
  double cup_range_x = 0.3;
  double cup_range_y = 0.2;
  double cup_half_width = 0.08;
  double cup_height = 0.1;
  double string_length = 0.25;
  double ball_radius = 0.06;
  double start_cup_speed = 1.0;
  double start_ball_speed = 2.0;
};

struct EnvConfig {
  double gravity = 9.81;
  double timestep = 0.05;
  int substeps = 2;
  std::size_t height = 64;
  std::size_t width = 64;
  PendulumParams pendulum;
  CartPoleParams cartpole;
  BallInCupParams ball_in_cup;
};

struct EnvState {
  std::vector<double> q;
  std::vector<double> qdot;
};

/// RGB image, row-major [height][width][3], entries in [0, 1].
struct Observation {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;
};

std::size_t action_dim(Task task);
std::size_t position_count(Task task);

struct StepResult {
  EnvState state;
  bool reset = false;  // the state went non-finite and was resampled
};

/// Advances one timestep (cfg.substeps semi-implicit Euler substeps).
/// Actions are normalized to [-1, 1] per dimension and clipped.
StepResult step(Task task, const EnvConfig& cfg, const EnvState& state, std::span<const double> action, Rng& rng);

Observation render(Task task, const EnvConfig& cfg, const EnvState& state, Camera camera);

/// Pixels covered by each drawn object (pole, cart, cup, ball...). Used to
/// check that nothing leaves the canvas.
std::vector<std::size_t> silhouette_sizes(Task task, const EnvConfig& cfg, const EnvState& state, Camera camera);

/// Bounded task reward. Pendulum and cart-pole lie in [0, 1], ball-in-cup in
/// [-1, 1].
double reward(Task task, const EnvConfig& cfg, const EnvState& state);
double max_reward(Task task);

/// Collection start distribution: positions uniform over the reachable range,
/// velocities uniform over a bounded range.
EnvState sample_start(Task task, const EnvConfig& cfg, Rng& rng);
/// Control start state: pendulum / pole hanging down, ball hanging under the
/// cup, small positional jitter.
EnvState rest_start(Task task, const EnvConfig& cfg, Rng& rng);

/// Mechanical energy of the pendulum, potential measured from the lowest
/// point of the mass.
double pendulum_energy(const EnvConfig& cfg, const EnvState& state);

/// Wraps to (-pi, pi].
double wrap_angle(double a);

}  // namespace pve
