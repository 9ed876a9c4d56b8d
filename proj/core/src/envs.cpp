#include "pve/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pve/raster.hpp"

namespace pve {
namespace {

constexpr double kPi = std::numbers::pi;

constexpr Color kBackground{0.08f, 0.08f, 0.10f};
constexpr Color kPole{1.00f, 0.55f, 0.10f};
constexpr Color kPivot{0.55f, 0.55f, 0.55f};
constexpr Color kCart{0.20f, 0.45f, 0.95f};
constexpr Color kPost{0.85f, 0.85f, 0.85f};
constexpr Color kCup{0.95f, 0.85f, 0.15f};
constexpr Color kBall{0.90f, 0.15f, 0.20f};
constexpr Color kString{0.45f, 0.45f, 0.45f};

double clip_action(std::span<const double> action, std::size_t i) {
  if (i >= action.size()) return 0.0;
  const double a = action[i];
  return std::isfinite(a) ? std::clamp(a, -1.0, 1.0) : 0.0;
}

bool finite(const EnvState& s) {
  for (double v : s.q)
    if (!std::isfinite(v)) return false;
  for (double v : s.qdot)
    if (!std::isfinite(v)) return false;
  return true;
}

// Semi-implicit Euler substeps alternate between velocity-first and
// position-first updates. A pair of them composes to Stormer-Verlet, which
// keeps the energy error second order in the step.
void pendulum_substep(const EnvConfig& cfg, EnvState& s, double u, double h, bool position_first) {
  const auto& p = cfg.pendulum;
  if (position_first) s.q[0] = wrap_angle(s.q[0] + h * s.qdot[0]);
  const double inertia = p.mass * p.length * p.length;
  const double torque = u * p.torque_ratio * p.mass * cfg.gravity * p.length;
  const double acc = cfg.gravity / p.length * std::sin(s.q[0]) + torque / inertia - p.damping * s.qdot[0];
  s.qdot[0] += h * acc;
  if (!position_first) s.q[0] = wrap_angle(s.q[0] + h * s.qdot[0]);
}

void cartpole_substep(const EnvConfig& cfg, EnvState& s, double u, double h, bool position_first) {
  const auto& p = cfg.cartpole;
  if (position_first) {
    s.q[0] += h * s.qdot[0];
    s.q[1] = wrap_angle(s.q[1] + h * s.qdot[1]);
  }
  const double total = p.cart_mass + p.pole_mass;
  const double half = 0.5 * p.pole_length;
  const double th = s.q[1], thd = s.qdot[1];
  const double sin_t = std::sin(th), cos_t = std::cos(th);
  const double force = u * p.max_force;
  const double temp = (force + p.pole_mass * half * thd * thd * sin_t) / total;
  const double th_acc =
      (cfg.gravity * sin_t - cos_t * temp) / (half * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total));
  const double x_acc = temp - p.pole_mass * half * th_acc * cos_t / total;

  s.qdot[0] += h * x_acc;
  s.qdot[1] += h * th_acc;
  if (!position_first) {
    s.q[0] += h * s.qdot[0];
    s.q[1] = wrap_angle(s.q[1] + h * s.qdot[1]);
  }
  if (std::abs(s.q[0]) > p.track_half) {
    s.q[0] = std::copysign(p.track_half, s.q[0]);
    s.qdot[0] = 0.0;
  }
}

void ball_in_cup_substep(const EnvConfig& cfg, EnvState& s, double ux, double uy, double h) {
  const auto& p = cfg.ball_in_cup;
  // Cup: bounded force, strong viscous damping, gravity compensated.
  const double ax = (ux * p.max_force - p.cup_damping * s.qdot[0]) / p.cup_mass;
  const double ay = (uy * p.max_force - p.cup_damping * s.qdot[1]) / p.cup_mass;
  s.qdot[0] += h * ax;
  s.qdot[1] += h * ay;
  s.q[0] += h * s.qdot[0];
  s.q[1] += h * s.qdot[1];
  const double range[2] = {p.cup_range_x, p.cup_range_y};
  for (int i = 0; i < 2; ++i) {
    if (std::abs(s.q[std::size_t(i)]) > range[i]) {
      s.q[std::size_t(i)] = std::copysign(range[i], s.q[std::size_t(i)]);
      s.qdot[std::size_t(i)] = 0.0;
    }
  }

  // Ball: free flight under gravity.
  s.qdot[3] -= h * cfg.gravity;
  s.q[2] += h * s.qdot[2];
  s.q[3] += h * s.qdot[3];

  // Inextensible string: pulls only when taut.
  const double dx = s.q[2] - s.q[0], dy = s.q[3] - s.q[1];
  const double dist = std::hypot(dx, dy);
  if (dist > p.string_length) {
    const double nx = dx / dist, ny = dy / dist;
    s.q[2] = s.q[0] + nx * p.string_length;
    s.q[3] = s.q[1] + ny * p.string_length;
    const double radial = (s.qdot[2] - s.qdot[0]) * nx + (s.qdot[3] - s.qdot[1]) * ny;
    if (radial > 0) {
      s.qdot[2] -= radial * nx;
      s.qdot[3] -= radial * ny;
    }
  }
}

struct View {
  Vec2 center;
  double width;
};

View view_for(Task task, const EnvConfig& cfg, const EnvState& s, Camera camera) {
  switch (task) {
    case Task::pendulum:
      return {{0.0, 0.0}, 2.6 * cfg.pendulum.length};
    case Task::cartpole: {
      const auto& p = cfg.cartpole;
      if (camera == Camera::moving) return {{s.q[0], 0.2}, 3.0 * p.pole_length};
      return {{0.0, 0.2}, 2.0 * p.track_half + 2.4 * p.pole_length};
    }
    case Task::ball_in_cup: {
      const auto& p = cfg.ball_in_cup;
      return {{0.0, 0.0}, 2.0 * (p.cup_range_x + p.string_length + p.ball_radius) + 0.1};
    }
  }
  throw std::invalid_argument("unknown task");
}

/// Draws the scene; returns per-object silhouette pixel counts.
std::vector<std::size_t> draw(Task task, const EnvConfig& cfg, const EnvState& s, Camera camera, Canvas& canvas) {
  std::vector<std::size_t> sizes;
  switch (task) {
    case Task::pendulum: {
      const double l = cfg.pendulum.length;
      const Vec2 tip{l * std::sin(s.q[0]), l * std::cos(s.q[0])};
      sizes.push_back(canvas.fill_capsule({0, 0}, tip, 0.08 * l, kPole));
      canvas.fill_disc({0, 0}, 0.05 * l, kPivot);
      break;
    }
    case Task::cartpole: {
      const auto& p = cfg.cartpole;
      // Floor band whose hue encodes world x, plus end posts; this is what
      // reveals the cart position to a camera that follows the cart.
      const double span = p.track_half + 1.5 * p.pole_length;
      canvas.fill_box({0.0, -0.35}, {span, 0.12}, [&](Vec2 w) {
        const float t = float(std::clamp((w.x + span) / (2 * span), 0.0, 1.0));
        return Color{0.15f + 0.7f * t, 0.55f, 0.85f - 0.7f * t};
      });
      for (double side : {-1.0, 1.0})
        canvas.fill_box({side * (p.track_half + 0.3), 0.0}, {0.05, 0.25}, kPost);
      const Vec2 pivot{s.q[0], 0.0};
      const Vec2 tip{s.q[0] + p.pole_length * std::sin(s.q[1]), p.pole_length * std::cos(s.q[1])};
      // The cart goes on top so the pole never hides it.
      sizes.push_back(canvas.fill_capsule(pivot, tip, 0.11 * p.pole_length, kPole));
      sizes.push_back(canvas.fill_box(pivot, {0.4, 0.2}, kCart));
      break;
    }
    case Task::ball_in_cup: {
      const auto& p = cfg.ball_in_cup;
      const Vec2 cup{s.q[0], s.q[1]};
      const Vec2 ball{s.q[2], s.q[3]};
      canvas.fill_capsule(cup, ball, 0.006, kString);
      const double wall = 0.02;
      std::size_t cup_px = 0;
      cup_px += canvas.fill_capsule({cup.x - p.cup_half_width, cup.y}, {cup.x + p.cup_half_width, cup.y}, wall, kCup);
      cup_px += canvas.fill_capsule({cup.x - p.cup_half_width, cup.y},
                                    {cup.x - p.cup_half_width, cup.y + p.cup_height}, wall, kCup);
      cup_px += canvas.fill_capsule({cup.x + p.cup_half_width, cup.y},
                                    {cup.x + p.cup_half_width, cup.y + p.cup_height}, wall, kCup);
      sizes.push_back(cup_px);
      sizes.push_back(canvas.fill_disc(ball, p.ball_radius, kBall));
      break;
    }
  }
  return sizes;
}

}  // namespace

double wrap_angle(double a) {
  if (!std::isfinite(a)) return a;
  a = std::fmod(a + kPi, 2 * kPi);
  if (a <= 0) a += 2 * kPi;
  return a - kPi;
}

std::string_view task_name(Task task) {
  switch (task) {
    case Task::pendulum: return "pendulum";
    case Task::cartpole: return "cartpole";
    case Task::ball_in_cup: return "ball_in_cup";
  }
  return "unknown";
}

std::string_view camera_name(Camera camera) { return camera == Camera::moving ? "moving" : "static"; }

Task parse_task(std::string_view name) {
  if (name == "pendulum") return Task::pendulum;
  if (name == "cartpole" || name == "cart-pole" || name == "cart_pole") return Task::cartpole;
  if (name == "ball_in_cup" || name == "ball-in-cup" || name == "ballincup") return Task::ball_in_cup;
  throw std::invalid_argument("unknown task '" + std::string(name) + "'");
}

Camera parse_camera(std::string_view name) {
  if (name == "static" || name == "fixed") return Camera::fixed;
  if (name == "moving") return Camera::moving;
  throw std::invalid_argument("unknown camera mode '" + std::string(name) + "'");
}

std::size_t action_dim(Task task) { return task == Task::ball_in_cup ? 2 : 1; }

std::size_t position_count(Task task) {
  switch (task) {
    case Task::pendulum: return 1;
    case Task::cartpole: return 2;
    case Task::ball_in_cup: return 4;
  }
  return 0;
}

StepResult step(Task task, const EnvConfig& cfg, const EnvState& state, std::span<const double> action, Rng& rng) {
  if (state.q.size() != position_count(task) || state.qdot.size() != position_count(task))
    throw std::invalid_argument("step: state dimension does not match task " + std::string(task_name(task)));
  StepResult out{state, false};
  const double h = cfg.timestep / std::max(1, cfg.substeps);
  for (int k = 0; k < std::max(1, cfg.substeps); ++k) {
    switch (task) {
      case Task::pendulum: pendulum_substep(cfg, out.state, clip_action(action, 0), h, k % 2 == 1); break;
      case Task::cartpole: cartpole_substep(cfg, out.state, clip_action(action, 0), h, k % 2 == 1); break;
      case Task::ball_in_cup:
        ball_in_cup_substep(cfg, out.state, clip_action(action, 0), clip_action(action, 1), h);
        break;
    }
  }
  if (!finite(out.state)) {
    out.state = sample_start(task, cfg, rng);
    out.reset = true;
  }
  return out;
}

Observation render(Task task, const EnvConfig& cfg, const EnvState& state, Camera camera) {
  const View v = view_for(task, cfg, state, camera);
  Canvas canvas(cfg.height, cfg.width, v.center, v.width, kBackground);
  draw(task, cfg, state, camera, canvas);
  return {cfg.height, cfg.width, canvas.release()};
}

std::vector<std::size_t> silhouette_sizes(Task task, const EnvConfig& cfg, const EnvState& state, Camera camera) {
  const View v = view_for(task, cfg, state, camera);
  Canvas canvas(cfg.height, cfg.width, v.center, v.width, kBackground);
  return draw(task, cfg, state, camera, canvas);
}

double reward(Task task, const EnvConfig& cfg, const EnvState& s) {
  switch (task) {
    case Task::pendulum: return 0.5 * (std::cos(s.q[0]) + 1.0);
    case Task::cartpole: {
      const auto& p = cfg.cartpole;
      const double edge = std::clamp((std::abs(s.q[0]) - 0.8 * p.track_half) / (0.2 * p.track_half), 0.0, 1.0);
      return std::max(0.0, 0.5 * (std::cos(s.q[1]) + 1.0) - 0.5 * edge);
    }
    case Task::ball_in_cup: {
      const auto& p = cfg.ball_in_cup;
      const double rx = s.q[2] - s.q[0], ry = s.q[3] - s.q[1];
      if (std::abs(rx) < p.cup_half_width && ry > 0.0 && ry < p.cup_height) return 1.0;
      const double d = std::hypot(rx, ry - 0.5 * p.cup_height);
      return -std::min(1.0, d / (2.0 * p.string_length));
    }
  }
  return 0.0;
}

double max_reward(Task) { return 1.0; }

EnvState sample_start(Task task, const EnvConfig& cfg, Rng& rng) {
  EnvState s;
  switch (task) {
    case Task::pendulum: {
      const auto& p = cfg.pendulum;
      // (-pi, pi]: reflect the half-open [-pi, pi) draw.
      s.q = {-uniform(rng, -kPi, kPi)};
      s.qdot = {uniform(rng, -p.start_speed, p.start_speed)};
      break;
    }
    case Task::cartpole: {
      const auto& p = cfg.cartpole;
      s.q = {uniform(rng, -p.track_half, p.track_half), -uniform(rng, -kPi, kPi)};
      s.qdot = {uniform(rng, -p.start_cart_speed, p.start_cart_speed),
                uniform(rng, -p.start_pole_speed, p.start_pole_speed)};
      break;
    }
    case Task::ball_in_cup: {
      const auto& p = cfg.ball_in_cup;
      const double cx = uniform(rng, -p.cup_range_x, p.cup_range_x);
      const double cy = uniform(rng, -p.cup_range_y, p.cup_range_y);
      // Uniform over the disc the string allows.
      const double r = p.string_length * std::sqrt(uniform(rng, 0.0, 1.0));
      const double phi = uniform(rng, -kPi, kPi);
      s.q = {cx, cy, cx + r * std::cos(phi), cy + r * std::sin(phi)};
      s.qdot = {uniform(rng, -p.start_cup_speed, p.start_cup_speed),
                uniform(rng, -p.start_cup_speed, p.start_cup_speed),
                uniform(rng, -p.start_ball_speed, p.start_ball_speed),
                uniform(rng, -p.start_ball_speed, p.start_ball_speed)};
      break;
    }
  }
  return s;
}

EnvState rest_start(Task task, const EnvConfig& cfg, Rng& rng) {
  EnvState s;
  switch (task) {
    case Task::pendulum:
      s.q = {wrap_angle(kPi + uniform(rng, -0.1, 0.1))};
      s.qdot = {0.0};
      break;
    case Task::cartpole:
      s.q = {uniform(rng, -0.2, 0.2), wrap_angle(kPi + uniform(rng, -0.1, 0.1))};
      s.qdot = {0.0, 0.0};
      break;
    case Task::ball_in_cup: {
      const auto& p = cfg.ball_in_cup;
      const double cx = uniform(rng, -0.05, 0.05);
      s.q = {cx, 0.0, cx, -p.string_length};
      s.qdot = {0.0, 0.0, 0.0, 0.0};
      break;
    }
  }
  return s;
}

double pendulum_energy(const EnvConfig& cfg, const EnvState& s) {
  const auto& p = cfg.pendulum;
  return 0.5 * p.mass * p.length * p.length * s.qdot[0] * s.qdot[0] +
         p.mass * cfg.gravity * p.length * (1.0 + std::cos(s.q[0]));
}

}  // namespace pve
