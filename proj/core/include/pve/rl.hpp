#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pve/adam.hpp"
#include "pve/encoder.hpp"
#include "pve/envs.hpp"
#include "pve/random.hpp"

namespace pve {

/// Discrete action set: {-1, 0, 1} per dimension (3 for pendulum and
/// cart-pole, a 3x3 grid for ball-in-cup), in normalized units.
std::vector<std::vector<double>> discrete_actions(Task task);

struct RLConfig {
  Task task = Task::pendulum;
  Camera camera = Camera::fixed;
  EnvConfig env;
  float alpha = 10.0f;  // velocity scaling applied to encoder outputs
  std::size_t action_repeat = 4;
  std::size_t episode_steps = 200;  // environment steps per episode
  std::size_t episodes_per_epoch = 30;
  std::size_t fitted_passes = 2;
  double reward_scale = 0.01;  // r' = scale * (r - max_reward) <= 0
  double epsilon_start = 0.5;
  double epsilon_end = 0.05;
  std::size_t epsilon_decay_epochs = 30;
  std::size_t hidden = 250;
  AdamHyper adam{1e-3f, 0.9f, 0.999f, 1e-8f};
  std::size_t fit_batch = 128;
  /// Adam steps per fitted pass: one sweep over the replay, capped here.
  std::size_t max_fit_steps = 100;

  static RLConfig defaults_for(Task task, Camera camera, std::size_t resolution = 64);
  double epsilon(std::size_t epoch) const;
  std::size_t decisions_per_episode() const { return episode_steps / action_repeat; }
};

/// Q(s, a) as a sigmoid MLP over [state; one-hot(a)].
class QFunction {
 public:
  QFunction(std::size_t state_dim, std::size_t n_actions, std::size_t hidden, std::uint64_t seed,
            AdamHyper adam = {});

  std::size_t state_dim() const { return state_dim_; }
  std::size_t action_count() const { return n_actions_; }
  Network& network() { return net_; }
  const Network& network() const { return net_; }

  /// [n][state_dim] -> [n][n_actions].
  std::vector<float> values(std::span<const float> states) const;
  /// Argmax with uniform tie-breaking among exactly equal maxima.
  std::size_t greedy(std::span<const float> state, Rng& rng) const;
  /// One Adam step on the mean squared error of Q(states, actions) against
  /// `targets`. Returns the loss before the update, NaN when skipped.
  double fit_step(std::span<const float> states, std::span<const std::uint32_t> actions,
                  std::span<const float> targets);

 private:
  std::vector<float> inputs(std::span<const float> states, std::span<const std::uint32_t> actions) const;

  std::size_t state_dim_;
  std::size_t n_actions_;
  Network net_;
  AdamState adam_;
};

/// Transitions in encoded combined-state space; the full history is kept.
struct Replay {
  std::size_t state_dim = 0;
  std::vector<float> states, next_states;
  std::vector<std::uint32_t> actions;
  std::vector<float> rewards;
  std::vector<std::uint8_t> terminal;

  std::size_t size() const { return actions.size(); }
  void add(std::span<const float> s, std::uint32_t a, float r, std::span<const float> s2, bool done);
};

/// y = r for terminal transitions, r + max_a' Q(s', a') otherwise, clipped
/// to <= 0.
std::vector<float> fitted_targets(const QFunction& q, const Replay& replay, std::span<const std::size_t> rows);

/// Encodes observations into combined states with a frozen encoder.
class StateEncoder {
 public:
  StateEncoder(const EncoderParams& encoder, float alpha) : encoder_(encoder), alpha_(alpha) {}
  std::size_t dim() const { return 2 * encoder_.position_dim; }
  /// [s_p(current); alpha * (s_p(current) - s_p(previous))].
  std::vector<float> operator()(const Observation& previous, const Observation& current) const;

 private:
  const EncoderParams& encoder_;
  float alpha_;
};

struct EpochOutcome {
  std::vector<double> returns;     // per episode, transformed and undiscounted
  std::vector<double> pass_losses;  // mean regression loss per fitted pass
};

/// Collects `episodes_per_epoch` epsilon-greedy episodes into `replay`, then
/// runs the fitted-Q passes.
EpochOutcome nfq_epoch(const StateEncoder& encoder, QFunction& q, Replay& replay, const RLConfig& config,
                       std::size_t epoch, Rng& rng);

/// Fitted-Q passes alone; throws std::invalid_argument on an empty replay.
std::vector<double> fit_q(QFunction& q, const Replay& replay, const RLConfig& config, Rng& rng);

struct CurvePoint {
  std::size_t epoch = 0;
  double mean = 0, stderr_ = 0, min = 0, max = 0;
};

struct LearningCurve {
  std::vector<CurvePoint> points;
  std::vector<std::vector<double>> trial_returns;  // [trial][epoch] mean episode return
  std::vector<std::vector<double>> trial_losses;   // [trial][epoch * passes]
};

/// Statistics across trials for each epoch.
std::vector<CurvePoint> summarize(const std::vector<std::vector<double>>& trial_returns);

/// `encoder` == nullopt selects the baseline: a freshly initialized encoder
/// per trial.
LearningCurve run_learning_curve(const std::optional<EncoderParams>& encoder, const RLConfig& config,
                                 std::size_t n_trials, std::size_t epochs, std::uint64_t seed,
                                 const std::function<void(std::size_t trial, std::size_t epoch, double mean)>& progress = {});

std::string learning_curve_csv(const std::vector<CurvePoint>& points);

}  // namespace pve
