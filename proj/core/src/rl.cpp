#include "pve/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pve {

std::vector<std::vector<double>> discrete_actions(Task task) {
  const double levels[] = {-1.0, 0.0, 1.0};
  std::vector<std::vector<double>> out;
  if (action_dim(task) == 1) {
    for (double a : levels) out.push_back({a});
  } else {
    for (double ax : levels)
      for (double ay : levels) out.push_back({ax, ay});
  }
  return out;
}

RLConfig RLConfig::defaults_for(Task task, Camera camera, std::size_t resolution) {
  RLConfig c;
  c.task = task;
  c.camera = camera;
  c.env.height = c.env.width = resolution;
  c.action_repeat = task == Task::ball_in_cup ? 6 : 4;
  return c;
}

double RLConfig::epsilon(std::size_t epoch) const {
  if (epsilon_decay_epochs == 0 || epoch >= epsilon_decay_epochs) return epsilon_end;
  const double f = double(epoch) / double(epsilon_decay_epochs);
  return epsilon_start + (epsilon_end - epsilon_start) * f;
}

namespace {

Network q_network(std::size_t in, std::size_t hidden) {
  return Network({Dense{in, hidden}, Sigmoid{}, Dense{hidden, hidden}, Sigmoid{}, Dense{hidden, 1}});
}

}  // namespace

QFunction::QFunction(std::size_t state_dim, std::size_t n_actions, std::size_t hidden, std::uint64_t seed,
                     AdamHyper adam)
    : state_dim_(state_dim), n_actions_(n_actions), net_(q_network(state_dim + n_actions, hidden)) {
  if (n_actions == 0) throw std::invalid_argument("QFunction: empty action set");
  net_.initialize(seed);
  adam_.hyper = adam;
}

std::vector<float> QFunction::inputs(std::span<const float> states, std::span<const std::uint32_t> actions) const {
  const std::size_t n = actions.size();
  const std::size_t width = state_dim_ + n_actions_;
  std::vector<float> x(n * width, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(&states[i * state_dim_], state_dim_, &x[i * width]);
    x[i * width + state_dim_ + actions[i]] = 1.0f;
  }
  return x;
}

std::vector<float> QFunction::values(std::span<const float> states) const {
  if (states.size() % state_dim_ != 0) throw std::invalid_argument("QFunction::values: ragged state rows");
  const std::size_t n = states.size() / state_dim_;
  if (n == 0) return {};
  std::vector<float> rep(n * n_actions_ * state_dim_);
  std::vector<std::uint32_t> acts(n * n_actions_);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < n_actions_; ++a) {
      std::copy_n(&states[i * state_dim_], state_dim_, &rep[(i * n_actions_ + a) * state_dim_]);
      acts[i * n_actions_ + a] = std::uint32_t(a);
    }
  const Tensor out = net_.forward(Tensor({n * n_actions_, state_dim_ + n_actions_}, inputs(rep, acts)));
  return {out.data().begin(), out.data().end()};
}

std::size_t QFunction::greedy(std::span<const float> state, Rng& rng) const {
  const auto q = values(state);
  const float best = *std::max_element(q.begin(), q.end());
  std::vector<std::size_t> ties;
  for (std::size_t a = 0; a < q.size(); ++a)
    if (q[a] == best) ties.push_back(a);
  if (ties.size() == 1) return ties.front();
  return ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(rng)];
}

double QFunction::fit_step(std::span<const float> states, std::span<const std::uint32_t> actions,
                           std::span<const float> targets) {
  const std::size_t n = actions.size();
  if (n == 0 || targets.size() != n || states.size() != n * state_dim_)
    throw std::invalid_argument("QFunction::fit_step: inconsistent batch");
  Tape tape;
  const Tensor pred = net_.forward(Tensor({n, state_dim_ + n_actions_}, inputs(states, actions)), tape);
  Tensor grad(pred.shape());
  double loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = double(pred[i]) - targets[i];
    loss += e * e;
    grad[i] = float(2.0 * e / double(n));
  }
  net_.zero_grad();
  net_.backward(tape, grad);
  if (!adam_step(net_.parameters(), adam_)) return std::nan("");
  return loss / double(n);
}

void Replay::add(std::span<const float> s, std::uint32_t a, float r, std::span<const float> s2, bool done) {
  if (s.size() != state_dim || s2.size() != state_dim) throw std::invalid_argument("Replay::add: state width");
  states.insert(states.end(), s.begin(), s.end());
  next_states.insert(next_states.end(), s2.begin(), s2.end());
  actions.push_back(a);
  rewards.push_back(r);
  terminal.push_back(done ? 1 : 0);
}

std::vector<float> fitted_targets(const QFunction& q, const Replay& replay, std::span<const std::size_t> rows) {
  const std::size_t d = replay.state_dim;
  std::vector<float> next;
  next.reserve(rows.size() * d);
  for (std::size_t r : rows)
    next.insert(next.end(), replay.next_states.begin() + std::ptrdiff_t(r * d),
                replay.next_states.begin() + std::ptrdiff_t((r + 1) * d));
  const auto qv = q.values(next);
  const std::size_t na = q.action_count();
  std::vector<float> y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    float target = replay.rewards[rows[i]];
    if (!replay.terminal[rows[i]]) target += *std::max_element(&qv[i * na], &qv[i * na] + na);
    y[i] = std::min(target, 0.0f);
  }
  return y;
}

std::vector<float> StateEncoder::operator()(const Observation& previous, const Observation& current) const {
  const std::size_t frame = encoder_.height * encoder_.width * encoder_.channels;
  if (previous.pixels.size() != frame || current.pixels.size() != frame)
    throw std::invalid_argument("StateEncoder: observation does not match the encoder input");
  std::vector<float> px(2 * frame);
  std::copy(previous.pixels.begin(), previous.pixels.end(), px.begin());
  std::copy(current.pixels.begin(), current.pixels.end(), px.begin() + std::ptrdiff_t(frame));
  const Tensor p = encode(encoder_, Tensor({2, encoder_.height, encoder_.width, encoder_.channels}, std::move(px)));
  const std::size_t k = encoder_.position_dim;
  std::vector<float> s(2 * k);
  for (std::size_t i = 0; i < k; ++i) {
    s[i] = p[k + i];
    s[k + i] = alpha_ * (p[k + i] - p[i]);
  }
  return s;
}

std::vector<double> fit_q(QFunction& q, const Replay& replay, const RLConfig& config, Rng& rng) {
  if (replay.size() == 0) throw std::invalid_argument("fit_q: replay is empty");
  const std::size_t n = replay.size();
  const std::size_t batch = std::min(config.fit_batch, n);
  const std::size_t steps = std::min((n + batch - 1) / batch, config.max_fit_steps);
  std::vector<std::size_t> order(n);
  std::vector<double> losses;
  for (std::size_t pass = 0; pass < config.fitted_passes; ++pass) {
    const QFunction frozen = q;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t counted = 0;
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t begin = (s * batch) % n;
      const std::size_t len = std::min(batch, n - begin);
      const std::span<const std::size_t> rows(&order[begin], len);
      const auto y = fitted_targets(frozen, replay, rows);
      std::vector<float> xs;
      std::vector<std::uint32_t> as;
      xs.reserve(len * replay.state_dim);
      for (std::size_t r : rows) {
        xs.insert(xs.end(), replay.states.begin() + std::ptrdiff_t(r * replay.state_dim),
                  replay.states.begin() + std::ptrdiff_t((r + 1) * replay.state_dim));
        as.push_back(replay.actions[r]);
      }
      const double loss = q.fit_step(xs, as, y);
      if (std::isfinite(loss)) {
        total += loss;
        ++counted;
      }
    }
    losses.push_back(counted ? total / double(counted) : std::nan(""));
  }
  return losses;
}

EpochOutcome nfq_epoch(const StateEncoder& encoder, QFunction& q, Replay& replay, const RLConfig& config,
                       std::size_t epoch, Rng& rng) {
  if (config.action_repeat == 0) throw std::invalid_argument("nfq_epoch: action_repeat must be positive");
  const auto actions = discrete_actions(config.task);
  if (actions.size() != q.action_count() || encoder.dim() != q.state_dim())
    throw std::invalid_argument("nfq_epoch: Q-function does not match the task or encoder");
  if (replay.state_dim == 0) replay.state_dim = encoder.dim();
  const double eps = config.epsilon(epoch);
  const double r_max = max_reward(config.task);
  const std::vector<double> idle(action_dim(config.task), 0.0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> any(0, actions.size() - 1);

  EpochOutcome out;
  for (std::size_t ep = 0; ep < config.episodes_per_epoch; ++ep) {
    EnvState state = rest_start(config.task, config.env, rng);
    Observation prev = render(config.task, config.env, state, config.camera);
    state = step(config.task, config.env, state, idle, rng).state;
    Observation cur = render(config.task, config.env, state, config.camera);
    std::vector<float> s = encoder(prev, cur);
    double ret = 0;
    for (std::size_t d = 0; d < config.decisions_per_episode(); ++d) {
      const std::size_t a = coin(rng) < eps ? any(rng) : q.greedy(s, rng);
      double r = 0;
      for (std::size_t k = 0; k < config.action_repeat; ++k) {
        if (k + 1 == config.action_repeat)
          prev = config.action_repeat == 1 ? cur : render(config.task, config.env, state, config.camera);
        state = step(config.task, config.env, state, actions[a], rng).state;
        r += reward(config.task, config.env, state) - r_max;
      }
      cur = render(config.task, config.env, state, config.camera);
      const float r_scaled = float(std::min(0.0, config.reward_scale * r));
      std::vector<float> s2 = encoder(prev, cur);
      replay.add(s, std::uint32_t(a), r_scaled, s2, false);
      ret += r_scaled;
      s = std::move(s2);
    }
    out.returns.push_back(ret);
  }
  out.pass_losses = fit_q(q, replay, config, rng);
  return out;
}

std::vector<CurvePoint> summarize(const std::vector<std::vector<double>>& trial_returns) {
  std::vector<CurvePoint> points;
  if (trial_returns.empty()) return points;
  const std::size_t epochs = trial_returns.front().size();
  const double n = double(trial_returns.size());
  for (std::size_t e = 0; e < epochs; ++e) {
    CurvePoint p;
    p.epoch = e;
    p.min = p.max = trial_returns.front()[e];
    for (const auto& t : trial_returns) {
      p.mean += t[e];
      p.min = std::min(p.min, t[e]);
      p.max = std::max(p.max, t[e]);
    }
    p.mean /= n;
    if (trial_returns.size() > 1) {
      double ss = 0;
      for (const auto& t : trial_returns) ss += (t[e] - p.mean) * (t[e] - p.mean);
      p.stderr_ = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    points.push_back(p);
  }
  return points;
}

LearningCurve run_learning_curve(const std::optional<EncoderParams>& encoder, const RLConfig& config,
                                 std::size_t n_trials, std::size_t epochs, std::uint64_t seed,
                                 const std::function<void(std::size_t, std::size_t, double)>& progress) {
  if (n_trials == 0) throw std::invalid_argument("run_learning_curve: n_trials must be >= 1");
  LearningCurve curve;
  const std::size_t n_actions = discrete_actions(config.task).size();
  for (std::size_t trial = 0; trial < n_trials; ++trial) {
    const std::uint64_t trial_seed = mix_seed(seed, trial);
    const EncoderParams params =
        encoder ? *encoder : make_encoder(config.env.height, config.env.width, 3, mix_seed(trial_seed, 1));
    if (params.height != config.env.height || params.width != config.env.width)
      throw std::invalid_argument("run_learning_curve: encoder resolution differs from the environment");
    const StateEncoder enc(params, config.alpha);
    QFunction q(enc.dim(), n_actions, config.hidden, mix_seed(trial_seed, 2), config.adam);
    Replay replay;
    replay.state_dim = enc.dim();
    Rng rng(mix_seed(trial_seed, 3));
    std::vector<double> returns, losses;
    for (std::size_t e = 0; e < epochs; ++e) {
      const auto o = nfq_epoch(enc, q, replay, config, e, rng);
      const double mean = std::accumulate(o.returns.begin(), o.returns.end(), 0.0) / double(o.returns.size());
      returns.push_back(mean);
      losses.insert(losses.end(), o.pass_losses.begin(), o.pass_losses.end());
      if (progress) progress(trial, e, mean);
    }
    curve.trial_returns.push_back(std::move(returns));
    curve.trial_losses.push_back(std::move(losses));
  }
  curve.points = summarize(curve.trial_returns);
  return curve;
}

std::string learning_curve_csv(const std::vector<CurvePoint>& points) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(9);
  os << "epoch,mean,stderr,min,max\n";
  for (const auto& p : points) os << p.epoch << ',' << p.mean << ',' << p.stderr_ << ',' << p.min << ',' << p.max << '\n';
  return os.str();
}

}  // namespace pve
