#include "pve/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace pve {
namespace {

struct EncodedWindow {
  Tape tape;
  PriorBatch batch;
};

EncodedWindow encode_window(const EncoderParams& encoder, const Dataset& data, const BatchWindow& window,
                            const TrainConfig& config, float alpha, Rng* noise) {
  const auto& info = data.info;
  const std::size_t seqs = window.trajectories.size();
  const std::size_t steps = config.batch_steps;
  const std::size_t frame = info.frame_size();
  const std::size_t adim = info.action_dim;
  if (window.offset + steps > info.traj_len + 1) throw std::invalid_argument("batch window exceeds trajectory length");
  if (info.height != encoder.height || info.width != encoder.width || info.channels != encoder.channels)
    throw std::invalid_argument("dataset resolution does not match the encoder input");

  Tensor obs({seqs * steps, std::size_t(info.height), std::size_t(info.width), std::size_t(info.channels)});
  std::vector<float> actions(seqs * steps * adim, 0.0f);
  for (std::size_t b = 0; b < seqs; ++b) {
    const std::size_t traj = window.trajectories[b];
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t src_t = window.offset + t;
      frame_to_float(data.frame(traj, src_t), obs.data().subspan((b * steps + t) * frame, frame));
      if (src_t < info.traj_len)
        for (std::size_t k = 0; k < adim; ++k)
          actions[(b * steps + t) * adim + k] = data.trajectories[traj].actions[src_t * adim + k];
    }
  }

  EncodedWindow out;
  Tensor pos = encoder.network.forward(obs, out.tape);
  std::vector<float> positions(pos.data().begin(), pos.data().end());
  if (noise && config.noise_sigma > 0) {
    std::normal_distribution<float> n(0.0f, config.noise_sigma);
    for (auto& p : positions) p += n(*noise);
  }
  out.batch = make_prior_batch(std::move(positions), std::move(actions), seqs, steps, encoder.position_dim, adim, alpha);
  return out;
}

void axpy(double w, const std::vector<float>& x, std::vector<float>& y) {
  if (w == 0.0 || x.empty()) return;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += float(w) * x[i];
}

double encoder_grad_norm(EncoderParams& encoder, const Tape& tape, const PriorBatch& batch, double w,
                         const std::vector<float>& grad) {
  if (w == 0.0 || grad.empty()) return 0.0;
  encoder.network.zero_grad();
  Tensor upstream({batch.sequences * batch.steps, batch.dim});
  for (std::size_t i = 0; i < grad.size(); ++i) upstream[i] = float(w) * grad[i];
  encoder.network.backward(tape, upstream);
  return std::sqrt(encoder.network.gradient_sq_norm());
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

}  // namespace

LossWeights LossWeights::for_task(Task task) {
  if (task == Task::ball_in_cup) return {1.0, 1.0, 0.001, 0.02, 0.005, 0.5};
  return {1.0, 1.0, 0.1, 0.1, 0.2, 0.0};
}

double combine(const LossReport& r, const LossWeights& w) {
  double total = w.variation * r.variation + w.slowness * r.slowness + w.inertia * r.inertia +
                 w.inertia_abs * r.inertia_abs + w.conservation * r.conservation;
  bool finite = std::isfinite(r.variation) && std::isfinite(r.slowness) && std::isfinite(r.inertia) &&
                std::isfinite(r.inertia_abs) && std::isfinite(r.conservation);
  for (double c : r.controlability) {
    total += w.controlability * c;
    finite = finite && std::isfinite(c);
  }
  return finite && std::isfinite(total) ? total : std::nan("");
}

float Curriculum::alpha_after_phase1(long epochs_into_ramp) const {
  if (epochs_into_ramp < 0) return 0.0f;
  if (ramp_epochs == 0 || std::size_t(epochs_into_ramp) >= ramp_epochs) return alpha_max;
  return float(double(alpha_max) * double(epochs_into_ramp) / double(ramp_epochs));
}

TrainConfig TrainConfig::defaults_for(Task task) {
  TrainConfig c;
  c.task = task;
  c.weights = LossWeights::for_task(task);
  return c;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv, const TrainConfig& base) {
  TrainConfig c = base;
  if (kv.contains("task")) {
    c.task = parse_task(kv.get("task", std::string()));
    if (!kv.contains("w_variation")) c.weights = LossWeights::for_task(c.task);
  }
  auto size = [&](const char* key, std::size_t fallback) {
    const long long v = kv.get(key, (long long)fallback);
    if (v < 0) throw std::invalid_argument(std::string("config key '") + key + "' must be non-negative");
    return std::size_t(v);
  };
  c.batch_sequences = size("batch_sequences", c.batch_sequences);
  c.batch_steps = size("batch_steps", c.batch_steps);
  c.seed = std::uint64_t(size("seed", std::size_t(c.seed)));
  c.adam.learning_rate = float(kv.get("learning_rate", double(c.adam.learning_rate)));
  c.adam.beta1 = float(kv.get("beta1", double(c.adam.beta1)));
  c.adam.beta2 = float(kv.get("beta2", double(c.adam.beta2)));
  c.adam.epsilon = float(kv.get("epsilon", double(c.adam.epsilon)));
  c.weights.variation = kv.get("w_variation", c.weights.variation);
  c.weights.slowness = kv.get("w_slowness", c.weights.slowness);
  c.weights.inertia = kv.get("w_inertia", c.weights.inertia);
  c.weights.inertia_abs = kv.get("w_inertia_abs", c.weights.inertia_abs);
  c.weights.conservation = kv.get("w_conservation", c.weights.conservation);
  c.weights.controlability = kv.get("w_controlability", c.weights.controlability);
  c.curriculum.alpha_max = float(kv.get("alpha_max", double(c.curriculum.alpha_max)));
  c.curriculum.phase1_epochs = size("phase1_epochs", c.curriculum.phase1_epochs);
  c.curriculum.ramp_epochs = size("ramp_epochs", c.curriculum.ramp_epochs);
  c.curriculum.phase2_epochs = size("phase2_epochs", c.curriculum.phase2_epochs);
  c.curriculum.window = size("convergence_window", c.curriculum.window);
  c.curriculum.min_improvement = kv.get("convergence_min_improvement", c.curriculum.min_improvement);
  c.curriculum.ema = kv.get("convergence_ema", c.curriculum.ema);
  c.noise_sigma = float(kv.get("noise_sigma", double(c.noise_sigma)));
  c.checkpoint_every = size("checkpoint_every", c.checkpoint_every);
  if (c.batch_sequences < 2) throw std::invalid_argument("batch_sequences must be >= 2");
  if (c.batch_steps < 3) throw std::invalid_argument("batch_steps must be >= 3");
  return c;
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig kv;
  kv.set("version", "1");
  kv.set("task", std::string(task_name(task)));
  kv.set("batch_sequences", std::to_string(batch_sequences));
  kv.set("batch_steps", std::to_string(batch_steps));
  kv.set("seed", std::to_string(seed));
  kv.set("learning_rate", fmt(adam.learning_rate));
  kv.set("beta1", fmt(adam.beta1));
  kv.set("beta2", fmt(adam.beta2));
  kv.set("epsilon", fmt(adam.epsilon));
  kv.set("w_variation", fmt(weights.variation));
  kv.set("w_slowness", fmt(weights.slowness));
  kv.set("w_inertia", fmt(weights.inertia));
  kv.set("w_inertia_abs", fmt(weights.inertia_abs));
  kv.set("w_conservation", fmt(weights.conservation));
  kv.set("w_controlability", fmt(weights.controlability));
  kv.set("alpha_max", fmt(curriculum.alpha_max));
  kv.set("phase1_epochs", std::to_string(curriculum.phase1_epochs));
  kv.set("ramp_epochs", std::to_string(curriculum.ramp_epochs));
  kv.set("phase2_epochs", std::to_string(curriculum.phase2_epochs));
  kv.set("convergence_window", std::to_string(curriculum.window));
  kv.set("convergence_min_improvement", fmt(curriculum.min_improvement));
  kv.set("convergence_ema", fmt(curriculum.ema));
  kv.set("noise_sigma", fmt(noise_sigma));
  kv.set("checkpoint_every", std::to_string(checkpoint_every));
  return kv;
}

std::vector<BatchWindow> make_batches(const DatasetInfo& info, const TrainConfig& config, std::uint64_t epoch_seed) {
  const std::size_t n = std::size_t(info.n_traj);
  const std::size_t obs_len = std::size_t(info.traj_len) + 1;
  if (config.batch_sequences < 2) throw std::invalid_argument("make_batches: need at least two sequences per batch");
  if (obs_len < config.batch_steps)
    throw std::invalid_argument("make_batches: trajectories have " + std::to_string(obs_len) +
                                " observations, fewer than the batch window of " + std::to_string(config.batch_steps));
  if (n < config.batch_sequences)
    throw std::invalid_argument("make_batches: dataset has " + std::to_string(n) +
                                " trajectories, fewer than one batch of " + std::to_string(config.batch_sequences));

  Rng rng(epoch_seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> offset(0, obs_len - config.batch_steps);

  std::vector<BatchWindow> out(n / config.batch_sequences);
  for (std::size_t b = 0; b < out.size(); ++b) {
    out[b].trajectories.assign(order.begin() + long(b * config.batch_sequences),
                               order.begin() + long((b + 1) * config.batch_sequences));
    out[b].offset = offset(rng);
  }
  return out;
}

LossReport batch_gradients(EncoderParams& encoder, const Dataset& data, const BatchWindow& window,
                           const TrainConfig& config, float alpha, Rng* noise) {
  auto enc = encode_window(encoder, data, window, config, alpha, noise);
  PriorGradients g;
  LossReport r = evaluate_priors(enc.batch, true, &g);
  r.total = combine(r, config.weights);
  encoder.network.zero_grad();
  if (!std::isfinite(r.total)) return r;

  const auto& w = config.weights;
  std::vector<float> total(enc.batch.positions.size(), 0.0f);
  axpy(w.variation, g.variation, total);
  axpy(w.slowness, g.slowness, total);
  axpy(w.inertia, g.inertia, total);
  axpy(w.inertia_abs, g.inertia_abs, total);
  axpy(w.conservation, g.conservation, total);
  for (const auto& c : g.controlability) axpy(w.controlability, c, total);

  encoder.network.backward(enc.tape, Tensor({enc.batch.sequences * enc.batch.steps, enc.batch.dim}, std::move(total)));
  return r;
}

std::string metrics_csv_header(std::size_t dims) {
  std::string h = "step,epoch,phase,alpha,variation,slowness,inertia,inertia_abs,conservation";
  for (std::size_t i = 0; i < dims; ++i) h += ",controlability_" + std::to_string(i);
  return h + ",total,skipped\n";
}

std::string metrics_csv_row(const StepMetrics& m, std::size_t dims) {
  std::ostringstream os;
  os.precision(9);
  const auto& r = m.report;
  os << m.step << ',' << m.epoch << ',' << m.phase << ',' << m.alpha << ',' << r.variation << ',' << r.slowness << ','
     << r.inertia << ',' << r.inertia_abs << ',' << r.conservation;
  for (std::size_t i = 0; i < dims; ++i) os << ',' << (i < r.controlability.size() ? r.controlability[i] : 0.0);
  os << ',' << r.total << ',' << (m.skipped ? 1 : 0) << '\n';
  return os.str();
}

TrainResult train(const Dataset& data, const TrainConfig& config, EncoderParams params,
                  const TrainOptions& options) {
  if (data.info.task != config.task)
    throw std::invalid_argument("train: dataset task '" + std::string(task_name(data.info.task)) +
                                "' does not match config task '" + std::string(task_name(config.task)) + "'");
  TrainResult result;
  result.adam.hyper = config.adam;
  const auto& cur = config.curriculum;
  const std::size_t ctrl_dims = std::min<std::size_t>(data.info.action_dim, params.position_dim);

  std::ofstream metrics;
  if (options.out_dir) {
    std::filesystem::create_directories(*options.out_dir);
    metrics.open(*options.out_dir / "metrics.csv", std::ios::trunc);
    metrics << metrics_csv_header(ctrl_dims);
  }
  EncoderParams last_good = params;
  AdamState last_good_adam = result.adam;
  auto checkpoint = [&](const std::string& name, std::size_t epoch) {
    last_good = params;
    last_good_adam = result.adam;
    if (options.out_dir)
      save_encoder(*options.out_dir / name, params, &result.adam,
                   {{"task", std::string(task_name(config.task))},
                    {"alpha", fmt(cur.alpha_max)},
                    {"epoch", std::to_string(epoch)}});
  };

  int phase = 1;  // 1: alpha = 0, 2: ramp, 3: alpha = alpha_max
  std::size_t phase_start = 0;
  std::vector<double> smoothed;  // per epoch of the current phase
  std::size_t step = 0, nan_streak = 0;
  const std::size_t caps[3] = {cur.phase1_epochs, cur.ramp_epochs, cur.phase2_epochs};

  auto advance_phase = [&](std::size_t epoch) {
    while (phase <= 3 && epoch - phase_start >= caps[phase - 1]) {
      if (phase == 1) result.phase1_end = epoch;
      if (phase == 2) result.ramp_end = epoch;
      phase_start = epoch;
      smoothed.clear();
      ++phase;
    }
  };

  std::size_t epoch = 0;
  advance_phase(epoch);
  while (phase <= 3) {
    const float alpha =
        phase == 1 ? 0.0f : cur.alpha_after_phase1(long(epoch) - long(result.phase1_end.value_or(epoch)));
    Rng noise(mix_seed(config.seed ^ 0x6e6f697365ull, epoch));
    const auto batches = make_batches(data.info, config, mix_seed(config.seed, epoch));
    EpochSummary summary{epoch, phase, alpha, 0.0, 0.0, 0};
    std::size_t applied = 0;
    for (const auto& window : batches) {
      StepMetrics m{step++, epoch, phase, alpha, batch_gradients(params, data, window, config, alpha, &noise), false};
      if (!std::isfinite(m.report.total)) {
        m.skipped = true;
        ++summary.skipped_batches;
        ++result.adam.skipped;
        if (++nan_streak >= 3) {
          result.status = TrainStatus::diverged;
          result.params = std::move(last_good);
          result.adam = std::move(last_good_adam);
          result.steps.push_back(m);
          if (metrics) metrics << metrics_csv_row(m, ctrl_dims);
          return result;
        }
      } else {
        nan_streak = 0;
        if (adam_step(params.network.parameters(), result.adam)) {
          summary.mean_total += m.report.total;
          ++applied;
        } else {
          m.skipped = true;
          ++summary.skipped_batches;
        }
      }
      if (metrics) metrics << metrics_csv_row(m, ctrl_dims);
      result.steps.push_back(std::move(m));
    }
    summary.mean_total = applied ? summary.mean_total / double(applied) : std::nan("");
    const double prev = smoothed.empty() ? summary.mean_total : smoothed.back();
    smoothed.push_back(smoothed.empty() ? summary.mean_total : cur.ema * prev + (1.0 - cur.ema) * summary.mean_total);
    summary.smoothed_total = smoothed.back();
    result.epochs.push_back(summary);
    if (options.on_epoch) options.on_epoch(summary);

    ++epoch;
    bool converged = false;
    if (phase != 2 && cur.window > 0 && smoothed.size() > cur.window) {
      const double before = smoothed[smoothed.size() - 1 - cur.window];
      const double now = smoothed.back();
      converged = std::abs(before) > 0 && (before - now) / std::abs(before) < cur.min_improvement;
    }
    if (config.checkpoint_every && epoch % config.checkpoint_every == 0)
      checkpoint("epoch_" + std::to_string(epoch) + ".pve", epoch);
    if (converged) {
      if (phase == 1) result.phase1_end = epoch;
      if (phase == 3) {
        phase = 4;
        break;
      }
      phase_start = epoch;
      smoothed.clear();
      ++phase;
      checkpoint("phase" + std::to_string(phase - 1) + ".pve", epoch);
    }
    const int before_phase = phase;
    advance_phase(epoch);
    if (phase != before_phase) checkpoint("phase" + std::to_string(before_phase) + ".pve", epoch);
  }
  if (options.out_dir) checkpoint("final.pve", epoch);
  result.params = std::move(params);
  return result;
}

GradientReport gradient_magnitude_report(const Dataset& data, EncoderParams params, const TrainConfig& config,
                                         float alpha) {
  const auto batches = make_batches(data.info, config, mix_seed(config.seed, 0));
  auto enc = encode_window(params, data, batches.front(), config, alpha, nullptr);
  PriorGradients g;
  evaluate_priors(enc.batch, true, &g);
  const auto& w = config.weights;
  GradientReport r;
  r.variation = encoder_grad_norm(params, enc.tape, enc.batch, w.variation, g.variation);
  r.slowness = encoder_grad_norm(params, enc.tape, enc.batch, w.slowness, g.slowness);
  r.inertia = encoder_grad_norm(params, enc.tape, enc.batch, w.inertia, g.inertia);
  r.inertia_abs = encoder_grad_norm(params, enc.tape, enc.batch, w.inertia_abs, g.inertia_abs);
  r.conservation = encoder_grad_norm(params, enc.tape, enc.batch, w.conservation, g.conservation);
  for (const auto& c : g.controlability)
    r.controlability.push_back(encoder_grad_norm(params, enc.tape, enc.batch, w.controlability, c));
  return r;
}

}  // namespace pve
