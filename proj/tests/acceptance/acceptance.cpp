// Acceptance run: one PASS/FAIL line per criterion on stdout, progress and
// measured values on stderr, and a copy of everything in <work-dir>/report.txt.

#include <sys/wait.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "pve/adam.hpp"
#include "pve/encoder.hpp"
#include "pve/eval.hpp"
#include "pve/network.hpp"
#include "pve/priors.hpp"
#include "pve/rl.hpp"
#include "pve/trainer.hpp"

using namespace pve;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr std::size_t kRes = 32;

std::ofstream g_report;

void note(const std::string& line) {
  std::cerr << line << std::endl;
  if (g_report) g_report << "  " << line << '\n' << std::flush;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(5);
  os << v;
  return os.str();
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::vector<std::string> failures;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      failures.push_back(what);
    }
    note(std::string(ok ? "ok    " : "FAIL  ") + what);
  }
};

// ---------------------------------------------------------------------------
// Shared fixtures: datasets and trained encoders, built on first use.

struct TrainedTask {
  Dataset train_data, test_data;
  EncoderParams encoder;
  double seconds = 0;
};

struct Caps {
  std::size_t phase1, ramp, phase2;
};

// At 32x32 the static cart-pole view leaves the pole only 5-11 pixels, too
// few for three stride-2 convolutions to resolve its angle.
std::size_t resolution_for(Task task, Camera camera) {
  return task == Task::cartpole && camera == Camera::fixed ? 64 : kRes;
}

Caps caps_for(Task task) {
  if (task == Task::pendulum) return {30, 10, 30};
  return {15, 10, 15};
}

TrainedTask build_task(Task task, Camera camera) {
  const auto t0 = Clock::now();
  const std::size_t px = resolution_for(task, camera);
  EnvConfig cfg;
  cfg.height = cfg.width = px;
  TrainedTask out{collect(task, camera, cfg, 1000, 20, 1), collect(task, camera, cfg, 100, 20, 2),
                  make_encoder(px, px, 3, 1), 0};
  auto tc = TrainConfig::defaults_for(task);
  const auto caps = caps_for(task);
  tc.curriculum.phase1_epochs = caps.phase1;
  tc.curriculum.ramp_epochs = caps.ramp;
  tc.curriculum.phase2_epochs = caps.phase2;
  tc.checkpoint_every = 0;
  TrainOptions opt;
  const std::string label = std::string(task_name(task)) + "/" + std::string(camera_name(camera)) + " at " +
                            std::to_string(px) + "x" + std::to_string(px);
  opt.on_epoch = [&](const EpochSummary& e) {
    std::cerr << "  [" << label << "] epoch " << e.epoch << " phase " << e.phase << " alpha " << e.alpha << " loss "
              << e.mean_total << '\n';
  };
  auto res = train(out.train_data, tc, out.encoder, opt);
  if (res.status != TrainStatus::completed) throw std::runtime_error(label + ": training diverged");
  out.encoder = std::move(res.params);
  out.seconds = seconds_since(t0);
  note(label + ": collected and trained in " + num(out.seconds) + " s over " + std::to_string(res.epochs.size()) +
       " epochs");
  return out;
}

std::map<std::pair<Task, Camera>, TrainedTask> g_tasks;

const TrainedTask& trained(Task task, Camera camera) {
  auto it = g_tasks.find({task, camera});
  if (it == g_tasks.end()) it = g_tasks.emplace(std::pair{task, camera}, build_task(task, camera)).first;
  return it->second;
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference checks of every layer kind and every prior.

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data()) v = float(uniform(rng, lo, hi));
  return t;
}

std::vector<float> random_values(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::vector<float> out(n);
  Rng rng(seed);
  for (auto& v : out) v = float(uniform(rng, lo, hi));
  return out;
}

// Differences as a function of positions, contracted with fixed weights.
void check_differences(Verdict& v) {
  const std::size_t b = 2, t = 5, d = 3;
  const float alpha = 4.0f;
  std::vector<float> pos = random_values(b * t * d, 51, -1.0, 1.0);
  const auto wv = random_values(b * t * d, 52, -1.0, 1.0), wa = random_values(b * t * d, 53, -1.0, 1.0);
  auto loss = [&] {
    std::vector<float> vel(pos.size()), acc(pos.size());
    finite_differences(pos, b, t, d, alpha, vel, acc);
    double s = 0;
    for (std::size_t s_ = 0; s_ < b; ++s_)
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t k = 0; k < d; ++k) {
          const std::size_t j = (s_ * t + i) * d + k;
          if (i >= 1) s += double(wv[j]) * vel[j];
          if (i >= 2) s += double(wa[j]) * acc[j];
        }
    return s;
  };
  std::vector<float> dv = wv, da = wa;
  for (std::size_t s_ = 0; s_ < b; ++s_)
    for (std::size_t k = 0; k < d; ++k) {
      dv[(s_ * t) * d + k] = 0;
      da[(s_ * t) * d + k] = da[(s_ * t + 1) * d + k] = 0;
    }
  std::vector<float> dp(pos.size(), 0.0f);
  finite_differences_backward(b, t, d, alpha, dv, da, dp);
  const auto g = testing::check_gradient(pos, dp, loss);
  v.require(g.max_rel_error <= 1e-2 && g.cosine_distance <= 1e-3, "finite-difference chain rule: max rel " +
                                                                      num(g.max_rel_error) + ", cosine distance " +
                                                                      num(g.cosine_distance));
}

void check_layer(Verdict& v, const std::string& name, std::vector<LayerSpec> layers, Shape in, std::uint64_t seed,
                 float h) {
  Network net(std::move(layers));
  net.initialize(seed);
  Rng rng(seed + 1);
  for (std::size_t p = 1; p < net.parameters().size(); p += 2)
    for (auto& b : net.parameters()[p].data()) b = float(uniform(rng, -0.1, 0.1));
  Tensor x = random_tensor(std::move(in), seed + 2);
  Tape tape;
  const Tensor y = net.forward(x, tape);
  const Tensor r = random_tensor(y.shape(), seed + 3);
  net.zero_grad();
  const Tensor dx = net.backward(tape, r, true);
  auto loss = [&] {
    const Tensor out = net.forward(x);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += double(out[i]) * r[i];
    return s;
  };
  auto report = [&](const std::string& what, const testing::GradCheck& g) {
    v.require(g.max_rel_error <= 1e-2 && g.cosine_distance <= 1e-3,
              name + " " + what + ": max rel " + num(g.max_rel_error) + ", cosine distance " + num(g.cosine_distance));
  };
  for (std::size_t p = 0; p < net.parameters().size(); ++p) {
    auto& param = net.parameters()[p];
    const std::vector<float> analytic(param.grad().begin(), param.grad().end());
    report(net.parameter_names()[p], testing::check_gradient(param.data(), analytic, loss, h));
  }
  report("input", testing::check_gradient(x.data(), dx.data(), loss, h));
}

void check_prior(Verdict& v, const std::string& name, const std::function<PriorTerm(const PriorBatch&, bool)>& term) {
  const std::size_t b = 4, t = 5, d = 3, adim = 2;
  const float alpha = 3.0f;
  std::vector<float> pos = random_values(b * t * d, 41, -0.3, 0.3);
  const std::vector<float> act = random_values(b * t * adim, 42, -1.0, 1.0);
  auto batch = [&] { return make_prior_batch(pos, act, b, t, d, adim, alpha); };
  const auto analytic = term(batch(), true).grad;
  const auto g = testing::check_gradient(pos, analytic, [&] { return term(batch(), false).value; });
  v.require(g.max_rel_error <= 1e-2 && g.cosine_distance <= 1e-3,
            "prior " + name + ": max rel " + num(g.max_rel_error) + ", cosine distance " + num(g.cosine_distance));
}

Verdict criterion_gradients() {
  Verdict v;
  const auto t0 = Clock::now();
  check_layer(v, "conv2d stride 2", {Conv2d{2, 3, 5, 2}}, {2, 6, 5, 2}, 11, 1e-3f);
  check_layer(v, "conv2d stride 1", {Conv2d{1, 2, 3, 1}}, {1, 5, 4, 1}, 13, 1e-3f);
  check_layer(v, "dense", {Dense{6, 4}}, {3, 6}, 15, 1e-3f);
  check_layer(v, "relu", {Dense{5, 8}, Relu{}, Dense{8, 3}}, {4, 5}, 17, 1e-3f);
  check_layer(v, "sigmoid", {Dense{5, 6}, Sigmoid{}, Dense{6, 2}}, {4, 5}, 19, 1e-2f);
  // Chained convolutions use a smooth activation; differences across a ReLU
  // kink are not a valid reference.
  check_layer(v, "conv sigmoid conv", {Conv2d{3, 4, 5, 2}, Sigmoid{}, Conv2d{4, 4, 5, 2}}, {1, 6, 6, 3}, 21, 1e-2f);
  check_differences(v);
  check_prior(v, "variation", [](const PriorBatch& b, bool g) { return variation_loss(b, g); });
  check_prior(v, "slowness", [](const PriorBatch& b, bool g) { return slowness_loss(b, g); });
  check_prior(v, "inertia", [](const PriorBatch& b, bool g) { return inertia_losses(b, g).first; });
  check_prior(v, "inertia abs", [](const PriorBatch& b, bool g) { return inertia_losses(b, g).second; });
  check_prior(v, "conservation", [](const PriorBatch& b, bool g) { return conservation_loss(b, g); });
  check_prior(v, "controlability 0", [](const PriorBatch& b, bool g) { return controlability_loss(b, 0, g); });
  check_prior(v, "controlability 1", [](const PriorBatch& b, bool g) { return controlability_loss(b, 1, g); });
  const double s = seconds_since(t0);
  v.require(s < 60.0, "runtime " + num(s) + " s < 60 s");
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 2: loss values on the trivial configurations.

Verdict criterion_losses() {
  Verdict v;
  const std::size_t b = 4, t = 6, d = 5;
  auto near = [](double a, double b) { return std::abs(a - b) <= 1e-6; };

  const auto same = make_prior_batch(std::vector<float>(b * t * d, 0.3f), {}, b, t, d, 0, 10.0f);
  const double var = variation_loss(same).value;
  v.require(near(var, 1.0), "variation on identical states = " + num(var));

  const double slow = slowness_loss(same).value;
  v.require(near(slow, 0.0), "slowness on constant sequences = " + num(slow));

  std::vector<float> line(b * t * d);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t k = 0; k < d; ++k) line[(s * t + i) * d + k] = 0.05f * float(i) * float(k + 1) - 0.2f * float(s);
  const auto [sq, ab] = inertia_losses(make_prior_batch(line, {}, b, t, d, 0, 10.0f));
  v.require(near(sq.value, 0.0) && near(ab.value, 0.0),
            "inertia pair on constant velocity = (" + num(sq.value) + ", " + num(ab.value) + ")");

  std::vector<float> circle;
  double x = 0, y = 0;
  for (std::size_t i = 0; i < t; ++i) {
    circle.push_back(float(x));
    circle.push_back(float(y));
    x += 0.1 * std::cos(0.8 * double(i));
    y += 0.1 * std::sin(0.8 * double(i));
  }
  const double cons = conservation_loss(make_prior_batch(circle, {}, 1, t, 2, 0, 10.0f)).value;
  v.require(near(cons, 0.0), "conservation on magnitude-preserving velocity = " + num(cons));

  std::vector<float> varied(b * t * d);
  Rng rng(3);
  for (auto& p : varied) p = float(uniform(rng, -1, 1));
  const auto ctrl_batch = make_prior_batch(varied, std::vector<float>(b * t, 0.7f), b, t, d, 1, 10.0f);
  const double ctrl = controlability_loss(ctrl_batch, 0).value;
  v.require(near(ctrl, 1.0), "controlability on constant actions = " + num(ctrl));
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 3: at alpha = 0 the velocity priors do not change the updates.

Verdict criterion_curriculum() {
  Verdict v;
  EnvConfig cfg;
  cfg.height = cfg.width = kRes;
  const auto data = collect(Task::pendulum, Camera::fixed, cfg, 128, 20, 5);
  auto full = TrainConfig::defaults_for(Task::pendulum);
  full.curriculum.phase1_epochs = 2;
  full.curriculum.ramp_epochs = 0;
  full.curriculum.phase2_epochs = 0;
  full.checkpoint_every = 0;
  auto positional = full;
  positional.weights.inertia = positional.weights.inertia_abs = positional.weights.conservation = 0.0;

  const auto init = make_encoder(kRes, kRes, 3, 9);
  const auto a = train(data, full, init);
  const auto b = train(data, positional, init);
  double max_diff = 0, max_update = 0;
  const auto& pa = a.params.network.parameters();
  const auto& pb = b.params.network.parameters();
  const auto& p0 = init.network.parameters();
  for (std::size_t p = 0; p < pa.size(); ++p)
    for (std::size_t i = 0; i < pa[p].size(); ++i) {
      max_diff = std::max(max_diff, double(std::abs(pa[p][i] - pb[p][i])));
      max_update = std::max(max_update, double(std::abs(pa[p][i] - p0[p][i])));
    }
  v.require(a.steps.size() == 8 && a.steps.size() == b.steps.size(),
            std::to_string(a.steps.size()) + " phase-one updates applied in each run");
  v.require(max_update > 1e-5, "parameters moved (largest update " + num(max_update) + ")");
  v.require(max_diff <= 1e-6, "largest parameter difference with and without velocity priors = " + num(max_diff));
  return v;
}

// ---------------------------------------------------------------------------
// Criteria 4 to 6: structure of the learned states.

double top_k(const PcaResult& r, std::size_t k) {
  double s = 0;
  for (std::size_t i = 0; i < k && i < r.ratios.size(); ++i) s += r.ratios[i];
  return s;
}

PcaResult held_out_pca(const TrainedTask& t) {
  const auto e = embed(t.test_data, t.encoder, 10.0f);
  return pca(e.positions, e.dim);
}

std::string ratios_string(const PcaResult& r) {
  std::string s;
  for (double x : r.ratios) s += (s.empty() ? "" : " ") + num(x);
  return s;
}

Verdict criterion_pendulum_topology() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto& t = trained(Task::pendulum, Camera::fixed);
  const auto r = held_out_pca(t);
  const double total = seconds_since(t0);
  note("pendulum held-out PCA ratios: " + ratios_string(r));
  v.require(top_k(r, 2) >= 0.90, "top-2 explained variance " + num(top_k(r, 2)) + " >= 0.90");
  v.require(total <= 600.0, "collect + train + PCA at 32x32 took " + num(total) + " s <= 600 s");
  return v;
}

Verdict criterion_cartpole_dimensionality() {
  Verdict v;
  for (Camera cam : {Camera::moving, Camera::fixed}) {
    const auto r = held_out_pca(trained(Task::cartpole, cam));
    note(std::string("cartpole/") + std::string(camera_name(cam)) + " held-out PCA ratios: " + ratios_string(r));
    v.require(top_k(r, 3) >= 0.85,
              std::string(camera_name(cam)) + " camera top-3 explained variance " + num(top_k(r, 3)) + " >= 0.85");
  }
  return v;
}

ProbeResult probe_task(const Dataset& train_data, const Dataset& test_data, const EncoderParams& enc) {
  return probe(embed(train_data, enc, 10.0f), embed(test_data, enc, 10.0f), ProbeSpec{});
}

Verdict criterion_probes() {
  Verdict v;
  const auto& pend = trained(Task::pendulum, Camera::fixed);
  const auto res = probe_task(pend.train_data, pend.test_data, pend.encoder);
  for (std::size_t i = 0; i < res.names.size(); ++i) note("pendulum probe " + res.names[i] + " " + num(res.test_mse[i]));
  v.require(res.test_mse[0] <= 0.02, "pendulum cos probe MSE " + num(res.test_mse[0]) + " <= 0.02");
  v.require(res.test_mse[1] <= 0.02, "pendulum sin probe MSE " + num(res.test_mse[1]) + " <= 0.02");
  v.require(res.test_mse[2] <= 0.05, "pendulum angular velocity probe MSE " + num(res.test_mse[2]) + " <= 0.05");

  const auto random_res = probe_task(pend.train_data, pend.test_data, make_encoder(kRes, kRes, 3, 12345));
  for (std::size_t i = 0; i < 2; ++i)
    v.require(random_res.test_mse[i] >= 10.0 * res.test_mse[i],
              "random-encoder " + random_res.names[i] + " probe MSE " + num(random_res.test_mse[i]) +
                  " >= 10x trained " + num(res.test_mse[i]));

  const std::pair<Task, Camera> tasks[] = {{Task::pendulum, Camera::fixed},
                                           {Task::cartpole, Camera::moving},
                                           {Task::cartpole, Camera::fixed},
                                           {Task::ball_in_cup, Camera::fixed}};
  for (const auto& [task, cam] : tasks) {
    const auto& t = trained(task, cam);
    const auto r = probe_task(t.train_data, t.test_data, t.encoder);
    const auto vel = velocity_features(task);
    const std::set<std::size_t> vel_set(vel.begin(), vel.end());
    double pos_mse = 0, vel_mse = 0;
    std::string detail;
    for (std::size_t i = 0; i < r.names.size(); ++i) {
      (vel_set.count(i) ? vel_mse : pos_mse) += r.test_mse[i];
      detail += " " + r.names[i] + "=" + num(r.test_mse[i]);
    }
    pos_mse /= double(r.names.size() - vel.size());
    vel_mse /= double(vel.size());
    const std::string label = std::string(task_name(task)) + "/" + std::string(camera_name(cam));
    note(label + " probe MSE:" + detail);
    v.require(vel_mse >= pos_mse,
              label + " mean velocity probe MSE " + num(vel_mse) + " >= mean position probe MSE " + num(pos_mse));
  }
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 7: fitted-Q control on top of trained versus random encoders.

constexpr std::size_t kTrials = 5, kEpochs = 100, kFinalEpochs = 20;

struct ArmSummary {
  double mean = 0, stderr_ = 0;
  std::vector<double> per_epoch;  // mean across trials
};

ArmSummary run_arm(const std::optional<EncoderParams>& enc, Task task, Camera cam, const std::string& label) {
  const auto t0 = Clock::now();
  const auto cfg = RLConfig::defaults_for(task, cam, resolution_for(task, cam));
  const auto curve = run_learning_curve(enc, cfg, kTrials, kEpochs, 7,
                                        [&](std::size_t trial, std::size_t epoch, double mean) {
                                          if (epoch % 10 == 9)
                                            std::cerr << "  [" << label << "] trial " << trial << " epoch " << epoch
                                                      << " return " << mean << '\n';
                                        });
  ArmSummary s;
  std::vector<double> scores;
  for (const auto& trial : curve.trial_returns)
    scores.push_back(std::accumulate(trial.end() - long(kFinalEpochs), trial.end(), 0.0) / double(kFinalEpochs));
  s.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / double(scores.size());
  double ss = 0;
  for (double x : scores) ss += (x - s.mean) * (x - s.mean);
  s.stderr_ = std::sqrt(ss / double(scores.size() - 1)) / std::sqrt(double(scores.size()));
  for (const auto& p : curve.points) s.per_epoch.push_back(p.mean);
  std::string trials;
  for (double x : scores) trials += " " + num(x);
  note(label + ": final-" + std::to_string(kFinalEpochs) + "-epoch return " + num(s.mean) + " +- " + num(s.stderr_) +
       " (trials:" + trials + ") in " + num(seconds_since(t0)) + " s");
  return s;
}

// One-sided test of a positive slope in an ordinary least-squares fit of
// return against epoch. 1.661 is the 95% t quantile at 98 degrees of freedom.
bool significantly_rising(const std::vector<double>& y, double* slope_out, double* t_out) {
  const double n = double(y.size());
  double mx = (n - 1) / 2.0, my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sxx += (double(i) - mx) * (double(i) - mx);
    sxy += (double(i) - mx) * (y[i] - my);
  }
  const double slope = sxy / sxx;
  double sse = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - (my + slope * (double(i) - mx));
    sse += e * e;
  }
  const double se = std::sqrt(sse / (n - 2) / sxx);
  const double t = se > 0 ? slope / se : (slope > 0 ? INFINITY : 0.0);
  *slope_out = slope;
  *t_out = t;
  return t > 1.661;
}

void separation(Verdict& v, Task task, Camera cam, bool strict) {
  const std::string label = std::string(task_name(task)) + "/" + std::string(camera_name(cam));
  const auto& t = trained(task, cam);
  const auto with = run_arm(t.encoder, task, cam, label + " trained");
  const auto without = run_arm(std::nullopt, task, cam, label + " random");
  if (strict) {
    const double pooled = std::sqrt(with.stderr_ * with.stderr_ + without.stderr_ * without.stderr_);
    v.require(with.mean - without.mean >= 3.0 * pooled, label + ": trained " + num(with.mean) + " exceeds random " +
                                                            num(without.mean) + " by >= 3 x pooled stderr " +
                                                            num(pooled));
  } else {
    v.require(with.mean > without.mean,
              label + ": trained mean return " + num(with.mean) + " > random " + num(without.mean));
  }
  if (task == Task::pendulum) {
    double slope = 0, tstat = 0;
    const bool rising = significantly_rising(without.per_epoch, &slope, &tstat);
    v.require(!rising, label + ": random-encoder slope " + num(slope) + " per epoch, t = " + num(tstat) +
                           " not significantly positive");
  }
}

Verdict criterion_rl() {
  Verdict v;
  separation(v, Task::pendulum, Camera::fixed, true);
  separation(v, Task::cartpole, Camera::moving, true);
  separation(v, Task::ball_in_cup, Camera::fixed, false);
  return v;
}

// ---------------------------------------------------------------------------
// Criterion 8: reruns of the command-line tools reproduce their outputs.

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + PVE_CLI_PATH + "\" " + args + " >> \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Largest absolute difference between numeric CSV fields; infinity when the
// layouts or any non-numeric fields differ.
double csv_distance(const fs::path& a, const fs::path& b) {
  std::istringstream sa(slurp(a)), sb(slurp(b));
  std::string la, lb;
  double worst = 0;
  std::size_t lines = 0;
  while (true) {
    const bool ga = bool(std::getline(sa, la)), gb = bool(std::getline(sb, lb));
    if (ga != gb) return INFINITY;
    if (!ga) break;
    ++lines;
    std::istringstream fa(la), fb(lb);
    std::string xa, xb;
    while (true) {
      const bool ha = bool(std::getline(fa, xa, ',')), hb = bool(std::getline(fb, xb, ','));
      if (ha != hb) return INFINITY;
      if (!ha) break;
      char* ea = nullptr;
      char* eb = nullptr;
      const double da = std::strtod(xa.c_str(), &ea), db = std::strtod(xb.c_str(), &eb);
      if (*ea != '\0' || *eb != '\0' || xa.empty()) {
        if (xa != xb) return INFINITY;
        continue;
      }
      worst = std::max(worst, std::abs(da - db));
    }
  }
  return lines ? worst : INFINITY;
}

Verdict criterion_determinism(const fs::path& work) {
  Verdict v;
  const fs::path dir = work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path log = dir / "cli.log";
  const std::string res = " --resolution " + std::to_string(kRes);
  for (const char* run : {"a", "b"}) {
    const fs::path d = dir / run;
    fs::create_directories(d);
    const std::string train_data = (d / "train.pved").string(), test_data = (d / "test.pved").string();
    v.require(run_cli("collect --task pendulum --n-traj 200 --len 20 --seed 3" + res + " --out " + train_data, log) == 0,
              std::string("collect run ") + run + " exits 0");
    v.require(run_cli("collect --task pendulum --n-traj 50 --len 20 --seed 4" + res + " --out " + test_data, log) == 0,
              std::string("collect held-out run ") + run + " exits 0");
    v.require(run_cli("train --quiet --data " + train_data + " --out-dir " + (d / "train").string() +
                          " --seed 5 --set phase1_epochs=4 --set ramp_epochs=2 --set phase2_epochs=4"
                          " --set checkpoint_every=0",
                      log) == 0,
              std::string("train run ") + run + " exits 0");
    v.require(run_cli("eval --ckpt " + (d / "train" / "final.pve").string() + " --train-data " + train_data +
                          " --test-data " + test_data + " --seed 6 --out-dir " + (d / "eval").string(),
                      log) == 0,
              std::string("eval run ") + run + " exits 0");
  }
  const fs::path a = dir / "a", b = dir / "b";
  v.require(slurp(a / "train.pved") == slurp(b / "train.pved") && slurp(a / "test.pved") == slurp(b / "test.pved"),
            "collect reruns produce identical datasets");
  const double metrics = csv_distance(a / "train" / "metrics.csv", b / "train" / "metrics.csv");
  v.require(metrics <= 1e-6, "train rerun metrics differ by at most " + num(metrics));
  std::size_t epochs = 0;
  {
    std::istringstream is(slurp(a / "train" / "metrics.csv"));
    std::string line;
    std::set<std::string> seen;
    std::getline(is, line);
    while (std::getline(is, line)) seen.insert(line.substr(line.find(',') + 1, line.find(',', line.find(',') + 1) - line.find(',') - 1));
    epochs = seen.size();
  }
  v.require(epochs == 10, "training ran " + std::to_string(epochs) + " epochs");
  for (const char* f : {"pca_ratios.csv", "probe_mse.csv", "embeddings.csv"}) {
    const double d = csv_distance(a / "eval" / f, b / "eval" / f);
    v.require(d <= 1e-6, std::string("eval rerun ") + f + " differs by at most " + num(d));
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria for the position-velocity encoder toolkit"};
  fs::path work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work-dir", work, "Scratch directory for artifacts and the report");
  app.add_option("--only", only, "Run only these criteria (1-8)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  g_report.open(work / "report.txt", std::ios::trunc);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"gradient correctness", criterion_gradients},
      {"loss unit values", criterion_losses},
      {"phase-one curriculum", criterion_curriculum},
      {"pendulum topology", criterion_pendulum_topology},
      {"cart-pole dimensionality", criterion_cartpole_dimensionality},
      {"probe ordering", criterion_probes},
      {"RL separation", criterion_rl},
      {"determinism", [&] { return criterion_determinism(work); }},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = int(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto& [name, fn] = criteria[i];
    std::cerr << "== criterion " << id << ": " << name << std::endl;
    if (g_report) g_report << "criterion " << id << ": " << name << '\n';
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    const std::string line = "criterion " + std::to_string(id) + " (" + name + "): " + (v.pass ? "PASS" : "FAIL") +
                             " [" + num(seconds_since(t0)) + " s]" +
                             (v.failures.empty() ? "" : " - " + v.failures.front());
    std::cout << line << std::endl;
    if (g_report) g_report << line << "\n\n" << std::flush;
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
