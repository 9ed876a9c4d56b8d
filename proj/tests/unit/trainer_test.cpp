#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "pve/trainer.hpp"

using namespace pve;
namespace fs = std::filesystem;

namespace {

const Dataset& small_pendulum() {
  static const Dataset data = [] {
    EnvConfig cfg;
    cfg.height = cfg.width = 16;
    return collect(Task::pendulum, Camera::fixed, cfg, 24, 12, 3);
  }();
  return data;
}

TrainConfig small_config() {
  auto c = TrainConfig::defaults_for(Task::pendulum);
  c.batch_sequences = 8;
  c.batch_steps = 6;
  c.curriculum.phase1_epochs = 2;
  c.curriculum.ramp_epochs = 2;
  c.curriculum.phase2_epochs = 2;
  c.checkpoint_every = 0;
  return c;
}

std::vector<float> encoder_grads(EncoderParams& enc) {
  std::vector<float> out;
  for (auto& p : enc.network.parameters()) out.insert(out.end(), p.grad().begin(), p.grad().end());
  return out;
}

}  // namespace

TEST_CASE("weighted combination") {
  LossReport r;
  r.variation = 0.5;
  r.slowness = 0.25;
  r.inertia = 2.0;
  r.inertia_abs = 1.0;
  r.conservation = 4.0;
  r.controlability = {0.8, 0.6};
  const auto w = LossWeights::for_task(Task::pendulum);
  CHECK(combine(r, w) == doctest::Approx(0.5 + 0.25 + 0.1 * 2.0 + 0.1 * 1.0 + 0.2 * 4.0));
  const auto wb = LossWeights::for_task(Task::ball_in_cup);
  CHECK(combine(r, wb) ==
        doctest::Approx(0.5 + 0.25 + 0.001 * 2.0 + 0.02 * 1.0 + 0.005 * 4.0 + 0.5 * (0.8 + 0.6)));
  r.conservation = std::numeric_limits<double>::infinity();
  CHECK(std::isnan(combine(r, w)));
}

TEST_CASE("make_batches partitions a permutation of the trajectories") {
  DatasetInfo info;
  info.n_traj = 1000;
  info.traj_len = 20;
  TrainConfig c;
  const auto batches = make_batches(info, c, 42);
  CHECK(batches.size() == 31);
  std::set<std::size_t> seen;
  for (const auto& b : batches) {
    CHECK(b.trajectories.size() == 32);
    CHECK(b.offset <= 21 - 10);
    for (auto t : b.trajectories) {
      CHECK(t < 1000);
      CHECK(seen.insert(t).second);
    }
  }
  const auto again = make_batches(info, c, 42);
  for (std::size_t i = 0; i < batches.size(); ++i) {
    CHECK(again[i].trajectories == batches[i].trajectories);
    CHECK(again[i].offset == batches[i].offset);
  }
  const auto other = make_batches(info, c, 43);
  CHECK(other[0].trajectories != batches[0].trajectories);

  info.traj_len = 8;
  CHECK_THROWS_AS(make_batches(info, c, 1), std::invalid_argument);
  info.traj_len = 20;
  info.n_traj = 31;
  CHECK_THROWS_AS(make_batches(info, c, 1), std::invalid_argument);
}

TEST_CASE("curriculum ramp") {
  Curriculum cur;
  cur.alpha_max = 10.0f;
  cur.ramp_epochs = 10;
  CHECK(cur.alpha_after_phase1(-1) == 0.0f);
  CHECK(cur.alpha_after_phase1(0) == 0.0f);
  CHECK(cur.alpha_after_phase1(5) == doctest::Approx(5.0f));
  CHECK(cur.alpha_after_phase1(10) == 10.0f);
  CHECK(cur.alpha_after_phase1(50) == 10.0f);
  cur.ramp_epochs = 0;
  CHECK(cur.alpha_after_phase1(0) == 10.0f);
}

TEST_CASE("config round trip and validation") {
  auto c = small_config();
  c.adam.learning_rate = 3e-4f;
  c.curriculum.alpha_max = 7.0f;
  const auto back = TrainConfig::from_config(c.to_config(), TrainConfig{});
  CHECK(back.batch_sequences == 8);
  CHECK(back.adam.learning_rate == doctest::Approx(3e-4f));
  CHECK(back.curriculum.alpha_max == doctest::Approx(7.0f));
  CHECK(back.curriculum.phase2_epochs == 2);
  CHECK(back.weights.conservation == doctest::Approx(0.2));

  auto kv = KeyValueConfig::parse("task = ball_in_cup\n");
  CHECK(TrainConfig::from_config(kv, TrainConfig{}).weights.controlability == doctest::Approx(0.5));
  CHECK_THROWS_AS(TrainConfig::from_config(KeyValueConfig::parse("batch_sequences = 1\n"), TrainConfig{}),
                  std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_config(KeyValueConfig::parse("batch_steps = -3\n"), TrainConfig{}),
                  std::invalid_argument);
}

TEST_CASE("zero epochs leave the encoder untouched") {
  auto c = small_config();
  c.curriculum.phase1_epochs = c.curriculum.ramp_epochs = c.curriculum.phase2_epochs = 0;
  const auto init = make_encoder(16, 16, 3, 5);
  const auto res = train(small_pendulum(), c, init);
  CHECK(res.status == TrainStatus::completed);
  CHECK(res.epochs.empty());
  for (std::size_t p = 0; p < init.network.parameters().size(); ++p)
    for (std::size_t i = 0; i < init.network.parameters()[p].size(); ++i)
      REQUIRE(res.params.network.parameters()[p][i] == init.network.parameters()[p][i]);
}

TEST_CASE("phase-one gradients contain no velocity-prior contribution") {
  const auto& data = small_pendulum();
  auto c = small_config();
  const auto windows = make_batches(data.info, c, 9);
  auto full = make_encoder(16, 16, 3, 5);
  const auto rep = batch_gradients(full, data, windows[0], c, 0.0f, nullptr);
  CHECK(rep.inertia == 0.0);
  CHECK(rep.conservation == 0.0);

  auto positional = c;
  positional.weights.inertia = positional.weights.inertia_abs = positional.weights.conservation = 0.0;
  auto pos_only = make_encoder(16, 16, 3, 5);
  batch_gradients(pos_only, data, windows[0], positional, 0.0f, nullptr);
  const auto a = encoder_grads(full), b = encoder_grads(pos_only);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);
}

TEST_CASE("training is deterministic for a fixed seed and follows the curriculum") {
  const auto& data = small_pendulum();
  const auto c = small_config();
  const auto a = train(data, c, make_encoder(16, 16, 3, 5));
  const auto b = train(data, c, make_encoder(16, 16, 3, 5));
  REQUIRE(a.epochs.size() == 6);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) CHECK(a.steps[i].report.total == b.steps[i].report.total);
  const auto& pa = a.params.network.parameters();
  const auto& pb = b.params.network.parameters();
  for (std::size_t p = 0; p < pa.size(); ++p)
    for (std::size_t i = 0; i < pa[p].size(); ++i) REQUIRE(pa[p][i] == pb[p][i]);

  CHECK(a.phase1_end == 2);
  CHECK(a.ramp_end == 4);
  CHECK(a.epochs[0].alpha == 0.0f);
  CHECK(a.epochs[1].phase == 1);
  CHECK(a.epochs[2].phase == 2);
  CHECK(a.epochs[2].alpha == 0.0f);
  CHECK(a.epochs[3].alpha == doctest::Approx(5.0f));
  CHECK(a.epochs[4].alpha == 10.0f);
  CHECK(a.epochs[5].phase == 3);
  for (const auto& s : a.steps)
    if (s.phase == 1) CHECK(s.alpha == 0.0f);
}

TEST_CASE("training writes metrics and checkpoints") {
  const auto dir = fs::temp_directory_path() / "pve_unit_train";
  fs::remove_all(dir);
  auto c = small_config();
  c.checkpoint_every = 3;
  TrainOptions opt;
  opt.out_dir = dir;
  train(small_pendulum(), c, make_encoder(16, 16, 3, 5), opt);
  for (const char* name : {"metrics.csv", "epoch_3.pve", "epoch_6.pve", "phase1.pve", "phase2.pve", "final.pve"})
    CHECK_MESSAGE(fs::exists(dir / name), name);
  fs::remove_all(dir);
}

TEST_CASE("gradient report scales linearly with the weights") {
  const auto& data = small_pendulum();
  auto c = small_config();
  const auto enc = make_encoder(16, 16, 3, 5);
  const auto base = gradient_magnitude_report(data, enc, c, 10.0f);
  CHECK(base.variation > 0.0);
  CHECK(base.slowness > 0.0);
  CHECK(base.conservation > 0.0);
  c.weights.slowness *= 2.0;
  c.weights.conservation = 0.0;
  const auto scaled = gradient_magnitude_report(data, enc, c, 10.0f);
  CHECK(scaled.slowness == doctest::Approx(2.0 * base.slowness).epsilon(1e-4));
  CHECK(scaled.conservation == 0.0);
  CHECK(scaled.variation == doctest::Approx(base.variation).epsilon(1e-6));
  const auto at_zero = gradient_magnitude_report(data, enc, small_config(), 0.0f);
  CHECK(at_zero.inertia == 0.0);
  CHECK(at_zero.conservation == 0.0);
}

TEST_CASE("non-finite losses end training as diverged with the last good parameters") {
  auto init = make_encoder(16, 16, 3, 5);
  init.network.parameters().back()[0] = std::numeric_limits<float>::quiet_NaN();
  const auto res = train(small_pendulum(), small_config(), init);
  CHECK(res.status == TrainStatus::diverged);
  CHECK(res.steps.size() == 3);
  for (const auto& s : res.steps) CHECK(s.skipped);
  CHECK(std::isnan(res.params.network.parameters().back()[0]));
}

TEST_CASE("training with the variation prior keeps encodings spread out") {
  const auto& data = small_pendulum();
  auto c = small_config();
  c.curriculum.phase1_epochs = 6;
  c.curriculum.ramp_epochs = 0;
  c.curriculum.phase2_epochs = 0;
  c.adam.learning_rate = 3e-3f;
  const auto res = train(data, c, make_encoder(16, 16, 3, 5));
  REQUIRE(res.status == TrainStatus::completed);
  // A collapsed encoder has variation loss 1.
  CHECK(res.steps.back().report.variation < 0.9);
  CHECK(res.epochs.back().mean_total < res.epochs.front().mean_total);
}
