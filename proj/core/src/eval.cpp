#include "pve/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pve/random.hpp"

namespace pve {

std::vector<std::string> feature_names(Task task) {
  switch (task) {
    case Task::pendulum: return {"cos_theta", "sin_theta", "theta_dot"};
    case Task::cartpole: return {"x_cart", "cos_theta", "sin_theta", "x_cart_dot", "theta_dot"};
    case Task::ball_in_cup:
      return {"x_cup", "y_cup", "x_ball", "y_ball", "x_cup_dot", "y_cup_dot", "x_ball_dot", "y_ball_dot"};
  }
  return {};
}

std::vector<std::size_t> velocity_features(Task task) {
  switch (task) {
    case Task::pendulum: return {2};
    case Task::cartpole: return {3, 4};
    case Task::ball_in_cup: return {4, 5, 6, 7};
  }
  return {};
}

std::vector<double> true_features(Task task, const EnvState& s) {
  switch (task) {
    case Task::pendulum: return {std::cos(s.q[0]), std::sin(s.q[0]), s.qdot[0]};
    case Task::cartpole: return {s.q[0], std::cos(s.q[1]), std::sin(s.q[1]), s.qdot[0], s.qdot[1]};
    case Task::ball_in_cup: return {s.q[0], s.q[1], s.q[2], s.q[3], s.qdot[0], s.qdot[1], s.qdot[2], s.qdot[3]};
  }
  return {};
}

std::vector<float> Embedding::combined() const {
  std::vector<float> out(rows() * 2 * dim);
  for (std::size_t r = 0; r < rows(); ++r) {
    std::copy_n(&positions[r * dim], dim, &out[r * 2 * dim]);
    std::copy_n(&velocities[r * dim], dim, &out[r * 2 * dim + dim]);
  }
  return out;
}

Embedding embed(const Dataset& data, const EncoderParams& encoder, float alpha) {
  const auto& info = data.info;
  if (info.height != encoder.height || info.width != encoder.width || info.channels != encoder.channels)
    throw std::invalid_argument("embed: dataset resolution does not match the encoder input");
  if (data.trajectories.empty() || data.trajectories.front().states.empty())
    throw std::invalid_argument("embed: dataset carries no ground-truth states");

  Embedding e;
  e.task = info.task;
  e.dim = encoder.position_dim;
  e.feature_names = feature_names(info.task);
  const std::size_t obs_len = std::size_t(info.traj_len) + 1;
  const std::size_t frame = info.frame_size();
  const std::size_t dim = e.dim;

  Tensor obs({obs_len, std::size_t(info.height), std::size_t(info.width), std::size_t(info.channels)});
  for (std::size_t i = 0; i < data.trajectories.size(); ++i) {
    for (std::size_t t = 0; t < obs_len; ++t) frame_to_float(data.frame(i, t), obs.data().subspan(t * frame, frame));
    const Tensor pos = encode(encoder, obs);
    for (std::size_t t = 1; t < obs_len; ++t) {
      e.traj.push_back(i);
      e.step.push_back(t);
      for (std::size_t k = 0; k < dim; ++k) {
        e.positions.push_back(pos[t * dim + k]);
        e.velocities.push_back(alpha * (pos[t * dim + k] - pos[(t - 1) * dim + k]));
      }
      e.rewards.push_back(data.trajectories[i].rewards[t - 1]);
      for (double f : true_features(info.task, data.env_state(i, t))) e.features.push_back(float(f));
    }
  }
  return e;
}

PcaResult pca(std::span<const float> rows, std::size_t dim) {
  if (dim == 0 || rows.size() % dim != 0) throw std::invalid_argument("pca: rows must be [n][dim]");
  const std::size_t n = rows.size() / dim;
  if (n < dim + 1) throw std::invalid_argument("pca: need at least dim + 1 rows");

  Eigen::MatrixXd x{Eigen::Index(n), Eigen::Index(dim)};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < dim; ++k) x(Eigen::Index(r), Eigen::Index(k)) = rows[r * dim + k];
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / double(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca: eigendecomposition failed");

  PcaResult out;
  out.dim = dim;
  out.mean.assign(mean.data(), mean.data() + dim);
  // Eigen sorts ascending.
  Eigen::MatrixXd basis{Eigen::Index(dim), Eigen::Index(dim)};
  double total = 0;
  for (std::size_t k = 0; k < dim; ++k) {
    const auto src = Eigen::Index(dim - 1 - k);
    const double ev = std::max(0.0, solver.eigenvalues()(src));
    out.eigenvalues.push_back(ev);
    total += ev;
    basis.col(Eigen::Index(k)) = solver.eigenvectors().col(src);
  }
  out.degenerate = !(total > 0);
  for (std::size_t k = 0; k < dim; ++k) {
    out.ratios.push_back(out.degenerate ? 0.0 : out.eigenvalues[k] / total);
    for (std::size_t j = 0; j < dim; ++j) out.components.push_back(basis(Eigen::Index(j), Eigen::Index(k)));
  }
  const Eigen::MatrixXd proj = x * basis;
  out.projected.resize(n * dim);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < dim; ++k) out.projected[r * dim + k] = proj(Eigen::Index(r), Eigen::Index(k));
  return out;
}

std::vector<double> pca_reconstruct(const PcaResult& p) {
  const std::size_t dim = p.dim;
  const std::size_t n = p.projected.size() / dim;
  std::vector<double> out(n * dim);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < dim; ++j) {
      double v = p.mean[j];
      for (std::size_t k = 0; k < dim; ++k) v += p.projected[r * dim + k] * p.components[k * dim + j];
      out[r * dim + j] = v;
    }
  return out;
}

std::size_t effective_dim(std::span<const double> ratios, double threshold) {
  double total = 0;
  for (double r : ratios) {
    if (!std::isfinite(r) || r < 0) throw std::invalid_argument("effective_dim: degenerate variance ratios");
    total += r;
  }
  if (ratios.empty() || total <= 0) throw std::invalid_argument("effective_dim: degenerate variance ratios");
  double cum = 0;
  for (std::size_t k = 0; k < ratios.size(); ++k) {
    cum += ratios[k];
    if (cum >= threshold - 1e-12) return k + 1;
  }
  return ratios.size();
}

ProbeResult probe_regression(std::span<const float> train_x, std::span<const float> train_y,
                             std::span<const float> test_x, std::span<const float> test_y, std::size_t in_dim,
                             std::size_t out_dim, const ProbeSpec& spec) {
  const std::size_t n_train = train_x.size() / in_dim;
  const std::size_t n_test = test_x.size() / in_dim;
  if (n_train == 0 || train_y.size() != n_train * out_dim || test_y.size() != n_test * out_dim)
    throw std::invalid_argument("probe: inconsistent train/test array sizes");

  // Standardize targets with training statistics.
  std::vector<double> mu(out_dim, 0.0), sd(out_dim, 0.0);
  for (std::size_t r = 0; r < n_train; ++r)
    for (std::size_t k = 0; k < out_dim; ++k) mu[k] += train_y[r * out_dim + k];
  for (auto& m : mu) m /= double(n_train);
  for (std::size_t r = 0; r < n_train; ++r)
    for (std::size_t k = 0; k < out_dim; ++k) sd[k] += std::pow(train_y[r * out_dim + k] - mu[k], 2);
  for (auto& s : sd) s = std::sqrt(s / double(n_train)) + 1e-12;
  auto standardize = [&](std::span<const float> y) {
    std::vector<float> z(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) z[i] = float((y[i] - mu[i % out_dim]) / sd[i % out_dim]);
    return z;
  };
  const auto zy_train = standardize(train_y);
  const auto zy_test = standardize(test_y);

  std::vector<LayerSpec> layers;
  std::size_t width = in_dim;
  for (std::size_t l = 0; l < spec.hidden_layers; ++l) {
    layers.emplace_back(Dense{width, spec.hidden});
    layers.emplace_back(Relu{});
    width = spec.hidden;
  }
  layers.emplace_back(Dense{width, out_dim});
  Network net(std::move(layers));
  net.initialize(spec.seed);
  AdamState adam;
  adam.hyper.learning_rate = spec.learning_rate;

  Rng rng(mix_seed(spec.seed, 1));
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = n_train;
  const std::size_t batch = std::min(spec.batch, n_train);
  bool diverged = false;
  Tape tape;
  for (std::size_t s = 0; s < spec.steps && !diverged; ++s) {
    Tensor xb({batch, in_dim});
    std::vector<float> yb(batch * out_dim);
    for (std::size_t i = 0; i < batch; ++i) {
      if (cursor == n_train) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t r = order[cursor++];
      std::copy_n(&train_x[r * in_dim], in_dim, &xb[i * in_dim]);
      std::copy_n(&zy_train[r * out_dim], out_dim, &yb[i * out_dim]);
    }
    const Tensor pred = net.forward(xb, tape);
    Tensor grad(pred.shape());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = 2.0f * (pred[i] - yb[i]) / float(grad.size());
    net.zero_grad();
    net.backward(tape, grad);
    diverged = !adam_step(net.parameters(), adam);
  }

  ProbeResult out;
  out.test_mse.assign(out_dim, 0.0);
  out.failed.assign(out_dim, diverged);
  const Tensor pred = net.forward(Tensor({n_test, in_dim}, std::vector<float>(test_x.begin(), test_x.end())));
  for (std::size_t r = 0; r < n_test; ++r)
    for (std::size_t k = 0; k < out_dim; ++k) {
      const double e = double(pred[r * out_dim + k]) - zy_test[r * out_dim + k];
      out.test_mse[k] += e * e;
    }
  for (std::size_t k = 0; k < out_dim; ++k) {
    out.test_mse[k] /= double(n_test);
    if (!std::isfinite(out.test_mse[k])) out.failed[k] = true;
  }
  return out;
}

ProbeResult probe(const Embedding& train, const Embedding& test, const ProbeSpec& spec) {
  if (train.task != test.task || train.dim != test.dim) throw std::invalid_argument("probe: embeddings differ in task");
  auto r = probe_regression(train.combined(), train.features, test.combined(), test.features, 2 * train.dim,
                            train.feature_count(), spec);
  r.names = train.feature_names;
  return r;
}

}  // namespace pve
