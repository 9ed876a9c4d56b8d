#include "pve/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "pve/binary_io.hpp"

namespace pve {

std::span<const std::uint8_t> Dataset::frame(std::size_t traj, std::size_t t) const {
  const auto n = info.frame_size();
  return std::span(trajectories.at(traj).pixels).subspan(t * n, n);
}

std::span<const float> Dataset::state(std::size_t traj, std::size_t t) const {
  const auto n = info.state_dim();
  return std::span(trajectories.at(traj).states).subspan(t * n, n);
}

EnvState Dataset::env_state(std::size_t traj, std::size_t t) const {
  const auto s = state(traj, t);
  const auto k = position_count(info.task);
  EnvState out;
  out.q.assign(s.begin(), s.begin() + long(k));
  out.qdot.assign(s.begin() + long(k), s.end());
  return out;
}

std::uint8_t quantize_pixel(float v) { return std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

void frame_to_float(std::span<const std::uint8_t> frame, std::span<float> out) {
  constexpr float inv = 1.0f / 255.0f;
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = float(frame[i]) * inv;
}

Dataset collect(Task task, Camera camera, const EnvConfig& cfg, std::size_t n_traj, std::size_t traj_len,
                std::uint64_t seed) {
  if (n_traj < 1) throw std::invalid_argument("collect: n_traj must be >= 1");
  if (traj_len < 2) throw std::invalid_argument("collect: traj_len must be >= 2");

  Dataset ds;
  ds.info.task = task;
  ds.info.camera = camera;
  ds.info.n_traj = n_traj;
  ds.info.traj_len = traj_len;
  ds.info.height = cfg.height;
  ds.info.width = cfg.width;
  ds.info.channels = 3;
  ds.info.action_dim = action_dim(task);
  ds.info.seed = seed;
  ds.info.timestep = cfg.timestep;

  const std::size_t adim = action_dim(task);
  const std::size_t frame = ds.info.frame_size();
  const std::size_t sdim = ds.info.state_dim();
  ds.trajectories.resize(n_traj);

  for (std::size_t i = 0; i < n_traj; ++i) {
    Rng rng(mix_seed(seed, i));
    Trajectory& tr = ds.trajectories[i];
    tr.pixels.resize((traj_len + 1) * frame);
    tr.actions.resize(traj_len * adim);
    tr.rewards.resize(traj_len);
    tr.states.resize((traj_len + 1) * sdim);

    EnvState s = sample_start(task, cfg, rng);
    auto record = [&](std::size_t t) {
      const Observation obs = render(task, cfg, s, camera);
      std::transform(obs.pixels.begin(), obs.pixels.end(), tr.pixels.begin() + long(t * frame), quantize_pixel);
      float* st = &tr.states[t * sdim];
      for (std::size_t k = 0; k < s.q.size(); ++k) st[k] = float(s.q[k]);
      for (std::size_t k = 0; k < s.qdot.size(); ++k) st[s.q.size() + k] = float(s.qdot[k]);
    };
    record(0);
    std::vector<double> action(adim);
    for (std::size_t t = 0; t < traj_len; ++t) {
      for (std::size_t k = 0; k < adim; ++k) {
        action[k] = uniform(rng, -1.0, 1.0);
        tr.actions[t * adim + k] = float(action[k]);
      }
      s = step(task, cfg, s, action, rng).state;
      tr.rewards[t] = float(reward(task, cfg, s));
      record(t + 1);
    }
  }
  return ds;
}

namespace {

void write_header(std::ostream& os, const DatasetInfo& info) {
  io::put_tag(os, "PVED");
  io::put_u64(os, std::uint64_t(info.task));
  io::put_u64(os, std::uint64_t(info.camera));
  io::put_u64(os, info.n_traj);
  io::put_u64(os, info.traj_len);
  io::put_u64(os, info.height);
  io::put_u64(os, info.width);
  io::put_u64(os, info.channels);
  io::put_u64(os, info.action_dim);
  io::put_u64(os, info.seed);
}

DatasetInfo read_header(io::Reader& in) {
  if (in.tag() != "PVED") throw std::runtime_error(in.what() + ": bad magic");
  DatasetInfo info;
  const auto task = in.u64();
  const auto camera = in.u64();
  if (task > 2) throw std::runtime_error(in.what() + ": unknown task id " + std::to_string(task));
  if (camera > 1) throw std::runtime_error(in.what() + ": unknown camera id " + std::to_string(camera));
  info.task = Task(task);
  info.camera = Camera(camera);
  info.n_traj = in.u64();
  info.traj_len = in.u64();
  info.height = in.u64();
  info.width = in.u64();
  info.channels = in.u64();
  info.action_dim = in.u64();
  info.seed = in.u64();
  if (info.n_traj == 0 || info.traj_len == 0 || info.height == 0 || info.width == 0 || info.channels == 0 ||
      info.height > 4096 || info.width > 4096 || info.channels > 4)
    throw std::runtime_error(in.what() + ": implausible header");
  if (info.action_dim != action_dim(info.task))
    throw std::runtime_error(in.what() + ": action_dim does not match task");
  return info;
}

}  // namespace

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_header(os, ds.info);
  for (const auto& tr : ds.trajectories) {
    os.write(reinterpret_cast<const char*>(tr.pixels.data()), std::streamsize(tr.pixels.size()));
    io::put_f32s(os, tr.actions);
    io::put_f32s(os, tr.rewards);
  }
  io::put_tag(os, "PVES");
  io::put_f64(os, ds.info.timestep);
  io::put_u64(os, ds.info.state_dim());
  for (const auto& tr : ds.trajectories) io::put_f32s(os, tr.states);
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

DatasetInfo read_dataset_info(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset " + path.string());
  io::Reader in(is, "dataset " + path.string());
  return read_header(in);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset " + path.string());
  io::Reader in(is, "dataset " + path.string());
  Dataset ds;
  ds.info = read_header(in);
  const auto& info = ds.info;
  ds.trajectories.resize(info.n_traj);
  for (auto& tr : ds.trajectories) {
    tr.pixels.resize((info.traj_len + 1) * info.frame_size());
    in.bytes(reinterpret_cast<char*>(tr.pixels.data()), tr.pixels.size());
    tr.actions.resize(info.traj_len * info.action_dim);
    in.f32s(tr.actions);
    tr.rewards.resize(info.traj_len);
    in.f32s(tr.rewards);
  }
  const std::string tag = in.tag();
  if (tag == "PVES") {
    ds.info.timestep = in.f64();
    const auto sdim = in.u64();
    if (sdim != info.state_dim()) throw std::runtime_error(in.what() + ": state width does not match task");
    for (auto& tr : ds.trajectories) {
      tr.states.resize((info.traj_len + 1) * sdim);
      in.f32s(tr.states);
    }
  } else if (!tag.empty()) {
    throw std::runtime_error(in.what() + ": unknown trailing section '" + tag + "'");
  }
  return ds;
}

}  // namespace pve
