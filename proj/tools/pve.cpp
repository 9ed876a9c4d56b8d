// pve: collect data, train position-velocity encoders, evaluate them and run
// fitted-Q control on top. Every command writes a JSON run manifest.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "pve/checkpoint.hpp"
#include "pve/config.hpp"
#include "pve/dataset.hpp"
#include "pve/encoder.hpp"
#include "pve/eval.hpp"
#include "pve/rl.hpp"
#include "pve/trainer.hpp"

#ifndef PVE_VERSION
#define PVE_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

using namespace pve;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Loader failures (missing files, bad magic, truncated payloads) are data
// errors regardless of the exception type the library throws.
template <class F>
auto load_or_fail(const fs::path& path, F&& f) {
  if (!fs::exists(path)) throw DataError("no such file: " + path.string());
  try {
    return f(path);
  } catch (const std::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string fnv1a64(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= std::uint8_t(buf[i]);
      h *= 1099511628211ull;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

class Manifest {
 public:
  explicit Manifest(std::string command) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["version"] = PVE_VERSION;
    doc_["config"] = json::object();
    doc_["seeds"] = json::object();
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::array();
  }
  void config(const std::string& k, json v) { doc_["config"][k] = std::move(v); }
  void seed(const std::string& k, std::uint64_t v) { doc_["seeds"][k] = v; }
  void input(const fs::path& p) { doc_["inputs"][p.string()] = {{"fnv1a64", fnv1a64(p)}}; }
  void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  void timing(const std::string& k, double seconds) { doc_["timings"][k] = seconds; }
  void write(const fs::path& path) {
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    doc_["timings"]["total_seconds"] = total;
    std::ofstream(path) << doc_.dump(2) << '\n';
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

std::ostringstream csv_stream() {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(9);
  return os;
}

fs::path sidecar_manifest(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

KeyValueConfig overrides_from(const std::vector<std::string>& sets) {
  KeyValueConfig kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--set", "expected key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return kv;
}

float alpha_from(const std::map<std::string, std::string>& meta, float fallback) {
  const auto it = meta.find("alpha");
  return it == meta.end() ? fallback : std::stof(it->second);
}

std::string embedding_csv(const Embedding& e) {
  auto os = csv_stream();
  os << "traj,t";
  for (std::size_t k = 0; k < e.dim; ++k) os << ",s_p" << k;
  for (std::size_t k = 0; k < e.dim; ++k) os << ",s_v" << k;
  os << ",reward";
  for (const auto& f : e.feature_names) os << ',' << f;
  os << '\n';
  for (std::size_t r = 0; r < e.rows(); ++r) {
    os << e.traj[r] << ',' << e.step[r];
    for (std::size_t k = 0; k < e.dim; ++k) os << ',' << e.positions[r * e.dim + k];
    for (std::size_t k = 0; k < e.dim; ++k) os << ',' << e.velocities[r * e.dim + k];
    os << ',' << e.rewards[r];
    for (std::size_t k = 0; k < e.feature_count(); ++k) os << ',' << e.features[r * e.feature_count() + k];
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------- collect

struct CollectArgs {
  std::string task = "pendulum", camera = "static";
  std::size_t n_traj = 1000, len = 20, resolution = 64;
  std::uint64_t seed = 1;
  fs::path out;
};

int run_collect(const CollectArgs& a) {
  Manifest m("collect");
  EnvConfig cfg;
  cfg.height = cfg.width = a.resolution;
  const Task task = parse_task(a.task);
  const Camera camera = parse_camera(a.camera);
  m.config("task", a.task);
  m.config("camera", a.camera);
  m.config("n_traj", a.n_traj);
  m.config("len", a.len);
  m.config("resolution", a.resolution);
  m.seed("collect", a.seed);
  const auto ds = collect(task, camera, cfg, a.n_traj, a.len, a.seed);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  save_dataset(a.out, ds);
  m.output(a.out);
  m.write(sidecar_manifest(a.out));
  std::cout << "wrote " << a.n_traj << " trajectories to " << a.out.string() << '\n';
  return 0;
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  fs::path data, config, out_dir;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string task;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  Manifest m("train");
  const auto ds = load_or_fail(a.data, [](const fs::path& p) { return load_dataset(p); });
  KeyValueConfig kv;
  if (!a.config.empty()) kv = load_or_fail(a.config, [](const fs::path& p) { return KeyValueConfig::load(p); });
  kv.merge(overrides_from(a.sets));
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  if (!a.task.empty()) kv.set("task", a.task);
  if (kv.contains("task") && parse_task(kv.get("task", std::string())) != ds.info.task)
    throw DataError("config task does not match the dataset task");
  TrainConfig tc;
  try {
    tc = TrainConfig::from_config(kv, TrainConfig::defaults_for(ds.info.task));
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("--config", e.what());
  }
  m.input(a.data);
  if (!a.config.empty()) m.input(a.config);
  const KeyValueConfig snapshot = tc.to_config();
  for (const auto& [k, v] : snapshot.values()) m.config(k, v);
  m.seed("train", tc.seed);

  fs::create_directories(a.out_dir);
  write_text(a.out_dir / "config.txt", snapshot.to_string());
  auto enc = make_encoder(ds.info.height, ds.info.width, ds.info.channels, tc.seed);
  TrainOptions opts;
  opts.out_dir = a.out_dir;
  if (!a.quiet)
    opts.on_epoch = [](const EpochSummary& s) {
      std::cout << "epoch " << s.epoch << " phase " << s.phase << " alpha " << s.alpha << " loss " << s.mean_total
                << " smoothed " << s.smoothed_total << '\n';
    };
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = train(ds, tc, std::move(enc), opts);
  m.timing("train_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  for (const auto& e : fs::directory_iterator(a.out_dir))
    if (e.path().filename() != "manifest.json") m.output(e.path());
  m.config("epochs_run", result.epochs.size());
  m.write(a.out_dir / "manifest.json");
  if (result.status == TrainStatus::diverged) throw NumericError("training diverged; last good checkpoint kept");
  return 0;
}

// ------------------------------------------------------------------ embed

struct EmbedArgs {
  fs::path ckpt, data, out;
  std::optional<float> alpha;
};

int run_embed(const EmbedArgs& a) {
  Manifest m("embed");
  std::map<std::string, std::string> meta;
  const auto enc = load_or_fail(a.ckpt, [&](const fs::path& p) { return load_encoder(p, nullptr, &meta); });
  const auto ds = load_or_fail(a.data, [](const fs::path& p) { return load_dataset(p); });
  const float alpha = a.alpha.value_or(alpha_from(meta, 10.0f));
  m.input(a.ckpt);
  m.input(a.data);
  m.config("alpha", alpha);
  const auto e = embed(ds, enc, alpha);
  write_text(a.out, embedding_csv(e));
  m.output(a.out);
  m.write(sidecar_manifest(a.out));
  return 0;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
  fs::path ckpt, train_data, test_data, out_dir;
  std::optional<float> alpha;
  std::uint64_t seed = 7;
  std::size_t probe_steps = 200;
};

int run_eval(const EvalArgs& a) {
  Manifest m("eval");
  std::map<std::string, std::string> meta;
  const auto enc = load_or_fail(a.ckpt, [&](const fs::path& p) { return load_encoder(p, nullptr, &meta); });
  const auto train_ds = load_or_fail(a.train_data, [](const fs::path& p) { return load_dataset(p); });
  const auto test_ds = load_or_fail(a.test_data, [](const fs::path& p) { return load_dataset(p); });
  if (train_ds.info.task != test_ds.info.task) throw DataError("train and test datasets differ in task");
  const float alpha = a.alpha.value_or(alpha_from(meta, 10.0f));
  m.input(a.ckpt);
  m.input(a.train_data);
  m.input(a.test_data);
  m.config("alpha", alpha);
  m.config("probe_steps", a.probe_steps);
  m.seed("probe", a.seed);

  const auto train_e = embed(train_ds, enc, alpha);
  const auto test_e = embed(test_ds, enc, alpha);
  const auto p = pca(test_e.positions, test_e.dim);
  fs::create_directories(a.out_dir);

  write_text(a.out_dir / "embeddings.csv", embedding_csv(test_e));
  {
    auto os = csv_stream();
    os << "component,eigenvalue,ratio,cumulative\n";
    double cum = 0;
    for (std::size_t k = 0; k < p.dim; ++k) {
      cum += p.ratios[k];
      os << k << ',' << p.eigenvalues[k] << ',' << p.ratios[k] << ',' << cum << '\n';
    }
    write_text(a.out_dir / "pca_ratios.csv", os.str());
  }
  {
    auto os = csv_stream();
    os << "x,y,reward\n";
    for (std::size_t r = 0; r < test_e.rows(); ++r)
      os << p.projected[r * p.dim] << ',' << p.projected[r * p.dim + 1] << ',' << test_e.rewards[r] << '\n';
    write_text(a.out_dir / "projection.csv", os.str());
  }
  ProbeSpec spec;
  spec.seed = a.seed;
  spec.steps = a.probe_steps;
  const auto res = probe(train_e, test_e, spec);
  bool failed = false;
  {
    auto os = csv_stream();
    os << "feature,test_mse,failed\n";
    for (std::size_t k = 0; k < res.names.size(); ++k) {
      os << res.names[k] << ',' << res.test_mse[k] << ',' << (res.failed[k] ? 1 : 0) << '\n';
      failed = failed || res.failed[k];
    }
    write_text(a.out_dir / "probe_mse.csv", os.str());
  }
  for (const char* f : {"embeddings.csv", "pca_ratios.csv", "projection.csv", "probe_mse.csv"})
    m.output(a.out_dir / f);
  if (!p.degenerate) {
    const std::size_t k = effective_dim(p.ratios);
    m.config("effective_dim", k);
    std::cout << "effective dimensionality (95%): " << k << '\n';
  }
  for (std::size_t k = 0; k < res.names.size(); ++k)
    std::cout << res.names[k] << " probe mse " << res.test_mse[k] << '\n';
  m.write(a.out_dir / "manifest.json");
  if (p.degenerate) throw NumericError("position states have zero variance; PCA ratios undefined");
  if (failed) throw NumericError("probe training produced NaN");
  return 0;
}

// --------------------------------------------------------------------- rl

struct RLArgs {
  fs::path ckpt, out;
  bool random_encoder = false;
  std::string task = "pendulum", camera = "static";
  std::size_t trials = 5, epochs = 100;
  std::optional<std::size_t> resolution;
  std::uint64_t seed = 1;
  std::vector<std::string> sets;
  bool quiet = false;
};

int run_rl(const RLArgs& a) {
  Manifest m("rl");
  std::optional<EncoderParams> enc;
  std::map<std::string, std::string> meta;
  if (!a.random_encoder) {
    enc = load_or_fail(a.ckpt, [&](const fs::path& p) { return load_encoder(p, nullptr, &meta); });
    m.input(a.ckpt);
    if (a.resolution && *a.resolution != enc->height)
      throw CLI::ValidationError("--resolution", "does not match the checkpoint");
  }
  const Task task = parse_task(a.task);
  RLConfig cfg = RLConfig::defaults_for(task, parse_camera(a.camera), enc ? enc->height : a.resolution.value_or(64));
  cfg.alpha = alpha_from(meta, cfg.alpha);
  const auto kv = overrides_from(a.sets);
  try {
    cfg.episodes_per_epoch = std::size_t(kv.get("episodes_per_epoch", (long long)cfg.episodes_per_epoch));
    cfg.max_fit_steps = std::size_t(kv.get("max_fit_steps", (long long)cfg.max_fit_steps));
    cfg.fit_batch = std::size_t(kv.get("fit_batch", (long long)cfg.fit_batch));
    cfg.reward_scale = kv.get("reward_scale", cfg.reward_scale);
    cfg.epsilon_start = kv.get("epsilon_start", cfg.epsilon_start);
    cfg.epsilon_end = kv.get("epsilon_end", cfg.epsilon_end);
    cfg.epsilon_decay_epochs = std::size_t(kv.get("epsilon_decay_epochs", (long long)cfg.epsilon_decay_epochs));
    cfg.adam.learning_rate = float(kv.get("learning_rate", double(cfg.adam.learning_rate)));
  } catch (const std::invalid_argument& e) {
    throw CLI::ValidationError("--set", e.what());
  }
  m.config("task", a.task);
  m.config("camera", a.camera);
  m.config("encoder", a.random_encoder ? "random" : "trained");
  m.config("trials", a.trials);
  m.config("epochs", a.epochs);
  m.config("alpha", cfg.alpha);
  m.config("action_repeat", cfg.action_repeat);
  m.config("episodes_per_epoch", cfg.episodes_per_epoch);
  m.config("max_fit_steps", cfg.max_fit_steps);
  m.seed("rl", a.seed);
  const auto curve = run_learning_curve(enc, cfg, a.trials, a.epochs, a.seed, [&](std::size_t t, std::size_t e, double r) {
    if (!a.quiet) std::cout << "trial " << t << " epoch " << e << " mean return " << r << '\n';
  });
  write_text(a.out, learning_curve_csv(curve.points));
  m.output(a.out);
  m.write(sidecar_manifest(a.out));
  return 0;
}

// ------------------------------------------------------------- gradreport

struct GradArgs {
  fs::path ckpt, data, config;
  std::vector<std::string> sets;
  float alpha = 10.0f;
};

int run_gradreport(const GradArgs& a) {
  const auto ds = load_or_fail(a.data, [](const fs::path& p) { return load_dataset(p); });
  EncoderParams enc = a.ckpt.empty()
                          ? make_encoder(ds.info.height, ds.info.width, ds.info.channels, 1)
                          : load_or_fail(a.ckpt, [](const fs::path& p) { return load_encoder(p); });
  KeyValueConfig kv;
  if (!a.config.empty()) kv = load_or_fail(a.config, [](const fs::path& p) { return KeyValueConfig::load(p); });
  kv.merge(overrides_from(a.sets));
  const auto tc = TrainConfig::from_config(kv, TrainConfig::defaults_for(ds.info.task));
  const auto r = gradient_magnitude_report(ds, std::move(enc), tc, a.alpha);
  std::cout << "prior,weighted_grad_norm\n"
            << "variation," << r.variation << "\nslowness," << r.slowness << "\ninertia," << r.inertia
            << "\ninertia_abs," << r.inertia_abs << "\nconservation," << r.conservation << '\n';
  for (std::size_t i = 0; i < r.controlability.size(); ++i)
    std::cout << "controlability_" << i << ',' << r.controlability[i] << '\n';
  return 0;
}

// ---------------------------------------------------------------- inspect

int run_inspect(const fs::path& path) {
  if (!fs::exists(path)) throw DataError("no such file: " + path.string());
  char magic[4] = {};
  std::ifstream(path, std::ios::binary).read(magic, 4);
  const std::string tag(magic, 4);
  if (tag == "PVED") {
    const auto info = load_or_fail(path, [](const fs::path& p) { return read_dataset_info(p); });
    std::cout << "format PVED\ntask " << task_name(info.task) << "\ncamera " << camera_name(info.camera)
              << "\nn_traj " << info.n_traj << "\ntraj_len " << info.traj_len << "\nheight " << info.height
              << "\nwidth " << info.width << "\nchannels " << info.channels << "\naction_dim " << info.action_dim
              << "\nseed " << info.seed << '\n';
    return 0;
  }
  if (tag == "PVE1") {
    const auto ck = load_or_fail(path, [](const fs::path& p) { return load_checkpoint(p); });
    std::cout << "format PVE1\nparameters " << ck.params.size() << '\n';
    for (std::size_t i = 0; i < ck.params.size(); ++i)
      std::cout << "  " << ck.names[i] << ' ' << shape_string(ck.params[i].shape()) << '\n';
    if (ck.adam) std::cout << "adam_step " << ck.adam->step << "\nadam_skipped " << ck.adam->skipped << '\n';
    for (const auto& [k, v] : ck.meta) std::cout << "meta " << k << ' ' << v << '\n';
    return 0;
  }
  throw DataError(path.string() + ": unrecognized format");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Position-velocity encoders: data collection, training, evaluation and control"};
  app.set_version_flag("--version", PVE_VERSION);
  app.require_subcommand(1);

  CollectArgs ca;
  auto* collect_cmd = app.add_subcommand("collect", "Collect random-policy trajectories");
  collect_cmd->add_option("--task", ca.task)->required();
  collect_cmd->add_option("--camera", ca.camera, "static or moving");
  collect_cmd->add_option("--n-traj", ca.n_traj)->check(CLI::PositiveNumber);
  collect_cmd->add_option("--len", ca.len)->check(CLI::PositiveNumber);
  collect_cmd->add_option("--resolution", ca.resolution)->check(CLI::Range(8, 512));
  collect_cmd->add_option("--seed", ca.seed);
  collect_cmd->add_option("--out", ca.out)->required();

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train an encoder with the prior losses");
  train_cmd->add_option("--data,--dataset", ta.data)->required();
  train_cmd->add_option("--task", ta.task, "must match the dataset");
  train_cmd->add_option("--config", ta.config, "key = value file");
  train_cmd->add_option("--set", ta.sets, "key=value override (repeatable)");
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--out-dir", ta.out_dir)->required();
  train_cmd->add_flag("--quiet", ta.quiet);

  EmbedArgs ea;
  auto* embed_cmd = app.add_subcommand("embed", "Write encoded states of a dataset as CSV");
  embed_cmd->add_option("--ckpt", ea.ckpt)->required();
  embed_cmd->add_option("--data,--dataset", ea.data)->required();
  embed_cmd->add_option("--alpha", ea.alpha);
  embed_cmd->add_option("--out", ea.out)->required();

  EvalArgs va;
  auto* eval_cmd = app.add_subcommand("eval", "PCA and regression probe of an encoder");
  eval_cmd->add_option("--ckpt", va.ckpt)->required();
  eval_cmd->add_option("--train-data", va.train_data)->required();
  eval_cmd->add_option("--test-data", va.test_data)->required();
  eval_cmd->add_option("--out-dir", va.out_dir)->required();
  eval_cmd->add_option("--alpha", va.alpha);
  eval_cmd->add_option("--seed", va.seed);
  eval_cmd->add_option("--probe-steps", va.probe_steps);

  RLArgs ra;
  auto* rl_cmd = app.add_subcommand("rl", "Fitted-Q learning curve on encoded states");
  auto* ckpt_opt = rl_cmd->add_option("--ckpt", ra.ckpt);
  auto* rand_opt = rl_cmd->add_flag("--random-encoder", ra.random_encoder);
  ckpt_opt->excludes(rand_opt);
  rl_cmd->add_option("--task", ra.task)->required();
  rl_cmd->add_option("--camera", ra.camera);
  rl_cmd->add_option("--trials", ra.trials)->check(CLI::PositiveNumber);
  rl_cmd->add_option("--epochs", ra.epochs);
  rl_cmd->add_option("--resolution", ra.resolution);
  rl_cmd->add_option("--seed", ra.seed);
  rl_cmd->add_option("--set", ra.sets, "key=value override (repeatable)");
  rl_cmd->add_option("--out", ra.out)->required();
  rl_cmd->add_flag("--quiet", ra.quiet);

  GradArgs ga;
  auto* grad_cmd = app.add_subcommand("gradreport", "Per-prior gradient magnitudes on one batch");
  grad_cmd->add_option("--ckpt", ga.ckpt, "defaults to a fresh encoder");
  grad_cmd->add_option("--data", ga.data)->required();
  grad_cmd->add_option("--config", ga.config);
  grad_cmd->add_option("--set", ga.sets);
  grad_cmd->add_option("--alpha", ga.alpha);

  fs::path inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect", "Print the header of a PVED or PVE1 file");
  inspect_cmd->add_option("file", inspect_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*collect_cmd) return run_collect(ca);
    if (*train_cmd) return run_train(ta);
    if (*embed_cmd) return run_embed(ea);
    if (*eval_cmd) return run_eval(va);
    if (*rl_cmd) {
      if (!ra.random_encoder && ra.ckpt.empty()) throw CLI::ValidationError("rl", "one of --ckpt or --random-encoder is required");
      return run_rl(ra);
    }
    if (*grad_cmd) return run_gradreport(ga);
    if (*inspect_cmd) return run_inspect(inspect_path);
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitUsage;
}
