#include "pve/encoder.hpp"

#include <stdexcept>

#include "pve/checkpoint.hpp"

namespace pve {

std::vector<LayerSpec> encoder_layers(std::size_t height, std::size_t width, std::size_t channels,
                                      std::size_t position_dim) {
  std::size_t h = height, w = width;
  std::vector<LayerSpec> layers;
  std::size_t in = channels;
  for (std::size_t out : {16u, 32u, 64u}) {
    layers.emplace_back(Conv2d{in, out, 5, 2});
    layers.emplace_back(Relu{});
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    in = out;
  }
  layers.emplace_back(Dense{h * w * in, 128});
  layers.emplace_back(Relu{});
  layers.emplace_back(Dense{128, 128});
  layers.emplace_back(Relu{});
  layers.emplace_back(Dense{128, position_dim});
  return layers;
}

EncoderParams make_encoder(std::size_t height, std::size_t width, std::size_t channels, std::uint64_t seed,
                           std::size_t position_dim) {
  EncoderParams p{Network(encoder_layers(height, width, channels, position_dim)), height, width, channels,
                  position_dim};
  p.network.initialize(seed);
  return p;
}

Tensor encode(const EncoderParams& params, const Tensor& observations) {
  const Shape expected{0, params.height, params.width, params.channels};
  const auto& s = observations.shape();
  if (s.size() != 4 || s[1] != params.height || s[2] != params.width || s[3] != params.channels)
    throw std::invalid_argument("encode: observation batch shape " + shape_string(s) + " does not match encoder input " +
                                shape_string(expected));
  return params.network.forward(observations);
}

StateSequence velocities(const StateSequence& positions, float alpha) {
  StateSequence out{positions.dim, {}};
  const auto n = positions.length();
  if (n < 2) return out;
  out.values.resize((n - 1) * positions.dim);
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t k = 0; k < positions.dim; ++k)
      out.values[(t - 1) * positions.dim + k] =
          alpha * (positions.values[t * positions.dim + k] - positions.values[(t - 1) * positions.dim + k]);
  return out;
}

StateSequence accelerations(const StateSequence& vel) {
  StateSequence out{vel.dim, {}};
  const auto n = vel.length();
  if (n < 2) return out;
  out.values.resize((n - 1) * vel.dim);
  for (std::size_t t = 1; t < n; ++t)
    for (std::size_t k = 0; k < vel.dim; ++k)
      out.values[(t - 1) * vel.dim + k] = vel.values[t * vel.dim + k] - vel.values[(t - 1) * vel.dim + k];
  return out;
}

std::vector<float> combined_state(std::span<const float> position, std::optional<std::span<const float>> velocity) {
  if (!velocity) throw std::invalid_argument("combined_state: velocity undefined at the first step of a sequence");
  if (velocity->size() != position.size())
    throw std::invalid_argument("combined_state: position and velocity widths differ");
  std::vector<float> out(position.begin(), position.end());
  out.insert(out.end(), velocity->begin(), velocity->end());
  return out;
}

std::vector<StateTriple> state_triples(const StateSequence& positions, float alpha) {
  const auto v = velocities(positions, alpha);
  const auto a = accelerations(v);
  std::vector<StateTriple> out(positions.length());
  for (std::size_t t = 0; t < out.size(); ++t) {
    const auto p = positions.at(t);
    out[t].position.assign(p.begin(), p.end());
    if (t >= 1) {
      const auto row = v.at(t - 1);
      out[t].velocity.emplace(row.begin(), row.end());
    }
    if (t >= 2) {
      const auto row = a.at(t - 2);
      out[t].acceleration.emplace(row.begin(), row.end());
    }
  }
  return out;
}

void finite_differences(std::span<const float> p, std::size_t sequences, std::size_t steps, std::size_t dim,
                        float alpha, std::span<float> v, std::span<float> a) {
  const std::size_t n = sequences * steps * dim;
  if (p.size() != n || v.size() != n || a.size() != n)
    throw std::invalid_argument("finite_differences: array sizes do not match [sequences][steps][dim]");
  for (std::size_t b = 0; b < sequences; ++b) {
    const std::size_t base = b * steps * dim;
    for (std::size_t k = 0; k < dim; ++k) {
      v[base + k] = 0.0f;
      a[base + k] = 0.0f;
    }
    for (std::size_t t = 1; t < steps; ++t)
      for (std::size_t k = 0; k < dim; ++k) {
        const std::size_t i = base + t * dim + k;
        v[i] = alpha * (p[i] - p[i - dim]);
        a[i] = t >= 2 ? v[i] - v[i - dim] : 0.0f;
      }
  }
}

void finite_differences_backward(std::size_t sequences, std::size_t steps, std::size_t dim, float alpha,
                                 std::span<const float> dv_in, std::span<const float> da,
                                 std::span<float> dp) {
  const std::size_t n = sequences * steps * dim;
  if (dv_in.size() != n || da.size() != n || dp.size() != n)
    throw std::invalid_argument("finite_differences_backward: array sizes do not match");
  std::vector<float> dv(dv_in.begin(), dv_in.end());
  for (std::size_t b = 0; b < sequences; ++b) {
    const std::size_t base = b * steps * dim;
    for (std::size_t t = 2; t < steps; ++t)
      for (std::size_t k = 0; k < dim; ++k) {
        const std::size_t i = base + t * dim + k;
        dv[i] += da[i];
        dv[i - dim] -= da[i];
      }
    for (std::size_t t = 1; t < steps; ++t)
      for (std::size_t k = 0; k < dim; ++k) {
        const std::size_t i = base + t * dim + k;
        dp[i] += alpha * dv[i];
        dp[i - dim] -= alpha * dv[i];
      }
  }
}

void save_encoder(const std::filesystem::path& path, const EncoderParams& params, const AdamState* adam,
                  std::map<std::string, std::string> meta) {
  Checkpoint ckpt;
  ckpt.names = params.network.parameter_names();
  ckpt.params = params.network.parameters();
  if (adam && !adam->m.empty()) ckpt.adam = *adam;
  meta["model"] = "pve-encoder";
  meta["height"] = std::to_string(params.height);
  meta["width"] = std::to_string(params.width);
  meta["channels"] = std::to_string(params.channels);
  meta["position_dim"] = std::to_string(params.position_dim);
  ckpt.meta = std::move(meta);
  save_checkpoint(path, ckpt);
}

EncoderParams load_encoder(const std::filesystem::path& path, std::optional<AdamState>* adam,
                           std::map<std::string, std::string>* meta) {
  Checkpoint ckpt = load_checkpoint(path);
  auto get = [&](const char* key) -> std::size_t {
    const auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end()) throw std::runtime_error("checkpoint " + path.string() + " lacks '" + key + "'");
    return std::stoul(it->second);
  };
  EncoderParams p{Network(encoder_layers(get("height"), get("width"), get("channels"), get("position_dim"))),
                  get("height"), get("width"), get("channels"), get("position_dim")};
  auto& dst = p.network.parameters();
  if (dst.size() != ckpt.params.size())
    throw std::runtime_error("checkpoint " + path.string() + " has " + std::to_string(ckpt.params.size()) +
                             " parameters, encoder expects " + std::to_string(dst.size()));
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].shape() != ckpt.params[i].shape())
      throw std::runtime_error("checkpoint parameter " + ckpt.names[i] + " has shape " +
                               shape_string(ckpt.params[i].shape()) + ", expected " + shape_string(dst[i].shape()));
    std::copy(ckpt.params[i].data().begin(), ckpt.params[i].data().end(), dst[i].data().begin());
  }
  if (adam) *adam = std::move(ckpt.adam);
  if (meta) *meta = std::move(ckpt.meta);
  return p;
}

}  // namespace pve
