#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pve/adam.hpp"
#include "pve/network.hpp"

namespace pve {

inline constexpr std::size_t kPositionDim = 5;

/// The position encoder: three stride-2 5x5 convolutions (16, 32, 64
/// channels) and dense layers of 128, 128 and `position_dim` units, ReLU
/// after every layer but the last.
struct EncoderParams {
  Network network;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t channels = 3;
  std::size_t position_dim = kPositionDim;
};

std::vector<LayerSpec> encoder_layers(std::size_t height, std::size_t width, std::size_t channels,
                                      std::size_t position_dim = kPositionDim);
EncoderParams make_encoder(std::size_t height, std::size_t width, std::size_t channels, std::uint64_t seed,
                           std::size_t position_dim = kPositionDim);

/// [batch, height, width, channels] -> [batch, position_dim].
Tensor encode(const EncoderParams& params, const Tensor& observations);

/// Time-major sequence of fixed-width state vectors.
struct StateSequence {
  std::size_t dim = 0;
  std::vector<float> values;  // [length][dim]

  std::size_t length() const { return dim ? values.size() / dim : 0; }
  std::span<const float> at(std::size_t t) const { return std::span(values).subspan(t * dim, dim); }
};

/// s_v[t] = alpha * (s_p[t] - s_p[t-1]) for t >= 1. The result holds one row
/// per t >= 1 and is empty for inputs shorter than two steps.
StateSequence velocities(const StateSequence& positions, float alpha);
/// s_a[t] = s_v[t] - s_v[t-1]; one row per consecutive pair, empty when
/// fewer than two velocities exist.
StateSequence accelerations(const StateSequence& velocities);

/// [s_p; s_v]. Throws std::invalid_argument when the velocity is undefined
/// (the first step of a sequence) or the widths differ.
std::vector<float> combined_state(std::span<const float> position, std::optional<std::span<const float>> velocity);

/// Per-timestep states of a sequence; velocity is defined from the second
/// step, acceleration from the third.
struct StateTriple {
  std::vector<float> position;
  std::optional<std::vector<float>> velocity;
  std::optional<std::vector<float>> acceleration;
};
std::vector<StateTriple> state_triples(const StateSequence& positions, float alpha);

/// Batched finite differences over [sequences][steps][dim] arrays, aligned
/// to the position time index: velocity rows for t = 0 and acceleration rows
/// for t < 2 are zero and must be ignored.
void finite_differences(std::span<const float> positions, std::size_t sequences, std::size_t steps, std::size_t dim,
                        float alpha, std::span<float> velocities, std::span<float> accelerations);

/// Chain rule through `finite_differences`: folds gradients with respect to
/// velocities and accelerations into the position gradient (in place).
void finite_differences_backward(std::size_t sequences, std::size_t steps, std::size_t dim, float alpha,
                                 std::span<const float> d_velocities, std::span<const float> d_accelerations,
                                 std::span<float> d_positions);

void save_encoder(const std::filesystem::path& path, const EncoderParams& params, const AdamState* adam = nullptr,
                  std::map<std::string, std::string> meta = {});
/// Rebuilds the architecture from the checkpoint's metadata. Optional outputs
/// receive the optimizer state and metadata.
EncoderParams load_encoder(const std::filesystem::path& path, std::optional<AdamState>* adam = nullptr,
                           std::map<std::string, std::string>* meta = nullptr);

}  // namespace pve
