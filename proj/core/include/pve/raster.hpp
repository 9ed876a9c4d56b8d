#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace pve {

struct Vec2 {
  double x = 0;
  double y = 0;
};

struct Color {
  float r = 0, g = 0, b = 0;
};

/// RGB float framebuffer with an orthographic world-to-pixel view. Shapes are
/// drawn with signed-distance coverage (one pixel wide falloff), which gives
/// anti-aliased edges without supersampling. Every fill returns the number of
/// pixels the shape covers by at least one half.
class Canvas {
 public:
  /// `view_width` is the world extent (meters) spanned by the canvas width;
  /// pixels are square.
  Canvas(std::size_t height, std::size_t width, Vec2 view_center, double view_width, Color background);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  double pixels_per_meter() const { return scale_; }

  std::size_t fill_disc(Vec2 center, double radius, Color color);
  std::size_t fill_capsule(Vec2 a, Vec2 b, double radius, Color color);
  std::size_t fill_box(Vec2 center, Vec2 half_extent, Color color);
  /// Axis-aligned box whose color varies with world position.
  std::size_t fill_box(Vec2 center, Vec2 half_extent, const std::function<Color(Vec2)>& shade);

  /// World coordinates of the center of pixel (row, col).
  Vec2 pixel_center(std::size_t row, std::size_t col) const;

  const std::vector<float>& pixels() const { return pixels_; }
  std::vector<float> release() { return std::move(pixels_); }

 private:
  template <class Sdf, class Shade>
  std::size_t fill(Vec2 lo, Vec2 hi, Sdf sdf, Shade shade);

  std::size_t height_, width_;
  Vec2 center_;
  double scale_;
  std::vector<float> pixels_;
};

}  // namespace pve
