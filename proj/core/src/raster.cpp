#include "pve/raster.hpp"

#include <algorithm>
#include <cmath>

namespace pve {

Canvas::Canvas(std::size_t height, std::size_t width, Vec2 view_center, double view_width, Color background)
    : height_(height), width_(width), center_(view_center), scale_(double(width) / view_width),
      pixels_(height * width * 3) {
  for (std::size_t i = 0; i < height * width; ++i) {
    pixels_[3 * i + 0] = background.r;
    pixels_[3 * i + 1] = background.g;
    pixels_[3 * i + 2] = background.b;
  }
}

Vec2 Canvas::pixel_center(std::size_t row, std::size_t col) const {
  return {center_.x + (double(col) + 0.5 - 0.5 * double(width_)) / scale_,
          center_.y - (double(row) + 0.5 - 0.5 * double(height_)) / scale_};
}

template <class Sdf, class Shade>
std::size_t Canvas::fill(Vec2 lo, Vec2 hi, Sdf sdf, Shade shade) {
  // Pixel bounding box of the world-space box, padded by the falloff.
  const double col_lo = (lo.x - center_.x) * scale_ + 0.5 * double(width_) - 1.0;
  const double col_hi = (hi.x - center_.x) * scale_ + 0.5 * double(width_) + 1.0;
  const double row_lo = (center_.y - hi.y) * scale_ + 0.5 * double(height_) - 1.0;
  const double row_hi = (center_.y - lo.y) * scale_ + 0.5 * double(height_) + 1.0;
  const long c0 = std::max(0L, long(std::floor(col_lo)));
  const long c1 = std::min(long(width_) - 1, long(std::ceil(col_hi)));
  const long r0 = std::max(0L, long(std::floor(row_lo)));
  const long r1 = std::min(long(height_) - 1, long(std::ceil(row_hi)));

  std::size_t covered = 0;
  for (long r = r0; r <= r1; ++r) {
    for (long c = c0; c <= c1; ++c) {
      const Vec2 p = pixel_center(std::size_t(r), std::size_t(c));
      const double d = sdf(p) * scale_;
      const float a = float(std::clamp(0.5 - d, 0.0, 1.0));
      if (a <= 0.0f) continue;
      if (a >= 0.5f) ++covered;
      const Color col = shade(p);
      float* px = &pixels_[(std::size_t(r) * width_ + std::size_t(c)) * 3];
      px[0] += a * (col.r - px[0]);
      px[1] += a * (col.g - px[1]);
      px[2] += a * (col.b - px[2]);
    }
  }
  return covered;
}

std::size_t Canvas::fill_disc(Vec2 center, double radius, Color color) {
  return fill({center.x - radius, center.y - radius}, {center.x + radius, center.y + radius},
              [&](Vec2 p) { return std::hypot(p.x - center.x, p.y - center.y) - radius; },
              [&](Vec2) { return color; });
}

std::size_t Canvas::fill_capsule(Vec2 a, Vec2 b, double radius, Color color) {
  const double bx = b.x - a.x, by = b.y - a.y;
  const double len2 = bx * bx + by * by;
  return fill({std::min(a.x, b.x) - radius, std::min(a.y, b.y) - radius},
              {std::max(a.x, b.x) + radius, std::max(a.y, b.y) + radius},
              [&](Vec2 p) {
                const double px = p.x - a.x, py = p.y - a.y;
                const double t = len2 > 0 ? std::clamp((px * bx + py * by) / len2, 0.0, 1.0) : 0.0;
                return std::hypot(px - t * bx, py - t * by) - radius;
              },
              [&](Vec2) { return color; });
}

std::size_t Canvas::fill_box(Vec2 center, Vec2 half, Color color) {
  return fill_box(center, half, [&](Vec2) { return color; });
}

std::size_t Canvas::fill_box(Vec2 center, Vec2 half, const std::function<Color(Vec2)>& shade) {
  return fill({center.x - half.x, center.y - half.y}, {center.x + half.x, center.y + half.y},
              [&](Vec2 p) {
                const double qx = std::abs(p.x - center.x) - half.x;
                const double qy = std::abs(p.y - center.y) - half.y;
                const double outside = std::hypot(std::max(qx, 0.0), std::max(qy, 0.0));
                return outside + std::min(std::max(qx, qy), 0.0);
              },
              shade);
}

}  // namespace pve
