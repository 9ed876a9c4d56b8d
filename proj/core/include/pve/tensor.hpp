#pragma once

#include <cstddef>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pve {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned allocation. Vectorized reductions then take the same path
/// on every buffer, which keeps results bitwise reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, alignment); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using FloatBuffer = std::vector<float, AlignedAllocator<float>>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float tensor with an optional gradient buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  bool has_grad() const { return grad_.has_value(); }
  /// Allocates a zeroed gradient buffer if none exists.
  void enable_grad();
  void zero_grad();
  std::span<float> grad();
  std::span<const float> grad() const;

  /// Changes the shape in place; the element count must not change.
  void reshape(Shape shape);
  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  FloatBuffer data_;
  std::optional<FloatBuffer> grad_;
};

}  // namespace pve
