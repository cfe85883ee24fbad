#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace vbad {

/// Video geometry: frames x height x width x channels.
struct Shape {
  std::uint32_t frames = 1;
  std::uint32_t height = 1;
  std::uint32_t width = 1;
  std::uint32_t channels = 1;

  std::size_t size() const noexcept {
    return std::size_t{frames} * height * width * channels;
  }
  std::size_t frame_size() const noexcept {
    return std::size_t{height} * width * channels;
  }
  std::size_t index(std::uint32_t n, std::uint32_t h, std::uint32_t w,
                    std::uint32_t c) const noexcept {
    return ((std::size_t{n} * height + h) * width + w) * channels + c;
  }
  /// Throws ShapeError when any extent is zero.
  void validate() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

std::ostream& operator<<(std::ostream& os, const Shape& s);

/// Dense row-major (N, H, W, C) float32 tensor.
class VideoTensor {
 public:
  VideoTensor() = default;
  explicit VideoTensor(Shape shape, float fill = 0.0f);
  VideoTensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<float> frame(std::uint32_t n) noexcept;
  std::span<const float> frame(std::uint32_t n) const noexcept;

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }
  float& at(std::uint32_t n, std::uint32_t h, std::uint32_t w,
            std::uint32_t c) noexcept {
    return data_[shape_.index(n, h, w, c)];
  }
  float at(std::uint32_t n, std::uint32_t h, std::uint32_t w,
           std::uint32_t c) const noexcept {
    return data_[shape_.index(n, h, w, c)];
  }

  friend bool operator==(const VideoTensor&, const VideoTensor&) = default;

 private:
  Shape shape_{};
  std::vector<float> data_;
};

/// Three-valued elementwise sign; sign(0) = 0.
VideoTensor sign_of(const VideoTensor& t);

/// Elementwise clamp into [lo, hi] intersected with the valid input range [0, 1].
VideoTensor clip_box(const VideoTensor& t, const VideoTensor& lo,
                     const VideoTensor& hi);
VideoTensor clip_box(const VideoTensor& t, float lo, float hi);

/// clip_box(t, center - eps, center + eps) without materializing the bounds.
VideoTensor clip_ball(const VideoTensor& t, const VideoTensor& center,
                      double eps);

struct Cosine {
  double value = 0.0;
  bool degenerate = false;  // one of the inputs had zero norm
};

Cosine cosine_similarity(const VideoTensor& a, const VideoTensor& b);

double dot(const VideoTensor& a, const VideoTensor& b);
double l2_norm(const VideoTensor& t);
double linf_distance(const VideoTensor& a, const VideoTensor& b);

/// a + scale * b
VideoTensor add_scaled(const VideoTensor& a, double scale, const VideoTensor& b);

void require_same_shape(const VideoTensor& a, const VideoTensor& b,
                        const char* what);

// VTF: "VBT1", u32 N,H,W,C (LE), then float32 LE payload.
void write_vtf(std::ostream& os, const VideoTensor& t);
VideoTensor read_vtf(std::istream& is);
void save_vtf(const std::filesystem::path& path, const VideoTensor& t);
VideoTensor load_vtf(const std::filesystem::path& path);

}  // namespace vbad
