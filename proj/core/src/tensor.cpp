#include "vbad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "binary_io.hpp"
#include "vbad/errors.hpp"

namespace vbad {

void Shape::validate() const {
  if (frames == 0 || height == 0 || width == 0 || channels == 0) {
    std::ostringstream os;
    os << "shape extents must be positive, got " << *this;
    throw ShapeError(os.str());
  }
  const double total = double(frames) * height * width * channels;
  if (total > double(std::numeric_limits<std::uint32_t>::max())) {
    throw ShapeError("shape too large for 32-bit indexing");
  }
}

std::ostream& operator<<(std::ostream& os, const Shape& s) {
  return os << "(" << s.frames << "," << s.height << "," << s.width << ","
            << s.channels << ")";
}

VideoTensor::VideoTensor(Shape shape, float fill) : shape_(shape) {
  shape_.validate();
  data_.assign(shape_.size(), fill);
}

VideoTensor::VideoTensor(Shape shape, std::vector<float> data)
    : shape_(shape), data_(std::move(data)) {
  shape_.validate();
  if (data_.size() != shape_.size()) {
    throw ShapeError("data length does not match shape");
  }
}

std::span<float> VideoTensor::frame(std::uint32_t n) noexcept {
  return std::span<float>(data_).subspan(n * shape_.frame_size(),
                                         shape_.frame_size());
}

std::span<const float> VideoTensor::frame(std::uint32_t n) const noexcept {
  return std::span<const float>(data_).subspan(n * shape_.frame_size(),
                                               shape_.frame_size());
}

void require_same_shape(const VideoTensor& a, const VideoTensor& b,
                        const char* what) {
  if (a.shape() != b.shape()) {
    std::ostringstream os;
    os << what << ": shape mismatch " << a.shape() << " vs " << b.shape();
    throw ShapeError(os.str());
  }
}

VideoTensor sign_of(const VideoTensor& t) {
  VideoTensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const float v = t[i];
    out[i] = v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f);
  }
  return out;
}

VideoTensor clip_box(const VideoTensor& t, const VideoTensor& lo,
                     const VideoTensor& hi) {
  require_same_shape(t, lo, "clip_box");
  require_same_shape(t, hi, "clip_box");
  VideoTensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (lo[i] > hi[i]) throw ShapeError("clip_box: lower bound above upper bound");
    const float l = std::max(lo[i], 0.0f);
    const float h = std::min(hi[i], 1.0f);
    out[i] = std::min(h, std::max(l, t[i]));
  }
  return out;
}

VideoTensor clip_box(const VideoTensor& t, float lo, float hi) {
  if (lo > hi) throw ShapeError("clip_box: lower bound above upper bound");
  const float l = std::max(lo, 0.0f);
  const float h = std::min(hi, 1.0f);
  VideoTensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    out[i] = std::min(h, std::max(l, t[i]));
  }
  return out;
}

VideoTensor clip_ball(const VideoTensor& t, const VideoTensor& center,
                      double eps) {
  require_same_shape(t, center, "clip_ball");
  if (eps < 0.0) throw ShapeError("clip_ball: negative radius");
  VideoTensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    // Bounds are rounded inward so the float result never leaves the ball.
    float l = static_cast<float>(center[i] - eps);
    float h = static_cast<float>(center[i] + eps);
    if (double(l) < double(center[i]) - eps) l = std::nextafter(l, 2.0f);
    if (double(h) > double(center[i]) + eps) h = std::nextafter(h, -2.0f);
    l = std::max(l, 0.0f);
    h = std::min(h, 1.0f);
    out[i] = std::min(h, std::max(l, t[i]));
  }
  return out;
}

double dot(const VideoTensor& a, const VideoTensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

double l2_norm(const VideoTensor& t) {
  double s = 0.0;
  for (float v : t.data()) s += double(v) * double(v);
  return std::sqrt(s);
}

double linf_distance(const VideoTensor& a, const VideoTensor& b) {
  require_same_shape(a, b, "linf_distance");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  }
  return m;
}

Cosine cosine_similarity(const VideoTensor& a, const VideoTensor& b) {
  require_same_shape(a, b, "cosine_similarity");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return {0.0, true};
  const double c = dot(a, b) / (na * nb);
  return {std::clamp(c, -1.0, 1.0), false};
}

VideoTensor add_scaled(const VideoTensor& a, double scale,
                       const VideoTensor& b) {
  require_same_shape(a, b, "add_scaled");
  VideoTensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    out[i] = static_cast<float>(double(a[i]) + scale * double(b[i]));
  }
  return out;
}

void write_vtf(std::ostream& os, const VideoTensor& t) {
  os.write("VBT1", 4);
  detail::put_u32(os, t.shape().frames);
  detail::put_u32(os, t.shape().height);
  detail::put_u32(os, t.shape().width);
  detail::put_u32(os, t.shape().channels);
  detail::put_f32s(os, t.data());
  if (!os) throw IoError("failed writing VTF stream");
}

VideoTensor read_vtf(std::istream& is) {
  detail::expect_magic(is, "VBT1");
  Shape s;
  s.frames = detail::get_u32(is);
  s.height = detail::get_u32(is);
  s.width = detail::get_u32(is);
  s.channels = detail::get_u32(is);
  s.validate();
  std::vector<float> data(s.size());
  detail::get_f32s(is, data);
  return VideoTensor(s, std::move(data));
}

void save_vtf(const std::filesystem::path& path, const VideoTensor& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_vtf(os, t);
}

VideoTensor load_vtf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  VideoTensor t = read_vtf(is);
  detail::expect_eof(is);
  return t;
}

}  // namespace vbad
