#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "vbad/goal.hpp"
#include "vbad/tensor.hpp"

namespace vbad {

/// A single (H, W, C) plane stack: a video frame or a feature map.
struct Image {
  std::uint32_t height = 0;
  std::uint32_t width = 0;
  std::uint32_t channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::uint32_t h, std::uint32_t w, std::uint32_t c, float fill = 0.0f)
      : height(h), width(w), channels(c), data(std::size_t{h} * w * c, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t index(std::uint32_t y, std::uint32_t x,
                    std::uint32_t c) const noexcept {
    return (std::size_t{y} * width + x) * channels + c;
  }
  bool same_dims(const Image& o) const noexcept {
    return height == o.height && width == o.width && channels == o.channels;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Copy frame n of a video into an Image.
Image frame_of(const VideoTensor& x, std::uint32_t n);

/// Sparse direction in input space: parallel index / value arrays.
struct SparseDirection {
  std::span<const std::uint32_t> indices;
  std::span<const float> values;
};

/// Geometry and seed that fully determine a model bundle.
struct ModelConfig {
  std::uint32_t classes = 10;
  std::uint32_t filters = 8;
  std::uint32_t surrogate_filters = 6;
  std::uint32_t height = 32;
  std::uint32_t width = 32;
  std::uint32_t channels = 3;
  std::uint32_t frames = 8;
  std::uint32_t seed = 0;
  float logit_scale = 250.0f;

  static constexpr std::uint32_t kPoolGrid = 4;
  static constexpr std::uint32_t kSurrogateCount = 3;
  static constexpr float kInitStd = 0.1f;

  Shape input_shape() const { return {frames, height, width, channels}; }
  void validate() const;
};

/// Target video classifier: per-frame 3x3 conv on (x - 0.5), average pool to a
/// 4x4 grid, mean over frames, linear layer, scaled softmax.
class ToyClassifier {
 public:
  ToyClassifier() = default;
  /// Seeded Gaussian(0, 0.1) parameters.
  static ToyClassifier generate(const ModelConfig& cfg);

  const Shape& input_shape() const noexcept { return shape_; }
  std::uint32_t classes() const noexcept { return classes_; }
  std::uint32_t filters() const noexcept { return filters_; }
  float logit_scale() const noexcept { return logit_scale_; }

  /// Softmax probabilities (length K).
  std::vector<double> forward(const VideoTensor& x) const;
  std::vector<double> forward(std::span<const double> x) const;
  std::vector<double> logits(std::span<const double> x) const;

  /// Direct per-frame convolution path; same function as forward(), slower.
  std::vector<double> forward_reference(const VideoTensor& x) const;

  /// l_adv(x): log P(y|x) untargeted, -log P(y_adv|x) targeted.
  double adversarial_loss(std::span<const double> x, const AttackGoal& goal) const;
  double adversarial_loss(const VideoTensor& x, const AttackGoal& goal) const;

  /// Exact grad_x l_adv(x) by reverse-mode differentiation.
  VideoTensor input_gradient(const VideoTensor& x, const AttackGoal& goal) const;

  /// <u, grad_x l_adv(x)> by forward-mode differentiation along a sparse u.
  double directional_derivative(const VideoTensor& x, SparseDirection u,
                                const AttackGoal& goal) const;
  /// Same, for many directions sharing one forward pass.
  std::vector<double> directional_derivatives(const VideoTensor& x,
                                              std::span<const SparseDirection> dirs,
                                              const AttackGoal& goal) const;

  // Parameter blocks, in checkpoint order.
  std::span<float> conv_weights() noexcept { return conv_w_; }
  std::span<float> conv_bias() noexcept { return conv_b_; }
  std::span<float> linear_weights() noexcept { return lin_w_; }
  std::span<float> linear_bias() noexcept { return lin_b_; }
  std::span<const float> conv_weights() const noexcept { return conv_w_; }
  std::span<const float> conv_bias() const noexcept { return conv_b_; }
  std::span<const float> linear_weights() const noexcept { return lin_w_; }
  std::span<const float> linear_bias() const noexcept { return lin_b_; }

  friend bool operator==(const ToyClassifier&, const ToyClassifier&) = default;

 private:
  friend class ModelIo;
  ToyClassifier(const ModelConfig& cfg);

  struct Region {
    std::uint32_t y0, y1, x0, x1;
  };

  void check_input(std::size_t n) const;
  std::size_t feature_count() const noexcept {
    return std::size_t{filters_} * ModelConfig::kPoolGrid * ModelConfig::kPoolGrid;
  }
  float w(std::uint32_t f, int dy, int dx, std::uint32_t c) const noexcept {
    return conv_w_[((std::size_t{f} * 3 + dy) * 3 + dx) * shape_.channels + c];
  }
  Region region(std::uint32_t gr, std::uint32_t gc) const noexcept;
  std::uint32_t region_row(std::uint32_t y) const noexcept;
  std::uint32_t region_col(std::uint32_t x) const noexcept;
  std::vector<double> pooled_features(std::span<const double> x) const;
  std::vector<double> logits_from_features(std::span<const double> feat) const;
  /// d l_adv / d logits for the given probabilities.
  double tangent_derivative(SparseDirection u, std::span<const double> dl_dz) const;
  std::vector<double> loss_logit_grad(std::span<const double> probs,
                                      const AttackGoal& goal) const;

  Shape shape_{};
  std::uint32_t classes_ = 0;
  std::uint32_t filters_ = 0;
  float logit_scale_ = 1.0f;
  std::vector<float> conv_w_;  // [k][3][3][C]
  std::vector<float> conv_b_;  // [k]
  std::vector<float> lin_w_;   // [K][k*16], feature index f*16 + row*4 + col
  std::vector<float> lin_b_;   // [K]
};

/// Public per-frame surrogate: tanh(conv3x3(frame - 0.5) + b), same padding.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  static FeatureExtractor generate(std::uint32_t filters, std::uint32_t channels,
                                   std::uint64_t seed);

  std::uint32_t filters() const noexcept { return filters_; }
  std::uint32_t channels() const noexcept { return channels_; }

  Image forward(const Image& frame) const;

  /// ||mask . (f(frame) - target)||^2
  double feature_distance(const Image& frame, const Image& target,
                          const Image& mask) const;

  /// Gradient of feature_distance with respect to the frame.
  Image feature_distance_gradient(const Image& frame, const Image& target,
                                  const Image& mask) const;

  std::span<float> conv_weights() noexcept { return conv_w_; }
  std::span<float> conv_bias() noexcept { return conv_b_; }
  std::span<const float> conv_weights() const noexcept { return conv_w_; }
  std::span<const float> conv_bias() const noexcept { return conv_b_; }

  friend bool operator==(const FeatureExtractor&, const FeatureExtractor&) = default;

 private:
  friend class ModelIo;
  std::vector<double> preactivation(const Image& frame) const;
  void check_frame(const Image& frame) const;

  std::uint32_t filters_ = 0;
  std::uint32_t channels_ = 0;
  std::vector<float> conv_w_;  // [j][3][3][C]
  std::vector<float> conv_b_;  // [j]
};

using SurrogateSet = std::vector<std::shared_ptr<const FeatureExtractor>>;

/// Target classifier plus the public surrogate extractors generated alongside.
struct ModelBundle {
  ModelConfig config;
  ToyClassifier classifier;
  SurrogateSet surrogates;
};

ModelBundle generate_bundle(const ModelConfig& cfg);

// VBM: "VBM1", u32 K,k,j,H,W,C,N,seed (LE), then float32 LE parameters:
// logit_scale, classifier conv W, conv b, linear W, linear b, then for each
// of the 3 surrogates (when j > 0) conv W, conv b.
void write_vbm(std::ostream& os, const ModelBundle& bundle);
ModelBundle read_vbm(std::istream& is);
void save_vbm(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_vbm(const std::filesystem::path& path);

}  // namespace vbad
