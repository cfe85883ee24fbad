#include "vbad/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "binary_io.hpp"
#include "vbad/errors.hpp"
#include "vbad/random.hpp"

namespace vbad {

namespace {

constexpr std::uint32_t kGrid = ModelConfig::kPoolGrid;

void fill_normal(std::span<float> out, Rng& rng, float stddev) {
  std::normal_distribution<float> dist(0.0f, stddev);
  for (float& v : out) v = dist(rng);
}

std::vector<double> softmax(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    p[k] = std::exp(z[k] - zmax);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

double log_softmax_at(std::span<const double> z, std::size_t k) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  return z[k] - zmax - std::log(sum);
}

std::vector<double> to_double(std::span<const float> x) {
  return std::vector<double>(x.begin(), x.end());
}

}  // namespace

Image frame_of(const VideoTensor& x, std::uint32_t n) {
  const Shape& s = x.shape();
  if (n >= s.frames) throw ShapeError("frame index out of range");
  Image img(s.height, s.width, s.channels);
  const auto src = x.frame(n);
  std::copy(src.begin(), src.end(), img.data.begin());
  return img;
}

void ModelConfig::validate() const {
  if (classes < 2) throw ConfigError("model needs at least 2 classes");
  if (filters == 0) throw ConfigError("classifier needs at least one filter");
  if (height < kGrid || width < kGrid) {
    throw ConfigError("frames must be at least 4x4 for the pooling grid");
  }
  if (channels == 0 || frames == 0) throw ConfigError("empty input geometry");
  if (!(logit_scale > 0.0f) || !std::isfinite(logit_scale)) {
    throw ConfigError("logit_scale must be positive");
  }
}

// ---------------------------------------------------------------------------
// ToyClassifier

ToyClassifier::ToyClassifier(const ModelConfig& cfg)
    : shape_(cfg.input_shape()),
      classes_(cfg.classes),
      filters_(cfg.filters),
      logit_scale_(cfg.logit_scale),
      conv_w_(std::size_t{cfg.filters} * 9 * cfg.channels),
      conv_b_(cfg.filters),
      lin_w_(std::size_t{cfg.classes} * cfg.filters * kGrid * kGrid),
      lin_b_(cfg.classes) {}

ToyClassifier ToyClassifier::generate(const ModelConfig& cfg) {
  cfg.validate();
  ToyClassifier m(cfg);
  Rng rng(cfg.seed);
  // biases stay zero
  fill_normal(m.conv_w_, rng, ModelConfig::kInitStd);
  fill_normal(m.lin_w_, rng, ModelConfig::kInitStd);
  return m;
}

void ToyClassifier::check_input(std::size_t n) const {
  if (n != shape_.size()) {
    throw ShapeError("classifier input has " + std::to_string(n) +
                     " entries, expected " + std::to_string(shape_.size()));
  }
}

ToyClassifier::Region ToyClassifier::region(std::uint32_t gr,
                                            std::uint32_t gc) const noexcept {
  const std::uint32_t bh = shape_.height / kGrid;
  const std::uint32_t bw = shape_.width / kGrid;
  return {gr * bh, gr + 1 == kGrid ? shape_.height : (gr + 1) * bh, gc * bw,
          gc + 1 == kGrid ? shape_.width : (gc + 1) * bw};
}

std::uint32_t ToyClassifier::region_row(std::uint32_t y) const noexcept {
  return std::min(y / (shape_.height / kGrid), kGrid - 1);
}

std::uint32_t ToyClassifier::region_col(std::uint32_t x) const noexcept {
  return std::min(x / (shape_.width / kGrid), kGrid - 1);
}

std::vector<double> ToyClassifier::pooled_features(
    std::span<const double> x) const {
  check_input(x.size());
  const std::uint32_t H = shape_.height, W = shape_.width, C = shape_.channels;
  const std::size_t fs = shape_.frame_size();

  // Pooling and the temporal mean are linear, so both commute with the
  // convolution: convolve the centered mean frame once, summing each pooling
  // window through a summed-area table.
  std::vector<double> mean(fs, 0.0);
  for (std::uint32_t n = 0; n < shape_.frames; ++n) {
    const double* src = x.data() + n * fs;
    for (std::size_t i = 0; i < fs; ++i) mean[i] += src[i] - 0.5;
  }
  for (double& v : mean) v /= shape_.frames;

  const std::size_t sw = W + 1;
  std::vector<double> sat((H + 1) * sw * C, 0.0);
  for (std::uint32_t y = 0; y < H; ++y) {
    for (std::uint32_t xx = 0; xx < W; ++xx) {
      for (std::uint32_t c = 0; c < C; ++c) {
        sat[((y + 1) * sw + xx + 1) * C + c] =
            mean[(std::size_t{y} * W + xx) * C + c] + sat[(y * sw + xx + 1) * C + c] +
            sat[((y + 1) * sw + xx) * C + c] - sat[(y * sw + xx) * C + c];
      }
    }
  }
  auto rect = [&](std::uint32_t c, int y0, int y1, int x0, int x1) {
    y0 = std::max(y0, 0);
    x0 = std::max(x0, 0);
    y1 = std::min(y1, int(H));
    x1 = std::min(x1, int(W));
    if (y0 >= y1 || x0 >= x1) return 0.0;
    return sat[(y1 * sw + x1) * C + c] - sat[(y0 * sw + x1) * C + c] -
           sat[(y1 * sw + x0) * C + c] + sat[(y0 * sw + x0) * C + c];
  };

  std::vector<double> feat(feature_count());
  std::vector<double> shifted(9 * C);
  for (std::uint32_t gr = 0; gr < kGrid; ++gr) {
    for (std::uint32_t gc = 0; gc < kGrid; ++gc) {
      const Region r = region(gr, gc);
      const double area = double(r.y1 - r.y0) * double(r.x1 - r.x0);
      for (int dy = 0; dy < 3; ++dy) {
        for (int dx = 0; dx < 3; ++dx) {
          for (std::uint32_t c = 0; c < C; ++c) {
            shifted[(dy * 3 + dx) * C + c] =
                rect(c, int(r.y0) + dy - 1, int(r.y1) + dy - 1,
                     int(r.x0) + dx - 1, int(r.x1) + dx - 1);
          }
        }
      }
      for (std::uint32_t f = 0; f < filters_; ++f) {
        const float* wf = conv_w_.data() + std::size_t{f} * 9 * C;
        double s = 0.0;
        for (std::size_t i = 0; i < 9 * C; ++i) s += double(wf[i]) * shifted[i];
        feat[f * kGrid * kGrid + gr * kGrid + gc] = conv_b_[f] + s / area;
      }
    }
  }
  return feat;
}

std::vector<double> ToyClassifier::logits_from_features(
    std::span<const double> feat) const {
  const std::size_t F = feature_count();
  std::vector<double> z(classes_);
  for (std::uint32_t k = 0; k < classes_; ++k) {
    const float* wk = lin_w_.data() + k * F;
    double s = lin_b_[k];
    for (std::size_t i = 0; i < F; ++i) s += double(wk[i]) * feat[i];
    z[k] = double(logit_scale_) * s;
  }
  return z;
}

std::vector<double> ToyClassifier::logits(std::span<const double> x) const {
  return logits_from_features(pooled_features(x));
}

std::vector<double> ToyClassifier::forward(std::span<const double> x) const {
  return softmax(logits(x));
}

std::vector<double> ToyClassifier::forward(const VideoTensor& x) const {
  if (x.shape() != shape_) throw ShapeError("classifier input shape mismatch");
  return forward(to_double(x.data()));
}

std::vector<double> ToyClassifier::forward_reference(const VideoTensor& x) const {
  if (x.shape() != shape_) throw ShapeError("classifier input shape mismatch");
  const std::uint32_t H = shape_.height, W = shape_.width, C = shape_.channels;
  std::vector<double> feat(feature_count(), 0.0);
  for (std::uint32_t n = 0; n < shape_.frames; ++n) {
    for (std::uint32_t f = 0; f < filters_; ++f) {
      for (std::uint32_t gr = 0; gr < kGrid; ++gr) {
        for (std::uint32_t gc = 0; gc < kGrid; ++gc) {
          const Region r = region(gr, gc);
          double pool = 0.0;
          for (std::uint32_t y = r.y0; y < r.y1; ++y) {
            for (std::uint32_t xx = r.x0; xx < r.x1; ++xx) {
              double out = conv_b_[f];
              for (int dy = 0; dy < 3; ++dy) {
                for (int dx = 0; dx < 3; ++dx) {
                  const int sy = int(y) + dy - 1, sx = int(xx) + dx - 1;
                  if (sy < 0 || sx < 0 || sy >= int(H) || sx >= int(W)) continue;
                  for (std::uint32_t c = 0; c < C; ++c) {
                    out += double(w(f, dy, dx, c)) *
                           (double(x.at(n, sy, sx, c)) - 0.5);
                  }
                }
              }
              pool += out;
            }
          }
          const double area = double(r.y1 - r.y0) * double(r.x1 - r.x0);
          feat[f * kGrid * kGrid + gr * kGrid + gc] += pool / area;
        }
      }
    }
  }
  for (double& v : feat) v /= shape_.frames;
  return softmax(logits_from_features(feat));
}

double ToyClassifier::adversarial_loss(std::span<const double> x,
                                       const AttackGoal& goal) const {
  if (goal.label >= classes_) throw ConfigError("goal class out of range");
  const auto z = logits(x);
  const double logp = log_softmax_at(z, goal.label);
  return goal.is_targeted() ? -logp : logp;
}

double ToyClassifier::adversarial_loss(const VideoTensor& x,
                                       const AttackGoal& goal) const {
  if (x.shape() != shape_) throw ShapeError("classifier input shape mismatch");
  return adversarial_loss(to_double(x.data()), goal);
}

std::vector<double> ToyClassifier::loss_logit_grad(
    std::span<const double> probs, const AttackGoal& goal) const {
  if (goal.label >= classes_) throw ConfigError("goal class out of range");
  std::vector<double> g(classes_);
  const double sgn = goal.is_targeted() ? 1.0 : -1.0;
  for (std::uint32_t k = 0; k < classes_; ++k) {
    g[k] = sgn * (probs[k] - (k == goal.label ? 1.0 : 0.0));
  }
  return g;
}

VideoTensor ToyClassifier::input_gradient(const VideoTensor& x,
                                          const AttackGoal& goal) const {
  if (x.shape() != shape_) throw ShapeError("classifier input shape mismatch");
  const std::uint32_t H = shape_.height, W = shape_.width, C = shape_.channels;
  const auto probs = forward(x);
  const auto dz = loss_logit_grad(probs, goal);

  const std::size_t F = feature_count();
  std::vector<double> dfeat(F, 0.0);
  for (std::uint32_t k = 0; k < classes_; ++k) {
    const float* wk = lin_w_.data() + k * F;
    for (std::size_t i = 0; i < F; ++i) {
      dfeat[i] += double(logit_scale_) * dz[k] * double(wk[i]);
    }
  }

  // Per region r and tap (dy, dx, c): sum_f W_f(dy,dx,c) * dfeat_f(r) / |r|.
  const std::size_t taps = 9 * C;
  std::vector<double> tap_grad(kGrid * kGrid * taps, 0.0);
  for (std::uint32_t gr = 0; gr < kGrid; ++gr) {
    for (std::uint32_t gc = 0; gc < kGrid; ++gc) {
      const Region r = region(gr, gc);
      const double area = double(r.y1 - r.y0) * double(r.x1 - r.x0);
      double* out = tap_grad.data() + (gr * kGrid + gc) * taps;
      for (std::uint32_t f = 0; f < filters_; ++f) {
        const double g = dfeat[f * kGrid * kGrid + gr * kGrid + gc] / area;
        const float* wf = conv_w_.data() + std::size_t{f} * taps;
        for (std::size_t t = 0; t < taps; ++t) out[t] += g * double(wf[t]);
      }
    }
  }

  // Input pixel p feeds conv output q = p - (dy-1, dx-1).
  std::vector<double> dmean(shape_.frame_size(), 0.0);
  for (std::uint32_t y = 0; y < H; ++y) {
    for (std::uint32_t xx = 0; xx < W; ++xx) {
      for (int dy = 0; dy < 3; ++dy) {
        const int qy = int(y) - dy + 1;
        if (qy < 0 || qy >= int(H)) continue;
        for (int dx = 0; dx < 3; ++dx) {
          const int qx = int(xx) - dx + 1;
          if (qx < 0 || qx >= int(W)) continue;
          const double* tg =
              tap_grad.data() + (region_row(qy) * kGrid + region_col(qx)) * taps +
              (dy * 3 + dx) * C;
          double* dst = dmean.data() + (std::size_t{y} * W + xx) * C;
          for (std::uint32_t c = 0; c < C; ++c) dst[c] += tg[c];
        }
      }
    }
  }

  VideoTensor grad(shape_);
  const double inv_n = 1.0 / shape_.frames;
  for (std::uint32_t n = 0; n < shape_.frames; ++n) {
    auto fr = grad.frame(n);
    for (std::size_t i = 0; i < fr.size(); ++i) {
      fr[i] = static_cast<float>(dmean[i] * inv_n);
    }
  }
  return grad;
}

double ToyClassifier::directional_derivative(const VideoTensor& x,
                                             SparseDirection u,
                                             const AttackGoal& goal) const {
  if (x.shape() != shape_) throw ShapeError("classifier input shape mismatch");
  if (u.indices.size() != u.values.size()) {
    throw ShapeError("sparse direction index/value length mismatch");
  }
  const auto dl_dz = loss_logit_grad(forward(x), goal);
  return tangent_derivative(u, dl_dz);
}

std::vector<double> ToyClassifier::directional_derivatives(
    const VideoTensor& x, std::span<const SparseDirection> dirs,
    const AttackGoal& goal) const {
  if (x.shape() != shape_) throw ShapeError("classifier input shape mismatch");
  const auto dl_dz = loss_logit_grad(forward(x), goal);
  std::vector<double> out(dirs.size());
  for (std::size_t m = 0; m < dirs.size(); ++m) {
    if (dirs[m].indices.size() != dirs[m].values.size()) {
      throw ShapeError("sparse direction index/value length mismatch");
    }
    out[m] = tangent_derivative(dirs[m], dl_dz);
  }
  return out;
}

double ToyClassifier::tangent_derivative(SparseDirection u,
                                         std::span<const double> dl_dz) const {
  const std::uint32_t H = shape_.height, W = shape_.width, C = shape_.channels;

  // Push the tangent through mean -> conv -> pool.
  std::vector<double> dfeat(feature_count(), 0.0);
  const double inv_n = 1.0 / shape_.frames;
  for (std::size_t e = 0; e < u.indices.size(); ++e) {
    const std::uint32_t idx = u.indices[e];
    if (idx >= shape_.size()) throw ShapeError("sparse direction index out of range");
    const double val = double(u.values[e]) * inv_n;
    if (val == 0.0) continue;
    const std::uint32_t c = idx % C;
    const std::uint32_t xx = (idx / C) % W;
    const std::uint32_t y = (idx / (C * W)) % H;
    for (int dy = 0; dy < 3; ++dy) {
      const int qy = int(y) - dy + 1;
      if (qy < 0 || qy >= int(H)) continue;
      for (int dx = 0; dx < 3; ++dx) {
        const int qx = int(xx) - dx + 1;
        if (qx < 0 || qx >= int(W)) continue;
        const std::uint32_t gr = region_row(qy), gc = region_col(qx);
        const Region r = region(gr, gc);
        const double area = double(r.y1 - r.y0) * double(r.x1 - r.x0);
        for (std::uint32_t f = 0; f < filters_; ++f) {
          dfeat[f * kGrid * kGrid + gr * kGrid + gc] +=
              double(w(f, dy, dx, c)) * val / area;
        }
      }
    }
  }

  const std::size_t F = feature_count();
  double dl = 0.0;
  for (std::uint32_t k = 0; k < classes_; ++k) {
    const float* wk = lin_w_.data() + k * F;
    double dzk = 0.0;
    for (std::size_t i = 0; i < F; ++i) dzk += double(wk[i]) * dfeat[i];
    dl += dl_dz[k] * double(logit_scale_) * dzk;
  }
  return dl;
}

// ---------------------------------------------------------------------------
// FeatureExtractor

FeatureExtractor FeatureExtractor::generate(std::uint32_t filters,
                                            std::uint32_t channels,
                                            std::uint64_t seed) {
  if (filters == 0 || channels == 0) {
    throw ConfigError("feature extractor needs filters and channels");
  }
  FeatureExtractor fe;
  fe.filters_ = filters;
  fe.channels_ = channels;
  fe.conv_w_.resize(std::size_t{filters} * 9 * channels);
  fe.conv_b_.resize(filters);
  Rng rng(seed);
  fill_normal(fe.conv_w_, rng, ModelConfig::kInitStd);
  fill_normal(fe.conv_b_, rng, ModelConfig::kInitStd);
  return fe;
}

void FeatureExtractor::check_frame(const Image& frame) const {
  if (frame.channels != channels_ || frame.size() == 0 ||
      frame.size() != std::size_t{frame.height} * frame.width * frame.channels) {
    throw ShapeError("feature extractor frame has wrong channel count");
  }
}

std::vector<double> FeatureExtractor::preactivation(const Image& frame) const {
  check_frame(frame);
  const std::uint32_t H = frame.height, W = frame.width, C = channels_;
  std::vector<double> pre(std::size_t{H} * W * filters_);
  for (std::uint32_t y = 0; y < H; ++y) {
    for (std::uint32_t x = 0; x < W; ++x) {
      double* out = pre.data() + (std::size_t{y} * W + x) * filters_;
      for (std::uint32_t f = 0; f < filters_; ++f) out[f] = conv_b_[f];
      for (int dy = 0; dy < 3; ++dy) {
        const int sy = int(y) + dy - 1;
        if (sy < 0 || sy >= int(H)) continue;
        for (int dx = 0; dx < 3; ++dx) {
          const int sx = int(x) + dx - 1;
          if (sx < 0 || sx >= int(W)) continue;
          const float* px = frame.data.data() + (std::size_t(sy) * W + sx) * C;
          for (std::uint32_t f = 0; f < filters_; ++f) {
            const float* wf = conv_w_.data() + ((std::size_t{f} * 3 + dy) * 3 + dx) * C;
            double s = 0.0;
            for (std::uint32_t c = 0; c < C; ++c) {
              s += double(wf[c]) * (double(px[c]) - 0.5);
            }
            out[f] += s;
          }
        }
      }
    }
  }
  return pre;
}

Image FeatureExtractor::forward(const Image& frame) const {
  const auto pre = preactivation(frame);
  Image out(frame.height, frame.width, filters_);
  for (std::size_t i = 0; i < pre.size(); ++i) {
    out.data[i] = static_cast<float>(std::tanh(pre[i]));
  }
  return out;
}

double FeatureExtractor::feature_distance(const Image& frame, const Image& target,
                                          const Image& mask) const {
  const auto pre = preactivation(frame);
  if (target.height != frame.height || target.width != frame.width ||
      target.channels != filters_ || !target.same_dims(mask)) {
    throw ShapeError("target/mask must match the feature map shape");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const double d = double(mask.data[i]) * (std::tanh(pre[i]) - target.data[i]);
    s += d * d;
  }
  return s;
}

Image FeatureExtractor::feature_distance_gradient(const Image& frame,
                                                  const Image& target,
                                                  const Image& mask) const {
  const auto pre = preactivation(frame);
  if (target.height != frame.height || target.width != frame.width ||
      target.channels != filters_ || !target.same_dims(mask)) {
    throw ShapeError("target/mask must match the feature map shape");
  }
  const std::uint32_t H = frame.height, W = frame.width, C = channels_;
  std::vector<double> dpre(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const double f = std::tanh(pre[i]);
    const double m = mask.data[i];
    dpre[i] = 2.0 * m * m * (f - target.data[i]) * (1.0 - f * f);
  }
  std::vector<double> dframe(frame.size(), 0.0);
  for (std::uint32_t y = 0; y < H; ++y) {
    for (std::uint32_t x = 0; x < W; ++x) {
      const double* g = dpre.data() + (std::size_t{y} * W + x) * filters_;
      for (int dy = 0; dy < 3; ++dy) {
        const int sy = int(y) + dy - 1;
        if (sy < 0 || sy >= int(H)) continue;
        for (int dx = 0; dx < 3; ++dx) {
          const int sx = int(x) + dx - 1;
          if (sx < 0 || sx >= int(W)) continue;
          double* dst = dframe.data() + (std::size_t(sy) * W + sx) * C;
          for (std::uint32_t f = 0; f < filters_; ++f) {
            if (g[f] == 0.0) continue;
            const float* wf = conv_w_.data() + ((std::size_t{f} * 3 + dy) * 3 + dx) * C;
            for (std::uint32_t c = 0; c < C; ++c) dst[c] += g[f] * double(wf[c]);
          }
        }
      }
    }
  }
  Image out(H, W, C);
  for (std::size_t i = 0; i < dframe.size(); ++i) {
    out.data[i] = static_cast<float>(dframe[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundles and checkpoint files

ModelBundle generate_bundle(const ModelConfig& cfg) {
  cfg.validate();
  ModelBundle b;
  b.config = cfg;
  b.classifier = ToyClassifier::generate(cfg);
  if (cfg.surrogate_filters > 0) {
    for (std::uint32_t s = 0; s < ModelConfig::kSurrogateCount; ++s) {
      b.surrogates.push_back(std::make_shared<const FeatureExtractor>(
          FeatureExtractor::generate(cfg.surrogate_filters, cfg.channels,
                                     derive_seed(cfg.seed, s))));
    }
  }
  return b;
}

class ModelIo {
 public:
  static void write(std::ostream& os, const ModelBundle& b) {
    const ModelConfig& c = b.config;
    os.write("VBM1", 4);
    for (std::uint32_t v : {c.classes, c.filters, c.surrogate_filters, c.height,
                            c.width, c.channels, c.frames, c.seed}) {
      detail::put_u32(os, v);
    }
    detail::put_f32(os, b.classifier.logit_scale_);
    detail::put_f32s(os, b.classifier.conv_w_);
    detail::put_f32s(os, b.classifier.conv_b_);
    detail::put_f32s(os, b.classifier.lin_w_);
    detail::put_f32s(os, b.classifier.lin_b_);
    const std::size_t expected =
        c.surrogate_filters > 0 ? ModelConfig::kSurrogateCount : 0;
    if (b.surrogates.size() != expected) {
      throw IoError("bundle surrogate count does not match its config");
    }
    for (const auto& s : b.surrogates) {
      detail::put_f32s(os, s->conv_w_);
      detail::put_f32s(os, s->conv_b_);
    }
    if (!os) throw IoError("failed writing VBM stream");
  }

  static ModelBundle read(std::istream& is) {
    detail::expect_magic(is, "VBM1");
    ModelConfig c;
    c.classes = detail::get_u32(is);
    c.filters = detail::get_u32(is);
    c.surrogate_filters = detail::get_u32(is);
    c.height = detail::get_u32(is);
    c.width = detail::get_u32(is);
    c.channels = detail::get_u32(is);
    c.frames = detail::get_u32(is);
    c.seed = detail::get_u32(is);
    c.logit_scale = detail::get_f32(is);
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw IoError(std::string("invalid VBM header: ") + e.what());
    }
    ModelBundle b;
    b.config = c;
    b.classifier = ToyClassifier(c);
    detail::get_f32s(is, b.classifier.conv_w_);
    detail::get_f32s(is, b.classifier.conv_b_);
    detail::get_f32s(is, b.classifier.lin_w_);
    detail::get_f32s(is, b.classifier.lin_b_);
    if (c.surrogate_filters > 0) {
      for (std::uint32_t s = 0; s < ModelConfig::kSurrogateCount; ++s) {
        FeatureExtractor fe;
        fe.filters_ = c.surrogate_filters;
        fe.channels_ = c.channels;
        fe.conv_w_.resize(std::size_t{c.surrogate_filters} * 9 * c.channels);
        fe.conv_b_.resize(c.surrogate_filters);
        detail::get_f32s(is, fe.conv_w_);
        detail::get_f32s(is, fe.conv_b_);
        b.surrogates.push_back(std::make_shared<const FeatureExtractor>(std::move(fe)));
      }
    }
    return b;
  }
};

void write_vbm(std::ostream& os, const ModelBundle& bundle) {
  ModelIo::write(os, bundle);
}

ModelBundle read_vbm(std::istream& is) { return ModelIo::read(is); }

void save_vbm(const std::filesystem::path& path, const ModelBundle& bundle) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_vbm(os, bundle);
}

ModelBundle load_vbm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  ModelBundle b = read_vbm(is);
  detail::expect_eof(is);
  return b;
}

}  // namespace vbad
