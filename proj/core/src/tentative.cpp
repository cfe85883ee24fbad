#include "vbad/tentative.hpp"

#include <string>

#include "vbad/errors.hpp"

namespace vbad {

std::string_view to_string(TentativeKind k) {
  switch (k) {
    case TentativeKind::static_sign: return "static";
    case TentativeKind::random_sign: return "random";
    case TentativeKind::transferred_single: return "single";
    case TentativeKind::transferred_ensemble: return "ensemble";
  }
  return "?";
}

TentativeKind parse_tentative_kind(std::string_view s) {
  if (s == "static") return TentativeKind::static_sign;
  if (s == "random") return TentativeKind::random_sign;
  if (s == "single") return TentativeKind::transferred_single;
  if (s == "ensemble") return TentativeKind::transferred_ensemble;
  throw ConfigError("unknown tentative kind: " + std::string(s));
}

void TentativeSpec::validate() const {
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
    throw ConfigError("mask probability must lie in [0, 1]");
  }
  if (!transferred()) return;
  if (surrogates.empty()) throw ConfigError("transferred tentative needs surrogates");
  if (kind == TentativeKind::transferred_ensemble && surrogates.size() < 2) {
    throw ConfigError("ensemble tentative needs at least two surrogates");
  }
  if (target_features.size() != surrogates.size()) {
    throw ConfigError("missing target features for a surrogate");
  }
}

TentativeSpec make_tentative_spec(TentativeKind kind, const SurrogateSet& surrogates,
                                  const AttackGoal& goal, const Shape& shape,
                                  const VideoTensor* target_video, Rng& rng,
                                  double mask_prob) {
  TentativeSpec spec;
  spec.kind = kind;
  spec.mask_prob = mask_prob;
  if (!spec.transferred()) {
    spec.validate();
    return spec;
  }
  if (kind == TentativeKind::transferred_single) {
    if (surrogates.empty()) throw ConfigError("transferred tentative needs surrogates");
    spec.surrogates.assign(surrogates.begin(), surrogates.begin() + 1);
  } else {
    spec.surrogates = surrogates;
  }
  if (goal.is_targeted()) {
    if (target_video == nullptr) {
      throw ConfigError("targeted transferred tentative needs the target-class video");
    }
    if (target_video->shape() != shape) throw ShapeError("target video shape mismatch");
  }
  spec.target_features.resize(spec.surrogates.size());
  for (std::uint32_t n = 0; n < shape.frames; ++n) {
    const Image frame = goal.is_targeted() ? frame_of(*target_video, n) : Image{};
    for (std::size_t s = 0; s < spec.surrogates.size(); ++s) {
      const FeatureExtractor& fe = *spec.surrogates[s];
      if (fe.channels() != shape.channels) {
        throw ShapeError("surrogate channel count does not match the video");
      }
      if (goal.is_targeted()) {
        spec.target_features[s].push_back(fe.forward(frame));
      } else {
        Image noise(shape.height, shape.width, fe.filters());
        for (float& v : noise.data) v = static_cast<float>(standard_normal(rng));
        spec.target_features[s].push_back(std::move(noise));
      }
    }
  }
  spec.validate();
  return spec;
}

VideoTensor tentative_static(const Shape& shape) { return VideoTensor(shape, 1.0f); }

VideoTensor tentative_random(const Shape& shape, Rng& rng) {
  VideoTensor out(shape);
  std::bernoulli_distribution coin(0.5);
  for (float& v : out.data()) v = coin(rng) ? 1.0f : -1.0f;
  return out;
}

VideoTensor tentative_transferred(const VideoTensor& x, const TentativeSpec& spec,
                                  Rng& rng) {
  if (!spec.transferred()) throw ConfigError("tentative spec is not a transferred kind");
  spec.validate();
  const Shape& shape = x.shape();
  for (const auto& per_frame : spec.target_features) {
    if (per_frame.size() != shape.frames) {
      throw ConfigError("missing target features for some frames");
    }
  }
  const double weight = 1.0 / (double(shape.frames) * double(spec.surrogates.size()));
  std::bernoulli_distribution keep(spec.mask_prob);
  std::vector<double> acc(x.size(), 0.0);
  for (std::uint32_t n = 0; n < shape.frames; ++n) {
    const Image frame = frame_of(x, n);
    for (std::size_t s = 0; s < spec.surrogates.size(); ++s) {
      const Image& target = spec.target_features[s][n];
      Image mask(target.height, target.width, target.channels);
      bool any = false;
      for (float& m : mask.data) {
        m = keep(rng) ? 1.0f : 0.0f;
        any = any || m != 0.0f;
      }
      if (!any) continue;
      const Image g = spec.surrogates[s]->feature_distance_gradient(frame, target, mask);
      double* dst = acc.data() + n * shape.frame_size();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += weight * g.data[i];
    }
  }
  VideoTensor out(shape);
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out[i] = acc[i] > 0.0 ? 1.0f : (acc[i] < 0.0 ? -1.0f : 0.0f);
  }
  return out;
}

VideoTensor generate_tentative(const VideoTensor& x, const TentativeSpec& spec,
                               Rng& rng) {
  switch (spec.kind) {
    case TentativeKind::static_sign: return tentative_static(x.shape());
    case TentativeKind::random_sign: return tentative_random(x.shape(), rng);
    case TentativeKind::transferred_single:
    case TentativeKind::transferred_ensemble: return tentative_transferred(x, spec, rng);
  }
  throw ConfigError("unknown tentative kind");
}

}  // namespace vbad
