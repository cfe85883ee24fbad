#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "vbad/goal.hpp"
#include "vbad/models.hpp"
#include "vbad/random.hpp"
#include "vbad/tensor.hpp"

namespace vbad {

enum class TentativeKind { static_sign, random_sign, transferred_single, transferred_ensemble };

std::string_view to_string(TentativeKind k);
/// Accepts the CLI spellings: static, random, single, ensemble.
TentativeKind parse_tentative_kind(std::string_view s);

/// Everything the tentative generator needs for one attack run.
struct TentativeSpec {
  TentativeKind kind = TentativeKind::transferred_ensemble;
  double mask_prob = 0.5;
  SurrogateSet surrogates;
  /// target_features[s][n]: feature map the s-th surrogate pulls frame n toward.
  std::vector<std::vector<Image>> target_features;

  bool transferred() const noexcept {
    return kind == TentativeKind::transferred_single ||
           kind == TentativeKind::transferred_ensemble;
  }
  void validate() const;
};

/// Builds the per-run spec. Transferred kinds get their target features fixed
/// here: Gaussian noise maps for untargeted goals (drawn from rng, frame order),
/// surrogate features of the target-class video for targeted ones.
/// A single-surrogate spec keeps only the first surrogate.
TentativeSpec make_tentative_spec(TentativeKind kind, const SurrogateSet& surrogates,
                                  const AttackGoal& goal, const Shape& shape,
                                  const VideoTensor* target_video, Rng& rng,
                                  double mask_prob = 0.5);

VideoTensor tentative_static(const Shape& shape);
VideoTensor tentative_random(const Shape& shape, Rng& rng);

/// sign( grad_x (1/N) sum_n ||b_n . f(x_n) - b_n . r_n||^2 ), with the gradient
/// averaged over surrogates before the sign. Fresh masks are drawn on every
/// call, frame-major then surrogate order.
VideoTensor tentative_transferred(const VideoTensor& x, const TentativeSpec& spec,
                                  Rng& rng);

/// Dispatch on spec.kind.
VideoTensor generate_tentative(const VideoTensor& x, const TentativeSpec& spec,
                               Rng& rng);

}  // namespace vbad
