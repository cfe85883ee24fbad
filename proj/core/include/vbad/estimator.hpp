#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "vbad/goal.hpp"
#include "vbad/oracle.hpp"
#include "vbad/partition.hpp"
#include "vbad/random.hpp"

namespace vbad {

enum class LossTransform {
  identity,       // raw l_adv; rejects invalid samples (analysis/testing only)
  centered_rank,  // ranks scaled to [-1/2, 1/2], ties share the mean rank
};

enum class EstimatorKind { nes, fd };

std::string_view to_string(EstimatorKind k);
EstimatorKind parse_estimator_kind(std::string_view s);

struct NesConfig {
  double sigma = 1e-3;
  std::uint32_t population = 48;  // lambda, must be even
  LossTransform transform = LossTransform::centered_rank;

  void validate() const;
};

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::nes;
  NesConfig nes;
  double fd_delta = 1e-3;

  /// Queries one estimate costs over a basis of M patches.
  std::uint64_t queries_per_estimate(std::size_t patches) const {
    return kind == EstimatorKind::nes ? nes.population : 2 * std::uint64_t(patches);
  }
  void validate() const;
};

/// Fitness values for a batch of losses. Centered rank: invalid targeted
/// samples count as +inf (punished), invalid untargeted ones as -inf (the
/// class already flipped), then fitness = rank / (n - 1) - 1/2.
std::vector<double> transform_losses(std::span<const LossValue> samples,
                                     GoalKind goal, LossTransform transform);

/// Antithetic NES estimate of grad_v l_adv(x + R(v, U)) at v = 0.
/// Consumes exactly cfg.population queries, or none if the budget is short.
std::vector<double> nes_estimate(const VideoTensor& x, const PatchBasis& basis,
                                 Oracle& oracle, const AttackGoal& goal,
                                 const NesConfig& cfg, QueryCounter& counter, Rng& rng);

/// Central differences along each patch direction. Consumes exactly 2M
/// queries, or none if the budget is short.
std::vector<double> fd_estimate(const VideoTensor& x, const PatchBasis& basis,
                                Oracle& oracle, const AttackGoal& goal, double delta,
                                QueryCounter& counter,
                                LossTransform transform = LossTransform::centered_rank);

std::vector<double> estimate_weights(const VideoTensor& x, const PatchBasis& basis,
                                     Oracle& oracle, const AttackGoal& goal,
                                     const EstimatorConfig& cfg, QueryCounter& counter,
                                     Rng& rng);

}  // namespace vbad
