#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <vector>

#include "vbad/estimator.hpp"
#include "vbad/goal.hpp"
#include "vbad/models.hpp"
#include "vbad/oracle.hpp"
#include "vbad/partition.hpp"
#include "vbad/random.hpp"
#include "vbad/tentative.hpp"
#include "vbad/tensor.hpp"

namespace vbad {

/// Step-size and epsilon-decay halving rules for targeted runs.
struct AdaptConfig {
  bool enabled = true;
  double maintain_fail_threshold = 0.5;  // halve alpha above this failure ratio
  std::uint32_t window = 20;             // iterations in the failure-ratio window
  std::uint32_t eps_fail_limit = 100;    // halve delta_eps after this many misses
};

struct AttackConfig {
  double eps_adv = 0.05;
  double eps_decay = 0.05;  // initial delta_eps (targeted)
  double step_size = 0.01;  // initial alpha
  std::uint64_t budget = 300000;
  EstimatorConfig estimator;
  PartitionSpec partition = PartitionSpec::uniform(8, 8);
  TentativeKind tentative = TentativeKind::transferred_ensemble;
  double mask_prob = 0.5;
  bool use_sign_step = true;
  AdaptConfig adapt;
  /// Public image-model stand-ins used by transferred tentatives.
  SurrogateSet surrogates;

  /// Ensemble tentative, uniform 8x8 grid, NES with lambda = 48 and
  /// sigma = 1e-6 (targeted) or 1e-3 (untargeted).
  static AttackConfig defaults(GoalKind goal);
  /// Pixel-wise NES: static tentative, one patch per input dimension, lambda 96.
  static AttackConfig p_bad(GoalKind goal);
  /// Static tentative over a random partition.
  static AttackConfig sr_bad(GoalKind goal);

  void validate() const;
};

/// Live state of a run.
struct AttackState {
  double epsilon = 0.0;
  double alpha = 0.0;
  double delta_eps = 0.0;
  VideoTensor x_adv;
  std::uint64_t step = 0;
  std::deque<bool> maintain_failures;  // most recent last; true = lost y_adv
  std::uint32_t eps_fail_streak = 0;
};

/// Log the outcome of one targeted iteration into the adaptation statistics.
void record_iteration(AttackState& state, bool maintained, bool eps_reduced,
                      const AdaptConfig& adapt);

/// Apply the halving rules: alpha halves when more than the threshold fraction
/// of a full window failed to keep y_adv (window then restarts); delta_eps
/// halves after eps_fail_limit consecutive iterations without an epsilon cut.
void adapt_hyperparams(AttackState& state, const AttackConfig& cfg);

struct TrajectoryRecord {
  std::uint64_t step = 0;
  double epsilon = 0.0;
  double loss = 0.0;
  bool valid = false;
  std::uint64_t step_queries = 0;
  std::uint64_t queries_used = 0;
  std::uint32_t top1 = 0;
  double prob = 0.0;
  double alpha = 0.0;
  double delta_eps = 0.0;
};

struct AttackResult {
  bool success = false;
  std::uint64_t queries_used = 0;
  VideoTensor x_adv;
  double final_epsilon = 0.0;
  std::uint32_t final_label = 0;
  double final_prob = 0.0;
  std::vector<TrajectoryRecord> trajectory;
};

/// Called after every logged step with the state the record describes.
using StepObserver = std::function<void(const AttackState&, const TrajectoryRecord&)>;

/// PGD from the clean video with a fixed L-inf radius eps_adv. Stops when the
/// top-1 label leaves y or the budget runs out.
/// Throws ConfigError if the oracle does not already assign label y to x.
AttackResult attack_untargeted(const VideoTensor& x, std::uint32_t y, Oracle& oracle,
                               const AttackConfig& cfg, Rng& rng,
                               const StepObserver& observer = {});

/// Starts from x_start (classified y_adv) with radius 1 around x and shrinks the
/// radius toward eps_adv while keeping y_adv top-1.
/// Throws ConfigError if the oracle does not assign y_adv to x_start.
AttackResult attack_targeted(const VideoTensor& x, std::uint32_t y_adv,
                             const VideoTensor& x_start, Oracle& oracle,
                             const AttackConfig& cfg, Rng& rng,
                             const StepObserver& observer = {});

/// One JSON object per record: step, epsilon, loss (null when invalid), valid,
/// queries_used, top1, prob, alpha, delta_eps.
void write_trajectory_jsonl(std::ostream& os, const std::vector<TrajectoryRecord>& traj);

}  // namespace vbad
