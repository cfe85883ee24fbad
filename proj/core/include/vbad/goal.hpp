#pragma once

#include <cstdint>
#include <string_view>

namespace vbad {

enum class GoalKind { untargeted, targeted };

/// What the attack minimizes: -CE(y) when untargeted, CE(y_adv) when targeted.
struct AttackGoal {
  GoalKind kind = GoalKind::untargeted;
  /// True class y (untargeted) or target class y_adv (targeted).
  std::uint32_t label = 0;

  static AttackGoal untargeted(std::uint32_t y) {
    return {GoalKind::untargeted, y};
  }
  static AttackGoal targeted(std::uint32_t y_adv) {
    return {GoalKind::targeted, y_adv};
  }
  bool is_targeted() const noexcept { return kind == GoalKind::targeted; }
};

inline std::string_view to_string(GoalKind k) {
  return k == GoalKind::targeted ? "targeted" : "untargeted";
}

}  // namespace vbad
