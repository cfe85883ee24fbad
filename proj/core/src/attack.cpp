#include "vbad/attack.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "json.hpp"
#include "vbad/errors.hpp"

namespace vbad {

AttackConfig AttackConfig::defaults(GoalKind goal) {
  AttackConfig cfg;
  cfg.estimator.nes.sigma = goal == GoalKind::targeted ? 1e-6 : 1e-3;
  return cfg;
}

AttackConfig AttackConfig::p_bad(GoalKind goal) {
  AttackConfig cfg = defaults(goal);
  cfg.tentative = TentativeKind::static_sign;
  cfg.partition = PartitionSpec::per_pixel();
  cfg.estimator.nes.population = 96;
  return cfg;
}

AttackConfig AttackConfig::sr_bad(GoalKind goal) {
  AttackConfig cfg = defaults(goal);
  cfg.tentative = TentativeKind::static_sign;
  cfg.partition = PartitionSpec::random(0);
  return cfg;
}

void AttackConfig::validate() const {
  if (!(eps_adv > 0.0 && eps_adv <= 1.0)) throw ConfigError("eps must lie in (0, 1]");
  if (!(eps_decay > 0.0)) throw ConfigError("epsilon decay must be positive");
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) {
    throw ConfigError("step size must be non-negative");
  }
  if (budget == 0) throw ConfigError("query budget must be positive");
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
    throw ConfigError("mask probability must lie in [0, 1]");
  }
  if (adapt.window == 0 || adapt.eps_fail_limit == 0) {
    throw ConfigError("adaptation window and limit must be positive");
  }
  estimator.validate();
}

void record_iteration(AttackState& state, bool maintained, bool eps_reduced,
                      const AdaptConfig& adapt) {
  state.maintain_failures.push_back(!maintained);
  while (state.maintain_failures.size() > adapt.window) {
    state.maintain_failures.pop_front();
  }
  state.eps_fail_streak = eps_reduced ? 0 : state.eps_fail_streak + 1;
}

void adapt_hyperparams(AttackState& state, const AttackConfig& cfg) {
  const AdaptConfig& a = cfg.adapt;
  if (!a.enabled) return;
  if (state.maintain_failures.size() >= a.window) {
    const auto fails = std::count(state.maintain_failures.begin(),
                                  state.maintain_failures.end(), true);
    if (double(fails) / double(state.maintain_failures.size()) > a.maintain_fail_threshold) {
      state.alpha *= 0.5;
      state.maintain_failures.clear();
    }
  }
  if (state.eps_fail_streak >= a.eps_fail_limit) {
    state.delta_eps *= 0.5;
    state.eps_fail_streak = 0;
  }
}

namespace {

struct Probe {
  OracleResponse resp;
  LossValue loss;
};

Probe ask(Oracle& oracle, const VideoTensor& x, const AttackGoal& goal,
          QueryCounter& counter) {
  const OracleResponse r = query_top1(oracle, x, counter);
  return {r, adversarial_loss(r, goal)};
}

/// tentative -> basis -> estimated weights -> rectified step.
VideoTensor rectified_step(const VideoTensor& x_adv, const TentativeSpec& spec,
                           const AttackConfig& cfg, Oracle& oracle,
                           const AttackGoal& goal, QueryCounter& counter, Rng& rng) {
  const VideoTensor h = generate_tentative(x_adv, spec, rng);
  const PatchBasis basis = build_basis(h, cfg.partition, rng);
  const auto v = estimate_weights(x_adv, basis, oracle, goal, cfg.estimator, counter, rng);
  VideoTensor g = rectify(v, basis);
  return cfg.use_sign_step ? sign_of(g) : g;
}

class Recorder {
 public:
  Recorder(AttackResult& result, const QueryCounter& counter, const StepObserver& obs)
      : result_(result), counter_(counter), observer_(obs) {}

  void log(const AttackState& s, const Probe& p) {
    TrajectoryRecord r;
    r.step = s.step;
    r.epsilon = s.epsilon;
    r.loss = p.loss.value;
    r.valid = p.loss.valid;
    r.queries_used = counter_.used();
    r.step_queries = r.queries_used - last_used_;
    last_used_ = r.queries_used;
    r.top1 = p.resp.label;
    r.prob = p.resp.prob;
    r.alpha = s.alpha;
    r.delta_eps = s.delta_eps;
    result_.trajectory.push_back(r);
    if (observer_) observer_(s, r);
  }

 private:
  AttackResult& result_;
  const QueryCounter& counter_;
  const StepObserver& observer_;
  std::uint64_t last_used_ = 0;
};

}  // namespace

AttackResult attack_untargeted(const VideoTensor& x, std::uint32_t y, Oracle& oracle,
                               const AttackConfig& cfg, Rng& rng,
                               const StepObserver& observer) {
  cfg.validate();
  const AttackGoal goal = AttackGoal::untargeted(y);
  QueryCounter counter(cfg.budget);
  AttackResult result;
  Recorder rec(result, counter, observer);

  AttackState state;
  state.epsilon = cfg.eps_adv;
  state.alpha = cfg.step_size;
  state.delta_eps = 0.0;
  state.x_adv = x;

  Probe last = ask(oracle, x, goal, counter);
  if (last.resp.label != y) {
    throw ConfigError("untargeted attack needs oracle(x) == y, got label " +
                      std::to_string(last.resp.label));
  }
  rec.log(state, last);

  const TentativeSpec spec =
      make_tentative_spec(cfg.tentative, cfg.surrogates, goal, x.shape(), nullptr, rng,
                          cfg.mask_prob);
  try {
    while (true) {
      const VideoTensor step =
          rectified_step(state.x_adv, spec, cfg, oracle, goal, counter, rng);
      VideoTensor cand = clip_ball(add_scaled(state.x_adv, -state.alpha, step), x,
                                   state.epsilon);
      last = ask(oracle, cand, goal, counter);
      state.x_adv = std::move(cand);
      ++state.step;
      rec.log(state, last);
      if (last.resp.label != y) {
        result.success = true;
        break;
      }
    }
  } catch (const BudgetExceeded&) {
    result.success = false;
  }

  result.queries_used = counter.used();
  result.final_epsilon = state.epsilon;
  result.final_label = last.resp.label;
  result.final_prob = last.resp.prob;
  result.x_adv = std::move(state.x_adv);
  return result;
}

AttackResult attack_targeted(const VideoTensor& x, std::uint32_t y_adv,
                             const VideoTensor& x_start, Oracle& oracle,
                             const AttackConfig& cfg, Rng& rng,
                             const StepObserver& observer) {
  cfg.validate();
  require_same_shape(x, x_start, "attack_targeted");
  const AttackGoal goal = AttackGoal::targeted(y_adv);
  QueryCounter counter(cfg.budget);
  AttackResult result;
  Recorder rec(result, counter, observer);

  AttackState state;
  state.epsilon = 1.0;
  state.alpha = cfg.step_size;
  state.delta_eps = cfg.eps_decay;
  state.x_adv = x_start;

  Probe committed = ask(oracle, x_start, goal, counter);
  if (committed.resp.label != y_adv) {
    throw ConfigError("targeted attack needs oracle(x_start) == y_adv, got label " +
                      std::to_string(committed.resp.label));
  }
  rec.log(state, committed);

  const TentativeSpec spec = make_tentative_spec(cfg.tentative, cfg.surrogates, goal,
                                                 x.shape(), &x_start, rng, cfg.mask_prob);
  try {
    while (state.epsilon > cfg.eps_adv) {
      const VideoTensor step =
          rectified_step(state.x_adv, spec, cfg, oracle, goal, counter, rng);
      const VideoTensor moved = add_scaled(state.x_adv, -state.alpha, step);

      // Never overshoot eps_adv: the last cut lands exactly on it.
      const double eps_hat = std::max(state.epsilon - state.delta_eps, cfg.eps_adv);
      bool maintained = false;
      bool reduced = false;
      VideoTensor cand = clip_ball(moved, x, eps_hat);
      Probe p = ask(oracle, cand, goal, counter);
      if (p.resp.label == y_adv) {
        state.x_adv = std::move(cand);
        state.epsilon = eps_hat;
        committed = p;
        maintained = reduced = true;
      } else {
        cand = clip_ball(moved, x, state.epsilon);
        p = ask(oracle, cand, goal, counter);
        if (p.resp.label == y_adv) {
          state.x_adv = std::move(cand);
          committed = p;
          maintained = true;
        }
      }
      ++state.step;
      record_iteration(state, maintained, reduced, cfg.adapt);
      adapt_hyperparams(state, cfg);
      rec.log(state, committed);
    }
  } catch (const BudgetExceeded&) {
  }

  result.queries_used = counter.used();
  result.final_epsilon = state.epsilon;
  result.final_label = committed.resp.label;
  result.final_prob = committed.resp.prob;
  result.success = state.epsilon <= cfg.eps_adv && committed.resp.label == y_adv &&
                   linf_distance(state.x_adv, x) <= cfg.eps_adv + 1e-6;
  result.x_adv = std::move(state.x_adv);
  return result;
}

void write_trajectory_jsonl(std::ostream& os, const std::vector<TrajectoryRecord>& traj) {
  for (const auto& r : traj) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["epsilon"] = r.epsilon;
    j["loss"] = r.valid ? nlohmann::ordered_json(r.loss) : nlohmann::ordered_json(nullptr);
    j["valid"] = r.valid;
    j["queries_used"] = r.queries_used;
    j["top1"] = r.top1;
    j["prob"] = r.prob;
    j["alpha"] = r.alpha;
    j["delta_eps"] = r.delta_eps;
    os << j.dump() << '\n';
  }
}

}  // namespace vbad
