#include "doctest.h"

#include <sstream>

#include "json.hpp"
#include "support/oracles.hpp"
#include "vbad/attack.hpp"
#include "vbad/errors.hpp"

using namespace vbad;
using namespace vbad::testing;

namespace {

AttackState fresh_state() {
  AttackState s;
  s.alpha = 0.01;
  s.delta_eps = 0.05;
  return s;
}

AttackConfig small_config(GoalKind goal, const ModelBundle& b) {
  AttackConfig c = AttackConfig::defaults(goal);
  c.partition = PartitionSpec::uniform(2, 2);
  c.estimator.nes.population = 8;
  c.budget = 600;
  c.surrogates = b.surrogates;
  return c;
}

}  // namespace

TEST_CASE("alpha halves once when 11 of 20 window steps fail") {
  AttackConfig cfg;
  AttackState s = fresh_state();
  int halvings = 0;
  for (int i = 0; i < 20; ++i) {
    const double before = s.alpha;
    record_iteration(s, /*maintained=*/i % 2 == 0 && i < 18, false, cfg.adapt);
    adapt_hyperparams(s, cfg);
    if (s.alpha < before) ++halvings;
  }
  CHECK(halvings == 1);
  CHECK(s.alpha == 0.005);
  CHECK(s.maintain_failures.empty());
}

TEST_CASE("alpha holds at exactly half the window failing, and before the window fills") {
  AttackConfig cfg;
  AttackState s = fresh_state();
  for (int i = 0; i < 19; ++i) {
    record_iteration(s, false, false, cfg.adapt);
    adapt_hyperparams(s, cfg);
  }
  CHECK(s.alpha == 0.01);

  AttackState t = fresh_state();
  for (int i = 0; i < 60; ++i) {
    record_iteration(t, i % 2 == 0, false, cfg.adapt);
    adapt_hyperparams(t, cfg);
    CHECK(t.maintain_failures.size() <= cfg.adapt.window);
  }
  CHECK(t.alpha == 0.01);
}

TEST_CASE("delta_eps halves on the 100th consecutive miss") {
  AttackConfig cfg;
  AttackState s = fresh_state();
  for (int i = 0; i < 99; ++i) {
    record_iteration(s, true, false, cfg.adapt);
    adapt_hyperparams(s, cfg);
  }
  CHECK(s.delta_eps == 0.05);
  CHECK(s.eps_fail_streak == 99);
  record_iteration(s, true, false, cfg.adapt);
  adapt_hyperparams(s, cfg);
  CHECK(s.delta_eps == 0.025);
  CHECK(s.eps_fail_streak == 0);

  // a successful cut restarts the count
  for (int i = 0; i < 99; ++i) record_iteration(s, true, false, cfg.adapt);
  record_iteration(s, true, true, cfg.adapt);
  adapt_hyperparams(s, cfg);
  CHECK(s.delta_eps == 0.025);
  CHECK(s.eps_fail_streak == 0);
}

TEST_CASE("adaptation can be switched off") {
  AttackConfig cfg;
  cfg.adapt.enabled = false;
  AttackState s = fresh_state();
  for (int i = 0; i < 300; ++i) {
    record_iteration(s, false, false, cfg.adapt);
    adapt_hyperparams(s, cfg);
  }
  CHECK(s.alpha == 0.01);
  CHECK(s.delta_eps == 0.05);
}

TEST_CASE("config presets and validation") {
  const AttackConfig v = AttackConfig::defaults(GoalKind::targeted);
  CHECK(v.estimator.nes.sigma == 1e-6);
  CHECK(v.estimator.nes.population == 48);
  CHECK(v.partition.grid_rows == 8);
  CHECK(v.tentative == TentativeKind::transferred_ensemble);
  CHECK(AttackConfig::defaults(GoalKind::untargeted).estimator.nes.sigma == 1e-3);

  const AttackConfig p = AttackConfig::p_bad(GoalKind::untargeted);
  CHECK(p.tentative == TentativeKind::static_sign);
  CHECK(p.partition.method == PartitionMethod::per_pixel);
  CHECK(p.estimator.nes.population == 96);
  p.validate();

  const AttackConfig r = AttackConfig::sr_bad(GoalKind::targeted);
  CHECK(r.tentative == TentativeKind::static_sign);
  CHECK(r.partition.method == PartitionMethod::random);
  r.validate();

  AttackConfig bad = v;
  bad.eps_adv = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = v;
  bad.budget = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = v;
  bad.step_size = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = v;
  bad.mask_prob = 2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = v;
  bad.estimator.nes.population = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("preconditions are enforced") {
  const ModelBundle b = generate_bundle(tiny_config(3));
  const Shape s = b.classifier.input_shape();
  ScriptedOracle o({{2, 0.9}});
  Rng rng(1);
  const VideoTensor x(s, 0.5f);
  CHECK_THROWS_AS(attack_untargeted(x, 1, o, small_config(GoalKind::untargeted, b), rng),
                  ConfigError);
  CHECK_THROWS_AS(attack_targeted(x, 1, x, o, small_config(GoalKind::targeted, b), rng),
                  ConfigError);
  CHECK_THROWS_AS(attack_targeted(x, 2, VideoTensor(Shape{1, 8, 8, 3}), o,
                                  small_config(GoalKind::targeted, b), rng),
                  ShapeError);
}

TEST_CASE("alpha = 0 leaves the video untouched and fails at the budget") {
  const ModelBundle b = generate_bundle(tiny_config(4));
  auto model = std::make_shared<const ToyClassifier>(b.classifier);
  ToyOracle o(model);
  Rng rng(2);
  const VideoTensor x = uniform_video(model->input_shape(), rng);
  const std::uint32_t y = top1_of(model->forward(x)).label;
  AttackConfig cfg = small_config(GoalKind::untargeted, b);
  cfg.step_size = 0.0;
  const AttackResult r = attack_untargeted(x, y, o, cfg, rng);
  CHECK_FALSE(r.success);
  CHECK(linf_distance(r.x_adv, x) == 0.0);
  CHECK(r.queries_used <= cfg.budget);
  CHECK(r.queries_used > cfg.budget - 9);
  CHECK(r.final_label == y);
}

TEST_CASE("a full-width decay succeeds in one reduction") {
  const Shape s{2, 4, 4, 3};
  Rng rng(3);
  LinearLossOracle o(gaussian_video(s, rng), 1.0, 6);  // always answers class 6
  const VideoTensor x = uniform_video(s, rng);
  const VideoTensor start = uniform_video(s, rng);
  AttackConfig cfg = AttackConfig::sr_bad(GoalKind::targeted);
  cfg.partition = PartitionSpec::random(4);
  cfg.estimator.nes.population = 4;
  cfg.eps_decay = 1.0;
  cfg.budget = 1000;
  const AttackResult r = attack_targeted(x, 6, start, o, cfg, rng);
  CHECK(r.success);
  CHECK(r.final_epsilon == cfg.eps_adv);
  REQUIRE(r.trajectory.size() == 2);
  CHECK(r.trajectory[1].epsilon == cfg.eps_adv);
  CHECK(r.queries_used == 1 + 4 + 1);
  CHECK(linf_distance(r.x_adv, x) <= cfg.eps_adv + 1e-6);
}

TEST_CASE("targeted run invariants on the toy model") {
  const ModelBundle b = generate_bundle(tiny_config(5));
  auto model = std::make_shared<const ToyClassifier>(b.classifier);
  ToyOracle o(model);
  Rng rng(4);
  const Shape s = model->input_shape();
  const VideoTensor x = uniform_video(s, rng);
  const std::uint32_t y = top1_of(model->forward(x)).label;
  VideoTensor start = uniform_video(s, rng);
  std::uint32_t y_adv = top1_of(model->forward(start)).label;
  for (int tries = 0; y_adv == y && tries < 100; ++tries) {
    start = uniform_video(s, rng);
    y_adv = top1_of(model->forward(start)).label;
  }
  REQUIRE(y_adv != y);

  AttackConfig cfg = small_config(GoalKind::targeted, b);
  cfg.budget = 3000;
  cfg.eps_decay = 0.1;
  double last_eps = 2.0, last_alpha = 1.0;
  std::size_t records = 0;
  const AttackResult r = attack_targeted(
      x, y_adv, start, o, cfg, rng, [&](const AttackState& st, const TrajectoryRecord& rec) {
        ++records;
        CHECK(rec.epsilon <= last_eps);
        CHECK(st.alpha <= last_alpha);
        last_eps = rec.epsilon;
        last_alpha = st.alpha;
        CHECK(linf_distance(st.x_adv, x) <= st.epsilon + 1e-6);
        for (float v : st.x_adv.data()) CHECK((v >= 0.0f && v <= 1.0f));
        CHECK(rec.top1 == y_adv);
        CHECK(top1_of(model->forward(st.x_adv)).label == y_adv);
      });
  CHECK(records == r.trajectory.size());
  CHECK(r.queries_used <= cfg.budget);
  std::uint64_t sum = 0;
  for (const auto& rec : r.trajectory) sum += rec.step_queries;
  CHECK(sum <= r.queries_used);
  if (r.success) {
    CHECK(sum == r.queries_used);
    CHECK(linf_distance(r.x_adv, x) <= cfg.eps_adv + 1e-6);
  }
}

TEST_CASE("untargeted runs are deterministic and stay in the ball") {
  const ModelBundle b = generate_bundle(tiny_config(6));
  auto model = std::make_shared<const ToyClassifier>(b.classifier);
  Rng data_rng(5);
  const VideoTensor x = uniform_video(model->input_shape(), data_rng);
  const std::uint32_t y = top1_of(model->forward(x)).label;
  AttackConfig cfg = small_config(GoalKind::untargeted, b);

  auto run = [&] {
    ToyOracle o(model);
    Rng rng(77);
    return attack_untargeted(x, y, o, cfg, rng, [&](const AttackState& st,
                                                    const TrajectoryRecord&) {
      CHECK(linf_distance(st.x_adv, x) <= cfg.eps_adv + 1e-6);
    });
  };
  const AttackResult a = run();
  const AttackResult c = run();
  CHECK(a.x_adv == c.x_adv);
  CHECK(a.queries_used == c.queries_used);
  CHECK(a.success == c.success);
  REQUIRE(a.trajectory.size() == c.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) {
    CHECK(a.trajectory[i].loss == c.trajectory[i].loss);
  }
  std::uint64_t sum = 0;
  for (const auto& rec : a.trajectory) sum += rec.step_queries;
  if (a.success) CHECK(sum == a.queries_used);
  for (float v : a.x_adv.data()) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("trajectory JSONL layout") {
  std::vector<TrajectoryRecord> traj(2);
  traj[0].valid = true;
  traj[0].loss = -0.25;
  traj[1].step = 1;
  traj[1].queries_used = 50;
  std::stringstream ss;
  write_trajectory_jsonl(ss, traj);
  std::string line;
  std::getline(ss, line);
  CHECK(line.rfind(R"({"step":0,"epsilon":0.0,"loss":-0.25,"valid":true,)", 0) == 0);
  std::getline(ss, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j["loss"].is_null());
  CHECK(j["queries_used"] == 50);
  for (const char* k : {"step", "epsilon", "loss", "valid", "queries_used", "top1", "prob",
                        "alpha", "delta_eps"}) {
    CHECK(j.contains(k));
  }
}
