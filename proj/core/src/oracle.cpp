#include "vbad/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "vbad/errors.hpp"

namespace vbad {

QueryCounter::QueryCounter(std::uint64_t budget) : budget_(budget) {
  if (budget == 0) throw ConfigError("query budget must be positive");
}

void QueryCounter::acquire(std::uint64_t n) {
  std::uint64_t cur = used_.load();
  do {
    if (n > budget_ - cur) throw BudgetExceeded(cur, budget_);
  } while (!used_.compare_exchange_weak(cur, cur + n));
}

OracleResponse query_top1(Oracle& oracle, const VideoTensor& x,
                          QueryCounter& counter) {
  counter.acquire(1);
  return oracle.evaluate(x);
}

LossValue adversarial_loss(const OracleResponse& resp, const AttackGoal& goal) {
  if (resp.label != goal.label) return {0.0, false};
  // prob = 0 cannot be top-1 of a softmax, but external oracles may round.
  const double p = std::max(resp.prob, 1e-300);
  return goal.is_targeted() ? LossValue{-std::log(p), true}
                            : LossValue{std::log(p), true};
}

OracleResponse top1_of(std::span<const double> probs) {
  const auto it = std::max_element(probs.begin(), probs.end());
  return {static_cast<std::uint32_t>(it - probs.begin()), *it};
}

ToyOracle::ToyOracle(std::shared_ptr<const ToyClassifier> model)
    : model_(std::move(model)) {
  if (!model_) throw ConfigError("ToyOracle needs a model");
}

OracleResponse ToyOracle::evaluate(const VideoTensor& x) {
  return top1_of(model_->forward(x));
}

}  // namespace vbad
