#pragma once

#include <atomic>
#include <cstdint>
#include <memory>

#include "vbad/goal.hpp"
#include "vbad/models.hpp"
#include "vbad/tensor.hpp"

namespace vbad {

/// Top-1 answer of the black-box model.
struct OracleResponse {
  std::uint32_t label = 0;
  double prob = 0.0;  // P(label | x)
};

/// The black box itself. Implementations do not meter queries; callers go
/// through query_top1 so every evaluation is charged to a QueryCounter.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual OracleResponse evaluate(const VideoTensor& x) = 0;
};

/// Monotone query accounting against a fixed budget. Thread-safe.
class QueryCounter {
 public:
  explicit QueryCounter(std::uint64_t budget);

  std::uint64_t used() const noexcept { return used_.load(); }
  std::uint64_t budget() const noexcept { return budget_; }
  std::uint64_t remaining() const noexcept { return budget_ - used(); }

  /// Atomically charge n queries, or throw BudgetExceeded and charge nothing.
  void acquire(std::uint64_t n = 1);

 private:
  std::atomic<std::uint64_t> used_{0};
  std::uint64_t budget_;
};

/// Charge one query and ask the oracle.
OracleResponse query_top1(Oracle& oracle, const VideoTensor& x,
                          QueryCounter& counter);

struct LossValue {
  double value = 0.0;
  /// False when the class needed for the loss is not the top-1 label.
  bool valid = false;
};

/// l_adv from a top-1 response: -log p for targeted hits on y_adv, log p for
/// untargeted hits on y; anything else is flagged invalid.
LossValue adversarial_loss(const OracleResponse& resp, const AttackGoal& goal);

/// In-process adapter around a toy classifier.
class ToyOracle final : public Oracle {
 public:
  explicit ToyOracle(std::shared_ptr<const ToyClassifier> model);
  OracleResponse evaluate(const VideoTensor& x) override;
  const ToyClassifier& model() const noexcept { return *model_; }

 private:
  std::shared_ptr<const ToyClassifier> model_;
};

/// Top-1 of a probability vector.
OracleResponse top1_of(std::span<const double> probs);

/// Pass-through that counts how many evaluations actually reach the inner oracle.
class CountingOracle final : public Oracle {
 public:
  explicit CountingOracle(Oracle& inner) : inner_(inner) {}
  OracleResponse evaluate(const VideoTensor& x) override {
    ++calls_;
    return inner_.evaluate(x);
  }
  std::uint64_t calls() const noexcept { return calls_.load(); }

 private:
  Oracle& inner_;
  std::atomic<std::uint64_t> calls_{0};
};

}  // namespace vbad
