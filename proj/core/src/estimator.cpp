#include "vbad/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "vbad/errors.hpp"

namespace vbad {

std::string_view to_string(EstimatorKind k) {
  return k == EstimatorKind::nes ? "nes" : "fd";
}

EstimatorKind parse_estimator_kind(std::string_view s) {
  if (s == "nes") return EstimatorKind::nes;
  if (s == "fd") return EstimatorKind::fd;
  throw ConfigError("unknown estimator: " + std::string(s));
}

void NesConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be positive");
  if (population == 0 || population % 2 != 0) {
    throw ConfigError("NES population must be a positive even number");
  }
}

void EstimatorConfig::validate() const {
  nes.validate();
  if (!(fd_delta > 0.0) || !std::isfinite(fd_delta)) {
    throw ConfigError("finite-difference step must be positive");
  }
}

std::vector<double> transform_losses(std::span<const LossValue> samples,
                                     GoalKind goal, LossTransform transform) {
  const std::size_t n = samples.size();
  if (n < 2) throw ConfigError("loss transform needs at least two samples");
  std::vector<double> out(n);
  if (transform == LossTransform::identity) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!samples[i].valid) {
        throw ConfigError("identity loss transform received an invalid sample");
      }
      out[i] = samples[i].value;
    }
    return out;
  }

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> loss(n);
  for (std::size_t i = 0; i < n; ++i) {
    loss[i] = samples[i].valid ? samples[i].value
                               : (goal == GoalKind::targeted ? inf : -inf);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return loss[a] < loss[b]; });
  const double denom = double(n - 1);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && loss[order[j + 1]] == loss[order[i]]) ++j;
    const double rank = 0.5 * double(i + j);
    for (std::size_t k = i; k <= j; ++k) out[order[k]] = rank / denom - 0.5;
    i = j + 1;
  }
  return out;
}

namespace {

LossValue probe(Oracle& oracle, const VideoTensor& x, const AttackGoal& goal,
                QueryCounter& counter) {
  return adversarial_loss(query_top1(oracle, x, counter), goal);
}

void require_budget(const QueryCounter& counter, std::uint64_t n) {
  if (counter.remaining() < n) throw BudgetExceeded(counter.used(), counter.budget());
}

}  // namespace

std::vector<double> nes_estimate(const VideoTensor& x, const PatchBasis& basis,
                                 Oracle& oracle, const AttackGoal& goal,
                                 const NesConfig& cfg, QueryCounter& counter, Rng& rng) {
  cfg.validate();
  if (x.shape() != basis.shape()) throw ShapeError("nes_estimate: shape mismatch");
  require_budget(counter, cfg.population);
  const std::size_t M = basis.size();
  const std::size_t half = cfg.population / 2;

  std::vector<std::vector<double>> deltas(half, std::vector<double>(M));
  for (auto& d : deltas) {
    for (double& v : d) v = standard_normal(rng);
  }
  std::vector<LossValue> z(cfg.population);
  for (std::size_t k = 0; k < half; ++k) {
    z[2 * k] = probe(oracle, perturb_along(x, basis, deltas[k], cfg.sigma), goal, counter);
    z[2 * k + 1] =
        probe(oracle, perturb_along(x, basis, deltas[k], -cfg.sigma), goal, counter);
  }
  const auto fit = transform_losses(z, goal.kind, cfg.transform);

  std::vector<double> v(M, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    const double diff = fit[2 * k] - fit[2 * k + 1];
    if (diff == 0.0) continue;
    for (std::size_t m = 0; m < M; ++m) v[m] += deltas[k][m] * diff;
  }
  const double scale = 1.0 / (double(cfg.population) * cfg.sigma);
  for (std::size_t m = 0; m < M; ++m) {
    v[m] = basis.degenerate(m) ? 0.0 : v[m] * scale;
  }
  return v;
}

std::vector<double> fd_estimate(const VideoTensor& x, const PatchBasis& basis,
                                Oracle& oracle, const AttackGoal& goal, double delta,
                                QueryCounter& counter, LossTransform transform) {
  if (!(delta > 0.0)) throw ConfigError("finite-difference step must be positive");
  if (x.shape() != basis.shape()) throw ShapeError("fd_estimate: shape mismatch");
  const std::size_t M = basis.size();
  require_budget(counter, 2 * std::uint64_t(M));
  std::vector<LossValue> z(2 * M);
  for (std::size_t m = 0; m < M; ++m) {
    z[2 * m] = probe(oracle, perturb_patch(x, basis, m, delta), goal, counter);
    z[2 * m + 1] = probe(oracle, perturb_patch(x, basis, m, -delta), goal, counter);
  }
  const auto fit = transform_losses(z, goal.kind, transform);
  std::vector<double> v(M);
  for (std::size_t m = 0; m < M; ++m) {
    v[m] = basis.degenerate(m) ? 0.0 : (fit[2 * m] - fit[2 * m + 1]) / (2.0 * delta);
  }
  return v;
}

std::vector<double> estimate_weights(const VideoTensor& x, const PatchBasis& basis,
                                     Oracle& oracle, const AttackGoal& goal,
                                     const EstimatorConfig& cfg, QueryCounter& counter,
                                     Rng& rng) {
  if (cfg.kind == EstimatorKind::nes) {
    return nes_estimate(x, basis, oracle, goal, cfg.nes, counter, rng);
  }
  return fd_estimate(x, basis, oracle, goal, cfg.fd_delta, counter, cfg.nes.transform);
}

}  // namespace vbad
