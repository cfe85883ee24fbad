#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vbad/attack.hpp"
#include "vbad/models.hpp"
#include "vbad/oracle.hpp"
#include "vbad/random.hpp"
#include "vbad/tensor.hpp"

namespace vbad {

// ---------------------------------------------------------------- datasets

struct SynthOptions {
  std::uint32_t keyframes = 3;  // noise frames interpolated linearly in time
  double blur_sigma = 2.0;      // spatial Gaussian blur, pixels
  double contrast = 0.5;        // keyframes span [0.5 - c/2, 0.5 + c/2]
  double min_prob = 0.6;        // reject samples the model is less sure about
  std::uint32_t max_attempts_factor = 100;
};

struct SynthSample {
  VideoTensor video;
  std::uint32_t label = 0;
  double prob = 0.0;
};

/// Smoothed-noise video in [0, 1]: blurred uniform noise keyframes, each
/// min-max normalised to the contrast range, blended linearly across frames.
VideoTensor smooth_noise_video(const Shape& shape, Rng& rng, const SynthOptions& opts = {});

/// `count` videos labelled by the model's argmax, keeping only those with
/// top-1 probability >= opts.min_prob. Throws Error after
/// count * max_attempts_factor draws.
std::vector<SynthSample> synth_dataset(std::size_t count, const Shape& shape,
                                       const ToyClassifier& model, Rng& rng,
                                       const SynthOptions& opts = {});

/// DIR/manifest.json plus DIR/video_XXXX.vtf.
void save_dataset(const std::filesystem::path& dir, const std::vector<SynthSample>& data);
std::vector<SynthSample> load_dataset(const std::filesystem::path& dir);

// ---------------------------------------------------------------- benchmarks

struct BenchmarkConfig {
  std::string name;
  AttackConfig attack;
};

struct BenchmarkSpec {
  GoalKind goal = GoalKind::untargeted;
  /// One entry per trial; trial i of every config shares seeds[i].
  std::vector<std::uint64_t> seeds;
  std::vector<BenchmarkConfig> configs;
  unsigned threads = 1;
  /// When set, summary.csv, trials.csv and traj/*.jsonl go here.
  std::optional<std::filesystem::path> out_dir;

  // File-level inputs, used by run_benchmark_files.
  std::filesystem::path model_path;
  std::filesystem::path dataset_dir;
  std::string oracle_uri;  // empty: in-process model from model_path

  void validate() const;
};

/// Parse the JSON benchmark description. Relative paths resolve against base_dir.
///
///   { "model": "m.vbm", "dataset": "data", "oracle": "exec:...",
///     "goal": "untargeted", "trials": 20, "seed": 0, "threads": 1,
///     "base": { ...attack options... },
///     "configs": [ { "name": "ensemble", ...overrides... }, ... ] }
///
/// Attack options: eps, queries, pop, sigma, step_size, eps_decay, grid
/// ("RxC"), tentative, partition, patches, estimator, fd_delta, mask_prob,
/// sign_step, adapt, preset ("vbad", "pbad", "srbad").
BenchmarkSpec parse_benchmark_spec(std::string_view json_text,
                                   const std::filesystem::path& base_dir = {});

struct TrialRecord {
  std::string config;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::size_t sample = 0;
  std::uint32_t label = 0;   // clean label
  std::uint32_t target = 0;  // y_adv (targeted) or the clean label
  bool success = false;
  std::uint64_t queries = 0;
  double final_epsilon = 0.0;
  double final_linf = 0.0;
  std::uint32_t final_label = 0;
  double final_prob = 0.0;
};

struct ConfigSummary {
  std::string name;
  std::size_t trials = 0;
  std::size_t successes = 0;
  double success_rate = 0.0;
  std::optional<double> anq;  // mean queries over successful trials only
};

struct MetricsSummary {
  std::vector<ConfigSummary> configs;
  std::vector<TrialRecord> trials;  // config-major, then trial order

  const ConfigSummary& config(std::string_view name) const;
  std::vector<TrialRecord> trials_of(std::string_view name) const;
};

/// SR and ANQ per config, in the order given by `names`.
std::vector<ConfigSummary> summarize(const std::vector<TrialRecord>& trials,
                                     const std::vector<std::string>& names);

using OracleFactory = std::function<std::unique_ptr<Oracle>()>;

/// Every config x trial. Trial i attacks data[i % data.size()]; targeted trials
/// start from another sample with a different label, picked from the trial seed.
/// Each trial gets its own oracle from `make_oracle`.
MetricsSummary run_benchmark(const BenchmarkSpec& spec, const ModelBundle& bundle,
                             const std::vector<SynthSample>& data,
                             const OracleFactory& make_oracle);

/// Loads model, dataset and oracle named in the spec, then runs it.
MetricsSummary run_benchmark_files(const BenchmarkSpec& spec);

void write_summary_csv(std::ostream& os, const std::vector<ConfigSummary>& rows);
void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& rows);

/// Index of the target sample for a targeted trial, or throws Error if every
/// sample shares the clean label.
std::size_t pick_target_sample(const std::vector<SynthSample>& data, std::size_t sample,
                               std::uint64_t seed);

// ---------------------------------------------------------------- statistics

struct SignTest {
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  double p_value = 1.0;  // one-sided, P(X >= wins) under Binomial(wins + losses, 1/2)
};

SignTest sign_test(std::size_t wins, std::size_t losses, std::size_t ties = 0);

/// Paired comparison "a needs fewer queries than b". A failed trial counts as
/// needing more queries than any successful one; two failures tie.
SignTest compare_queries(const std::vector<TrialRecord>& a,
                         const std::vector<TrialRecord>& b);

// ---------------------------------------------------------------- gradient quality

struct GradientQualityConfig {
  std::string name;
  TentativeKind tentative = TentativeKind::transferred_ensemble;
  PartitionSpec partition = PartitionSpec::uniform(4, 4);
  /// Rectify the tentative over the partition; otherwise only the tentative is scored.
  bool rectify = true;
  /// Use exact directional derivatives instead of NES estimates.
  bool exact = false;
  NesConfig nes;
};

/// Tentatives (static, random, single, ensemble), rectified SR-BAD, P-BAD,
/// V-BAD, and the per-pixel exact-derivative check.
std::vector<GradientQualityConfig> default_gradient_quality_configs(std::uint32_t grid = 4);

struct GradientQualityRow {
  std::string config;
  std::string stage;  // "tentative" or "rectified"
  std::size_t trials = 0;
  double mean_cosine = 0.0;
  double std_cosine = 0.0;
  std::size_t degenerate = 0;  // trials where a cosine was undefined (counted as 0)
};

/// Cosine of each config's tentative and rectified perturbation against the
/// white-box gradient of l_adv, over `trials` untargeted instances drawn
/// cyclically from `data`. Trial t of every config uses seed derive_seed(seed, t).
std::vector<GradientQualityRow> eval_gradient_quality(
    const ModelBundle& bundle, const std::vector<SynthSample>& data,
    const std::vector<GradientQualityConfig>& configs, std::size_t trials,
    std::uint64_t seed);

void write_gradient_quality_csv(std::ostream& os,
                                const std::vector<GradientQualityRow>& rows);

}  // namespace vbad
