#include "vbad/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <span>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "vbad/errors.hpp"
#include "vbad/estimator.hpp"
#include "vbad/partition.hpp"
#include "vbad/protocol.hpp"
#include "vbad/tentative.hpp"

namespace vbad {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::vector<double> gaussian_kernel(double sigma) {
  const int r = std::max(1, int(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * double(i * i) / (sigma * sigma));
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;
  return k;
}

/// Separable blur of one (H, W, C) plane stack, replicate border.
void blur_plane(std::vector<double>& img, std::uint32_t H, std::uint32_t W,
                std::uint32_t C, const std::vector<double>& k) {
  const int r = int(k.size() / 2);
  std::vector<double> tmp(img.size());
  auto at = [&](const std::vector<double>& a, int y, int x, std::uint32_t c) {
    y = std::clamp(y, 0, int(H) - 1);
    x = std::clamp(x, 0, int(W) - 1);
    return a[(std::size_t(y) * W + x) * C + c];
  };
  for (std::uint32_t y = 0; y < H; ++y)
    for (std::uint32_t x = 0; x < W; ++x)
      for (std::uint32_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * at(img, int(y), int(x) + i, c);
        tmp[(std::size_t(y) * W + x) * C + c] = s;
      }
  for (std::uint32_t y = 0; y < H; ++y)
    for (std::uint32_t x = 0; x < W; ++x)
      for (std::uint32_t c = 0; c < C; ++c) {
        double s = 0.0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * at(tmp, int(y) + i, int(x), c);
        img[(std::size_t(y) * W + x) * C + c] = s;
      }
}

}  // namespace

VideoTensor smooth_noise_video(const Shape& shape, Rng& rng, const SynthOptions& opts) {
  shape.validate();
  if (opts.keyframes == 0) throw ConfigError("need at least one keyframe");
  if (!(opts.blur_sigma > 0.0)) throw ConfigError("blur sigma must be positive");
  if (!(opts.contrast > 0.0 && opts.contrast <= 1.0)) {
    throw ConfigError("contrast must lie in (0, 1]");
  }
  const std::uint32_t K = std::min(opts.keyframes, shape.frames);
  const std::size_t F = shape.frame_size();
  const auto kernel = gaussian_kernel(opts.blur_sigma);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<std::vector<double>> keys(K, std::vector<double>(F));
  for (auto& key : keys) {
    for (double& v : key) v = unif(rng);
    blur_plane(key, shape.height, shape.width, shape.channels, kernel);
    const auto [lo, hi] = std::minmax_element(key.begin(), key.end());
    const double a = *lo, span = *hi - *lo;
    for (double& v : key) {
      v = 0.5 + opts.contrast * ((span > 0.0 ? (v - a) / span : 0.5) - 0.5);
    }
  }

  VideoTensor out(shape);
  for (std::uint32_t n = 0; n < shape.frames; ++n) {
    double pos = shape.frames > 1 ? double(n) * double(K - 1) / double(shape.frames - 1) : 0.0;
    const std::uint32_t k0 = std::min<std::uint32_t>(std::uint32_t(pos), K - 1);
    const std::uint32_t k1 = std::min(k0 + 1, K - 1);
    const double t = pos - double(k0);
    float* dst = out.data().data() + std::size_t(n) * F;
    for (std::size_t i = 0; i < F; ++i) {
      const double v = (1.0 - t) * keys[k0][i] + t * keys[k1][i];
      dst[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

std::vector<SynthSample> synth_dataset(std::size_t count, const Shape& shape,
                                       const ToyClassifier& model, Rng& rng,
                                       const SynthOptions& opts) {
  if (shape != model.input_shape()) throw ShapeError("synth_dataset: shape does not match model");
  std::vector<SynthSample> out;
  out.reserve(count);
  const std::size_t limit = count * std::size_t(opts.max_attempts_factor);
  std::size_t attempts = 0;
  while (out.size() < count) {
    if (attempts++ >= limit) {
      throw Error("synth_dataset: model too uncertain, " + std::to_string(out.size()) +
                  " of " + std::to_string(count) + " samples after " +
                  std::to_string(limit) + " attempts");
    }
    VideoTensor v = smooth_noise_video(shape, rng, opts);
    const OracleResponse r = top1_of(model.forward(v));
    if (r.prob < opts.min_prob) continue;
    out.push_back({std::move(v), r.label, r.prob});
  }
  return out;
}

void save_dataset(const fs::path& dir, const std::vector<SynthSample>& data) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  json manifest;
  manifest["samples"] = json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "video_%04zu.vtf", i);
    save_vtf(dir / name, data[i].video);
    manifest["samples"].push_back({{"file", name}, {"label", data[i].label},
                                   {"prob", data[i].prob}});
  }
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) throw IoError("cannot write " + (dir / "manifest.json").string());
  os << manifest.dump(2) << '\n';
  if (!os) throw IoError("write failed: " + (dir / "manifest.json").string());
}

std::vector<SynthSample> load_dataset(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json", std::ios::binary);
  if (!is) throw IoError("cannot open " + (dir / "manifest.json").string());
  json manifest;
  try {
    manifest = json::parse(is);
  } catch (const json::exception& e) {
    throw IoError("bad dataset manifest: " + std::string(e.what()));
  }
  std::vector<SynthSample> out;
  try {
    for (const auto& s : manifest.at("samples")) {
      SynthSample sample;
      sample.video = load_vtf(dir / s.at("file").get<std::string>());
      sample.label = s.at("label").get<std::uint32_t>();
      sample.prob = s.value("prob", 0.0);
      out.push_back(std::move(sample));
    }
  } catch (const json::exception& e) {
    throw IoError("bad dataset manifest: " + std::string(e.what()));
  }
  if (out.empty()) throw IoError("dataset " + dir.string() + " is empty");
  return out;
}

// ---------------------------------------------------------------- spec parsing

void BenchmarkSpec::validate() const {
  if (seeds.empty()) throw ConfigError("benchmark needs at least one trial");
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("benchmark trial seeds must be distinct");
  }
  if (configs.empty()) throw ConfigError("benchmark needs at least one config");
  std::vector<std::string> names;
  for (const auto& c : configs) {
    if (c.name.empty()) throw ConfigError("benchmark config needs a name");
    for (char ch : c.name) {
      if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-' &&
          ch != '.') {
        throw ConfigError("config name '" + c.name + "' has characters outside [A-Za-z0-9_.-]");
      }
    }
    names.push_back(c.name);
    c.attack.validate();
  }
  std::sort(names.begin(), names.end());
  if (std::adjacent_find(names.begin(), names.end()) != names.end()) {
    throw ConfigError("benchmark config names must be unique");
  }
  if (threads == 0) throw ConfigError("threads must be positive");
}

namespace {

PartitionSpec parse_grid(const std::string& s, PartitionSpec base) {
  unsigned r = 0, c = 0;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> r >> x >> c) || (x != 'x' && x != 'X') || r == 0 || c == 0 || !in.eof()) {
    throw ConfigError("grid must look like RxC, got '" + s + "'");
  }
  base.grid_rows = r;
  base.grid_cols = c;
  return base;
}

void reject_unknown_keys(const json& j, std::span<const std::string_view> known,
                         std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError("unknown key in " + std::string(where) + ": " + item.key());
    }
  }
}

constexpr std::string_view kAttackKeys[] = {
    "name", "preset", "eps", "queries", "pop", "sigma", "step_size", "eps_decay",
    "mask_prob", "sign_step", "adapt", "fd_delta", "tentative", "estimator",
    "partition", "grid", "patches"};

void apply_attack_options(AttackConfig& cfg, const json& j, GoalKind goal) {
  reject_unknown_keys(j, kAttackKeys, "attack options");
  try {
    if (j.contains("preset")) {
      const auto p = j.at("preset").get<std::string>();
      SurrogateSet keep = cfg.surrogates;
      if (p == "vbad") cfg = AttackConfig::defaults(goal);
      else if (p == "pbad") cfg = AttackConfig::p_bad(goal);
      else if (p == "srbad") cfg = AttackConfig::sr_bad(goal);
      else throw ConfigError("unknown preset: " + p);
      cfg.surrogates = std::move(keep);
    }
    if (j.contains("eps")) cfg.eps_adv = j.at("eps").get<double>();
    if (j.contains("queries")) cfg.budget = j.at("queries").get<std::uint64_t>();
    if (j.contains("pop")) cfg.estimator.nes.population = j.at("pop").get<std::uint32_t>();
    if (j.contains("sigma")) cfg.estimator.nes.sigma = j.at("sigma").get<double>();
    if (j.contains("step_size")) cfg.step_size = j.at("step_size").get<double>();
    if (j.contains("eps_decay")) cfg.eps_decay = j.at("eps_decay").get<double>();
    if (j.contains("mask_prob")) cfg.mask_prob = j.at("mask_prob").get<double>();
    if (j.contains("sign_step")) cfg.use_sign_step = j.at("sign_step").get<bool>();
    if (j.contains("adapt")) cfg.adapt.enabled = j.at("adapt").get<bool>();
    if (j.contains("fd_delta")) cfg.estimator.fd_delta = j.at("fd_delta").get<double>();
    if (j.contains("tentative")) {
      cfg.tentative = parse_tentative_kind(j.at("tentative").get<std::string>());
    }
    if (j.contains("estimator")) {
      cfg.estimator.kind = parse_estimator_kind(j.at("estimator").get<std::string>());
    }
    if (j.contains("partition")) {
      cfg.partition.method = parse_partition_method(j.at("partition").get<std::string>());
    }
    if (j.contains("grid")) cfg.partition = parse_grid(j.at("grid").get<std::string>(), cfg.partition);
    if (j.contains("patches")) cfg.partition.patch_count = j.at("patches").get<std::uint32_t>();
  } catch (const json::exception& e) {
    throw ConfigError("bad attack option: " + std::string(e.what()));
  }
}

GoalKind parse_goal(const std::string& s) {
  if (s == "untargeted") return GoalKind::untargeted;
  if (s == "targeted") return GoalKind::targeted;
  throw ConfigError("goal must be untargeted or targeted, got '" + s + "'");
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path q(p);
  return q.is_absolute() || base.empty() ? q : base / q;
}

}  // namespace

BenchmarkSpec parse_benchmark_spec(std::string_view json_text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("benchmark spec is not valid JSON: " + std::string(e.what()));
  }
  static constexpr std::string_view kSpecKeys[] = {
      "model", "dataset", "oracle", "goal", "trials", "seed", "seeds",
      "threads", "out_dir", "base", "configs"};
  reject_unknown_keys(j, kSpecKeys, "benchmark spec");
  BenchmarkSpec spec;
  try {
    spec.goal = parse_goal(j.value("goal", std::string("untargeted")));
    if (j.contains("model")) spec.model_path = resolve(base_dir, j.at("model").get<std::string>());
    if (j.contains("dataset")) {
      spec.dataset_dir = resolve(base_dir, j.at("dataset").get<std::string>());
    }
    spec.oracle_uri = j.value("oracle", std::string());
    spec.threads = j.value("threads", 1u);
    if (j.contains("out_dir")) spec.out_dir = resolve(base_dir, j.at("out_dir").get<std::string>());

    if (j.contains("seeds")) {
      spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    } else {
      const auto trials = j.value("trials", std::uint64_t{20});
      const auto base = j.value("seed", std::uint64_t{0});
      for (std::uint64_t t = 0; t < trials; ++t) spec.seeds.push_back(derive_seed(base, t));
    }
    if (j.contains("trials") && j.contains("seeds") &&
        j.at("trials").get<std::size_t>() != spec.seeds.size()) {
      throw ConfigError("trials does not match the number of seeds");
    }

    AttackConfig base = AttackConfig::defaults(spec.goal);
    if (j.contains("base")) apply_attack_options(base, j.at("base"), spec.goal);
    if (!j.contains("configs")) {
      spec.configs.push_back({"default", base});
    } else {
      for (const auto& c : j.at("configs")) {
        BenchmarkConfig bc{c.at("name").get<std::string>(), base};
        apply_attack_options(bc.attack, c, spec.goal);
        spec.configs.push_back(std::move(bc));
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError("bad benchmark spec: " + std::string(e.what()));
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------- running

const ConfigSummary& MetricsSummary::config(std::string_view name) const {
  for (const auto& c : configs) {
    if (c.name == name) return c;
  }
  throw Error("no config named " + std::string(name));
}

std::vector<TrialRecord> MetricsSummary::trials_of(std::string_view name) const {
  std::vector<TrialRecord> out;
  for (const auto& t : trials) {
    if (t.config == name) out.push_back(t);
  }
  return out;
}

std::vector<ConfigSummary> summarize(const std::vector<TrialRecord>& trials,
                                     const std::vector<std::string>& names) {
  std::vector<ConfigSummary> out;
  for (const auto& name : names) {
    ConfigSummary s;
    s.name = name;
    double queries = 0.0;
    for (const auto& t : trials) {
      if (t.config != name) continue;
      ++s.trials;
      if (t.success) {
        ++s.successes;
        queries += double(t.queries);
      }
    }
    s.success_rate = s.trials ? double(s.successes) / double(s.trials) : 0.0;
    if (s.successes) s.anq = queries / double(s.successes);
    out.push_back(s);
  }
  return out;
}

std::size_t pick_target_sample(const std::vector<SynthSample>& data, std::size_t sample,
                               std::uint64_t seed) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].label != data[sample].label) candidates.push_back(i);
  }
  if (candidates.empty()) {
    throw Error("targeted trial needs a sample whose label differs from " +
                std::to_string(data[sample].label));
  }
  Rng rng(derive_seed(seed, 0x7a));
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng)];
}

void write_summary_csv(std::ostream& os, const std::vector<ConfigSummary>& rows) {
  os << "config,trials,successes,success_rate,anq\n";
  for (const auto& r : rows) {
    os << r.name << ',' << r.trials << ',' << r.successes << ','
       << fmt("%.4f", r.success_rate) << ',' << (r.anq ? fmt("%.2f", *r.anq) : "") << '\n';
  }
}

void write_trials_csv(std::ostream& os, const std::vector<TrialRecord>& rows) {
  os << "config,trial,seed,sample,label,target,success,queries,final_epsilon,final_linf,"
        "final_label,final_prob\n";
  for (const auto& r : rows) {
    os << r.config << ',' << r.trial << ',' << r.seed << ',' << r.sample << ','
       << r.label << ',' << r.target << ',' << (r.success ? 1 : 0) << ',' << r.queries
       << ',' << fmt("%.6f", r.final_epsilon) << ',' << fmt("%.6f", r.final_linf) << ','
       << r.final_label << ',' << fmt("%.6f", r.final_prob) << '\n';
  }
}

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

void flush_outputs(const fs::path& dir, const MetricsSummary& m) {
  std::ostringstream s, t;
  write_summary_csv(s, m.configs);
  write_trials_csv(t, m.trials);
  write_file(dir / "summary.csv", s.str());
  write_file(dir / "trials.csv", t.str());
}

}  // namespace

MetricsSummary run_benchmark(const BenchmarkSpec& spec, const ModelBundle& bundle,
                             const std::vector<SynthSample>& data,
                             const OracleFactory& make_oracle) {
  spec.validate();
  if (data.empty()) throw ConfigError("benchmark dataset is empty");
  const std::size_t T = spec.seeds.size();
  const std::size_t jobs = spec.configs.size() * T;

  if (spec.out_dir) {
    std::error_code ec;
    fs::create_directories(*spec.out_dir / "traj", ec);
    if (ec) throw IoError("cannot create " + spec.out_dir->string() + ": " + ec.message());
  }

  std::vector<TrialRecord> records(jobs);
  std::vector<char> done(jobs, 0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;
  std::mutex mu;

  auto run_job = [&](std::size_t job) {
    const BenchmarkConfig& bc = spec.configs[job / T];
    const std::size_t trial = job % T;
    const std::uint64_t seed = spec.seeds[trial];
    AttackConfig cfg = bc.attack;
    if (cfg.surrogates.empty()) cfg.surrogates = bundle.surrogates;

    TrialRecord rec;
    rec.config = bc.name;
    rec.trial = trial;
    rec.seed = seed;
    rec.sample = trial % data.size();
    const SynthSample& s = data[rec.sample];
    rec.label = s.label;

    auto oracle = make_oracle();
    Rng rng(seed);
    AttackResult res;
    if (spec.goal == GoalKind::targeted) {
      const std::size_t tgt = pick_target_sample(data, rec.sample, seed);
      rec.target = data[tgt].label;
      res = attack_targeted(s.video, rec.target, data[tgt].video, *oracle, cfg, rng);
    } else {
      rec.target = s.label;
      res = attack_untargeted(s.video, s.label, *oracle, cfg, rng);
    }
    rec.success = res.success;
    rec.queries = res.queries_used;
    rec.final_epsilon = res.final_epsilon;
    rec.final_linf = linf_distance(res.x_adv, s.video);
    rec.final_label = res.final_label;
    rec.final_prob = res.final_prob;

    if (spec.out_dir) {
      char name[64];
      std::snprintf(name, sizeof name, "_%04zu.jsonl", trial);
      std::ostringstream traj;
      write_trajectory_jsonl(traj, res.trajectory);
      std::lock_guard lock(mu);
      write_file(*spec.out_dir / "traj" / (bc.name + name), traj.str());
    }
    records[job] = std::move(rec);
    done[job] = 1;
  };

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t job = next.fetch_add(1);
      if (job >= jobs) break;
      try {
        run_job(job);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        abort = true;
      }
    }
  };

  const unsigned n_threads = unsigned(std::min<std::size_t>(spec.threads, jobs));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MetricsSummary m;
  for (std::size_t j = 0; j < jobs; ++j) {
    if (done[j]) m.trials.push_back(records[j]);
  }
  std::vector<std::string> names;
  for (const auto& c : spec.configs) names.push_back(c.name);
  m.configs = summarize(m.trials, names);
  if (spec.out_dir) flush_outputs(*spec.out_dir, m);
  if (failure) std::rethrow_exception(failure);
  return m;
}

MetricsSummary run_benchmark_files(const BenchmarkSpec& spec) {
  if (spec.model_path.empty()) throw ConfigError("benchmark spec needs a model");
  if (spec.dataset_dir.empty()) throw ConfigError("benchmark spec needs a dataset");
  auto bundle = std::make_shared<ModelBundle>(load_vbm(spec.model_path));
  const auto data = load_dataset(spec.dataset_dir);
  auto classifier = std::shared_ptr<const ToyClassifier>(bundle, &bundle->classifier);
  OracleFactory factory;
  if (spec.oracle_uri.empty()) {
    factory = [classifier] { return std::make_unique<ToyOracle>(classifier); };
  } else {
    factory = [uri = spec.oracle_uri] { return open_oracle(uri); };
  }
  return run_benchmark(spec, *bundle, data, factory);
}

// ---------------------------------------------------------------- statistics

SignTest sign_test(std::size_t wins, std::size_t losses, std::size_t ties) {
  SignTest t{wins, losses, ties, 1.0};
  const std::size_t n = wins + losses;
  if (n == 0) return t;
  double p = 0.0;
  for (std::size_t k = wins; k <= n; ++k) {
    p += std::exp(std::lgamma(double(n) + 1) - std::lgamma(double(k) + 1) -
                  std::lgamma(double(n - k) + 1) - double(n) * std::log(2.0));
  }
  t.p_value = std::min(1.0, p);
  return t;
}

SignTest compare_queries(const std::vector<TrialRecord>& a,
                         const std::vector<TrialRecord>& b) {
  if (a.size() != b.size()) throw ConfigError("paired comparison needs equal trial counts");
  std::size_t wins = 0, losses = 0, ties = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].seed != b[i].seed) throw ConfigError("paired comparison needs matching seeds");
    const bool sa = a[i].success, sb = b[i].success;
    if (!sa && !sb) {
      ++ties;
    } else if (sa != sb) {
      sa ? ++wins : ++losses;
    } else if (a[i].queries < b[i].queries) {
      ++wins;
    } else if (a[i].queries > b[i].queries) {
      ++losses;
    } else {
      ++ties;
    }
  }
  return sign_test(wins, losses, ties);
}

// ---------------------------------------------------------------- gradient quality

std::vector<GradientQualityConfig> default_gradient_quality_configs(std::uint32_t grid) {
  std::vector<GradientQualityConfig> out;
  auto tentative_only = [&](const char* name, TentativeKind k) {
    GradientQualityConfig c;
    c.name = name;
    c.tentative = k;
    c.rectify = false;
    out.push_back(c);
  };
  tentative_only("static", TentativeKind::static_sign);
  tentative_only("random", TentativeKind::random_sign);
  tentative_only("single", TentativeKind::transferred_single);
  tentative_only("ensemble", TentativeKind::transferred_ensemble);

  GradientQualityConfig sr;
  sr.name = "SR-BAD";
  sr.tentative = TentativeKind::static_sign;
  sr.partition = PartitionSpec::random(0);
  sr.partition.grid_rows = sr.partition.grid_cols = grid;
  sr.nes.population = 24;
  out.push_back(sr);

  GradientQualityConfig pb;
  pb.name = "P-BAD";
  pb.tentative = TentativeKind::static_sign;
  pb.partition = PartitionSpec::per_pixel();
  pb.nes.population = 96;
  out.push_back(pb);

  GradientQualityConfig vb;
  vb.name = "V-BAD";
  vb.tentative = TentativeKind::transferred_ensemble;
  vb.partition = PartitionSpec::uniform(grid, grid);
  vb.nes.population = 24;
  out.push_back(vb);

  GradientQualityConfig ex;
  ex.name = "exact-pixel";
  ex.tentative = TentativeKind::static_sign;
  ex.partition = PartitionSpec::per_pixel();
  ex.exact = true;
  out.push_back(ex);
  return out;
}

std::vector<GradientQualityRow> eval_gradient_quality(
    const ModelBundle& bundle, const std::vector<SynthSample>& data,
    const std::vector<GradientQualityConfig>& configs, std::size_t trials,
    std::uint64_t seed) {
  if (data.empty()) throw ConfigError("gradient quality needs at least one sample");
  if (trials == 0) throw ConfigError("gradient quality needs at least one trial");
  const ToyClassifier& model = bundle.classifier;
  ToyOracle oracle(std::shared_ptr<const ToyClassifier>(
      std::shared_ptr<const ToyClassifier>(), &model));

  std::vector<GradientQualityRow> rows;
  for (const auto& c : configs) {
    std::vector<double> tent, rect;
    std::size_t tent_degenerate = 0, rect_degenerate = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      const SynthSample& s = data[t % data.size()];
      const AttackGoal goal = AttackGoal::untargeted(s.label);
      Rng rng(derive_seed(seed, t));
      const VideoTensor g = model.input_gradient(s.video, goal);

      const TentativeSpec spec = make_tentative_spec(c.tentative, bundle.surrogates, goal,
                                                     s.video.shape(), nullptr, rng);
      const VideoTensor h = generate_tentative(s.video, spec, rng);
      const Cosine ch = cosine_similarity(h, g);
      tent.push_back(ch.degenerate ? 0.0 : ch.value);
      tent_degenerate += ch.degenerate;
      if (!c.rectify) continue;

      const PatchBasis basis = build_basis(h, c.partition, rng);
      std::vector<double> v;
      if (c.exact) {
        std::vector<SparseDirection> dirs(basis.size());
        for (std::size_t m = 0; m < basis.size(); ++m) dirs[m] = basis.direction(m);
        v = model.directional_derivatives(s.video, dirs, goal);
      } else {
        QueryCounter counter(c.nes.population);
        v = nes_estimate(s.video, basis, oracle, goal, c.nes, counter, rng);
      }
      const Cosine cr = cosine_similarity(rectify(v, basis), g);
      rect.push_back(cr.degenerate ? 0.0 : cr.value);
      rect_degenerate += cr.degenerate;
    }
    auto row = [&](const char* stage, const std::vector<double>& xs, std::size_t deg) {
      GradientQualityRow r;
      r.config = c.name;
      r.stage = stage;
      r.trials = xs.size();
      r.mean_cosine = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
      double var = 0.0;
      for (double x : xs) var += (x - r.mean_cosine) * (x - r.mean_cosine);
      r.std_cosine = xs.size() > 1 ? std::sqrt(var / double(xs.size() - 1)) : 0.0;
      r.degenerate = deg;
      rows.push_back(r);
    };
    row("tentative", tent, tent_degenerate);
    if (c.rectify) row("rectified", rect, rect_degenerate);
  }
  return rows;
}

void write_gradient_quality_csv(std::ostream& os,
                                const std::vector<GradientQualityRow>& rows) {
  os << "config,stage,trials,mean_cosine,std_cosine,degenerate\n";
  for (const auto& r : rows) {
    os << r.config << ',' << r.stage << ',' << r.trials << ','
       << fmt("%.6e", r.mean_cosine) << ',' << fmt("%.6e", r.std_cosine) << ','
       << r.degenerate << '\n';
  }
}

}  // namespace vbad
