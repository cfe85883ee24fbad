// vbad: command-line front end for the black-box video attack toolkit.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "vbad/attack.hpp"
#include "vbad/errors.hpp"
#include "vbad/harness.hpp"
#include "vbad/protocol.hpp"

namespace {

using namespace vbad;
namespace fs = std::filesystem;

enum Exit { kOk = 0, kAttackFailed = 2, kConfig = 3, kIo = 4 };

Shape parse_shape(const std::string& s) {
  Shape shape;
  char c1 = 0, c2 = 0, c3 = 0;
  std::istringstream in(s);
  if (!(in >> shape.frames >> c1 >> shape.height >> c2 >> shape.width >> c3 >>
        shape.channels) ||
      c1 != ',' || c2 != ',' || c3 != ',' || !in.eof()) {
    throw ConfigError("shape must look like N,H,W,C, got '" + s + "'");
  }
  shape.validate();
  return shape;
}

void parse_grid(const std::string& s, PartitionSpec& p) {
  unsigned r = 0, c = 0;
  char x = 0;
  std::istringstream in(s);
  if (!(in >> r >> x >> c) || (x != 'x' && x != 'X') || r == 0 || c == 0 || !in.eof()) {
    throw ConfigError("grid must look like RxC, got '" + s + "'");
  }
  p.grid_rows = r;
  p.grid_cols = c;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
  if (!os) throw IoError("write failed: " + p.string());
}

// ---------------------------------------------------------------- attack

struct AttackArgs {
  std::string mode = "untargeted";
  std::string video, target_video, oracle, surrogates, out, log, adv_out;
  std::uint32_t label = 0;
  int target_class = -1;
  double eps = 0.05;
  std::uint64_t queries = 300000;
  std::uint32_t pop = 48;
  double sigma = -1.0;
  std::string grid = "8x8";
  std::string tentative = "ensemble", partition = "uniform", estimator = "nes";
  std::uint32_t patches = 0;
  double step_size = 0.01, eps_decay = 0.05, mask_prob = 0.5, fd_delta = 1e-3;
  bool no_sign_step = false, no_adapt = false;
  std::uint64_t seed = 0;
};

int run_attack(const AttackArgs& a) {
  const GoalKind goal = a.mode == "targeted" ? GoalKind::targeted : GoalKind::untargeted;
  AttackConfig cfg = AttackConfig::defaults(goal);
  cfg.eps_adv = a.eps;
  cfg.budget = a.queries;
  cfg.estimator.nes.population = a.pop;
  if (a.sigma > 0.0) cfg.estimator.nes.sigma = a.sigma;
  cfg.estimator.kind = parse_estimator_kind(a.estimator);
  cfg.estimator.fd_delta = a.fd_delta;
  cfg.tentative = parse_tentative_kind(a.tentative);
  cfg.partition.method = parse_partition_method(a.partition);
  parse_grid(a.grid, cfg.partition);
  cfg.partition.patch_count = a.patches;
  cfg.step_size = a.step_size;
  cfg.eps_decay = a.eps_decay;
  cfg.mask_prob = a.mask_prob;
  cfg.use_sign_step = !a.no_sign_step;
  cfg.adapt.enabled = !a.no_adapt;

  std::string surrogate_path = a.surrogates;
  if (surrogate_path.empty() && a.oracle.rfind("builtin:", 0) == 0) {
    surrogate_path = a.oracle.substr(8);
  }
  const bool transferred = cfg.tentative == TentativeKind::transferred_single ||
                           cfg.tentative == TentativeKind::transferred_ensemble;
  if (transferred) {
    if (surrogate_path.empty()) {
      throw ConfigError("transferred tentatives need --surrogates PATH.vbm");
    }
    cfg.surrogates = load_vbm(surrogate_path).surrogates;
  }
  cfg.validate();

  const VideoTensor x = load_vtf(a.video);
  VideoTensor start;
  std::uint32_t goal_label = a.label;
  if (goal == GoalKind::targeted) {
    if (a.target_class < 0 || a.target_video.empty()) {
      throw ConfigError("targeted mode needs --target-class and --target-video");
    }
    start = load_vtf(a.target_video);
    goal_label = std::uint32_t(a.target_class);
  }

  auto oracle = open_oracle(a.oracle);
  Rng rng(a.seed);
  AttackResult res = goal == GoalKind::targeted
                         ? attack_targeted(x, goal_label, start, *oracle, cfg, rng)
                         : attack_untargeted(x, a.label, *oracle, cfg, rng);

  nlohmann::ordered_json out;
  out["mode"] = a.mode;
  out["label"] = a.label;
  if (goal == GoalKind::targeted) out["target_class"] = goal_label;
  out["success"] = res.success;
  out["queries_used"] = res.queries_used;
  out["final_epsilon"] = res.final_epsilon;
  out["final_linf"] = linf_distance(res.x_adv, x);
  out["final_label"] = res.final_label;
  out["final_prob"] = res.final_prob;
  out["steps"] = res.trajectory.empty() ? 0 : res.trajectory.back().step;
  const std::string text = out.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
  }
  if (!a.log.empty()) {
    std::ostringstream traj;
    write_trajectory_jsonl(traj, res.trajectory);
    write_text(a.log, traj.str());
  }
  if (!a.adv_out.empty()) save_vtf(a.adv_out, res.x_adv);
  std::cerr << (res.success ? "success" : "failed") << " after " << res.queries_used
            << " queries\n";
  return res.success ? kOk : kAttackFailed;
}

// ---------------------------------------------------------------- others

int run_bench(const std::string& spec_path, const std::string& out_dir) {
  const fs::path p(spec_path);
  BenchmarkSpec spec = parse_benchmark_spec(read_text(p), p.parent_path());
  if (!out_dir.empty()) spec.out_dir = out_dir;
  const MetricsSummary m = run_benchmark_files(spec);
  write_summary_csv(std::cout, m.configs);
  return kOk;
}

int run_evalgrad(const std::string& model_path, const std::string& data_dir,
                 std::size_t trials, std::uint64_t seed, std::uint32_t grid,
                 const std::string& out) {
  const ModelBundle bundle = load_vbm(model_path);
  std::vector<SynthSample> data;
  if (!data_dir.empty()) {
    data = load_dataset(data_dir);
  } else {
    Rng rng(seed);
    data = synth_dataset(std::min<std::size_t>(trials, 50), bundle.config.input_shape(),
                         bundle.classifier, rng);
  }
  const auto rows = eval_gradient_quality(bundle, data, default_gradient_quality_configs(grid),
                                          trials, seed);
  std::ostringstream csv;
  write_gradient_quality_csv(csv, rows);
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(out, csv.str());
  }
  return kOk;
}

int run_synth(std::size_t count, const std::string& shape_s, const std::string& model_path,
              const std::string& out_dir, std::uint64_t seed) {
  const ModelBundle bundle = load_vbm(model_path);
  const Shape shape = parse_shape(shape_s);
  Rng rng(seed);
  const auto data = synth_dataset(count, shape, bundle.classifier, rng);
  save_dataset(out_dir, data);
  std::cerr << "wrote " << data.size() << " videos to " << out_dir << "\n";
  return kOk;
}

int run_genmodel(ModelConfig mc, const std::string& shape_s, const std::string& out) {
  if (!shape_s.empty()) {
    const Shape s = parse_shape(shape_s);
    mc.frames = s.frames;
    mc.height = s.height;
    mc.width = s.width;
    mc.channels = s.channels;
  }
  save_vbm(out, generate_bundle(mc));
  return kOk;
}

int run_serve(const std::string& model_path, const std::string& listen) {
  auto bundle = std::make_shared<ModelBundle>(load_vbm(model_path));
  auto model = std::shared_ptr<const ToyClassifier>(bundle, &bundle->classifier);
  if (listen == "stdio") {
    std::ios::sync_with_stdio(false);
    serve_stream(*model, std::cin, std::cout);
    return kOk;
  }
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw ConfigError("--listen must be stdio or HOST:PORT");
  int port = 0;
  try {
    port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad port in '" + listen + "'");
  }
  if (port < 0 || port > 65535) throw ConfigError("port out of range");
  std::signal(SIGPIPE, SIG_IGN);
  TcpServer server(model, listen.substr(0, colon), std::uint16_t(port));
  std::cerr << "listening on " << listen.substr(0, colon) << ":" << server.port() << "\n";
  server.run();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box adversarial attacks on video classifiers"};
  app.require_subcommand(1);

  AttackArgs aa;
  auto* attack = app.add_subcommand("attack", "Attack one video through an oracle");
  attack->add_option("--mode", aa.mode)->check(CLI::IsMember({"untargeted", "targeted"}));
  attack->add_option("--video", aa.video, "Clean video (.vtf)")->required();
  attack->add_option("--label", aa.label, "Clean label")->required();
  attack->add_option("--target-class", aa.target_class);
  attack->add_option("--target-video", aa.target_video, "Video of the target class (.vtf)");
  attack->add_option("--oracle", aa.oracle, "builtin:PATH.vbm | exec:CMD | tcp:HOST:PORT")
      ->required();
  attack->add_option("--surrogates", aa.surrogates, "Model file holding surrogate extractors");
  attack->add_option("--eps", aa.eps);
  attack->add_option("--queries", aa.queries);
  attack->add_option("--pop", aa.pop);
  attack->add_option("--sigma", aa.sigma, "Default: 1e-6 targeted, 1e-3 untargeted");
  attack->add_option("--grid", aa.grid, "RxC");
  attack->add_option("--tentative", aa.tentative)
      ->check(CLI::IsMember({"static", "random", "single", "ensemble"}));
  attack->add_option("--partition", aa.partition)
      ->check(CLI::IsMember({"uniform", "random", "pixel"}));
  attack->add_option("--patches", aa.patches, "Random partition patch count (0: grid size)");
  attack->add_option("--estimator", aa.estimator)->check(CLI::IsMember({"nes", "fd"}));
  attack->add_option("--fd-delta", aa.fd_delta);
  attack->add_option("--step-size", aa.step_size);
  attack->add_option("--eps-decay", aa.eps_decay);
  attack->add_option("--mask-prob", aa.mask_prob);
  attack->add_flag("--no-sign-step", aa.no_sign_step);
  attack->add_flag("--no-adapt", aa.no_adapt);
  attack->add_option("--seed", aa.seed);
  attack->add_option("--out", aa.out, "Result JSON (default stdout)");
  attack->add_option("--log", aa.log, "Trajectory JSONL");
  attack->add_option("--adv-out", aa.adv_out, "Adversarial video (.vtf)");

  std::string bench_spec, bench_out;
  auto* bench = app.add_subcommand("bench", "Run a benchmark spec");
  bench->add_option("--spec", bench_spec)->required();
  bench->add_option("--out-dir", bench_out);

  std::string eg_model, eg_data, eg_out;
  std::size_t eg_trials = 50;
  std::uint64_t eg_seed = 0;
  std::uint32_t eg_grid = 4;
  auto* evalgrad = app.add_subcommand("evalgrad", "Cosine similarity of estimated gradients");
  evalgrad->add_option("--model", eg_model)->required();
  evalgrad->add_option("--trials", eg_trials);
  evalgrad->add_option("--data", eg_data, "Dataset directory (default: synthesize)");
  evalgrad->add_option("--seed", eg_seed);
  evalgrad->add_option("--grid", eg_grid);
  evalgrad->add_option("--out", eg_out);

  std::size_t sy_count = 20;
  std::string sy_shape = "8,32,32,3", sy_model, sy_out;
  std::uint64_t sy_seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic dataset");
  synth->add_option("--count", sy_count);
  synth->add_option("--shape", sy_shape, "N,H,W,C");
  synth->add_option("--model", sy_model)->required();
  synth->add_option("--out-dir", sy_out)->required();
  synth->add_option("--seed", sy_seed);

  ModelConfig gm;
  std::string gm_shape, gm_out;
  auto* genmodel = app.add_subcommand("genmodel", "Write a seeded toy model bundle (.vbm)");
  genmodel->add_option("--out", gm_out)->required();
  genmodel->add_option("--seed", gm.seed);
  genmodel->add_option("--classes", gm.classes);
  genmodel->add_option("--filters", gm.filters);
  genmodel->add_option("--surrogate-filters", gm.surrogate_filters);
  genmodel->add_option("--shape", gm_shape, "N,H,W,C");
  genmodel->add_option("--logit-scale", gm.logit_scale);

  std::string sv_model, sv_listen = "stdio";
  auto* serve = app.add_subcommand("serve-oracle", "Serve a model over the line protocol");
  serve->add_option("--model", sv_model)->required();
  serve->add_option("--listen", sv_listen, "stdio or HOST:PORT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*attack) return run_attack(aa);
    if (*bench) return run_bench(bench_spec, bench_out);
    if (*evalgrad) return run_evalgrad(eg_model, eg_data, eg_trials, eg_seed, eg_grid, eg_out);
    if (*synth) return run_synth(sy_count, sy_shape, sy_model, sy_out, sy_seed);
    if (*genmodel) return run_genmodel(gm, gm_shape, gm_out);
    if (*serve) return run_serve(sv_model, sv_listen);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const OracleUnavailable& e) {
    std::cerr << "oracle error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kConfig;
}
