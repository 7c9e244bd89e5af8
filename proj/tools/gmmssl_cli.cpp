// Command-line front end: generate models, train one method, run sweeps,
// evaluate a saved map, and run the two small demos.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical abort.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "gmmssl/gmmssl.hpp"
#include "gmmssl/serialization.hpp"

namespace {

using gmmssl::json::Json;

constexpr int kConfigError = 2;
constexpr int kNumericalAbort = 3;

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw gmmssl::InvalidArgument("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw gmmssl::InvalidArgument("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw gmmssl::InvalidArgument("cannot write '" + path + "'");
  out << text;
}

double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

struct GenerateArgs {
  std::string kind = "benchmark";
  int k = 10, d = 100, d_text = 8;
  double kappa = 10.0;
  bool unaligned = false;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  gmmssl::Rng rng(a.seed);
  Json j;
  if (a.kind == "benchmark") j = gmmssl::json::to_json(gmmssl::make_benchmark_model(a.k, a.d, a.kappa, rng));
  else if (a.kind == "scaling") j = gmmssl::json::to_json(gmmssl::make_scaling_model(a.k, a.kappa, rng));
  else if (a.kind == "pancake") j = gmmssl::json::to_json(gmmssl::make_pancake_model());
  else if (a.kind == "collapse") j = gmmssl::json::to_json(gmmssl::make_collapse_model());
  else if (a.kind == "clip")
    j = gmmssl::json::to_json(gmmssl::make_clip_model(a.k, a.d, a.d_text, !a.unaligned, rng));
  else throw gmmssl::InvalidArgument("unknown model kind '" + a.kind + "'");
  write_text(a.out, j.dump(2) + "\n");
  return 0;
}

struct TrainArgs {
  std::string model, method = "infonce", config, out, trace;
  double delta = 1.0;
  int r = 10, n_train = 20000;
  bool online = false, orthonormalize = false;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs& a) {
  const gmmssl::SharedGMM model = gmmssl::json::shared_gmm_from_json(read_json(a.model));
  gmmssl::ScenarioConfig cfg;
  if (!a.config.empty()) cfg.train = gmmssl::json::train_config_from_json(read_json(a.config));
  cfg.train.seed = a.seed;
  cfg.n_train = a.n_train;
  cfg.online = a.online;
  cfg.orthonormalize = a.orthonormalize;
  if (cfg.train.checkpoint_every == 0 && !a.trace.empty()) cfg.train.checkpoint_every = 100;
  const gmmssl::Method method = gmmssl::parse_method(a.method);
  const gmmssl::AeDConfig aed(model, a.delta);
  gmmssl::Rng root(a.seed);
  const gmmssl::PairSource source =
      a.online ? gmmssl::PairSource::online(aed) : gmmssl::PairSource(aed, a.n_train, root.substream(2));
  const gmmssl::MethodContext ctx{model, a.delta, a.r, &source};
  const gmmssl::MethodOutcome oc = gmmssl::run_method(method, ctx, cfg, root.substream(3));

  Json j = gmmssl::json::to_json(gmmssl::ProjectionMap(oc.map));
  j["method"] = a.method;
  j["report"] = gmmssl::json::to_json(oc.report);
  j["J"] = oc.j;
  write_text(a.out, j.dump(2) + "\n");
  if (!a.trace.empty()) {
    if (!oc.trace) throw gmmssl::InvalidArgument("method '" + a.method + "' is not trained; no trace to write");
    std::ofstream t(a.trace);
    if (!t) throw gmmssl::InvalidArgument("cannot write '" + a.trace + "'");
    gmmssl::write_trace_csv(*oc.trace, t);
  }
  std::cerr << a.method << ": angle " << degrees(oc.report.containment_angle()) << " deg, rank "
            << oc.report.learned_rank << "/" << oc.report.reference_dim << ", J " << oc.j << "\n";
  return 0;
}

struct SweepArgs {
  std::string config, out;
  bool no_wallclock = false;
};

int cmd_sweep(const SweepArgs& a) {
  gmmssl::ScenarioConfig cfg = gmmssl::json::scenario_from_json(read_json(a.config));
  if (a.no_wallclock) cfg.record_wallclock = false;
  const std::size_t n = gmmssl::run_sweep_to_csv(cfg, a.out);
  std::cerr << "wrote " << n << " rows to " << a.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string model, map;
  int n_eval = 5000, restarts = 10;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  const gmmssl::SharedGMM model = gmmssl::json::shared_gmm_from_json(read_json(a.model));
  const gmmssl::ProjectionMap map = gmmssl::json::projection_from_json(read_json(a.map));
  if (map.ambient_dim() != model.dim()) throw gmmssl::InvalidArgument("map and model dimensions differ");
  gmmssl::Rng rng(a.seed);
  gmmssl::Rng sr = rng.substream(1), kr = rng.substream(2);
  const gmmssl::LabeledSamples eval = gmmssl::sample_gmm(model, a.n_eval, sr);
  const gmmssl::ClusterScores cs = gmmssl::evaluate_projection(map.matrix(), eval.points, eval.labels,
                                                               static_cast<int>(model.components()), a.restarts, kr);
  const gmmssl::SubspaceReport rep =
      gmmssl::containment_report(map.matrix(), gmmssl::fisher_subspace(model), gmmssl::kTrainedRankTol);
  Json j{{"ari", cs.ari},
         {"ami", cs.ami},
         {"angle_deg", degrees(rep.containment_angle())},
         {"J", gmmssl::safe_fisher_discriminant(model, map.matrix())},
         {"report", gmmssl::json::to_json(rep)}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct DemoArgs {
  std::string which, out;
  int seeds = 3;
};

int cmd_demo(const DemoArgs& a) {
  gmmssl::ScenarioConfig cfg;
  cfg.r = 1;
  cfg.seeds.clear();
  for (int s = 0; s < a.seeds; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  cfg.n_eval = 2000;
  if (a.which == "pancake") {
    cfg.experiment = gmmssl::Experiment::kPancakeDemo;
    cfg.k = 2;
    cfg.methods = {gmmssl::Method::kRandom, gmmssl::Method::kOptimal, gmmssl::Method::kPca,
                   gmmssl::Method::kInfoNce};
  } else if (a.which == "collapse") {
    cfg.experiment = gmmssl::Experiment::kCollapseDemo;
    cfg.k = 2;
    cfg.methods = {gmmssl::Method::kInfoNce, gmmssl::Method::kSimSiam};
  } else {
    throw gmmssl::InvalidArgument("unknown demo '" + a.which + "' (pancake|collapse)");
  }
  cfg.train.steps = 2000;
  cfg.online = true;

  std::ostringstream csv;
  csv << gmmssl::kCsvHeader << '\n';
  gmmssl::run_sweep(cfg, [&](const gmmssl::ResultRow& r) { csv << gmmssl::to_csv(r) << '\n'; });
  write_text(a.out, csv.str());

  if (cfg.experiment == gmmssl::Experiment::kCollapseDemo) {
    // The learned 1-D direction, compared with the line x + y = 0 through
    // the two means; reported, not checked.
    const gmmssl::SharedGMM model = gmmssl::make_collapse_model();
    Eigen::VectorXd target = Eigen::VectorXd::Zero(model.dim());
    target(0) = 1.0;
    target(1) = -1.0;
    target.normalize();
    const gmmssl::AeDConfig aed(model, cfg.delta);
    const gmmssl::PairSource source = gmmssl::PairSource::online(aed);
    for (gmmssl::Method m : cfg.methods) {
      gmmssl::ScenarioConfig mc = cfg;
      mc.train.seed = 0;
      const gmmssl::MethodOutcome oc =
          gmmssl::run_method(m, {model, cfg.delta, 1, &source}, mc, gmmssl::Rng(0).substream(3));
      Eigen::VectorXd v = oc.map.col(0);
      const double norm = v.norm();
      const double cosine = norm > 0.0 ? std::abs(v.dot(target)) / norm : 0.0;
      std::cerr << gmmssl::to_string(m) << ": direction " << (norm > 0.0 ? Eigen::VectorXd(v / norm) : v).transpose()
                << " |norm " << norm << "| angle to x+y=0: " << degrees(std::acos(std::min(1.0, cosine))) << " deg\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linear self-supervised projections on Gaussian mixtures"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a mixture model as JSON");
  g->add_option("--kind", gen.kind, "benchmark | scaling | pancake | collapse | clip")->capture_default_str();
  g->add_option("-K,--components", gen.k, "number of components")->capture_default_str();
  g->add_option("-d,--dim", gen.d, "ambient (vision) dimension")->capture_default_str();
  g->add_option("--d-text", gen.d_text, "text dimension (clip)")->capture_default_str();
  g->add_option("--kappa", gen.kappa, "variance inflation")->capture_default_str();
  g->add_flag("--unaligned", gen.unaligned, "clip: independent means per modality");
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("-o,--out", gen.out, "output path (default stdout)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train or construct one projection for a model");
  t->add_option("--model", tr.model, "model JSON")->required();
  t->add_option("--method", tr.method, "ambient | random | optimal | pca | infonce | simsiam")->capture_default_str();
  t->add_option("--delta", tr.delta, "augmentation bias")->capture_default_str();
  t->add_option("-r,--rank", tr.r, "projection rank")->capture_default_str();
  t->add_option("--n-train", tr.n_train, "training pool size")->capture_default_str();
  t->add_flag("--online", tr.online, "fresh batches from the model at every step");
  t->add_flag("--orthonormalize", tr.orthonormalize, "QR post-processing of the map");
  t->add_option("--config", tr.config, "TrainConfig JSON");
  t->add_option("--seed", tr.seed)->capture_default_str();
  t->add_option("-o,--out", tr.out, "map JSON (default stdout)");
  t->add_option("--trace", tr.trace, "write the training trace CSV here");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "run a ScenarioConfig and append rows to a CSV");
  s->add_option("--config", sw.config, "ScenarioConfig JSON")->required();
  s->add_option("-o,--out", sw.out, "result CSV (resumed if present)")->required();
  s->add_flag("--no-wallclock", sw.no_wallclock, "write 0 for wallclock_s (byte-stable output)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "score a saved map against its model");
  e->add_option("--model", ev.model, "model JSON")->required();
  e->add_option("--map", ev.map, "map JSON")->required();
  e->add_option("--n-eval", ev.n_eval)->capture_default_str();
  e->add_option("--restarts", ev.restarts)->capture_default_str();
  e->add_option("--seed", ev.seed)->capture_default_str();

  DemoArgs dm;
  auto* d = app.add_subcommand("demo", "pancake | collapse");
  d->add_option("which", dm.which)->required();
  d->add_option("--seeds", dm.seeds)->capture_default_str();
  d->add_option("-o,--out", dm.out, "result CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*s) return cmd_sweep(sw);
    if (*e) return cmd_eval(ev);
    if (*d) return cmd_demo(dm);
  } catch (const gmmssl::InvalidArgument& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfigError;
  } catch (const nlohmann::json::exception& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfigError;
  } catch (const gmmssl::TrainingAborted& err) {
    std::cerr << "numerical abort: " << err.what() << " after " << err.trace().steps() << " steps\n";
    return kNumericalAbort;
  } catch (const gmmssl::NumericalError& err) {
    std::cerr << "numerical abort: " << err.what() << "\n";
    return kNumericalAbort;
  } catch (const gmmssl::DegenerateError& err) {
    std::cerr << "numerical abort: " << err.what() << "\n";
    return kNumericalAbort;
  }
  return 0;
}
