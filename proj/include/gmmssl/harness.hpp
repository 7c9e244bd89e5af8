#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numbers>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gmmssl/cluster.hpp"
#include "gmmssl/error.hpp"
#include "gmmssl/linalg.hpp"
#include "gmmssl/mixture.hpp"
#include "gmmssl/objectives.hpp"
#include "gmmssl/optimizer.hpp"
#include "gmmssl/random.hpp"
#include "gmmssl/scenarios.hpp"
#include "gmmssl/subspace.hpp"

namespace gmmssl {

enum class Experiment {
  kDeltaSweep,
  kFlatnessSweep,
  kRankSweep,
  kScalingSweep,
  kClip,
  kPancakeDemo,
  kCollapseDemo,
};

enum class Method { kAmbient, kRandom, kOptimal, kPca, kInfoNce, kSimSiam };

inline const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::kDeltaSweep: return "delta_sweep";
    case Experiment::kFlatnessSweep: return "flatness_sweep";
    case Experiment::kRankSweep: return "rank_sweep";
    case Experiment::kScalingSweep: return "scaling_sweep";
    case Experiment::kClip: return "clip";
    case Experiment::kPancakeDemo: return "pancake_demo";
    case Experiment::kCollapseDemo: return "collapse_demo";
  }
  return "?";
}

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kAmbient: return "ambient";
    case Method::kRandom: return "random";
    case Method::kOptimal: return "optimal";
    case Method::kPca: return "pca";
    case Method::kInfoNce: return "infonce";
    case Method::kSimSiam: return "simsiam";
  }
  return "?";
}

inline Experiment parse_experiment(const std::string& s) {
  for (Experiment e : {Experiment::kDeltaSweep, Experiment::kFlatnessSweep, Experiment::kRankSweep,
                       Experiment::kScalingSweep, Experiment::kClip, Experiment::kPancakeDemo,
                       Experiment::kCollapseDemo})
    if (s == to_string(e)) return e;
  throw InvalidArgument("unknown experiment '" + s + "'");
}

inline Method parse_method(const std::string& s) {
  for (Method m : {Method::kAmbient, Method::kRandom, Method::kOptimal, Method::kPca, Method::kInfoNce,
                   Method::kSimSiam})
    if (s == to_string(m)) return m;
  throw InvalidArgument("unknown method '" + s + "'");
}

inline bool is_learned(Method m) { return m == Method::kInfoNce || m == Method::kSimSiam; }

struct ScenarioConfig {
  Experiment experiment = Experiment::kDeltaSweep;
  int k = 10;
  int d = 100;
  int r = 10;
  double delta = 1.0;
  double kappa = 10.0;
  int n_train = 20000;
  int n_eval = 5000;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::vector<Method> methods{Method::kAmbient, Method::kRandom, Method::kOptimal,
                              Method::kPca,     Method::kInfoNce, Method::kSimSiam};
  bool orthonormalize = false;
  // Draw every training batch fresh from the model instead of from a fixed
  // pool of n_train pairs.
  bool online = false;
  std::optional<double> xi;  // SimSiam weight; default half the equality bound
  int d_text = 8;            // clip: text-side dimension (vision uses d)
  bool aligned = true;       // clip model construction when no grid is given
  std::vector<double> grid;  // overrides the experiment's default grid
  int kmeans_restarts = 10;
  int kmeans_max_iter = 300;
  bool record_wallclock = true;
  TrainConfig train;

  void validate() const {
    if (k < 2) throw InvalidArgument("scenario: K must be >= 2");
    if (r < 1) throw InvalidArgument("scenario: r must be >= 1");
    if (!(kappa >= 1.0)) throw InvalidArgument("scenario: kappa must be >= 1");
    if (!(delta >= 0.0 && delta <= 1.0)) throw InvalidArgument("scenario: delta must lie in [0, 1]");
    if (n_train < 2 || n_eval < k) throw InvalidArgument("scenario: n_train >= 2 and n_eval >= K required");
    if (seeds.empty()) throw InvalidArgument("scenario: at least one seed required");
    if (methods.empty() && experiment != Experiment::kClip) throw InvalidArgument("scenario: no methods given");
    if (kmeans_restarts < 1 || kmeans_max_iter < 1) throw InvalidArgument("scenario: invalid k-means settings");
    if (xi && !(*xi > 0.0)) throw InvalidArgument("scenario: xi must be positive");
    const bool needs_d = experiment == Experiment::kDeltaSweep || experiment == Experiment::kFlatnessSweep ||
                         experiment == Experiment::kRankSweep || experiment == Experiment::kClip;
    if (needs_d && d < k - 1) throw InvalidArgument("scenario: d must be >= K - 1");
    if (experiment == Experiment::kClip && d_text < k - 1) throw InvalidArgument("scenario: d_text must be >= K - 1");
    if (experiment == Experiment::kScalingSweep && k < 3) throw InvalidArgument("scenario: scaling needs K >= 3");
    train.validate();
  }
};

struct ResultRow {
  std::string experiment;
  std::string method;
  std::string param;
  double value = 0.0;
  std::uint64_t seed = 0;
  double ari = 0.0;
  double ami = 0.0;
  double angle_deg = 0.0;
  double j = 0.0;
  double wallclock_s = 0.0;
};

inline constexpr const char* kCsvHeader = "experiment,method,param,value,seed,ari,ami,angle_deg,J,wallclock_s";

inline std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_csv(const ResultRow& r) {
  std::ostringstream out;
  out << r.experiment << ',' << r.method << ',' << r.param << ',' << format_value(r.value) << ',' << r.seed << ','
      << format_metric(r.ari) << ',' << format_metric(r.ami) << ',' << format_metric(r.angle_deg) << ','
      << format_metric(r.j) << ',' << format_metric(r.wallclock_s);
  return out.str();
}

/// Parses one CSV body line; throws InvalidArgument on malformed input.
inline ResultRow parse_csv_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) f.push_back(cell);
  if (f.size() != 10) throw InvalidArgument("malformed result row: " + line);
  try {
    return ResultRow{f[0], f[1], f[2], std::stod(f[3]), std::stoull(f[4]), std::stod(f[5]),
                     std::stod(f[6]), std::stod(f[7]), std::stod(f[8]), std::stod(f[9])};
  } catch (const std::logic_error&) {
    throw InvalidArgument("malformed result row: " + line);
  }
}

/// Parameter swept by the experiment and its default grid.
inline std::pair<std::string, std::vector<double>> sweep_grid(const ScenarioConfig& cfg) {
  std::vector<double> g;
  std::string name;
  switch (cfg.experiment) {
    case Experiment::kDeltaSweep:
      name = "delta";
      for (int i = 1; i <= 10; ++i) g.push_back(i / 10.0);
      break;
    case Experiment::kFlatnessSweep:
      name = "flatness";
      for (int i = 1; i <= 9; ++i) g.push_back(i / 10.0);
      break;
    case Experiment::kRankSweep:
      name = "r";
      for (int i = 1; i <= 2 * cfg.k; ++i) g.push_back(i);
      break;
    case Experiment::kScalingSweep:
      name = "kappa";
      g = {1.0, 2.0, 4.0, 6.0, 8.0, 10.0};
      break;
    case Experiment::kClip:
      name = "aligned";
      g = {cfg.aligned ? 1.0 : 0.0};
      break;
    case Experiment::kPancakeDemo:
    case Experiment::kCollapseDemo:
      name = "r";
      g = {static_cast<double>(cfg.r)};
      break;
  }
  if (!cfg.grid.empty()) g = cfg.grid;
  return {name, g};
}

namespace detail {

// FNV-1a, used to turn textual cell keys into stable substream ids.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

enum Stream : std::uint64_t { kModelStream = 1, kPoolStream = 2, kEvalStream = 3 };

inline Rng cell_rng(std::uint64_t seed, Experiment e, double value, const std::string& what) {
  return Rng(seed).substream(fnv1a(std::string(to_string(e)) + '/' + format_value(value) + '/' + what));
}

}  // namespace detail

/// Everything one method run needs: the mixture used for evaluation, the
/// augmentation model it was trained under and the projection rank.
struct MethodContext {
  SharedGMM model;
  double delta = 1.0;
  int r = 1;
  const PairSource* source = nullptr;  // needed by pca / infonce / simsiam
};

struct MethodOutcome {
  MatrixXd map;  // d x r' projection used for clustering
  SubspaceReport report;
  double j = 0.0;
  std::optional<TrainTrace> trace;
};

inline double safe_fisher_discriminant(const SharedGMM& model, const MatrixXd& a) {
  const MatrixXd q = linalg::orthonormal_basis(a, kDefaultRankTol);
  if (q.cols() == 0) return 0.0;
  return fisher_discriminant(model, q);
}

/// Runs one of the six methods and scores its column space against S_F.
inline MethodOutcome run_method(Method method, const MethodContext& ctx, const ScenarioConfig& cfg, Rng rng) {
  const SharedGMM& model = ctx.model;
  const Index d = model.dim();
  const Index r = std::min<Index>(ctx.r, d);
  MethodOutcome out;
  auto need_source = [&]() -> const PairSource& {
    if (!ctx.source) throw InvalidArgument(std::string(to_string(method)) + " needs a training source");
    return *ctx.source;
  };
  switch (method) {
    case Method::kAmbient:
      out.map = MatrixXd::Identity(d, d);
      break;
    case Method::kRandom:
      out.map = linalg::random_orthonormal(d, r, rng);
      break;
    case Method::kOptimal: {
      const FisherDirections fd = fisher_directions(model);
      out.map = fd.basis.leftCols(std::min<Index>(r, fd.basis.cols()));
      break;
    }
    case Method::kPca: {
      const PairSource& src = need_source();
      if (src.is_online()) {
        Rng pr = rng.substream(1);
        out.map = svd_subspace_empirical(sample_gmm(model, cfg.n_train, pr).points, r).subspace.basis();
      } else {
        out.map = svd_subspace_empirical(src.pairs().anchors, r).subspace.basis();
      }
      break;
    }
    case Method::kInfoNce:
    case Method::kSimSiam: {
      const PairSource& src = need_source();
      TrainConfig tc = cfg.train;
      Rng init_rng = rng.substream(2);
      const MatrixXd init = init_projection(d, ctx.r, tc.init_scale, init_rng);
      Objective obj;
      std::optional<SiamConfig> siam;
      if (method == Method::kInfoNce) {
        obj = [&](const MatrixXd& a, std::int64_t step, MatrixXd& g) {
          return infonce_loss(a, src.batch(tc.seed, step, tc.batch_n, tc.batch_m), &g);
        };
      } else {
        siam.emplace(cfg.xi ? *cfg.xi : 0.5 * simsiam_xi_bound(model, ctx.delta));
        tc.spectral_projection = siam->spectral_bound;
        obj = [&](const MatrixXd& a, std::int64_t step, MatrixXd& g) {
          return simsiam_loss(a, src.batch(tc.seed, step, tc.batch_n, 1), *siam, &g);
        };
      }
      const Subspace sf = fisher_subspace(model);
      TrainResult res = train(obj, init, tc, tc.checkpoint_every > 0 ? &sf : nullptr);
      out.map = std::move(res.a);
      out.trace = std::move(res.trace);
      break;
    }
  }
  const Subspace sf = fisher_subspace(model);
  const double rank_tol = is_learned(method) ? kTrainedRankTol : kDefaultRankTol;
  if (cfg.orthonormalize && method != Method::kAmbient) {
    out.map = linalg::qr_orthonormalize(out.map);
    out.report = containment_report(out.map, sf, rank_tol, kTrainedAngleTol, Orthonormalization::kQr);
  } else {
    out.report = containment_report(out.map, sf, rank_tol, kTrainedAngleTol);
  }
  out.j = safe_fisher_discriminant(model, out.map);
  return out;
}

/// Row-level outcome of a CLIP run: vision- and text-side scores.
struct ClipOutcome {
  MatrixXd a_v;
  MatrixXd a_t;
  SubspaceReport vision;  // coupled vision map vs S_{V,F}
  SubspaceReport text;
  SubspaceReport vision_raw;  // col(A_v) itself, informational
  SubspaceReport text_raw;
  TrainTrace trace;
};

/// Trains A_v, A_t jointly on the (asymmetric) CLIP loss. The two maps are
/// stacked into one (d1 + d2) x r parameter for the optimizer.
inline ClipOutcome run_clip(const ClipGMM& model, const ClipSource& source, int r, const TrainConfig& tc, Rng rng) {
  const Index d1 = model.vision().dim(), d2 = model.text().dim();
  MatrixXd init(d1 + d2, r);
  Rng ir = rng.substream(2);
  init.topRows(d1) = init_projection(d1, r, tc.init_scale, ir);
  init.bottomRows(d2) = init_projection(d2, r, tc.init_scale, ir);
  Objective obj = [&](const MatrixXd& a, std::int64_t step, MatrixXd& g) {
    const ClipBatch b = source.batch(tc.seed, step, tc.batch_n, tc.batch_m);
    MatrixXd gv, gt;
    const double loss = clip_loss(a.topRows(d1), a.bottomRows(d2), b, &gv, &gt);
    g.resize(d1 + d2, r);
    g.topRows(d1) = gv;
    g.bottomRows(d2) = gt;
    return loss;
  };
  TrainResult res = train(obj, init, tc);
  ClipOutcome out;
  out.a_v = res.a.topRows(d1);
  out.a_t = res.a.bottomRows(d2);
  out.trace = std::move(res.trace);
  const Subspace sv = fisher_subspace(model.vision()), st = fisher_subspace(model.text());
  const auto [cv, ct] = clip_coupled_maps(out.a_v, out.a_t);
  out.vision = containment_report(cv, sv, kTrainedRankTol);
  out.text = containment_report(ct, st, kTrainedRankTol);
  out.vision_raw = containment_report(out.a_v, sv, kTrainedRankTol);
  out.text_raw = containment_report(out.a_t, st, kTrainedRankTol);
  return out;
}

inline SharedGMM scenario_model(const ScenarioConfig& cfg, double value, std::uint64_t seed) {
  Rng mr = Rng(seed).substream(detail::kModelStream);
  switch (cfg.experiment) {
    case Experiment::kDeltaSweep:
    case Experiment::kRankSweep:
      return make_benchmark_model(cfg.k, cfg.d, cfg.kappa, mr);
    case Experiment::kFlatnessSweep:
      if (!(value > 0.0 && value <= 1.0)) throw InvalidArgument("flatness must lie in (0, 1]");
      return make_benchmark_model(cfg.k, cfg.d, 1.0 / value, mr);
    case Experiment::kScalingSweep:
      return make_scaling_model(cfg.k, value, mr);
    case Experiment::kPancakeDemo:
      return make_pancake_model();
    case Experiment::kCollapseDemo:
      return make_collapse_model();
    case Experiment::kClip:
      break;
  }
  throw InvalidArgument("scenario_model: experiment has no single mixture");
}

using RowKey = std::tuple<std::string, std::string, std::string, std::uint64_t>;  // method, param, value, seed

inline RowKey row_key(const ResultRow& r) { return {r.method, r.param, format_value(r.value), r.seed}; }

/// Runs every (cell, seed, method) of the scenario not listed in `done` and
/// hands each row to `emit` as soon as it is available.
inline void run_sweep(const ScenarioConfig& cfg, const std::function<void(const ResultRow&)>& emit,
                      const std::set<RowKey>& done = {}) {
  cfg.validate();
  const auto [param, grid] = sweep_grid(cfg);
  const std::string exp_name = to_string(cfg.experiment);
  using clock = std::chrono::steady_clock;

  for (double value : grid) {
    for (std::uint64_t seed : cfg.seeds) {
      auto is_done = [&](const std::string& method) {
        return done.count(RowKey{method, param, format_value(value), seed}) > 0;
      };
      if (cfg.experiment == Experiment::kClip) {
        if (is_done("clip_vision") && is_done("clip_text")) continue;
        const auto t0 = clock::now();
        Rng mr = Rng(seed).substream(detail::kModelStream);
        const ClipGMM model = make_clip_model(cfg.k, cfg.d, cfg.d_text, value != 0.0, mr);
        Rng pool_rng = detail::cell_rng(seed, cfg.experiment, value, "pool");
        const ClipSource source = cfg.online ? ClipSource::online(model) : ClipSource(model, cfg.n_train, pool_rng);
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(seed, detail::fnv1a("clip/train"));
        const ClipOutcome oc = run_clip(model, source, cfg.r, tc, detail::cell_rng(seed, cfg.experiment, value, "clip"));
        Rng er = detail::cell_rng(seed, cfg.experiment, value, "eval");
        const ClipPairs eval = sample_clip(model, cfg.n_eval, er);
        const double secs = cfg.record_wallclock ? std::chrono::duration<double>(clock::now() - t0).count() : 0.0;
        const auto [cv, ct] = clip_coupled_maps(oc.a_v, oc.a_t);
        struct Side {
          const char* name;
          const MatrixXd& a;
          const MatrixXd& coupled;
          const MatrixXd& points;
          const SharedGMM& marginal;
          const SubspaceReport& rep;
        };
        for (const Side& s : {Side{"clip_vision", oc.a_v, cv, eval.vision, model.vision(), oc.vision},
                              Side{"clip_text", oc.a_t, ct, eval.text, model.text(), oc.text}}) {
          if (is_done(s.name)) continue;
          Rng kr = detail::cell_rng(seed, cfg.experiment, value, std::string("kmeans/") + s.name);
          const ClusterScores cs =
              evaluate_projection(s.a, s.points, eval.labels, cfg.k, cfg.kmeans_restarts, kr, cfg.kmeans_max_iter);
          emit(ResultRow{exp_name, s.name, param, value, seed, cs.ari, cs.ami,
                         s.rep.containment_angle() * 180.0 / std::numbers::pi,
                         safe_fisher_discriminant(s.marginal, s.coupled), secs});
        }
        continue;
      }

      const SharedGMM model = scenario_model(cfg, value, seed);
      const double delta = cfg.experiment == Experiment::kDeltaSweep ? value : cfg.delta;
      // The scaling model lives entirely in the mean span, d = K - 1, and every
      // method projects onto all of it.
      const int r = cfg.experiment == Experiment::kRankSweep      ? static_cast<int>(value)
                    : cfg.experiment == Experiment::kScalingSweep ? cfg.k - 1
                                                                  : cfg.r;
      if (r < 1) throw InvalidArgument("rank grid values must be >= 1");
      const AeDConfig aed(model, delta);
      std::optional<PairSource> source;
      Rng er = detail::cell_rng(seed, cfg.experiment, value, "eval");
      const LabeledSamples eval = sample_gmm(model, cfg.n_eval, er);

      for (Method m : cfg.methods) {
        if (is_done(to_string(m))) continue;
        const auto t0 = clock::now();
        if (!source && m != Method::kAmbient && m != Method::kRandom && m != Method::kOptimal)
          source = cfg.online ? PairSource::online(aed)
                              : PairSource(aed, cfg.n_train, detail::cell_rng(seed, cfg.experiment, value, "pool"));
        MethodContext ctx{model, delta, r, source ? &*source : nullptr};
        ScenarioConfig mc = cfg;
        mc.train.seed = derive_seed(seed, detail::fnv1a(std::string("train/") + to_string(m)));
        const MethodOutcome oc =
            run_method(m, ctx, mc, detail::cell_rng(seed, cfg.experiment, value, std::string("method/") + to_string(m)));
        Rng kr = detail::cell_rng(seed, cfg.experiment, value, std::string("kmeans/") + to_string(m));
        const ClusterScores cs = evaluate_projection(oc.map, eval.points, eval.labels, model.components(),
                                                     cfg.kmeans_restarts, kr, cfg.kmeans_max_iter);
        const double secs = cfg.record_wallclock ? std::chrono::duration<double>(clock::now() - t0).count() : 0.0;
        emit(ResultRow{exp_name, to_string(m), param, value, seed, cs.ari, cs.ami,
                       oc.report.containment_angle() * 180.0 / std::numbers::pi, oc.j, secs});
      }
    }
  }
}

/// Rows already present in a result CSV (empty if the file does not exist).
/// A trailing partial line from an interrupted run is ignored.
inline std::vector<ResultRow> read_results(const std::string& path) {
  std::vector<ResultRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  if (line != kCsvHeader) throw InvalidArgument("'" + path + "' is not a result CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      rows.push_back(parse_csv_row(line));
    } catch (const InvalidArgument&) {
      if (in.peek() != EOF) throw;
    }
  }
  return rows;
}

/// Appends the scenario's rows to `path`, skipping those already there, and
/// flushes after every row so an aborted sweep can be resumed.
inline std::size_t run_sweep_to_csv(const ScenarioConfig& cfg, const std::string& path) {
  const std::vector<ResultRow> existing = read_results(path);
  std::set<RowKey> done;
  for (const ResultRow& r : existing)
    if (r.experiment == to_string(cfg.experiment)) done.insert(row_key(r));

  // Rewrite the valid rows so a torn last line does not survive.
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write '" + path + "'");
  out << kCsvHeader << '\n';
  for (const ResultRow& r : existing) out << to_csv(r) << '\n';
  out.flush();
  std::size_t written = 0;
  run_sweep(
      cfg,
      [&](const ResultRow& row) {
        out << to_csv(row) << '\n';
        out.flush();
        ++written;
      },
      done);
  return written;
}

}  // namespace gmmssl
