// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Extra indented lines carry the measured values.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gmmssl/harness.hpp"
#include "oracles.hpp"

using namespace gmmssl;

namespace {

using clock_type = std::chrono::steady_clock;

constexpr double kDeg = 180.0 / std::numbers::pi;
constexpr int kSeeds = 5;

int failures = 0;

void verdict(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

void note(const std::string& s) {
  std::printf("    %s\n", s.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string describe(const SubspaceReport& r) {
  return "rank " + std::to_string(r.learned_rank) + "/" + std::to_string(r.reference_dim) + " angle " +
         fmt("%.3f", r.containment_angle() * kDeg) + " deg" + (r.equal ? " equal" : r.contained ? " contained" : "");
}

SharedGMM small_benchmark(std::uint64_t seed) {
  Rng mr = Rng(seed).substream(1);
  return make_benchmark_model(4, 20, 10.0, mr);
}

// Trains one learned method on the K=4, d=20, r=5 benchmark with fresh
// batches every step and default optimizer settings.
MethodOutcome train_small(Method method, std::uint64_t seed, double delta, double* secs) {
  const SharedGMM model = small_benchmark(seed);
  const PairSource src = PairSource::online(AeDConfig(model, delta));
  ScenarioConfig cfg;
  cfg.train.seed = derive_seed(seed, 2);
  const auto t0 = clock_type::now();
  MethodOutcome oc = run_method(method, {model, delta, 5, &src}, cfg, Rng(seed).substream(3));
  *secs = seconds_since(t0);
  return oc;
}

void infonce_full_bias() {
  bool ok = true;
  double worst_angle = 0.0, worst_secs = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    double secs = 0.0;
    const MethodOutcome oc = train_small(Method::kInfoNce, static_cast<std::uint64_t>(s), 1.0, &secs);
    note("seed " + std::to_string(s) + ": " + describe(oc.report) + ", " + fmt("%.1f", secs) + " s");
    ok = ok && oc.report.equal && secs <= 120.0;
    worst_angle = std::max(worst_angle, oc.report.containment_angle() * kDeg);
    worst_secs = std::max(worst_secs, secs);
  }
  verdict("infonce_equality_delta_1", ok,
          "K=4 d=20 r=5 kappa=10, 5 seeds equal at 3 deg; max angle " + fmt("%.3f", worst_angle) +
              " deg, slowest seed " + fmt("%.1f", worst_secs) + " s (limit 120 s)");
}

void infonce_half_bias() {
  bool ok = true;
  int equal = 0;
  double worst_angle = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    double secs = 0.0;
    const MethodOutcome oc = train_small(Method::kInfoNce, static_cast<std::uint64_t>(s), 0.5, &secs);
    note("seed " + std::to_string(s) + ": " + describe(oc.report) + ", " + fmt("%.1f", secs) + " s");
    ok = ok && oc.report.contained;
    equal += oc.report.equal;
    worst_angle = std::max(worst_angle, oc.report.containment_angle() * kDeg);
  }
  verdict("infonce_containment_delta_0.5", ok,
          "5 seeds contained at 3 deg; max angle " + fmt("%.3f", worst_angle) + " deg; equality (not asserted) in " +
              std::to_string(equal) + "/5");
}

void simsiam_equality() {
  bool ok = true;
  double worst_angle = 0.0;
  for (int s = 0; s < kSeeds; ++s) {
    double secs = 0.0;
    const MethodOutcome oc = train_small(Method::kSimSiam, static_cast<std::uint64_t>(s), 1.0, &secs);
    note("seed " + std::to_string(s) + ": " + describe(oc.report) + ", " + fmt("%.1f", secs) + " s");
    ok = ok && oc.report.equal;
    worst_angle = std::max(worst_angle, oc.report.containment_angle() * kDeg);
  }

  // xi = 0 control: no guarantee, only reported.
  const SharedGMM model = small_benchmark(0);
  const PairSource src = PairSource::online(AeDConfig(model, 1.0));
  const SiamConfig siam = SiamConfig::unregularized();
  TrainConfig tc;
  tc.seed = derive_seed(0, 2);
  tc.spectral_projection = siam.spectral_bound;
  Rng ir = Rng(0).substream(3).substream(2);
  const Objective obj = [&](const MatrixXd& a, std::int64_t step, MatrixXd& g) {
    return simsiam_loss(a, src.batch(tc.seed, step, tc.batch_n, 1), siam, &g);
  };
  const TrainResult ctl = train(obj, init_projection(20, 5, tc.init_scale, ir), tc);
  const SubspaceReport cr = containment_report(ctl.a, fisher_subspace(model), kTrainedRankTol);
  note("xi = 0 control (flag only): " + describe(cr) + (cr.equal ? "" : " -> not equal, no guarantee applies"));

  verdict("simsiam_equality", ok,
          "xi = half the regularization bound, spectral bound 1, 5 seeds equal at 3 deg; max angle " +
              fmt("%.3f", worst_angle) + " deg");
}

void clip_containment() {
  constexpr int kClipSeeds = 3;
  bool ok = true;
  double worst = 0.0;
  for (bool aligned : {true, false}) {
    for (int s = 0; s < kClipSeeds; ++s) {
      const std::uint64_t seed = static_cast<std::uint64_t>(s);
      Rng mr = Rng(seed).substream(1);
      const ClipGMM model = make_clip_model(3, 12, 8, aligned, mr);
      TrainConfig tc;
      tc.seed = derive_seed(seed, 2);
      const auto t0 = clock_type::now();
      const ClipOutcome oc = run_clip(model, ClipSource::online(model), 3, tc, Rng(seed).substream(3));
      const double secs = seconds_since(t0);
      const bool pass = aligned ? oc.vision.equal && oc.text.equal : oc.vision.contained && oc.text.contained;
      ok = ok && pass;
      worst = std::max({worst, oc.vision.containment_angle() * kDeg, oc.text.containment_angle() * kDeg});
      note(std::string(aligned ? "aligned" : "unaligned") + " seed " + std::to_string(s) + ": vision " +
           describe(oc.vision) + "; text " + describe(oc.text) + "; raw A_v " + describe(oc.vision_raw) + "; " +
           fmt("%.1f", secs) + " s");
    }
  }
  verdict("clip_containment", ok,
          "K=3 d1=12 d2=8 r=3, coupled maps A_v A_t^T and A_t A_v^T; aligned equal and unaligned contained at 3 "
          "deg, 3 seeds each; max angle " +
              fmt("%.3f", worst) + " deg");
}

void pancakes() {
  const SharedGMM model = make_pancake_model();
  const MatrixXd svd = svd_subspace(model, 1).subspace.basis();
  const double j_svd = fisher_discriminant(model, svd);
  Rng rr(11);
  int wins = 0;
  for (int t = 0; t < 100; ++t)
    wins += j_svd < fisher_discriminant(model, linalg::random_orthonormal(model.dim(), 1, rr));

  double worst_pca = -1.0, worst_infonce = 2.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng er = Rng(seed).substream(4);
    const LabeledSamples eval = sample_gmm(model, 2000, er);
    Rng k1 = Rng(seed).substream(5), k2 = Rng(seed).substream(6);
    const double pca = evaluate_projection(svd, eval.points, eval.labels, 2, 10, k1).ari;
    const PairSource src = PairSource::online(AeDConfig(model, 1.0));
    ScenarioConfig cfg;
    cfg.train.seed = derive_seed(seed, 2);
    const MethodOutcome oc = run_method(Method::kInfoNce, {model, 1.0, 1, &src}, cfg, Rng(seed).substream(3));
    const double info = evaluate_projection(oc.map, eval.points, eval.labels, 2, 10, k2).ari;
    note("seed " + std::to_string(seed) + ": ARI pca " + fmt("%.4f", pca) + ", infonce " + fmt("%.4f", info));
    worst_pca = std::max(worst_pca, pca);
    worst_infonce = std::min(worst_infonce, info);
  }
  verdict("pancake_mode_collapse", wins >= 99 && worst_pca <= 0.1 && worst_infonce >= 0.9,
          "J(svd) < J(random) in " + std::to_string(wins) + "/100; max ARI pca " + fmt("%.4f", worst_pca) +
              " (<= 0.1), min ARI infonce " + fmt("%.4f", worst_infonce) + " (>= 0.9)");
}

void posterior_preservation() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(500 + seed);
    const Index k = 3 + static_cast<Index>(seed), d = 8;
    VectorXd w = VectorXd::Ones(k) + VectorXd::NullaryExpr(k, [&] { return rng.uniform(); });
    const SharedGMM m(w / w.sum(), 2.0 * rng.normal_matrix(d, k), linalg::random_spd(d, 0.2, 6.0, rng));
    const MatrixXd a = fisher_subspace(m).basis();
    const SharedGMM proj = project_gmm(m, a);
    const LabeledSamples s = sample_gmm(m, 1000, rng);
    for (Index i = 0; i < s.size(); ++i) {
      const VectorXd x = s.points.row(i).transpose();
      worst = std::max(worst, (posterior(m, x) - posterior(proj, a.transpose() * x)).cwiseAbs().maxCoeff());
    }
  }
  verdict("posterior_preservation", worst <= 1e-8,
          "1000 points x 3 random models with non-spherical covariance; max deviation " + fmt("%.3e", worst));
}

void gradient_suite() {
  std::map<std::string, double> worst;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(900 + seed);
    const Batch b{rng.normal_matrix(6, 5), rng.normal_matrix(6, 5), rng.normal_matrix(8, 5)};
    const MatrixXd a = 0.5 * rng.normal_matrix(5, 3);
    auto track = [&](const std::string& name, const MatrixXd& analytic, const MatrixXd& numeric) {
      worst[name] = std::max(worst[name], oracle::relative_error(analytic, numeric));
    };
    track("infonce", infonce_grad(a, b),
          oracle::finite_difference([&](const MatrixXd& x) { return infonce_loss(x, b); }, a));
    const SiamConfig siam(0.05 + rng.uniform());
    track("simsiam", simsiam_grad(a, b, siam),
          oracle::finite_difference([&](const MatrixXd& x) { return simsiam_loss(x, b, siam); }, a));
    MatrixXd means = rng.normal_matrix(5, 3);
    means.col(2) = -means.col(0) - means.col(1);
    const SharedGMM m(VectorXd::Constant(3, 1.0 / 3), means, linalg::random_spd(5, 0.5, 3.0, rng));
    const double delta = rng.uniform(), xi = 0.05 + rng.uniform();
    track("simsiam_population", simsiam_population_grad(a, m, delta, xi),
          oracle::finite_difference([&](const MatrixXd& x) { return simsiam_population_loss(x, m, delta, xi); }, a));
    const ClipBatch cb{rng.normal_matrix(6, 5), rng.normal_matrix(6, 4), rng.normal_matrix(7, 5),
                       rng.normal_matrix(7, 4)};
    const MatrixXd at = 0.5 * rng.normal_matrix(4, 3);
    for (bool sym : {false, true}) {
      const auto [gv, gt] = clip_grads(a, at, cb, sym);
      const std::string tag = sym ? "clip_symmetric" : "clip";
      track(tag + "_vision", gv,
            oracle::finite_difference([&](const MatrixXd& x) { return clip_loss(x, at, cb, nullptr, nullptr, sym); }, a));
      track(tag + "_text", gt,
            oracle::finite_difference([&](const MatrixXd& x) { return clip_loss(a, x, cb, nullptr, nullptr, sym); }, at));
    }
  }
  bool ok = true;
  std::string detail = "20 instances each, max relative error:";
  for (const auto& [name, err] : worst) {
    ok = ok && err <= 1e-5;
    detail += " " + name + " " + fmt("%.2e", err);
  }
  verdict("gradient_suite", ok, detail + " (limit 1e-5)");
}

void metric_oracles() {
  std::map<std::pair<std::vector<int>, std::vector<int>>, double> emi_cache;
  auto sizes = [](const std::vector<int>& l) {
    std::vector<int> s(3, 0);
    for (int x : l) ++s[static_cast<size_t>(x)];
    s.erase(std::remove(s.begin(), s.end(), 0), s.end());
    std::sort(s.begin(), s.end());
    return s;
  };
  auto from_sizes = [](const std::vector<int>& s) {
    std::vector<int> l;
    for (size_t k = 0; k < s.size(); ++k) l.insert(l.end(), static_cast<size_t>(s[k]), static_cast<int>(k));
    return l;
  };
  double worst_ari = 0.0, worst_ami = 0.0;
  long pairs = 0;
  for (int n = 2; n <= 8; ++n) {
    const auto parts = oracle::set_partitions(n, 3);
    for (const auto& a : parts)
      for (const auto& b : parts) {
        worst_ari = std::max(worst_ari, std::abs(ari(a, b) - oracle::ari_pairs(a, b)));
        const auto key = std::make_pair(sizes(a), sizes(b));
        auto it = emi_cache.find(key);
        if (it == emi_cache.end())
          it = emi_cache
                   .emplace(key, oracle::expected_mi_permutations(from_sizes(key.first), from_sizes(key.second)))
                   .first;
        const double denom = 0.5 * (oracle::entropy(a) + oracle::entropy(b)) - it->second;
        const double expected =
            std::abs(denom) < 1e-15 ? 1.0 : (oracle::mutual_info(a, b) - it->second) / denom;
        worst_ami = std::max(worst_ami, std::abs(ami(a, b) - expected));
        ++pairs;
      }
  }
  verdict("metric_oracles", worst_ari <= 1e-10 && worst_ami <= 1e-10,
          std::to_string(pairs) + " labeling pairs (n <= 8, K <= 3); max |ARI - pair oracle| " +
              fmt("%.2e", worst_ari) + ", max |AMI - permutation oracle| " + fmt("%.2e", worst_ami));
}

// Largest |mean - target| / SE over the entries of E[u v^T].
double max_z(const MatrixXd& u, const MatrixXd& v, const MatrixXd& target) {
  const double n = static_cast<double>(u.rows());
  double z = 0.0;
  for (Index i = 0; i < u.cols(); ++i)
    for (Index j = 0; j < v.cols(); ++j) {
      const VectorXd p = u.col(i).cwiseProduct(v.col(j));
      const double mean = p.mean();
      const double se = std::sqrt((p.array() - mean).square().sum() / (n - 1.0) / n);
      z = std::max(z, std::abs(mean - target(i, j)) / se);
    }
  return z;
}

void monte_carlo_moments() {
  constexpr Index n = 1000000;
  MatrixXd means(3, 3);
  means << 2, -1, 0.5, 0, 1.5, -2, 1, 1, 1;
  const SharedGMM base(Eigen::Vector3d(0.2, 0.3, 0.5), means, 0.5 * MatrixXd::Identity(3, 3));
  const VectorXd mbar = base.mean();
  double worst_cross = 0.0;
  for (double delta : {0.0, 0.3, 0.7, 1.0}) {
    Rng rng = Rng(7).substream(static_cast<std::uint64_t>(delta * 10));
    const AeDPairs p = sample_aed(AeDConfig(base, delta), n, rng);
    const MatrixXd target = delta * base.between_scatter() + (1.0 - delta) * mbar * mbar.transpose();
    const double z = max_z(p.anchors, p.augments, target);
    note("cross moment delta " + fmt("%.1f", delta) + ": max z " + fmt("%.2f", z));
    worst_cross = std::max(worst_cross, z);
  }

  Rng mr(8);
  const SharedGMM centered = make_benchmark_model(3, 4, 3.0, mr);
  const MatrixXd a = 0.5 * mr.normal_matrix(4, 2);
  double worst_siam = 0.0;
  for (double delta : {0.5, 1.0}) {
    const double xi = 0.3;
    Rng rng = Rng(9).substream(static_cast<std::uint64_t>(delta * 10));
    const AeDPairs p = sample_aed(AeDConfig(centered, delta), n, rng);
    const MatrixXd z = p.anchors * a, zh = p.augments * a;
    const VectorXd terms = -(z.cwiseProduct(zh)).rowwise().sum() + xi * z.rowwise().squaredNorm();
    const double mean = terms.mean();
    const double se = std::sqrt((terms.array() - mean).square().sum() / (n - 1.0) / static_cast<double>(n));
    const double zscore = std::abs(mean - simsiam_population_loss(a, centered, delta, xi)) / se;
    note("simsiam population delta " + fmt("%.1f", delta) + ": z " + fmt("%.2f", zscore));
    worst_siam = std::max(worst_siam, zscore);
  }
  verdict("monte_carlo_moments", worst_cross <= 3.0 && worst_siam <= 3.0,
          "1e6 samples; pair cross moment max z " + fmt("%.2f", worst_cross) + ", simsiam population vs empirical z " +
              fmt("%.2f", worst_siam) + " (limit 3)");
}

// Median ARI per (method, value).
std::map<std::pair<std::string, double>, double> sweep_medians(const ScenarioConfig& cfg, const std::string& csv_dir) {
  std::vector<ResultRow> rows;
  std::ofstream out;
  if (!csv_dir.empty()) {
    out.open(std::filesystem::path(csv_dir) / (std::string(to_string(cfg.experiment)) + ".csv"));
    out << kCsvHeader << '\n';
  }
  run_sweep(cfg, [&](const ResultRow& r) {
    rows.push_back(r);
    if (out) out << to_csv(r) << '\n' << std::flush;
  });
  std::map<std::pair<std::string, double>, std::vector<double>> by;
  for (const ResultRow& r : rows) by[{r.method, r.value}].push_back(r.ari);
  std::map<std::pair<std::string, double>, double> med;
  for (const auto& [k, v] : by) med[k] = median(v);
  return med;
}

void sweep_orderings(const std::string& csv_dir) {
  ScenarioConfig base;  // K=10, d=100, kappa=10
  base.seeds = {0, 1, 2};
  base.n_eval = 2000;
  base.record_wallclock = false;
  base.train.steps = 2000;
  base.train.batch_n = 256;
  base.train.batch_m = 256;
  const auto t0 = clock_type::now();

  ScenarioConfig a = base;
  a.experiment = Experiment::kDeltaSweep;
  a.grid = {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  a.methods = {Method::kPca, Method::kInfoNce};
  const auto ma = sweep_medians(a, csv_dir);
  double lo = 2.0, hi = -2.0;
  for (double v : a.grid) {
    lo = std::min(lo, ma.at({"infonce", v}));
    hi = std::max(hi, ma.at({"infonce", v}));
  }
  const bool ok_a = hi - lo < 0.1;
  note("(a) infonce median ARI over delta 0.3..1.0 in [" + fmt("%.4f", lo) + ", " + fmt("%.4f", hi) + "]");

  ScenarioConfig b = base;
  b.experiment = Experiment::kFlatnessSweep;
  b.grid = {0.1, 0.2, 0.3};
  b.methods = {Method::kAmbient, Method::kPca, Method::kInfoNce};
  const auto mb = sweep_medians(b, csv_dir);
  bool ok_b = true;
  for (double v : b.grid) {
    ok_b = ok_b && mb.at({"infonce", v}) >= mb.at({"pca", v});
    note("(b) flatness " + fmt("%.1f", v) + ": infonce " + fmt("%.4f", mb.at({"infonce", v})) + ", pca " +
         fmt("%.4f", mb.at({"pca", v})) + ", ambient " + fmt("%.4f", mb.at({"ambient", v})));
  }

  ScenarioConfig c = base;
  c.experiment = Experiment::kRankSweep;
  c.methods = {Method::kInfoNce};
  const auto mc = sweep_medians(c, csv_dir);
  bool ok_c = true;
  double running = -2.0;
  std::string curve;
  for (int r = 1; r <= 2 * base.k; ++r) {
    const double v = mc.at({"infonce", static_cast<double>(r)});
    ok_c = ok_c && v >= running - 0.05;
    running = std::max(running, v);
    curve += (r > 1 ? " " : "") + fmt("%.3f", v);
  }
  note("(c) infonce median ARI for r = 1..20: " + curve);

  ScenarioConfig d = base;
  d.experiment = Experiment::kScalingSweep;
  d.grid = {10.0};
  d.methods = {Method::kAmbient, Method::kRandom, Method::kOptimal, Method::kPca, Method::kInfoNce};
  const auto md = sweep_medians(d, csv_dir);
  bool ok_d = true;
  std::string scal;
  for (const char* m : {"ambient", "random", "optimal", "pca"}) {
    ok_d = ok_d && md.at({"infonce", 10.0}) >= md.at({m, 10.0});
    scal += std::string(" ") + m + " " + fmt("%.4f", md.at({m, 10.0}));
  }
  note("(d) kappa 10: infonce " + fmt("%.4f", md.at({"infonce", 10.0})) + " vs" + scal);

  verdict("sweep_orderings", ok_a && ok_b && ok_c && ok_d,
          std::string("K=10 d=100, 3 seeds, median ARI; (a) ") + (ok_a ? "ok" : "violated") + " (b) " +
              (ok_b ? "ok" : "violated") + " (c) " + (ok_c ? "ok" : "violated") + " (d) " +
              (ok_d ? "ok" : "violated") + "; " + fmt("%.0f", seconds_since(t0)) + " s");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string only, csv_dir;
  app.add_option("--only", only, "run only checks whose name contains this string");
  app.add_option("--csv-dir", csv_dir, "also write the sweep CSVs here");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<void()>>> checks{
      {"posterior_preservation", posterior_preservation},
      {"gradient_suite", gradient_suite},
      {"metric_oracles", metric_oracles},
      {"monte_carlo_moments", monte_carlo_moments},
      {"pancake_mode_collapse", pancakes},
      {"simsiam_equality", simsiam_equality},
      {"infonce_equality_delta_1", infonce_full_bias},
      {"infonce_containment_delta_0.5", infonce_half_bias},
      {"clip_containment", clip_containment},
      {"sweep_orderings", [&] { sweep_orderings(csv_dir); }},
  };
  for (const auto& [name, fn] : checks)
    if (only.empty() || name.find(only) != std::string::npos) fn();
  std::printf("%d failure(s)\n", failures);
  return failures == 0 ? 0 : 1;
}
