// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include <unistd.h>

#include <roadeb/io.hpp>
#include <roadeb/roadeb.hpp>

#include "oracles.hpp"

using namespace roadeb;
namespace fs = std::filesystem;

namespace {

// tolerances and limits
constexpr double kPosteriorRelTol = 1e-8;
constexpr double kConditioningTol = 1e-6;
constexpr double kStationarityTol = 1e-6;
constexpr double kBoundSlackAbs = kBoundSlack;
constexpr double kSeriesTol = 0.10;
constexpr double kKappaTol = 1e-12;
constexpr double kLatticeMaxRse = 1.5e-3;
constexpr double kGammaFactor = 1.5;
constexpr double kRoute2Low = 0.60, kRoute2High = 0.90;
constexpr double kResolutionSeparation = 2.0;

const fs::path kData = ROADEB_DATA_DIR;
const std::string kCli = ROADEB_CLI_PATH;

int failures = 0;

void report(int id, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SimConfig load_config(const std::string& name) {
  fs::path p = kData / name;
  io::LoadedConfig lc;
  return io::sim_from_json(io::parse_json(io::read_file(p), p.string()), p.parent_path(), lc);
}

struct Instance {
  HighResGraph hr;
  Vector x, n, sigma2;
  double lambda;
};

// q <= 5, r_i <= 4, n <= 20
Instance random_instance(std::mt19937_64& rng) {
  for (;;) {
    int p = std::uniform_int_distribution<int>(2, 5)(rng);
    Graph g = oracle::random_connected(rng, p, 0.25);
    if (g.edge_count() > 5) continue;
    std::vector<int> r(g.edge_count());
    for (auto& v : r) v = std::uniform_int_distribution<int>(0, 4)(rng);
    Instance in{refine(g, {r, 100.0}), {}, {}, {}, 0};
    if (in.hr.q_r() < 2) continue;
    std::normal_distribution<double> z;
    in.x.resize(in.hr.q_r());
    in.n.resize(in.hr.q_r());
    for (int k = 0; k < in.hr.q_r(); ++k) {
      in.x(k) = 40 + 5 * z(rng);
      in.n(k) = std::uniform_int_distribution<int>(1, 20)(rng);
    }
    in.sigma2.resize(g.edge_count());
    for (int i = 0; i < g.edge_count(); ++i) in.sigma2(i) = std::uniform_real_distribution<double>(50, 500)(rng);
    in.lambda = std::exp(std::uniform_real_distribution<double>(std::log(1e-3), std::log(1.0))(rng));
    return in;
  }
}

std::vector<Instance> instances() {
  std::mt19937_64 rng(20240501);
  std::vector<Instance> v;
  for (int t = 0; t < 50; ++t) v.push_back(random_instance(rng));
  return v;
}

void c1(const std::vector<Instance>& inst) {
  auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  for (auto& in : inst) {
    auto cov = CovarianceModel::diagonal_per_edge(in.hr, in.sigma2, in.n);
    auto post = posterior(in.lambda, cov, in.hr.line_laplacian(), in.x);
    Matrix Si = cov.matrix().inverse();
    Matrix A = Si + in.lambda * in.hr.line_laplacian();
    Vector direct = A.ldlt().solve(Si * in.x);
    Vector cg = oracle::penalized_ls_minimizer(Si, in.hr.line_laplacian(), in.lambda, in.x);
    worst = std::max({worst, (post.mean - direct).norm() / direct.norm(), (post.mean - cg).norm() / cg.norm()});
  }
  double dt = seconds_since(t0);
  report(1, worst <= kPosteriorRelTol && dt < 10,
         fmt("max relative difference %.3g (tol %.0e), %.2f s", worst, kPosteriorRelTol, dt));
}

void c2(const std::vector<Instance>& inst) {
  double worst = 0, literal = 0;
  for (auto& in : inst) {
    auto cov = CovarianceModel::diagonal_per_edge(in.hr, in.sigma2, in.n);
    auto post = posterior(in.lambda, cov, in.hr.line_laplacian(), in.x);
    Matrix pinv = pinv_psd(SymMatrix(in.hr.line_laplacian())).mat();
    auto f = oracle::conditioning(cov.matrix(), pinv, in.hr.line_laplacian(), in.lambda);
    double scale = post.covariance.cwiseAbs().maxCoeff();
    worst = std::max(worst, (post.covariance - f.completed).cwiseAbs().maxCoeff() / scale);
    literal = std::max(literal, (post.covariance - f.literal).cwiseAbs().maxCoeff() / scale);
  }
  report(2, worst <= kConditioningTol,
         fmt("completed Schur form max rel gap %.3g (tol %.0e); literal proper-prior form gap %.3g", worst,
             kConditioningTol, literal));
}

void c3() {
  // closed-form per-edge variances on one lattice data set, checked with an independently built smoother
  SimConfig cfg = load_config("example1.json");
  HighResGraph hr = refine(cfg.graph, cfg.resolution);
  GroundTruth truth = ground_truth(hr, cfg.profiles, cfg.sigma_km);
  Vector n = sub_edge_counts(hr, cfg.n);
  std::mt19937_64 rng(replication_seed(cfg.seed, 0));
  Observations obs = sample_observations(truth, n, cfg.distribution, rng);
  double worst_cf = 0;
  for (double lam : {100.0, 1000.0, 4000.0}) {
    Vector s2 = eb_variances(obs.mean, hr, lam, obs.n);
    Matrix D = obs.n.cwiseInverse().asDiagonal();
    Matrix H = (Matrix::Identity(hr.q_r(), hr.q_r()) + lam * D * hr.line_laplacian()).inverse();
    Vector r = obs.mean - H * obs.mean;
    for (int i = 0; i < hr.q(); ++i) {
      double tr = 0, quad = 0;
      for (int k = hr.first(i); k < hr.first(i) + hr.count(i); ++k) {
        tr += 1 - H(k, k);
        quad += obs.n(k) * r(k) * r(k) / s2(i);
      }
      worst_cf = std::max(worst_cf, std::abs(tr - quad) / tr);
    }
  }
  // diagonal family through the fixed point
  Graph g(4, {{1, 2}, {2, 3}, {2, 4}});
  HighResGraph hs = refine(g, {{10, 10, 10}});
  std::mt19937_64 rng2(20240503);
  std::normal_distribution<double> z;
  Vector x(hs.q_r());
  for (int k = 0; k < hs.q_r(); ++k) x(k) = 40 + 6 * z(rng2);
  auto fam = CovarianceModel::diagonal_family(hs, Vector::Constant(hs.q_r(), 10.0), Vector::Constant(3, 100.0));
  double worst_fp = 1;
  int iters = 0;
  try {
    auto fp = eb_fixed_point(x, fam, 0.5, hs.line_laplacian());
    worst_fp = fp.residual;
    iters = fp.iterations;
  } catch (const NumericalError& e) {
    std::printf("  fixed point failed: %s\n", e.what());
  }
  report(3, worst_cf <= kStationarityTol && worst_fp <= kStationarityTol,
         fmt("closed-form residual %.3g, fixed-point residual %.3g after %d iterations (tol %.0e)", worst_cf, worst_fp,
             iters, kStationarityTol));
}

void c4() {
  auto t0 = std::chrono::steady_clock::now();
  struct Named {
    const char* name;
    Graph g;
  };
  std::vector<Named> graphs{{"lattice", Graph(4, {{1, 2}, {2, 4}, {1, 3}, {3, 4}})},
                            {"star", Graph(4, {{1, 2}, {1, 3}, {1, 4}})},
                            {"triangle", Graph(3, {{1, 2}, {2, 3}, {1, 3}})}};
  bool ok = true;
  std::string bad;
  double worst_norm = 0, worst_weyl = 0;
  for (auto& [name, g] : graphs)
    for (int r : {1, 4, 10, 50}) {
      HighResGraph hr = refine(g, ResolutionSpec::uniform(g.edge_count(), r));
      DeltaDiagnostics d = delta_measure(hr);
      bool rank_ok = d.rank <= 6 * g.edge_count();
      bool norm_ok = d.norm <= 2.0 + kBoundSlackAbs;
      bool weyl_ok = d.weyl_gap <= 2.0 + kBoundSlackAbs;
      worst_norm = std::max(worst_norm, d.norm);
      worst_weyl = std::max(worst_weyl, d.weyl_gap);
      std::printf("  %-8s r=%-2d rank %3d/%-2d norm %.12f weyl %.12f\n", name, r, d.rank, 6 * g.edge_count(), d.norm,
                  d.weyl_gap);
      if (!(rank_ok && norm_ok && weyl_ok)) {
        ok = false;
        bad += fmt(" %s r=%d%s%s%s;", name, r, rank_ok ? "" : " rank", norm_ok ? "" : " norm", weyl_ok ? "" : " weyl");
      }
    }
  double dt = seconds_since(t0);
  report(4, ok && dt < 30,
         fmt("max norm %.6f, max Weyl gap %.6f, %.2f s%s%s", worst_norm, worst_weyl, dt, ok ? "" : "; violated:",
             bad.c_str()));
}

void c5() {
  const int r = 2000;
  const double lambda = 500, n = 1, sigma = 1; // lambda_eff = 4 lambda sigma^2 / n = 2000
  double worst = 0;
  for (auto [s, t] : std::vector<std::pair<int, int>>{{1, 0}, {2, 0}, {1, 1}, {2, 2}}) {
    SeriesCheck c = series_check(r, lambda, n, sigma, s, t);
    std::printf("  (s,t)=(%d,%d) direct %.6f target %.6f rel %.4f\n", s, t, c.direct, c.target, c.relative_error);
    worst = std::max(worst, c.relative_error);
  }
  double k10 = std::abs(kappa(1, 0) - 1.0), k20 = std::abs(kappa(2, 0) - 0.5), k11 = std::abs(kappa(1, 1) - 0.5);
  double kerr = std::max({k10, k20, k11});
  report(5, worst <= kSeriesTol && kerr <= kKappaTol,
         fmt("max series relative error %.4f (tol %.2f), kappa error %.2g", worst, kSeriesTol, kerr));
}

struct MonteCarlo {
  ErrorReport rep;
  double seconds;
};

MonteCarlo mc(const std::string& name) {
  auto t0 = std::chrono::steady_clock::now();
  ErrorReport rep = run_monte_carlo(load_config(name));
  return {rep, seconds_since(t0)};
}

void c6_to_c10() {
  MonteCarlo ex1 = mc("example1.json");
  report(6, ex1.rep.M == 1000 && ex1.rep.max_mean_rse <= kLatticeMaxRse && ex1.seconds < 300,
         fmt("max mean RSE %.4g (bound %.1e), M=%d, %.1f s", ex1.rep.max_mean_rse, kLatticeMaxRse, ex1.rep.M,
             ex1.seconds));

  MonteCarlo ex2 = mc("example2.json");
  report(7, ex2.rep.global_mean_rse > ex1.rep.global_mean_rse,
         fmt("global mean RSE n=10 %.4g > n=100 %.4g", ex2.rep.global_mean_rse, ex1.rep.global_mean_rse));

  MonteCarlo ex3 = mc("example3_no_smoothing.json");
  report(8, ex1.rep.global_sq_error < ex3.rep.global_sq_error,
         fmt("average squared error GCV %.4f s^2 < no smoothing %.4f s^2", ex1.rep.global_sq_error,
             ex3.rep.global_sq_error));

  MonteCarlo r2 = mc("example4_r2.json"), r8 = mc("example4_r8.json");
  // averaged over the sub-edges of each high-resolution graph, as in the paper's figures
  double a = r2.rep.global_sq_error, b = r8.rep.global_sq_error;
  report(9, b * kResolutionSeparation <= a,
         fmt("average squared error r=8,n=34 %.4f s^2 vs r=2,n=100 %.4f s^2 (ratio %.2f, need >= %.1f);"
             " per original edge %.4f vs %.4f",
             b, a, a / b, kResolutionSeparation, r8.rep.edge_global_sq_error, r2.rep.edge_global_sq_error));

  MonteCarlo ex6 = mc("example6_gamma.json");
  double ratio = ex6.rep.global_mean_rse / ex1.rep.global_mean_rse;
  report(10, ratio <= kGammaFactor && ratio >= 1 / kGammaFactor,
         fmt("global mean RSE gamma %.4g vs normal %.4g (ratio %.3f)", ex6.rep.global_mean_rse,
             ex1.rep.global_mean_rse, ratio));
}

struct RouteRun {
  SimConfig sim;
  RouteQuery query;
};

RouteRun load_route(const std::string& name) {
  fs::path p = kData / name;
  auto j = io::parse_json(io::read_file(p), p.string());
  io::LoadedConfig lc;
  RouteRun r{io::sim_from_json(j, p.parent_path(), lc), {}};
  r.query = io::query_from_json(j["query"], r.sim.graph);
  return r;
}

void c11() {
  auto t0 = std::chrono::steady_clock::now();
  RouteRun rr = load_route("elementary_route.json");
  auto rep = route_experiment(rr.sim, rr.query, DisutilitySpec::expected_time());
  double f = rep.frequency(1), dt = seconds_since(t0);
  report(11, rep.M == 1000 && f >= kRoute2Low && f <= kRoute2High && dt < 120,
         fmt("Route 2 chosen in %.3f of M=%d runs (band %.2f-%.2f), %.1f s", f, rep.M, kRoute2Low, kRoute2High, dt));
}

void c12() {
  RouteRun rr = load_route("elementary_risk.json");
  std::vector<DisutilitySpec> specs{DisutilitySpec::estimator_quantile(0.5), DisutilitySpec::estimator_quantile(0.8),
                                    DisutilitySpec::estimator_quantile(0.975)};
  auto reps = route_experiment(rr.sim, rr.query, specs);
  double f[3];
  for (int i = 0; i < 3; ++i) f[i] = reps[i].frequency(0);
  report(12, f[0] < f[1] && f[1] < f[2],
         fmt("Route 1 frequency q=0.5 %.3f, q=0.8 %.3f, q=0.975 %.3f", f[0], f[1], f[2]));
}

void c13() {
  RouteRun rr = load_route("elementary_n_mismatch.json");
  bool ok = true;
  std::string detail;
  for (int n2 : {2, 3, 10, 20}) {
    SimConfig sim = rr.sim;
    sim.n = {10, 10, n2, n2};
    sim.M = 2000;
    auto rep = route_experiment(sim, rr.query, DisutilitySpec::posterior_quantile(0.975));
    // decided by which route wins the majority of the M runs; averages are printed for context
    bool want1 = n2 <= 3;
    bool pass = (rep.frequency(0) > 0.5) == want1;
    ok = ok && pass;
    detail += fmt(" n2=%d: Route 1 in %.3f (avg %.2f vs %.2f)%s;", n2, rep.frequency(0), rep.mean_value[0],
                  rep.mean_value[1], pass ? "" : " wrong");
  }
  report(13, ok, detail);
}

std::string run_cli(const std::string& args) {
  std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return rc == 0 ? "" : fmt("'%s' exited with %d", args.c_str(), rc);
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  int files = 0;
  for (auto& e : fs::directory_iterator(a)) {
    fs::path other = b / e.path().filename();
    if (!fs::exists(other) || io::read_file(e.path()) != io::read_file(other)) {
      why = e.path().filename().string() + " differs";
      return false;
    }
    ++files;
  }
  for (auto& e : fs::directory_iterator(b))
    if (!fs::exists(a / e.path().filename())) {
      why = "extra file " + e.path().filename().string();
      return false;
    }
  why = std::to_string(files) + " files identical";
  return files > 0;
}

void c14() {
  fs::path base = fs::temp_directory_path() / ("roadeb_accept_" + std::to_string(::getpid()));
  fs::remove_all(base);
  std::string err;
  const std::string sim = (kData / "example1.json").string(), route = (kData / "elementary_route.json").string();
  for (const char* t : {"1", "4"}) {
    err += run_cli("simulate " + sim + " --threads " + t + " --out-dir " + (base / ("sim" + std::string(t))).string());
    err += run_cli("route " + route + " --threads " + t + " --out-dir " + (base / ("route" + std::string(t))).string());
  }
  bool ok = err.empty();
  std::string w1, w2;
  if (ok) {
    ok = same_tree(base / "sim1", base / "sim4", w1);
    ok = same_tree(base / "route1", base / "route4", w2) && ok;
  }
  fs::remove_all(base);
  report(14, ok, ok || !err.empty() ? (err.empty() ? "simulate: " + w1 + "; route: " + w2 : err)
                                    : "simulate: " + w1 + "; route: " + w2);
}

} // namespace

int main() {
  auto inst = instances();
  const std::vector<std::function<void()>> steps{
      [&] { c1(inst); }, [&] { c2(inst); }, c3, c4, c5, c6_to_c10, c11, c12, c13, c14};
  for (auto& s : steps) {
    try {
      s();
    } catch (const std::exception& e) {
      std::printf("criterion step aborted: %s\n", e.what());
      ++failures;
    }
  }
  std::printf("%d criterion line(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
