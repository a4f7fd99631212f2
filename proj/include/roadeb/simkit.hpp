#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "bayes.hpp"
#include "netgraph.hpp"

namespace roadeb {

// Expected speed (km/h) along an edge, x in [0,1] from v_a to v_o.
struct VelocityProfile {
  enum class Kind { Constant, Trapezoid, Piecewise };
  Kind kind = Kind::Constant;
  double v = 30.0;
  double v_low = 20.0, v_high = 40.0, ramp = 0.25;
  std::vector<double> breakpoints, values; // piecewise linear

  static VelocityProfile constant(double v) {
    VelocityProfile p;
    p.kind = Kind::Constant;
    p.v = v;
    return p;
  }
  static VelocityProfile trapezoid(double v_low = 20.0, double v_high = 40.0, double ramp = 0.25) {
    VelocityProfile p;
    p.kind = Kind::Trapezoid;
    p.v_low = v_low; p.v_high = v_high; p.ramp = ramp;
    return p;
  }
  static VelocityProfile piecewise(std::vector<double> bp, std::vector<double> val) {
    VelocityProfile p;
    p.kind = Kind::Piecewise;
    p.breakpoints = std::move(bp);
    p.values = std::move(val);
    return p;
  }

  void validate() const {
    switch (kind) {
    case Kind::Constant:
      if (!(v > 0)) throw InputError("velocity must be positive");
      break;
    case Kind::Trapezoid:
      if (!(v_low > 0) || !(v_high > 0)) throw InputError("velocity must be positive");
      if (!(ramp > 0 && ramp < 0.5)) throw InputError("trapezoid ramp must lie in (0, 1/2)");
      break;
    case Kind::Piecewise:
      if (breakpoints.size() < 2 || breakpoints.size() != values.size())
        throw InputError("piecewise profile needs matching breakpoints and values");
      if (breakpoints.front() != 0.0 || breakpoints.back() != 1.0)
        throw InputError("piecewise breakpoints must span [0, 1]");
      for (std::size_t i = 1; i < breakpoints.size(); ++i)
        if (!(breakpoints[i] > breakpoints[i - 1]))
          throw InputError("piecewise breakpoints must increase");
      for (double y : values)
        if (!(y > 0)) throw InputError("velocity must be positive");
      break;
    }
  }

  double operator()(double x) const {
    switch (kind) {
    case Kind::Constant:
      return v;
    case Kind::Trapezoid:
      if (x < ramp) return v_low + (v_high - v_low) * x / ramp;
      if (x > 1.0 - ramp) return v_low + (v_high - v_low) * (1.0 - x) / ramp;
      return v_high;
    case Kind::Piecewise: {
      auto it = std::upper_bound(breakpoints.begin(), breakpoints.end(), x);
      if (it == breakpoints.begin()) return values.front();
      if (it == breakpoints.end()) return values.back();
      std::size_t i = it - breakpoints.begin();
      double t = (x - breakpoints[i - 1]) / (breakpoints[i] - breakpoints[i - 1]);
      return values[i - 1] + t * (values[i] - values[i - 1]);
    }
    }
    return v;
  }
};

namespace detail {

inline double simpson_step(const std::function<double(double)>& f, double a, double b, double fa,
                           double fm, double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4 * frm + fb);
  double diff = left + right - whole;
  if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

} // namespace detail

// adaptive Simpson with relative tolerance
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double rel_tol = 1e-8) {
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4 * fm + fb);
  double tol = rel_tol * std::max(std::abs(whole), 1e-300);
  return detail::simpson_step(f, a, b, fa, fm, fb, whole, tol, 50);
}

// seconds to traverse [x0, x1] of an edge of the given length
inline double traversal_seconds(const VelocityProfile& p, double length_km, double x0, double x1) {
  return 3600.0 * integrate([&](double x) { return length_km / p(x); }, x0, x1);
}

inline Vector ground_truth_means(const HighResGraph& hr, const std::vector<VelocityProfile>& profiles) {
  if (static_cast<int>(profiles.size()) != hr.q()) throw InputError("need one profile per edge");
  for (auto& p : profiles) p.validate();
  Vector mu(hr.q_r());
  for (int k = 0; k < hr.q_r(); ++k) {
    auto [i, j] = hr.sub_edges()[k];
    double c = hr.count(i);
    // constant speed in closed form, so equal sub-edges get bitwise equal times
    mu(k) = profiles[i].kind == VelocityProfile::Kind::Constant
                ? 3600.0 * hr.sub_length(k) / profiles[i].v
                : traversal_seconds(profiles[i], hr.parent().length(i), (j - 1) / c, j / c);
  }
  return mu;
}

struct GroundTruth {
  Vector mu_r;          // seconds per sub-edge
  Vector sigma2;        // per-edge travel-time variance, seconds^2
  Vector sigma2_sub;    // per sub-edge
};

// sigma_km: per-edge travel-time sd in seconds per km; variance scales with length
inline GroundTruth ground_truth(const HighResGraph& hr, const std::vector<VelocityProfile>& profiles,
                                const Vector& sigma_km) {
  if (sigma_km.size() != hr.q()) throw InputError("need one sigma per edge");
  GroundTruth t;
  t.mu_r = ground_truth_means(hr, profiles);
  t.sigma2.resize(hr.q());
  t.sigma2_sub.resize(hr.q_r());
  for (int i = 0; i < hr.q(); ++i) t.sigma2(i) = sigma_km(i) * sigma_km(i) * hr.parent().length(i);
  for (int k = 0; k < hr.q_r(); ++k) t.sigma2_sub(k) = t.sigma2(hr.owner(k)) / hr.count(hr.owner(k));
  return t;
}

enum class Distribution { Normal, Gamma };

struct SimConfig {
  Graph graph;
  ResolutionSpec resolution;
  std::vector<VelocityProfile> profiles; // per edge
  Vector sigma_km;                       // per edge, seconds per km
  std::vector<int> n;                    // per edge, applied to each of its sub-edges
  Distribution distribution = Distribution::Normal;
  int M = 1;
  std::uint64_t seed = 1;
  PipelineOptions pipeline;
  int threads = 1;

  void validate() const {
    const int q = graph.edge_count();
    if (M < 1) throw InputError("M must be at least 1");
    if (static_cast<int>(profiles.size()) != q) throw InputError("need one profile per edge");
    if (sigma_km.size() != q) throw InputError("need one sigma per edge");
    if (static_cast<int>(n.size()) != q) throw InputError("need one n per edge");
    for (int v : n)
      if (v < 1) throw InputError("n must be at least 1");
    for (int i = 0; i < q; ++i)
      if (sigma_km(i) < 0) throw InputError("sigma must be non-negative");
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t replication_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index));
}

inline Vector sub_edge_counts(const HighResGraph& hr, const std::vector<int>& n_per_edge) {
  Vector n(hr.q_r());
  for (int k = 0; k < hr.q_r(); ++k) n(k) = n_per_edge[hr.owner(k)];
  return n;
}

// one draw with the given mean and variance
template <class Rng>
double draw(Distribution d, double mu, double var, Rng& rng) {
  if (var <= 0) return mu;
  if (d == Distribution::Normal) return std::normal_distribution<double>(mu, std::sqrt(var))(rng);
  if (!(mu > 0)) throw InputError("gamma sampling needs a positive mean");
  double shape = mu * mu / var, rate = mu / var;
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

template <class Rng>
Observations sample_observations(const GroundTruth& truth, const Vector& n, Distribution d, Rng& rng) {
  const Eigen::Index m = truth.mu_r.size();
  Observations obs{Vector(m), n};
  for (Eigen::Index k = 0; k < m; ++k) {
    if (d == Distribution::Gamma && !(truth.mu_r(k) > 0))
      throw InputError("gamma sampling needs a positive mean");
    int cnt = static_cast<int>(n(k));
    double s = 0.0;
    for (int i = 0; i < cnt; ++i) s += draw(d, truth.mu_r(k), truth.sigma2_sub(k), rng);
    obs.mean(k) = s / cnt;
  }
  return obs;
}

inline Vector rse(const Vector& est, const Vector& truth) {
  if (est.size() != truth.size()) throw InputError("rse: dimension mismatch");
  Vector out(est.size());
  for (Eigen::Index k = 0; k < est.size(); ++k) {
    if (truth(k) == 0.0) throw InputError("rse: zero truth entry");
    double e = (est(k) - truth(k)) / truth(k);
    out(k) = e * e;
  }
  return out;
}

struct ErrorReport {
  int M = 0;
  Vector mean_rse;       // per sub-edge
  Vector sd_rse;         // per sub-edge
  Vector edge_mean_rse;  // per edge of G
  double global_mean_rse = 0;     // average of mean_rse over sub-edges
  double max_mean_rse = 0;
  double global_sq_error = 0;     // seconds^2, averaged over sub-edges and replications
  double edge_global_sq_error = 0;
};

// runs body(index) for index in [0, count) on up to `threads` workers
template <class F>
void parallel_for(int count, int threads, F&& body) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> err(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < count; i += threads) body(i);
      } catch (...) {
        err[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : err)
    if (e) std::rethrow_exception(e);
}

struct ReplicationFailure : std::runtime_error {
  int index;
  bool numerical;
  ReplicationFailure(int i, const std::string& what, bool num)
      : std::runtime_error("replication " + std::to_string(i) + ": " + what), index(i), numerical(num) {}
};

inline ErrorReport run_monte_carlo(const SimConfig& cfg) {
  cfg.validate();
  HighResGraph hr = refine(cfg.graph, cfg.resolution);
  GroundTruth truth = ground_truth(hr, cfg.profiles, cfg.sigma_km);
  Vector n = sub_edge_counts(hr, cfg.n);
  Vector mu_g = hr.projection() * truth.mu_r;
  const int M = cfg.M, qr = hr.q_r(), q = hr.q();

  Matrix sub_rse(qr, M), edge_rse(q, M);
  Vector sq(M), edge_sq(M);
  parallel_for(M, cfg.threads, [&](int m) {
    try {
      std::mt19937_64 rng(replication_seed(cfg.seed, m));
      Observations obs = sample_observations(truth, n, cfg.distribution, rng);
      PipelineResult res = estimate_pipeline(hr, obs, cfg.pipeline);
      sub_rse.col(m) = rse(res.posterior_hr.mean, truth.mu_r);
      edge_rse.col(m) = rse(res.posterior_g.mean, mu_g);
      sq(m) = (res.posterior_hr.mean - truth.mu_r).squaredNorm() / qr;
      edge_sq(m) = (res.posterior_g.mean - mu_g).squaredNorm() / q;
    } catch (const NumericalError& e) {
      throw ReplicationFailure(m, e.what(), true);
    } catch (const std::exception& e) {
      throw ReplicationFailure(m, e.what(), false);
    }
  });

  ErrorReport rep;
  rep.M = M;
  rep.mean_rse = Vector::Zero(qr);
  rep.edge_mean_rse = Vector::Zero(q);
  for (int m = 0; m < M; ++m) {
    rep.mean_rse += sub_rse.col(m);
    rep.edge_mean_rse += edge_rse.col(m);
    rep.global_sq_error += sq(m);
    rep.edge_global_sq_error += edge_sq(m);
  }
  rep.mean_rse /= M;
  rep.edge_mean_rse /= M;
  rep.global_sq_error /= M;
  rep.edge_global_sq_error /= M;
  rep.sd_rse = Vector::Zero(qr);
  if (M > 1) {
    for (int m = 0; m < M; ++m) rep.sd_rse += (sub_rse.col(m) - rep.mean_rse).cwiseAbs2();
    rep.sd_rse = (rep.sd_rse / (M - 1)).cwiseSqrt();
  }
  rep.global_mean_rse = rep.mean_rse.mean();
  rep.max_mean_rse = rep.mean_rse.maxCoeff();
  return rep;
}

} // namespace roadeb
