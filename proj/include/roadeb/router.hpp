#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "bayes.hpp"
#include "netgraph.hpp"
#include "simkit.hpp"

namespace roadeb {

// standard normal quantile: rational approximation plus one Halley step
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("quantile level must lie in (0, 1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01, -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  const double lo = 0.02425, hi = 1 - lo;
  double x;
  if (p < lo) {
    double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= hi) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p == 0.5) return 0.0;
  double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

struct RouteQuery {
  int origin = 0;      // 0-based vertex
  int destination = 0; // 0-based vertex
  std::vector<std::vector<int>> candidate_paths; // 0-based edge lists, optional
  std::optional<int> max_hops;
};

using Path = std::vector<int>;

inline void validate_path(const Graph& g, int origin, int destination, const Path& path) {
  if (path.empty()) throw InputError("empty path");
  int at = origin;
  std::vector<char> seen(g.vertex_count(), 0);
  seen[at] = 1;
  for (int e : path) {
    if (e < 0 || e >= g.edge_count()) throw InputError("path edge out of range");
    auto& ed = g.edge(e);
    int nxt;
    if (ed.a == at) nxt = ed.o;
    else if (ed.o == at) nxt = ed.a;
    else throw InputError("path is not connected at edge " + std::to_string(e + 1));
    if (seen[nxt]) throw InputError("path is not simple");
    seen[nxt] = 1;
    at = nxt;
  }
  if (at != destination) throw InputError("path does not end at the destination");
}

inline std::vector<Path> enumerate_paths(const Graph& g, const RouteQuery& q) {
  if (q.origin == q.destination) throw InputError("origin equals destination");
  if (q.origin < 0 || q.origin >= g.vertex_count() || q.destination < 0 ||
      q.destination >= g.vertex_count())
    throw InputError("query vertex out of range");
  if (!q.candidate_paths.empty()) {
    for (auto& p : q.candidate_paths) validate_path(g, q.origin, q.destination, p);
    return q.candidate_paths;
  }
  int hops = q.max_hops.value_or(g.vertex_count());
  if (hops < 1) throw InputError("max_hops must be at least 1");

  std::vector<std::vector<int>> inc(g.vertex_count());
  for (int e = 0; e < g.edge_count(); ++e) {
    inc[g.edge(e).a].push_back(e);
    inc[g.edge(e).o].push_back(e);
  }
  std::vector<Path> out;
  Path cur;
  std::vector<char> seen(g.vertex_count(), 0);
  auto dfs = [&](auto&& self, int v) -> void {
    if (v == q.destination) { out.push_back(cur); return; }
    if (static_cast<int>(cur.size()) == hops) return;
    for (int e : inc[v]) {
      int w = g.edge(e).a == v ? g.edge(e).o : g.edge(e).a;
      if (seen[w]) continue;
      seen[w] = 1;
      cur.push_back(e);
      self(self, w);
      cur.pop_back();
      seen[w] = 0;
    }
  };
  seen[q.origin] = 1;
  dfs(dfs, q.origin);
  if (out.empty()) throw InputError("disconnected query");
  return out;
}

enum class Basis { TimePerKm, Velocity };

struct DisutilitySpec {
  enum class Kind { ExpectedTime, PosteriorQuantile, EstimatorQuantile, SumSqConsecutiveDiff,
                    MeanSqConsecutiveDiff };
  Kind kind = Kind::ExpectedTime;
  double q = 0.975;
  Basis basis = Basis::TimePerKm;

  static DisutilitySpec expected_time() { return {}; }
  static DisutilitySpec posterior_quantile(double q) { return {Kind::PosteriorQuantile, q}; }
  static DisutilitySpec estimator_quantile(double q) { return {Kind::EstimatorQuantile, q}; }
  static DisutilitySpec sum_sq(Basis b = Basis::TimePerKm) { return {Kind::SumSqConsecutiveDiff, 0.975, b}; }
  static DisutilitySpec mean_sq(Basis b = Basis::TimePerKm) { return {Kind::MeanSqConsecutiveDiff, 0.975, b}; }

  void validate() const {
    if ((kind == Kind::PosteriorQuantile || kind == Kind::EstimatorQuantile) && !(q > 0 && q < 1))
      throw InputError("quantile must lie strictly inside (0, 1)");
  }
};

inline Vector path_indicator(const HighResGraph& hr, const Path& path) {
  Vector a = Vector::Zero(hr.q());
  for (int e : path) a(e) += 1.0;
  return a;
}

// variance of the smoothed estimator along the path: a^T S H Sigma H^T S^T a
inline double estimator_variance(const PipelineResult& res, const HighResGraph& hr, const Path& path) {
  Vector b = res.H.transpose() * (hr.projection().transpose() * path_indicator(hr, path));
  return b.dot(res.sigma_diag.cwiseProduct(b));
}

inline double disutility(const DisutilitySpec& spec, const PipelineResult& res, const HighResGraph& hr,
                         const Path& path) {
  spec.validate();
  if (path.empty()) throw InputError("empty path");
  const Vector& mu = res.posterior_g.mean;
  using K = DisutilitySpec::Kind;
  switch (spec.kind) {
  case K::ExpectedTime: {
    double s = 0.0;
    for (int e : path) s += mu(e);
    return s;
  }
  case K::PosteriorQuantile: {
    auto pm = path_posterior(res.posterior_g, path);
    if (!(pm.variance >= 0)) throw NumericalError("covariance is not PSD");
    return pm.mean + normal_quantile(spec.q) * std::sqrt(pm.variance);
  }
  case K::EstimatorQuantile: {
    double m = path_posterior(res.posterior_g, path).mean;
    double v = estimator_variance(res, hr, path);
    if (v < -1e-9 * std::max(1.0, std::abs(m))) throw NumericalError("covariance is not PSD");
    return m + normal_quantile(spec.q) * std::sqrt(std::max(0.0, v));
  }
  case K::SumSqConsecutiveDiff:
  case K::MeanSqConsecutiveDiff: {
    auto g = [&](int e) {
      double len = hr.parent().length(e);
      return spec.basis == Basis::TimePerKm ? mu(e) / len : 3600.0 * len / mu(e);
    };
    double s = 0.0;
    for (std::size_t k = 1; k < path.size(); ++k) {
      double d = g(path[k]) - g(path[k - 1]);
      s += d * d;
    }
    if (spec.kind == K::MeanSqConsecutiveDiff && path.size() > 1) s /= double(path.size() - 1);
    return s;
  }
  }
  return 0.0;
}

struct RouteChoice {
  int best = 0;
  std::vector<double> values;
};

// ties go to the earliest candidate
inline RouteChoice select_route(const std::vector<Path>& candidates, const DisutilitySpec& spec,
                                const PipelineResult& res, const HighResGraph& hr) {
  if (candidates.empty()) throw InputError("no candidate paths");
  RouteChoice c;
  for (auto& p : candidates) c.values.push_back(disutility(spec, res, hr, p));
  for (std::size_t i = 1; i < c.values.size(); ++i)
    if (c.values[i] < c.values[c.best]) c.best = static_cast<int>(i);
  return c;
}

inline RouteChoice select_route(const RouteQuery& q, const DisutilitySpec& spec, const PipelineResult& res,
                                const HighResGraph& hr) {
  return select_route(enumerate_paths(hr.parent(), q), spec, res, hr);
}

struct RouteExperimentReport {
  DisutilitySpec spec;
  int M = 0;
  std::vector<Path> paths;
  std::vector<int> counts;
  std::vector<double> mean_value;  // average disutility per path over the M runs
  std::vector<double> edge_usage;  // per edge, fraction of runs whose choice uses it
  std::vector<int> top;            // up to three path indices by count

  double frequency(int path) const { return double(counts.at(path)) / M; }
};

// Each replication draws data once and scores it under every spec, so the specs
// see identical samples.
inline std::vector<RouteExperimentReport> route_experiment(const SimConfig& sim, const RouteQuery& query,
                                                           const std::vector<DisutilitySpec>& specs) {
  sim.validate();
  for (auto& s : specs) s.validate();
  HighResGraph hr = refine(sim.graph, sim.resolution);
  GroundTruth truth = ground_truth(hr, sim.profiles, sim.sigma_km);
  Vector n = sub_edge_counts(hr, sim.n);
  auto paths = enumerate_paths(sim.graph, query);
  const int M = sim.M, P = static_cast<int>(paths.size()), S = static_cast<int>(specs.size());

  std::vector<int> choice(std::size_t(M) * S);
  std::vector<double> values(std::size_t(M) * S * P);
  parallel_for(M, sim.threads, [&](int m) {
    try {
      std::mt19937_64 rng(replication_seed(sim.seed, m));
      Observations obs = sample_observations(truth, n, sim.distribution, rng);
      PipelineResult res = estimate_pipeline(hr, obs, sim.pipeline);
      for (int s = 0; s < S; ++s) {
        auto c = select_route(paths, specs[s], res, hr);
        choice[std::size_t(m) * S + s] = c.best;
        for (int p = 0; p < P; ++p) values[(std::size_t(m) * S + s) * P + p] = c.values[p];
      }
    } catch (const NumericalError& e) {
      throw ReplicationFailure(m, e.what(), true);
    } catch (const std::exception& e) {
      throw ReplicationFailure(m, e.what(), false);
    }
  });

  std::vector<RouteExperimentReport> out;
  for (int s = 0; s < S; ++s) {
    RouteExperimentReport r;
    r.spec = specs[s];
    r.M = M;
    r.paths = paths;
    r.counts.assign(P, 0);
    r.mean_value.assign(P, 0.0);
    r.edge_usage.assign(sim.graph.edge_count(), 0.0);
    for (int m = 0; m < M; ++m) {
      int c = choice[std::size_t(m) * S + s];
      ++r.counts[c];
      for (int p = 0; p < P; ++p) r.mean_value[p] += values[(std::size_t(m) * S + s) * P + p];
    }
    for (int p = 0; p < P; ++p) {
      r.mean_value[p] /= M;
      for (int e : paths[p]) r.edge_usage[e] += r.counts[p];
    }
    for (auto& u : r.edge_usage) u /= M;
    std::vector<int> order(P);
    for (int p = 0; p < P; ++p) order[p] = p;
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) { return r.counts[x] > r.counts[y]; });
    for (int k = 0; k < std::min(P, 3); ++k) r.top.push_back(order[k]);
    out.push_back(std::move(r));
  }
  return out;
}

inline RouteExperimentReport route_experiment(const SimConfig& sim, const RouteQuery& query,
                                              const DisutilitySpec& spec) {
  return route_experiment(sim, query, std::vector<DisutilitySpec>{spec}).front();
}

} // namespace roadeb
