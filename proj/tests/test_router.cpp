#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include <roadeb/router.hpp>

using namespace roadeb;

namespace {

Graph elementary() { return Graph(4, {{1, 2}, {2, 4}, {1, 3}, {3, 4}}); }

Graph k4() { return Graph(4, {{1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}}); }

// all simple paths by brute force over edge sequences
int count_paths(const Graph& g, int from, int to, int max_hops) {
  int total = 0;
  std::vector<char> seen(g.vertex_count(), 0);
  auto rec = [&](auto&& self, int v, int depth) -> void {
    if (v == to) { ++total; return; }
    if (depth == max_hops) return;
    for (int e = 0; e < g.edge_count(); ++e) {
      int w = -1;
      if (g.edge(e).a == v) w = g.edge(e).o;
      if (g.edge(e).o == v) w = g.edge(e).a;
      if (w < 0 || seen[w]) continue;
      seen[w] = 1;
      self(self, w, depth + 1);
      seen[w] = 0;
    }
  };
  seen[from] = 1;
  rec(rec, from, 0);
  return total;
}

PipelineResult fake_result(const HighResGraph& hr, Vector mu_g, Matrix cov_g) {
  PipelineResult r;
  r.posterior_g = {std::move(mu_g), std::move(cov_g), Level::Original};
  r.H = Matrix::Identity(hr.q_r(), hr.q_r());
  r.sigma_diag = Vector::Ones(hr.q_r());
  return r;
}

} // namespace

TEST(NormalQuantile, KnownValues) {
  EXPECT_EQ(normal_quantile(0.5), 0.0);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(0.8), 0.8416212335729143, 1e-12);
  EXPECT_NEAR(normal_quantile(0.001), -3.090232306167813, 1e-11);
  for (double p = 0.01; p < 1; p += 0.01)
    EXPECT_NEAR(0.5 * std::erfc(-normal_quantile(p) / std::sqrt(2.0)), p, 1e-13);
  EXPECT_THROW(normal_quantile(1.0), InputError);
}

TEST(Enumerate, Elementary) {
  auto paths = enumerate_paths(elementary(), {0, 3, {}, {}});
  ASSERT_EQ(paths.size(), 2u);
  EXPECT_EQ(paths[0], (Path{0, 1}));
  EXPECT_EQ(paths[1], (Path{2, 3}));
}

TEST(Enumerate, CompleteGraph) {
  auto paths = enumerate_paths(k4(), {0, 1, {}, 3});
  EXPECT_EQ(paths.size(), 5u);
  EXPECT_EQ(static_cast<int>(paths.size()), count_paths(k4(), 0, 1, 3));
  EXPECT_TRUE(std::is_sorted(paths.begin(), paths.end()));
}

TEST(Enumerate, Rejections) {
  EXPECT_THROW(enumerate_paths(elementary(), {2, 2, {}, {}}), InputError);
  EXPECT_THROW(enumerate_paths(elementary(), {0, 3, {{0, 3}}, {}}), InputError);
  EXPECT_THROW(enumerate_paths(elementary(), {0, 3, {}, 1}), InputError);
  EXPECT_EQ(enumerate_paths(elementary(), {0, 3, {{2, 3}}, {}}).size(), 1u);
}

TEST(Disutility, Basics) {
  auto hr = refine(elementary(), ResolutionSpec::uniform(4, 0));
  Vector mu(4);
  mu << 120, 120, 109, 109;
  auto res = fake_result(hr, mu, Matrix::Identity(4, 4) * 25.0);
  EXPECT_DOUBLE_EQ(disutility(DisutilitySpec::expected_time(), res, hr, {0, 1}), 240.0);
  EXPECT_DOUBLE_EQ(disutility(DisutilitySpec::posterior_quantile(0.5), res, hr, {0, 1}), 240.0);
  EXPECT_DOUBLE_EQ(disutility(DisutilitySpec::sum_sq(), res, hr, {0, 1}), 0.0);
  EXPECT_NEAR(disutility(DisutilitySpec::posterior_quantile(0.975), res, hr, {0, 1}),
              240.0 + 1.959963984540054 * std::sqrt(50.0), 1e-10);
  EXPECT_THROW(disutility(DisutilitySpec::posterior_quantile(1.0), res, hr, {0, 1}), InputError);
}

TEST(Disutility, ConsecutiveDifferences) {
  Graph g(3, {{1, 2}, {2, 3}}, {1.0, 2.0});
  auto hr = refine(g, {{0, 0}, 1.0});
  Vector mu(2);
  mu << 120, 180;
  auto res = fake_result(hr, mu, Matrix::Identity(2, 2));
  // per km: 120 and 90
  EXPECT_DOUBLE_EQ(disutility(DisutilitySpec::sum_sq(), res, hr, {0, 1}), 900.0);
  // km/h: 30 and 40
  EXPECT_NEAR(disutility(DisutilitySpec::sum_sq(Basis::Velocity), res, hr, {0, 1}), 100.0, 1e-12);
  Graph p4(4, {{1, 2}, {2, 3}, {3, 4}});
  auto h4 = refine(p4, ResolutionSpec::uniform(3, 0));
  Vector m4(3);
  m4 << 100, 130, 90;
  auto r4 = fake_result(h4, m4, Matrix::Identity(3, 3));
  double s = disutility(DisutilitySpec::sum_sq(), r4, h4, {0, 1, 2});
  EXPECT_DOUBLE_EQ(s, 900.0 + 1600.0);
  EXPECT_DOUBLE_EQ(disutility(DisutilitySpec::mean_sq(), r4, h4, {0, 1, 2}), s / 2);
}

TEST(Disutility, PosteriorQuantileIncreasing) {
  auto hr = refine(elementary(), ResolutionSpec::uniform(4, 0));
  auto res = fake_result(hr, Vector::Constant(4, 100), Matrix::Identity(4, 4) * 4);
  double prev = -1e300;
  for (double q : {0.1, 0.3, 0.5, 0.8, 0.975, 0.999}) {
    double v = disutility(DisutilitySpec::posterior_quantile(q), res, hr, {0, 1});
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(Disutility, EstimatorQuantileUsesSmoothedVariance) {
  auto hr = refine(elementary(), ResolutionSpec::uniform(4, 1));
  PipelineResult res = fake_result(hr, Vector::Constant(4, 100), Matrix::Zero(4, 4));
  res.sigma_diag = Vector::LinSpaced(8, 1, 8);
  res.H = Matrix::Identity(8, 8) * 0.5 + Matrix::Constant(8, 8, 0.5 / 8);
  Vector a = hr.projection().transpose() * path_indicator(hr, {0, 1});
  double v = a.dot(res.H * res.sigma_diag.asDiagonal() * res.H.transpose() * a);
  EXPECT_NEAR(estimator_variance(res, hr, {0, 1}), v, 1e-12);
  EXPECT_NEAR(disutility(DisutilitySpec::estimator_quantile(0.8), res, hr, {0, 1}),
              200 + 0.8416212335729143 * std::sqrt(v), 1e-10);
}

TEST(SelectRoute, TiesAndPermutations) {
  auto hr = refine(elementary(), ResolutionSpec::uniform(4, 0));
  Vector mu(4);
  mu << 120, 120, 109, 109;
  auto res = fake_result(hr, mu, Matrix::Identity(4, 4));
  std::vector<Path> dup{{0, 1}, {0, 1}};
  EXPECT_EQ(select_route(dup, DisutilitySpec::expected_time(), res, hr).best, 0);
  auto c = select_route(RouteQuery{0, 3, {}, {}}, DisutilitySpec::expected_time(), res, hr);
  EXPECT_EQ(c.best, 1);
  std::vector<Path> perm{{2, 3}, {0, 1}};
  auto c2 = select_route(perm, DisutilitySpec::expected_time(), res, hr);
  EXPECT_EQ(c2.values[c2.best], c.values[c.best]);
}

TEST(SelectRoute, ShiftInvariance) {
  auto hr = refine(elementary(), ResolutionSpec::uniform(4, 0));
  Vector mu(4);
  mu << 100, 140, 115, 118;
  auto a = fake_result(hr, mu, Matrix::Identity(4, 4));
  auto b = fake_result(hr, (mu.array() + 17.0).matrix(), Matrix::Identity(4, 4));
  auto paths = enumerate_paths(hr.parent(), {0, 3, {}, {}});
  auto ca = select_route(paths, DisutilitySpec::expected_time(), a, hr);
  auto cb = select_route(paths, DisutilitySpec::expected_time(), b, hr);
  EXPECT_EQ(ca.best, cb.best);
  for (std::size_t i = 0; i < paths.size(); ++i)
    EXPECT_NEAR(cb.values[i] - ca.values[i], 17.0 * paths[i].size(), 1e-12);
}

TEST(RouteExperiment, DeterministicData) {
  SimConfig c;
  c.graph = elementary();
  c.resolution = ResolutionSpec::uniform(4, 2);
  c.profiles = {VelocityProfile::constant(30), VelocityProfile::constant(30), VelocityProfile::constant(33),
                VelocityProfile::constant(33)};
  c.sigma_km = Vector::Zero(4);
  c.n.assign(4, 10);
  c.M = 12;
  auto rep = route_experiment(c, {0, 3, {}, {}}, DisutilitySpec::expected_time());
  EXPECT_EQ(rep.counts[1], 12);
  EXPECT_EQ(rep.top.front(), 1);
  EXPECT_DOUBLE_EQ(rep.edge_usage[2], 1.0);
  EXPECT_DOUBLE_EQ(rep.edge_usage[0], 0.0);
}

TEST(RouteExperiment, CountsAndUsage) {
  SimConfig c;
  c.graph = k4();
  c.resolution = ResolutionSpec::uniform(6, 1);
  c.profiles.assign(6, VelocityProfile::constant(30));
  c.sigma_km = Vector::Constant(6, 36);
  c.n.assign(6, 5);
  c.M = 30;
  c.distribution = Distribution::Gamma;
  auto rep = route_experiment(c, {0, 3, {}, 3}, DisutilitySpec::posterior_quantile(0.9));
  int total = 0;
  for (int v : rep.counts) total += v;
  EXPECT_EQ(total, 30);
  std::vector<double> usage(6, 0.0);
  for (std::size_t p = 0; p < rep.paths.size(); ++p)
    for (int e : rep.paths[p]) usage[e] += rep.counts[p] / 30.0;
  for (int e = 0; e < 6; ++e) EXPECT_NEAR(rep.edge_usage[e], usage[e], 1e-15);
  c.threads = 4;
  auto rep4 = route_experiment(c, {0, 3, {}, 3}, DisutilitySpec::posterior_quantile(0.9));
  EXPECT_EQ(rep.counts, rep4.counts);
  EXPECT_EQ(rep.mean_value, rep4.mean_value);
}
