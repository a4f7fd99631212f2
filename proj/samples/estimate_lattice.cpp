// Draws one data set on the 2x2 lattice (30 km/h, r=2, n=100, 36 s/km) and
// prints the smoothed per-edge travel-time posterior.
#include <cmath>
#include <cstdio>
#include <random>

#include <roadeb/roadeb.hpp>

using namespace roadeb;

int main() {
  Graph g(4, {{1, 2}, {2, 4}, {1, 3}, {3, 4}});
  HighResGraph hr = refine(g, ResolutionSpec::uniform(g.edge_count(), 2));
  std::vector<VelocityProfile> profiles(4, VelocityProfile::constant(30));
  GroundTruth truth = ground_truth(hr, profiles, Vector::Constant(4, 36.0));

  Vector n = Vector::Constant(hr.q_r(), 100.0);
  std::mt19937_64 rng(replication_seed(2024, 0));
  Observations obs = sample_observations(truth, n, Distribution::Normal, rng);
  PipelineResult res = estimate_pipeline(hr, obs);

  std::printf("lambda_hat %.6g  prior precision %.6g\n", res.lambda_hat, res.prior_precision);
  for (int i = 0; i < g.edge_count(); ++i)
    std::printf("edge %d  mean %.3f s  sd %.3f s  (truth %.3f s)\n", i + 1, res.posterior_g.mean(i),
                std::sqrt(res.posterior_g.covariance(i, i)), (hr.projection() * truth.mu_r)(i));
  return 0;
}
