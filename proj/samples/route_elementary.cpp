// Two-route network: how often each objective picks the faster but
// noisier Route 2 over 200 simulated data sets.
#include <cstdio>

#include <roadeb/roadeb.hpp>

using namespace roadeb;

int main() {
  SimConfig sim;
  sim.graph = Graph(4, {{1, 2}, {2, 4}, {1, 3}, {3, 4}});
  sim.resolution = ResolutionSpec::uniform(4, 2);
  sim.profiles = {VelocityProfile::constant(30), VelocityProfile::constant(30), VelocityProfile::constant(33),
                  VelocityProfile::constant(33)};
  Vector sd(4);
  sd << 36, 36, 72, 72;
  sim.sigma_km = sd;
  sim.n = {10, 10, 10, 10};
  sim.distribution = Distribution::Gamma;
  sim.M = 200;
  sim.seed = 99;

  std::vector<DisutilitySpec> specs{DisutilitySpec::expected_time(), DisutilitySpec::estimator_quantile(0.5),
                                    DisutilitySpec::estimator_quantile(0.975)};
  const char* names[] = {"expected time", "estimator quantile 0.5", "estimator quantile 0.975"};
  auto reports = route_experiment(sim, RouteQuery{0, 3, {}, {}}, specs);
  for (std::size_t s = 0; s < reports.size(); ++s)
    std::printf("%-26s Route 1 %.3f  Route 2 %.3f\n", names[s], reports[s].frequency(0), reports[s].frequency(1));
  return 0;
}
