// roadeb command-line front end.
//
// Exit codes: 0 success, 2 input or validation error, 3 numerical failure
// (including a violated spectral bound in validate-spectral).

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <roadeb/io.hpp>
#include <roadeb/roadeb.hpp>

namespace {

using namespace roadeb;
using namespace roadeb::io;

constexpr const char* kVersion = "1.0.0";

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::string out;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    out += buf;
  }
  return out;
}

struct Common {
  std::uint64_t seed = 1;
  bool seed_set = false;
  int threads = 1;
  std::string out_dir = "out";
};

// Collects outputs and writes them plus the manifest. Threads and out-dir are
// deliberately left out of the manifest so it does not depend on them.
class Run {
public:
  Run(std::string sub, const Common& c) : sub_(std::move(sub)), dir_(c.out_dir) {}

  void input(const std::string& path, const std::string& bytes) { inputs_[path] = sha256_hex(bytes); }
  void inputs(const LoadedConfig& lc) {
    for (auto& [p, b] : lc.inputs) inputs_[p] = sha256_hex(b);
  }
  void output(const std::string& name, const std::string& bytes) { outputs_.emplace_back(name, bytes); }

  void finish(const json& config, std::uint64_t seed) {
    fs::create_directories(dir_);
    json files = json::array();
    for (auto& [name, bytes] : outputs_) {
      write_file(dir_ / name, bytes);
      files.push_back({{"file", name}, {"sha256", sha256_hex(bytes)}});
    }
    json digests = json::object();
    for (auto& [p, d] : inputs_) digests[p] = d;
    json m{{"tool", "roadeb"}, {"version", kVersion}, {"subcommand", sub_}, {"config", config},
           {"seed", seed}, {"inputs", digests}, {"outputs", files}};
    write_file(dir_ / "manifest.json", m.dump(2) + "\n");
  }

private:
  std::string sub_;
  fs::path dir_;
  std::map<std::string, std::string> inputs_;
  std::vector<std::pair<std::string, std::string>> outputs_;
};

std::vector<double> parse_grid_flag(const std::string& s) {
  auto parts = split_csv_line(s);
  if (parts.size() != 3) throw InputError("--lambda-grid: expected min,max,count");
  double lo = to_num(parts[0], "--lambda-grid"), hi = to_num(parts[1], "--lambda-grid");
  double cnt = to_num(parts[2], "--lambda-grid");
  if (cnt != std::floor(cnt)) throw InputError("--lambda-grid: count must be an integer");
  return log_grid(lo, hi, static_cast<int>(cnt));
}

json grid_json(const std::vector<double>& g) {
  json j = json::array();
  for (double v : g) j.push_back(v);
  return j;
}

std::string gcv_csv(const std::vector<std::pair<double, double>>& curve) {
  std::string s = "lambda,gcv\n";
  for (auto& [l, v] : curve) s += fmt(l) + "," + fmt(v) + "\n";
  return s;
}

struct EstimateArgs {
  std::string graph, observations, resolution = "0", grid;
  bool no_smoothing = false;
};

int cmd_estimate(const EstimateArgs& a, const Common& c) {
  Run run("estimate", c);
  std::string gbytes = read_file(a.graph);
  run.input(a.graph, gbytes);
  Graph g = graph_from_json(parse_json(gbytes, a.graph), a.graph);
  HighResGraph hr = refine(g, resolution_from_text(a.resolution, g.edge_count()));
  std::string obytes = read_file(a.observations);
  run.input(a.observations, obytes);
  Observations obs = observations_from_csv(obytes, hr, a.observations);

  PipelineOptions opt;
  opt.no_smoothing = a.no_smoothing;
  opt.threads = c.threads;
  if (!a.grid.empty()) opt.grid = parse_grid_flag(a.grid);
  PipelineResult res = estimate_pipeline(hr, obs, opt);

  std::string edges = "edge_id,mean_seconds,sd_seconds\n";
  for (int i = 0; i < g.edge_count(); ++i)
    edges += std::to_string(i + 1) + "," + fmt(res.posterior_g.mean(i)) + "," +
             fmt(std::sqrt(std::max(0.0, res.posterior_g.covariance(i, i)))) + "\n";
  std::string subs = "edge_id,subedge_index,mean_seconds,sd_seconds\n";
  for (int k = 0; k < hr.q_r(); ++k) {
    auto [e, j] = hr.edge_index_inverse(k + 1);
    subs += std::to_string(e) + "," + std::to_string(j) + "," + fmt(res.posterior_hr.mean(k)) + "," +
            fmt(std::sqrt(std::max(0.0, res.posterior_hr.covariance(k, k)))) + "\n";
  }
  json sigma = json::array();
  for (int i = 0; i < res.sigma2_hat.size(); ++i) sigma.push_back(res.sigma2_hat(i));
  json summary{{"lambda_hat", res.lambda_hat},
               {"prior_precision", std::isfinite(res.prior_precision) ? json(res.prior_precision) : json(nullptr)},
               {"theta_bar", res.theta_bar},
               {"sigma2_hat", sigma},
               {"q", hr.q()},
               {"q_r", hr.q_r()}};
  run.output("posterior_edges.csv", edges);
  run.output("posterior_subedges.csv", subs);
  run.output("gcv_curve.csv", gcv_csv(res.gcv_curve));
  run.output("summary.json", summary.dump(2) + "\n");

  json cfg{{"graph", a.graph}, {"observations", a.observations}, {"resolution", hr.resolution().r},
           {"no_smoothing", a.no_smoothing}};
  if (!opt.grid.empty()) cfg["lambda_grid"] = grid_json(opt.grid);
  run.finish(cfg, c.seed);
  return 0;
}

struct SimArgs {
  std::string config, resolution, grid;
  bool no_smoothing = false;
};

// flags override config values
SimConfig load_sim(const std::string& path, const Common& c, const std::string& resolution,
                   const std::string& grid, bool no_smoothing, Run& run, json& raw) {
  std::string bytes = read_file(path);
  run.input(path, bytes);
  raw = parse_json(bytes, path);
  LoadedConfig lc;
  SimConfig sim = sim_from_json(raw, fs::path(path).parent_path(), lc);
  run.inputs(lc);
  if (c.seed_set) sim.seed = c.seed;
  sim.threads = c.threads;
  sim.pipeline.threads = 1;
  if (!resolution.empty()) {
    double rho = sim.resolution.rho;
    sim.resolution = resolution_from_text(resolution, sim.graph.edge_count());
    sim.resolution.rho = rho;
  }
  if (!grid.empty()) sim.pipeline.grid = parse_grid_flag(grid);
  if (no_smoothing) sim.pipeline.no_smoothing = true;
  return sim;
}

int cmd_simulate(const SimArgs& a, const Common& c) {
  Run run("simulate", c);
  json raw;
  SimConfig sim = load_sim(a.config, c, a.resolution, a.grid, a.no_smoothing, run, raw);
  ErrorReport rep = run_monte_carlo(sim);
  HighResGraph hr = refine(sim.graph, sim.resolution);

  std::string subs = "edge_id,subedge_index,mean_rse,sd_rse\n";
  for (int k = 0; k < hr.q_r(); ++k) {
    auto [e, j] = hr.edge_index_inverse(k + 1);
    subs += std::to_string(e) + "," + std::to_string(j) + "," + fmt(rep.mean_rse(k)) + "," + fmt(rep.sd_rse(k)) + "\n";
  }
  std::string edges = "edge_id,mean_rse\n";
  for (int i = 0; i < hr.q(); ++i) edges += std::to_string(i + 1) + "," + fmt(rep.edge_mean_rse(i)) + "\n";
  json summary{{"M", rep.M},
               {"global_mean_rse", rep.global_mean_rse},
               {"max_mean_rse", rep.max_mean_rse},
               {"global_sq_error", rep.global_sq_error},
               {"edge_global_sq_error", rep.edge_global_sq_error}};
  run.output("rse_subedges.csv", subs);
  run.output("rse_edges.csv", edges);
  run.output("summary.json", summary.dump(2) + "\n");
  run.finish(sim_to_json(sim), sim.seed);
  return 0;
}

struct RouteArgs {
  SimArgs sim;
  std::string objective, basis;
  double quantile = -1;
  int max_hops = 0, reps = 0;
};

int cmd_route(const RouteArgs& a, const Common& c) {
  Run run("route", c);
  json raw;
  SimConfig sim = load_sim(a.sim.config, c, a.sim.resolution, a.sim.grid, a.sim.no_smoothing, run, raw);
  if (a.reps > 0) sim.M = a.reps;
  if (!raw.contains("query")) throw InputError(a.sim.config + ": missing \"query\"");
  RouteQuery query = query_from_json(raw["query"], sim.graph);
  if (a.max_hops > 0) query.max_hops = a.max_hops;

  // the config may list several objectives; a command-line objective replaces them
  std::vector<json> spec_src;
  if (raw.contains("objectives")) {
    for (auto& s : raw["objectives"]) spec_src.push_back(s);
  } else {
    spec_src.push_back(raw.value("objective", json::object()));
  }
  if (!a.objective.empty()) spec_src = {json{{"objective", a.objective}}};
  std::vector<DisutilitySpec> specs;
  for (auto& s : spec_src) {
    if (!s.is_object()) s = json{{"objective", s}};
    if (a.quantile >= 0) s["quantile"] = a.quantile;
    if (!a.basis.empty()) s["basis"] = a.basis;
    specs.push_back(spec_from_json(s));
  }

  auto reports = route_experiment(sim, query, specs);
  const auto& paths = reports.front().paths;
  json jp = json::array();
  for (auto& p : paths) {
    json e = json::array();
    for (int x : p) e.push_back(x + 1);
    jp.push_back(e);
  }
  json jr = json::array();
  std::string heat = "edge_id,u,v";
  for (std::size_t s = 0; s < reports.size(); ++s) heat += ",usage_" + std::to_string(s + 1);
  heat += "\n";
  for (auto& r : reports) {
    json freq = json::array(), top = json::array();
    for (std::size_t p = 0; p < paths.size(); ++p) freq.push_back(r.frequency(static_cast<int>(p)));
    for (int t : r.top) top.push_back(t + 1);
    jr.push_back({{"spec", spec_to_json(r.spec)},
                  {"counts", r.counts},
                  {"frequency", freq},
                  {"mean_value", r.mean_value},
                  {"top_paths", top}});
  }
  for (int e = 0; e < sim.graph.edge_count(); ++e) {
    heat += std::to_string(e + 1) + "," + std::to_string(sim.graph.edge(e).a + 1) + "," +
            std::to_string(sim.graph.edge(e).o + 1);
    for (auto& r : reports) heat += "," + fmt(r.edge_usage[e]);
    heat += "\n";
  }
  json out{{"M", sim.M},
           {"origin", query.origin + 1},
           {"destination", query.destination + 1},
           {"paths", jp},
           {"results", jr}};
  run.output("route.json", out.dump(2) + "\n");
  run.output("heat.csv", heat);

  json cfg = sim_to_json(sim);
  cfg["query"] = raw["query"];
  if (a.max_hops > 0) cfg["query"]["max_hops"] = a.max_hops;
  cfg["objectives"] = json::array();
  for (auto& s : specs) cfg["objectives"].push_back(spec_to_json(s));
  run.finish(cfg, sim.seed);
  return 0;
}

struct SpectralArgs {
  std::string graph, resolution = "1";
  int series_r = 0;
  double series_lambda = 0, series_n = 1, series_sigma = 1;
};

int cmd_validate_spectral(const SpectralArgs& a, const Common& c) {
  Run run("validate-spectral", c);
  std::string gbytes = read_file(a.graph);
  run.input(a.graph, gbytes);
  Graph g = graph_from_json(parse_json(gbytes, a.graph), a.graph);
  ResolutionSpec res = resolution_from_text(a.resolution, g.edge_count());
  for (int r : res.r)
    if (r == 0) throw InputError("approximation undefined at zero resolution");
  HighResGraph hr = refine(g, res);
  SpectralReport rep = spectral_report(hr);
  bool ok = rep.delta.rank_ok && rep.delta.norm_ok && rep.delta.weyl_ok;
  json series = json::array();
  if (a.series_r > 0) {
    for (auto [s, t] : std::vector<std::pair<int, int>>{{1, 0}, {2, 0}, {1, 1}, {2, 2}}) {
      SeriesCheck sc = series_check(a.series_r, a.series_lambda, a.series_n, a.series_sigma, s, t);
      bool pass = sc.relative_error <= 0.10;
      ok = ok && pass;
      series.push_back({{"s", s}, {"t", t}, {"r", sc.r}, {"lambda", sc.lambda}, {"direct", sc.direct},
                        {"target", sc.target}, {"relative_error", sc.relative_error}, {"pass", pass}});
    }
  }
  const auto& d = rep.delta;
  json out{{"q", hr.q()},
           {"q_r", hr.q_r()},
           {"exact_eigs", rep.exact_eigs},
           {"approx_eigs", rep.approx_eigs},
           {"delta",
            {{"rank", d.rank}, {"rank_bound", d.rank_bound}, {"rank_ok", d.rank_ok},
             {"norm", d.norm}, {"norm_bound", d.norm_bound}, {"norm_ok", d.norm_ok},
             {"weyl_gap", d.weyl_gap}, {"weyl_ok", d.weyl_ok}}},
           {"series_checks", series},
           {"pass", ok}};
  run.output("spectral.json", out.dump(2) + "\n");
  json cfg{{"graph", a.graph}, {"resolution", hr.resolution().r}};
  if (a.series_r > 0)
    cfg["series"] = {{"r", a.series_r}, {"lambda", a.series_lambda}, {"n", a.series_n}, {"sigma", a.series_sigma}};
  run.finish(cfg, c.seed);
  if (!ok) {
    std::cerr << "roadeb: spectral check failed (see " << (fs::path(c.out_dir) / "spectral.json").string() << ")\n";
    return 3;
  }
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "master seed (u64)")->each([&](const std::string&) { c.seed_set = true; });
  sub->add_option("--threads", c.threads, "worker cap")->check(CLI::PositiveNumber);
  sub->add_option("--out-dir", c.out_dir, "output directory");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Travel-time estimation and route selection on road networks"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Common common;
  EstimateArgs est;
  SimArgs simargs;
  RouteArgs route;
  SpectralArgs spec;

  auto* e = app.add_subcommand("estimate", "posterior travel times from observations");
  e->add_option("graph", est.graph, "graph JSON")->required();
  e->add_option("observations", est.observations, "observations CSV")->required();
  e->add_option("--resolution", est.resolution, "integer or per-edge JSON array");
  e->add_option("--lambda-grid", est.grid, "min,max,count");
  e->add_flag("--no-smoothing", est.no_smoothing);
  add_common(e, common);

  auto* s = app.add_subcommand("simulate", "Monte Carlo estimation error");
  s->add_option("config", simargs.config, "simulation config JSON")->required();
  s->add_option("--resolution", simargs.resolution, "integer or per-edge JSON array");
  s->add_option("--lambda-grid", simargs.grid, "min,max,count");
  s->add_flag("--no-smoothing", simargs.no_smoothing);
  add_common(s, common);

  auto* r = app.add_subcommand("route", "Monte Carlo route selection");
  r->add_option("config", route.sim.config, "route config JSON")->required();
  r->add_option("--objective", route.objective,
                "expected_time|posterior_quantile|estimator_quantile|sum_sq_diff|mean_sq_diff");
  r->add_option("--quantile", route.quantile);
  r->add_option("--basis", route.basis, "time_per_km|velocity");
  r->add_option("--max-hops", route.max_hops)->check(CLI::PositiveNumber);
  r->add_option("--reps", route.reps, "replications, overrides M")->check(CLI::PositiveNumber);
  r->add_option("--resolution", route.sim.resolution, "integer or per-edge JSON array");
  r->add_option("--lambda-grid", route.sim.grid, "min,max,count");
  r->add_flag("--no-smoothing", route.sim.no_smoothing);
  add_common(r, common);

  auto* v = app.add_subcommand("validate-spectral", "line-graph approximation diagnostics");
  v->add_option("graph", spec.graph, "graph JSON")->required();
  v->add_option("--resolution", spec.resolution, "integer or per-edge JSON array");
  v->add_option("--series-r", spec.series_r, "single-edge resolution for the series check");
  v->add_option("--series-lambda", spec.series_lambda, "smoothing parameter for the series check");
  v->add_option("--series-n", spec.series_n);
  v->add_option("--series-sigma", spec.series_sigma);
  add_common(v, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  try {
    if (*e) return cmd_estimate(est, common);
    if (*s) return cmd_simulate(simargs, common);
    if (*r) return cmd_route(route, common);
    if (*v) return cmd_validate_spectral(spec, common);
  } catch (const InputError& ex) {
    std::cerr << "roadeb: " << ex.what() << "\n";
    return 2;
  } catch (const NumericalError& ex) {
    std::cerr << "roadeb: " << ex.what() << "\n";
    return 3;
  } catch (const ReplicationFailure& ex) {
    std::cerr << "roadeb: " << ex.what() << "\n";
    return ex.numerical ? 3 : 2;
  } catch (const fs::filesystem_error& ex) {
    std::cerr << "roadeb: " << ex.what() << "\n";
    return 2;
  }
  return 2;
}
