#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bayes.hpp"
#include "netgraph.hpp"
#include "router.hpp"
#include "simkit.hpp"

namespace roadeb::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// 17 significant digits, round-trip safe
inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw InputError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InputError("cannot write " + p.string());
  out << bytes;
}

inline json parse_json(const std::string& bytes, const std::string& name) {
  try {
    return json::parse(bytes);
  } catch (const json::exception& e) {
    throw InputError(name + ": " + e.what());
  }
}

template <class T>
T get(const json& j, const char* key, const std::string& ctx) {
  if (!j.contains(key)) throw InputError(ctx + ": missing \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(ctx + ": bad value for \"" + key + "\"");
  }
}

inline Graph graph_from_json(const json& j, const std::string& ctx) {
  int p = get<int>(j, "vertices", ctx);
  if (!j.contains("edges") || !j["edges"].is_array()) throw InputError(ctx + ": missing \"edges\" array");
  std::vector<std::pair<int, int>> edges;
  std::vector<double> len;
  int k = 0;
  for (auto& e : j["edges"]) {
    std::string ectx = ctx + " edge " + std::to_string(++k);
    edges.push_back({get<int>(e, "u", ectx), get<int>(e, "v", ectx)});
    len.push_back(e.contains("length_km") ? get<double>(e, "length_km", ectx) : 1.0);
  }
  try {
    return Graph(p, edges, len);
  } catch (const InputError& e) {
    throw InputError(ctx + ": " + e.what());
  }
}

inline json graph_to_json(const Graph& g) {
  json j;
  j["vertices"] = g.vertex_count();
  j["edges"] = json::array();
  for (int k = 0; k < g.edge_count(); ++k)
    j["edges"].push_back({{"u", g.edge(k).a + 1}, {"v", g.edge(k).o + 1}, {"length_km", g.length(k)}});
  return j;
}

// integer or per-edge array
inline std::vector<int> int_per_edge(const json& j, int q, const std::string& ctx) {
  if (j.is_number_integer()) return std::vector<int>(q, j.get<int>());
  if (j.is_array() && static_cast<int>(j.size()) == q) {
    std::vector<int> v;
    for (auto& x : j) {
      if (!x.is_number_integer()) throw InputError(ctx + ": expected integers");
      v.push_back(x.get<int>());
    }
    return v;
  }
  throw InputError(ctx + ": expected an integer or an array of " + std::to_string(q) + " integers");
}

inline Vector real_per_edge(const json& j, int q, const std::string& ctx) {
  if (j.is_number()) return Vector::Constant(q, j.get<double>());
  if (j.is_array() && static_cast<int>(j.size()) == q) {
    Vector v(q);
    for (int i = 0; i < q; ++i) {
      if (!j[i].is_number()) throw InputError(ctx + ": expected numbers");
      v(i) = j[i].get<double>();
    }
    return v;
  }
  throw InputError(ctx + ": expected a number or an array of " + std::to_string(q) + " numbers");
}

inline ResolutionSpec resolution_from_text(const std::string& text, int q) {
  json j = parse_json(text, "--resolution");
  return {int_per_edge(j, q, "--resolution")};
}

inline VelocityProfile profile_from_json(const json& j, const std::string& ctx) {
  std::string kind = get<std::string>(j, "kind", ctx);
  VelocityProfile p;
  if (kind == "constant") {
    p = VelocityProfile::constant(get<double>(j, "v", ctx));
  } else if (kind == "trapezoid") {
    p = VelocityProfile::trapezoid(j.value("v_low", 20.0), j.value("v_high", 40.0), j.value("ramp", 0.25));
  } else if (kind == "piecewise") {
    p = VelocityProfile::piecewise(get<std::vector<double>>(j, "breakpoints", ctx),
                                   get<std::vector<double>>(j, "values", ctx));
  } else {
    throw InputError(ctx + ": unknown profile kind \"" + kind + "\"");
  }
  try {
    p.validate();
  } catch (const InputError& e) {
    throw InputError(ctx + ": " + e.what());
  }
  return p;
}

inline json profile_to_json(const VelocityProfile& p) {
  switch (p.kind) {
  case VelocityProfile::Kind::Constant:
    return {{"kind", "constant"}, {"v", p.v}};
  case VelocityProfile::Kind::Trapezoid:
    return {{"kind", "trapezoid"}, {"v_low", p.v_low}, {"v_high", p.v_high}, {"ramp", p.ramp}};
  case VelocityProfile::Kind::Piecewise:
    return {{"kind", "piecewise"}, {"breakpoints", p.breakpoints}, {"values", p.values}};
  }
  return {};
}

// A config may name its graph by a path relative to the config file.
struct LoadedConfig {
  json resolved;
  std::map<std::string, std::string> inputs; // path -> bytes
};

inline Graph load_graph_ref(const json& ref, const fs::path& base, LoadedConfig& lc) {
  if (ref.is_string()) {
    fs::path p = base / ref.get<std::string>();
    std::string bytes = read_file(p);
    lc.inputs[p.lexically_normal().generic_string()] = bytes;
    return graph_from_json(parse_json(bytes, p.string()), p.string());
  }
  if (ref.is_object()) return graph_from_json(ref, "config graph");
  throw InputError("config: \"graph\" must be a path or an object");
}

inline std::vector<double> grid_from_json(const json& j, const std::string& ctx) {
  return log_grid(get<double>(j, "min", ctx), get<double>(j, "max", ctx), get<int>(j, "count", ctx));
}

inline SimConfig sim_from_json(const json& j, const fs::path& base, LoadedConfig& lc) {
  const std::string ctx = "config";
  SimConfig c;
  if (!j.contains("graph")) throw InputError("config: missing \"graph\"");
  c.graph = load_graph_ref(j["graph"], base, lc);
  const int q = c.graph.edge_count();
  c.resolution.r = j.contains("resolution") ? int_per_edge(j["resolution"], q, "config resolution")
                                            : std::vector<int>(q, 0);
  c.resolution.rho = j.value("rho", 0.25);
  if (!j.contains("profiles")) throw InputError("config: missing \"profiles\"");
  if (j["profiles"].is_array()) {
    if (static_cast<int>(j["profiles"].size()) != q)
      throw InputError("config: need one profile per edge");
    int k = 0;
    for (auto& p : j["profiles"]) c.profiles.push_back(profile_from_json(p, "config profile " + std::to_string(++k)));
  } else {
    c.profiles.assign(q, profile_from_json(j["profiles"], "config profiles"));
  }
  c.sigma_km = real_per_edge(get<json>(j, "sigma_km", ctx), q, "config sigma_km");
  c.n = int_per_edge(get<json>(j, "n", ctx), q, "config n");
  std::string dist = j.value("distribution", std::string("normal"));
  if (dist == "normal") c.distribution = Distribution::Normal;
  else if (dist == "gamma") c.distribution = Distribution::Gamma;
  else throw InputError("config: unknown distribution \"" + dist + "\"");
  c.M = j.value("M", 1);
  c.seed = j.value("seed", std::uint64_t{1});
  c.pipeline.no_smoothing = j.value("no_smoothing", false);
  if (j.contains("lambda_grid")) c.pipeline.grid = grid_from_json(j["lambda_grid"], "config lambda_grid");
  return c;
}

inline json sim_to_json(const SimConfig& c) {
  json j;
  j["graph"] = graph_to_json(c.graph);
  j["resolution"] = c.resolution.r;
  j["rho"] = c.resolution.rho;
  j["profiles"] = json::array();
  for (auto& p : c.profiles) j["profiles"].push_back(profile_to_json(p));
  j["sigma_km"] = std::vector<double>(c.sigma_km.data(), c.sigma_km.data() + c.sigma_km.size());
  j["n"] = c.n;
  j["distribution"] = c.distribution == Distribution::Gamma ? "gamma" : "normal";
  j["M"] = c.M;
  j["seed"] = c.seed;
  j["no_smoothing"] = c.pipeline.no_smoothing;
  if (!c.pipeline.grid.empty()) j["lambda_grid"] = c.pipeline.grid;
  return j;
}

inline DisutilitySpec::Kind objective_from_name(const std::string& s) {
  using K = DisutilitySpec::Kind;
  if (s == "expected_time") return K::ExpectedTime;
  if (s == "posterior_quantile") return K::PosteriorQuantile;
  if (s == "estimator_quantile") return K::EstimatorQuantile;
  if (s == "sum_sq_diff") return K::SumSqConsecutiveDiff;
  if (s == "mean_sq_diff") return K::MeanSqConsecutiveDiff;
  throw InputError("unknown objective \"" + s + "\"");
}

inline std::string objective_name(DisutilitySpec::Kind k) {
  using K = DisutilitySpec::Kind;
  switch (k) {
  case K::ExpectedTime: return "expected_time";
  case K::PosteriorQuantile: return "posterior_quantile";
  case K::EstimatorQuantile: return "estimator_quantile";
  case K::SumSqConsecutiveDiff: return "sum_sq_diff";
  case K::MeanSqConsecutiveDiff: return "mean_sq_diff";
  }
  return "";
}

inline Basis basis_from_name(const std::string& s) {
  if (s == "time_per_km") return Basis::TimePerKm;
  if (s == "velocity") return Basis::Velocity;
  throw InputError("unknown basis \"" + s + "\"");
}

inline std::string basis_name(Basis b) { return b == Basis::Velocity ? "velocity" : "time_per_km"; }

inline DisutilitySpec spec_from_json(const json& j) {
  DisutilitySpec s;
  s.kind = objective_from_name(j.value("objective", std::string("expected_time")));
  s.q = j.value("quantile", 0.975);
  s.basis = basis_from_name(j.value("basis", std::string("time_per_km")));
  s.validate();
  return s;
}

inline json spec_to_json(const DisutilitySpec& s) {
  json j{{"objective", objective_name(s.kind)}};
  if (s.kind == DisutilitySpec::Kind::PosteriorQuantile || s.kind == DisutilitySpec::Kind::EstimatorQuantile)
    j["quantile"] = s.q;
  if (s.kind == DisutilitySpec::Kind::SumSqConsecutiveDiff || s.kind == DisutilitySpec::Kind::MeanSqConsecutiveDiff)
    j["basis"] = basis_name(s.basis);
  return j;
}

inline RouteQuery query_from_json(const json& j, const Graph& g) {
  const std::string ctx = "config";
  RouteQuery q;
  q.origin = get<int>(j, "origin", ctx) - 1;
  q.destination = get<int>(j, "destination", ctx) - 1;
  if (j.contains("candidate_paths")) {
    for (auto& p : j["candidate_paths"]) {
      Path path;
      for (auto& e : p) path.push_back(e.get<int>() - 1);
      q.candidate_paths.push_back(path);
    }
  }
  if (j.contains("max_hops")) q.max_hops = j["max_hops"].get<int>();
  (void)g;
  return q;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) {
    auto b = cur.find_first_not_of(" \t\r");
    auto e = cur.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
  }
  return out;
}

inline double to_num(const std::string& s, const std::string& ctx) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(ctx + ": not a number \"" + s + "\"");
  }
}

// Columns edge_id, subedge_index, n, mean_seconds; or raw samples with
// edge_id, subedge_index, sample_seconds aggregated to means.
inline Observations observations_from_csv(const std::string& bytes, const HighResGraph& hr,
                                          const std::string& name) {
  std::istringstream in(bytes);
  std::string line;
  if (!std::getline(in, line)) throw InputError(name + ": empty file");
  auto header = split_csv_line(line);
  bool raw;
  if (header == std::vector<std::string>{"edge_id", "subedge_index", "n", "mean_seconds"}) raw = false;
  else if (header == std::vector<std::string>{"edge_id", "subedge_index", "sample_seconds"}) raw = true;
  else throw InputError(name + ": unrecognised header \"" + line + "\"");

  const int qr = hr.q_r();
  Vector sum = Vector::Zero(qr), cnt = Vector::Zero(qr);
  std::vector<char> have(qr, 0);
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string ctx = name + " record " + std::to_string(row);
    auto f = split_csv_line(line);
    if (f.size() != header.size()) throw InputError(ctx + ": wrong field count");
    double e = to_num(f[0], ctx), s = to_num(f[1], ctx);
    int k;
    try {
      k = hr.edge_index(static_cast<int>(e), static_cast<int>(s)) - 1;
    } catch (const InputError& err) {
      throw InputError(ctx + ": " + err.what());
    }
    if (raw) {
      sum(k) += to_num(f[2], ctx);
      cnt(k) += 1;
    } else {
      if (have[k]) throw InputError(ctx + ": duplicate sub-edge");
      double n = to_num(f[2], ctx);
      if (n < 1 || n != std::floor(n)) throw InputError(ctx + ": n must be a positive integer");
      cnt(k) = n;
      sum(k) = n * to_num(f[3], ctx);
    }
    have[k] = 1;
  }
  for (int k = 0; k < qr; ++k)
    if (!have[k]) {
      auto [e, s] = hr.edge_index_inverse(k + 1);
      throw InputError(name + ": missing sub-edge (edge " + std::to_string(e) + ", position " +
                       std::to_string(s) + ")");
    }
  return {sum.cwiseQuotient(cnt), cnt};
}

inline std::string observations_to_csv(const Observations& obs, const HighResGraph& hr) {
  std::string s = "edge_id,subedge_index,n,mean_seconds\n";
  for (int k = 0; k < hr.q_r(); ++k) {
    auto [e, p] = hr.edge_index_inverse(k + 1);
    s += std::to_string(e) + "," + std::to_string(p) + "," + fmt(obs.n(k)) + "," + fmt(obs.mean(k)) + "\n";
  }
  return s;
}

} // namespace roadeb::io
