#include "capkit/runner.hpp"

#include "capkit/equilibrium.hpp"
#include "capkit/error.hpp"
#include "capkit/fractional.hpp"
#include "capkit/geom.hpp"
#include "capkit/hadamard.hpp"
#include "capkit/selftest.hpp"
#include "capkit/serialize.hpp"
#include "capkit/shapeopt.hpp"
#include "capkit/shapes.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

namespace capkit::run {
namespace {

using nlohmann::json;

const std::vector<std::pair<Kind, std::string>> kKinds = {
    {Kind::Capacity, "capacity"},   {Kind::Hadamard, "hadamard"},   {Kind::Flow, "flow"},
    {Kind::BrunnMinkowski, "brunn_minkowski"}, {Kind::Constants, "constants"}, {Kind::Selftest, "selftest"}};

json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& x : node) a.push_back(yaml_to_json(x));
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : node) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return o;
    }
    case YAML::NodeType::Scalar:
      break;
  }
  const std::string s = node.Scalar();
  if (node.Tag() == "!") return s;  // quoted
  if (s == "true" || s == "True") return true;
  if (s == "false" || s == "False") return false;
  if (s == "null" || s == "~") return nullptr;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  return s;
}

std::string suggestion(const std::string& key, const json& allowed) {
  std::string best;
  int bd = 1 << 30;
  for (auto it = allowed.begin(); it != allowed.end(); ++it) {
    const int d = edit_distance(key, it.key());
    if (d < bd) {
      bd = d;
      best = it.key();
    }
  }
  if (bd <= std::max<int>(2, key.size() / 3)) return " (did you mean \"" + best + "\"?)";
  return "";
}

json merge_checked(const json& defaults, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected a mapping");
  json out = defaults;
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!defaults.contains(it.key()))
      throw ConfigError("unknown key \"" + key + "\"" + suggestion(it.key(), defaults));
    const json& d = defaults[it.key()];
    if (d.is_object())
      out[it.key()] = merge_checked(d, it.value(), key);
    else
      out[it.key()] = it.value();
  }
  return out;
}

const json& at_path(const json& j, const std::string& path) {
  const json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    cur = &cur->at(path.substr(start, dot - start));
    if (dot == std::string::npos) return *cur;
    start = dot + 1;
  }
}

double num(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (!v.is_number()) throw ConfigError(key + ": expected a number, got " + v.dump());
  return v.get<double>();
}

int integer(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (!v.is_number_integer()) throw ConfigError(key + ": expected an integer, got " + v.dump());
  return v.get<int>();
}

std::string str(const json& cfg, const std::string& key) {
  const json& v = at_path(cfg, key);
  if (!v.is_string()) throw ConfigError(key + ": expected a string, got " + v.dump());
  return v.get<std::string>();
}

void range(const std::string& key, double v, bool ok, const std::string& what) {
  if (!ok) {
    std::ostringstream os;
    os << key << ": " << v << " is out of range; " << what;
    throw ConfigError(os.str());
  }
}

geom::SupportVector resolve_shape(const json& spec, const geom::GridPtr& grid, const std::string& key) {
  try {
    return geom::catalog_support(geom::parse_shape(spec), grid);
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (std::size_t i; (i = next++) < count;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::clamp<int>(jobs, 1, std::max<int>(1, static_cast<int>(count)));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

eq::DiscretizationOptions disc_opts(const json& c) {
  eq::DiscretizationOptions d;
  d.target_cells = integer(c, "discretization.cells");
  d.grading = num(c, "discretization.grading");
  return d;
}

eq::SolverOptions solver_opts(const json& c) {
  eq::SolverOptions s;
  s.max_iter = at_path(c, "solver.max_iter").get<long>();
  s.gap_tol = num(c, "solver.gap_tol");
  s.flatness_tol = num(c, "solver.flatness_tol");
  return s;
}

frac::TraceFit trace_opts(const json& c) {
  frac::TraceFit f;
  f.t_min = num(c, "trace.t_min");
  f.t_max = num(c, "trace.t_max");
  f.k = integer(c, "trace.k");
  f.max_residual = num(c, "trace.max_residual");
  return f;
}

std::vector<json> shape_list(const json& c) {
  const json& shapes = c.at("shapes");
  if (!shapes.is_array()) throw ConfigError("shapes: expected a list");
  if (!shapes.empty()) return shapes.get<std::vector<json>>();
  return {c.at("shape")};
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Context {
  const ExperimentPlan& plan;
  const RunOptions& opts;
  geom::GridPtr grid;
  io::SolutionCache cache;
  Report& rep;
  json result = json::object();
  std::string stage = "setup";

  void gate_le(const std::string& name, double value, double limit) {
    rep.gates.push_back({name, value, limit, value <= limit});
  }
  void gate_ge(const std::string& name, double value, double limit) {
    rep.gates.push_back({name, value, limit, value >= limit});
  }
  void gate_true(const std::string& name, bool ok) { rep.gates.push_back({name, ok ? 1.0 : 0.0, 1.0, ok}); }
  double g(const std::string& key) const { return num(plan.config, "gates." + key); }
};

// ---------------------------------------------------------------- pipelines

void run_capacity(Context& cx) {
  const json& c = cx.plan.config;
  const auto shapes = shape_list(c);
  const eq::DiscretizationOptions d = disc_opts(c);
  const eq::SolverOptions so = solver_opts(c);
  const frac::TraceFit fit = trace_opts(c);
  const int n_in = integer(c, "probes.interior");
  const int n_out = integer(c, "probes.exterior");
  const int pres = integer(c, "probes.resolution");
  const double alpha = cx.plan.alpha;

  struct Out {
    json row;
    std::string trace_csv;
    double flat = 0, band = 0, harm = 0;
    bool converged = false;
  };
  std::vector<Out> outs(shapes.size());
  cx.stage = "capacity";
  parallel_for(shapes.size(), cx.opts.jobs, [&](std::size_t k) {
    const geom::SupportVector h = resolve_shape(shapes[k], cx.grid, "shape");
    const geom::Body body = geom::wulff_body(h);
    const eq::EquilibriumSolution sol = cx.cache.solve(body, alpha, d, so);
    Out& o = outs[k];
    o.converged = sol.converged();
    o.flat = sol.flatness;
    json row = {{"shape", geom::shape_to_json(geom::parse_shape(shapes[k]))},
                {"nodes", sol.nodes->size()},
                {"capacity", sol.capacity},
                {"energy", sol.energy},
                {"flatness", sol.flatness},
                {"iterations", sol.trace.iterations},
                {"gap", sol.trace.gap},
                {"converged", sol.converged()},
                {"volume", geom::volume(body)},
                {"mean_width", geom::mean_width(body)}};

    // Interior probes: evenly spaced interior cells of the support.
    const eq::NodeSet& ns = *sol.nodes;
    std::vector<int> interior;
    for (int j = 0; j < ns.size(); ++j)
      if (!ns.outer[j] && sol.weights[j] > 0.0) interior.push_back(j);
    json probes = json::array();
    double umin = 1e300, umax = -1e300;
    for (int p = 0; p < n_in && !interior.empty(); ++p) {
      const int j = interior[(static_cast<std::size_t>(p) * interior.size()) / n_in];
      const double u = sol.node_potential[j] / sol.energy;
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      probes.push_back({{"node", j}, {"u", u}});
    }
    o.band = interior.empty() ? 0.0 : std::max(std::abs(umax - 1.0), std::abs(umin - 1.0));
    row["interior_probes"] = probes;

    std::vector<json> ext(n_out);
    std::vector<double> ratios(n_out);
    const double inr = geom::inradius(body);
    const int inner_jobs = std::max<int>(1, cx.opts.jobs / static_cast<int>(shapes.size()));
    parallel_for(n_out, inner_jobs, [&](std::size_t p) {
      const int i = static_cast<int>((p * body.size()) / n_out);
      const double delta = (0.2 + 0.6 * p / n_out) * inr;
      const geom::Vec x = body.sigma[i] + delta * body.normal(i);
      const frac::HarmonicityProbe hp = frac::s_harmonicity_residual(sol, body, x, pres);
      ratios[p] = std::abs(hp.residual) / hp.scale;
      ext[p] = {{"x", {x.x(), x.y(), x.z()}},
                {"residual", hp.residual},
                {"scale", hp.scale},
                {"error", hp.error},
                {"ratio", ratios[p]}};
    });
    for (double r : ratios) o.harm = std::max(o.harm, r);
    row["exterior_probes"] = ext;

    try {
      const frac::NormalDerivativeTrace tr = frac::s_normal_derivative(sol, body, 0.5 * alpha, fit);
      double md = 0.0, me = 0.0;
      for (int i = 0; i < tr.size(); ++i) {
        md += std::abs(tr.d[i]);
        me += tr.exponent[i];
      }
      row["trace"] = {{"mean_abs_d", md / tr.size()}, {"cv", tr.cv_abs()}, {"mean_exponent", me / tr.size()},
                      {"failed", tr.failed}};
      o.trace_csv = frac::trace_csv(tr);
    } catch (const SolverError& e) {
      row["trace"] = {{"error", e.what()}};
    }
    o.row = std::move(row);
  });

  json rows = json::array();
  std::ostringstream csv;
  csv.precision(12);
  csv << "shape,nodes,capacity,energy,flatness,iterations,converged\n";
  for (std::size_t k = 0; k < outs.size(); ++k) {
    const Out& o = outs[k];
    const std::string label = geom::describe(geom::parse_shape(shapes[k]));
    csv << '"' << label << "\"," << o.row["nodes"] << ',' << o.row["capacity"].get<double>() << ','
        << o.row["energy"].get<double>() << ',' << o.flat << ',' << o.row["iterations"] << ',' << o.converged
        << '\n';
    if (!o.trace_csv.empty()) cx.rep.tables["trace_" + std::to_string(k) + ".csv"] = o.trace_csv;
    cx.gate_true("converged[" + label + "]", o.converged);
    cx.gate_le("flatness[" + label + "]", o.flat, cx.g("flatness_max"));
    if (n_in > 0) cx.gate_le("interior_u_deviation[" + label + "]", o.band, cx.g("probe_band"));
    if (n_out > 0) cx.gate_le("harmonicity_ratio[" + label + "]", o.harm, cx.g("harmonicity_max"));
    rows.push_back(o.row);
  }
  cx.rep.tables["capacity.csv"] = csv.str();
  cx.result["bodies"] = rows;
}

std::vector<had::PerturbationPair> hadamard_pairs(Context& cx) {
  const json& list = cx.plan.config.at("hadamard").at("pairs");
  if (!list.is_array()) throw ConfigError("hadamard.pairs: expected a list");
  if (list.empty()) {
    if (cx.plan.n != 2) throw ConfigError("hadamard.pairs: the standard suite is planar; list pairs for n = 3");
    return had::standard_suite(cx.grid);
  }
  std::vector<had::PerturbationPair> out;
  for (std::size_t k = 0; k < list.size(); ++k) {
    const std::string key = "hadamard.pairs[" + std::to_string(k) + "]";
    const json& p = list[k];
    if (!p.is_object() || !p.contains("omega") || !p.contains("l"))
      throw ConfigError(key + ": expected {omega: <shape>, l: <shape>}");
    for (auto it = p.begin(); it != p.end(); ++it)
      if (it.key() != "omega" && it.key() != "l" && it.key() != "signed")
        throw ConfigError("unknown key \"" + key + "." + it.key() + "\"");
    const geom::ShapeSpec so = geom::parse_shape(p["omega"]);
    const geom::ShapeSpec sl = geom::parse_shape(p["l"]);
    out.push_back({geom::describe(so) + " / " + geom::describe(sl), resolve_shape(p["omega"], cx.grid, key + ".omega"),
                   resolve_shape(p["l"], cx.grid, key + ".l"), geom::shape_to_json(so), geom::shape_to_json(sl),
                   p.value("signed", false)});
  }
  return out;
}

void run_hadamard(Context& cx) {
  const json& c = cx.plan.config;
  had::ConsistencyOptions o;
  o.fd.disc = disc_opts(c);
  o.fd.solver = solver_opts(c);
  o.fd.step_factor = num(c, "hadamard.step_factor");
  o.fd.concurrent = cx.opts.jobs > 1;
  o.fit = trace_opts(c);
  o.jobs = cx.opts.jobs;
  const auto pairs = hadamard_pairs(cx);
  cx.stage = "hadamard";
  const had::ShapeDerivativeReport r = had::consistency_report(pairs, cx.plan.alpha, o);
  cx.result = had::to_json(r);
  cx.rep.tables["hadamard.csv"] = had::to_csv(r);

  if (r.pairs.size() >= 2) cx.gate_le("c0_hat_cv", r.c0_cv, cx.g("c0_cv_max"));
  const double na = cx.plan.n - cx.plan.alpha;
  for (std::size_t k = 0; k < r.pairs.size(); ++k) {
    const had::PairResult& p = r.pairs[k];
    if (!std::isnan(p.homogeneity))
      cx.gate_le("homogeneity[" + p.label + "]", std::abs(p.homogeneity / na - 1.0), cx.g("homogeneity_tol"));
    cx.gate_le("volume_variation[" + p.label + "]", p.classical.volume_error(), cx.g("classical_tol"));
    cx.gate_le("mean_width_variation[" + p.label + "]", p.classical.mean_width_error(), cx.g("classical_tol"));
    cx.gate_le("gauss_identity[" + p.label + "]", std::abs(p.classical.gauss_identity / 2.0 - 1.0),
               cx.g("classical_tol"));
    if (!pairs[k].allow_signed) cx.gate_true("positivity[" + p.label + "]", p.fd.value > 0.0 && p.B > 0.0);
  }
}

void run_flow(Context& cx) {
  const json& c = cx.plan.config;
  opt::FlowOptions o;
  o.disc = disc_opts(c);
  o.solver = solver_opts(c);
  o.fit = trace_opts(c);
  o.max_steps = integer(c, "flow.max_steps");
  o.stall_tol = num(c, "flow.stall_tol");
  o.step_factor = num(c, "flow.step_factor");
  o.filter_modes = integer(c, "flow.filter_modes");
  o.snapshot_every = integer(c, "flow.snapshot_every");
  const opt::Constraint mode = opt::parse_constraint(str(c, "flow.constraint"));
  const geom::SupportVector h0 = resolve_shape(c.at("shape"), cx.grid, "shape");
  cx.stage = "flow";
  const opt::FlowTrace t = opt::flow_to_stationarity(h0, cx.plan.alpha, mode, o);
  cx.result = opt::to_json(t);
  cx.rep.tables["flow.csv"] = opt::to_csv(t);

  const opt::FlowRecord& last = t.steps.back();
  cx.gate_le("final_hausdorff_to_ball", last.hausdorff_to_ball, cx.g("hausdorff_max"));
  cx.gate_le("final_residual_cv", last.residual_cv, cx.g("residual_cv_max"));
  double worst = 0.0, drift = 0.0;
  const double sign = mode == opt::Constraint::Volume ? 1.0 : -1.0;
  for (std::size_t k = 1; k < t.steps.size(); ++k) {
    worst = std::max(worst, sign * (t.steps[k].capacity - t.steps[k - 1].capacity) / t.steps[k - 1].capacity);
    drift = std::max(drift, std::abs(t.steps[k].drift));
  }
  cx.gate_le(mode == opt::Constraint::Volume ? "capacity_increase_per_step" : "capacity_decrease_per_step", worst,
             cx.g("monotone_tol"));
  cx.gate_le("constraint_drift_per_step", drift, cx.g("drift_max"));
}

void run_bm(Context& cx) {
  const json& c = cx.plan.config;
  opt::BMOptions o;
  o.disc = disc_opts(c);
  o.solver = solver_opts(c);
  o.homothety_tol = num(c, "brunn_minkowski.homothety_tol");
  o.solve = [&](const geom::Body& b, double a, const eq::DiscretizationOptions& d, const eq::SolverOptions& s) {
    return cx.cache.solve(b, a, d, s);
  };

  std::vector<std::pair<json, json>> specs;
  const json& list = c.at("brunn_minkowski").at("pairs");
  if (!list.is_array()) throw ConfigError("brunn_minkowski.pairs: expected a list");
  for (std::size_t k = 0; k < list.size(); ++k) {
    const json& p = list[k];
    if (!p.is_object() || !p.contains("omega") || !p.contains("l") || p.size() != 2)
      throw ConfigError("brunn_minkowski.pairs[" + std::to_string(k) + "]: expected {omega: <shape>, l: <shape>}");
    specs.emplace_back(p["omega"], p["l"]);
  }
  // Random planar pairs: ellipses and trigonometric bodies from the plan seed.
  std::mt19937_64 rng(cx.plan.seed);
  auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  auto random_shape = [&]() -> json {
    if (u01() < 0.5) {
      const double a = 0.6 + 0.9 * u01(), b = 0.4 + 0.6 * u01(), ang = 3.14159265358979 * u01();
      return {{"type", "ellipse"}, {"axes", {a, b}}, {"angle", ang}};
    }
    return {{"type", "random_trig"}, {"seed", rng() % 100000}, {"degree", 5}, {"margin", 0.3}};
  };
  const int nrand = integer(c, "brunn_minkowski.random_pairs");
  if (nrand > 0 && cx.plan.n != 2) throw ConfigError("brunn_minkowski.random_pairs: planar only");
  for (int k = 0; k < nrand; ++k) {
    json a = random_shape();
    json b = random_shape();
    specs.emplace_back(std::move(a), std::move(b));
  }
  if (specs.empty()) throw ConfigError("brunn_minkowski: no pairs (set pairs or random_pairs)");

  std::vector<opt::BMReport> reps(specs.size());
  std::vector<std::pair<geom::SupportVector, geom::SupportVector>> bodies;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const std::string key = "brunn_minkowski.pairs[" + std::to_string(k) + "]";
    bodies.emplace_back(resolve_shape(specs[k].first, cx.grid, key + ".omega"),
                        resolve_shape(specs[k].second, cx.grid, key + ".l"));
  }
  cx.stage = "brunn_minkowski";
  parallel_for(specs.size(), cx.opts.jobs,
               [&](std::size_t k) { reps[k] = opt::brunn_minkowski_check(bodies[k].first, bodies[k].second, o); });

  json rows = json::array();
  std::ostringstream csv;
  csv.precision(12);
  csv << "pair,cap_omega,cap_l,cap_sum,deficit,relative,noise,homothetic\n";
  const double fd = cx.g("deficit_noise_factor"), fh = cx.g("homothetic_noise_factor");
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const opt::BMReport& r = reps[k];
    const std::string label =
        geom::describe(geom::parse_shape(specs[k].first)) + " + " + geom::describe(geom::parse_shape(specs[k].second));
    json row = opt::to_json(r);
    row["omega"] = geom::shape_to_json(geom::parse_shape(specs[k].first));
    row["l"] = geom::shape_to_json(geom::parse_shape(specs[k].second));
    rows.push_back(row);
    csv << '"' << label << "\"," << r.cap_omega << ',' << r.cap_l << ',' << r.cap_sum << ',' << r.deficit << ','
        << r.relative << ',' << r.noise << ',' << r.homothetic << '\n';
    cx.gate_ge("deficit_over_noise[" + label + "]", r.deficit / r.noise, -fd);
    if (r.homothetic) cx.gate_le("homothetic_deficit_over_noise[" + label + "]", std::abs(r.deficit) / r.noise, fh);
  }
  cx.result["pairs"] = rows;
  cx.rep.tables["brunn_minkowski.csv"] = csv.str();
}

void run_constants(Context& cx) {
  const json& c = cx.plan.config;
  const int res = integer(c, "constants.resolution");
  std::vector<double> ss;
  for (const json& v : c.at("constants").at("s")) ss.push_back(v.get<double>());
  if (ss.empty()) ss.push_back(0.5 * cx.plan.alpha);
  const int n = cx.plan.n;

  std::vector<json> rows(ss.size());
  std::vector<double> spread(ss.size()), da(ss.size()), dc(ss.size());
  cx.stage = "constants";
  parallel_for(ss.size(), cx.opts.jobs, [&](std::size_t k) {
    const double s = ss[k];
    const frac::CnsReport rep = frac::cns_self_consistency(n, s, frac::TestDensity::Bump, res);
    const frac::FracConstants c1 = frac::theorem_constants(n, s, res);
    const frac::FracConstants c2 = frac::theorem_constants(n, s, 2 * res);
    spread[k] = rep.spread;
    da[k] = std::abs(c1.a_ns - c2.a_ns) / std::abs(c2.a_ns);
    dc[k] = std::abs(c1.c_s - c2.c_s) / std::abs(c2.c_s);
    json row = io::constants_to_json(c1);
    row["cns_self_consistency"] = rep.value;
    row["cns_spread"] = rep.spread;
    row["cns_points"] = rep.points;
    row["cns_ratios"] = rep.ratios;
    row["a_ns_doubled"] = c2.a_ns;
    row["c_s_doubled"] = c2.c_s;
    rows[k] = std::move(row);
  });

  std::ostringstream csv;
  csv.precision(12);
  csv << "n,s,resolution,c_ns,cns_spread,a_ns,a_ns_doubled,c_s,c_s_doubled,c0\n";
  json table = json::array();
  for (std::size_t k = 0; k < ss.size(); ++k) {
    const json& r = rows[k];
    csv << n << ',' << ss[k] << ',' << res << ',' << r["c_ns"].get<double>() << ',' << spread[k] << ','
        << r["a_ns"].get<double>() << ',' << r["a_ns_doubled"].get<double>() << ',' << r["c_s"].get<double>()
        << ',' << r["c_s_doubled"].get<double>() << ',' << r["c0"].get<double>() << '\n';
    const std::string tag = "[n=" + std::to_string(n) + " s=" + fmt(ss[k]) + "]";
    cx.gate_le("cns_spread" + tag, spread[k], cx.g("cns_spread_max"));
    cx.gate_le("a_ns_doubling" + tag, da[k], cx.g("doubling_tol"));
    cx.gate_le("c_s_doubling" + tag, dc[k], cx.g("doubling_tol"));
    table.push_back(r);
  }
  cx.result["constants"] = table;
  cx.rep.tables["constants.csv"] = csv.str();
}

void run_selftest_kind(Context& cx) {
  cx.stage = "selftest";
  const selftest::Result r = selftest::run_selftest(cx.opts.jobs);
  cx.result = r.to_json();
  std::ostringstream csv;
  csv.precision(12);
  csv << "check,value,tol,pass\n";
  for (const auto& c : r.checks) {
    csv << '"' << c.name << "\"," << c.value << ',' << c.tol << ',' << c.pass << '\n';
    cx.rep.gates.push_back({c.name, c.value, c.tol, c.pass});
  }
  cx.rep.tables["selftest.csv"] = csv.str();
}

std::string make_summary(const Report& rep, const ExperimentPlan& plan) {
  std::ostringstream os;
  const json& d = rep.document;
  os << "capkit " << io::code_version() << "  kind: " << to_string(rep.kind) << "\n";
  os << "config: " << d["provenance"]["config_hash"].get<std::string>().substr(0, 16) << "  n = " << plan.n
     << "  alpha = " << fmt(plan.alpha) << "\n";
  const json& r = d["result"];
  switch (rep.kind) {
    case Kind::Capacity:
      if (r.contains("bodies"))
        for (const json& b : r["bodies"])
          os << "  " << b["shape"].dump() << "  Cap = " << fmt(b["capacity"].get<double>())
             << "  I = " << fmt(b["energy"].get<double>()) << "  flatness = " << fmt(b["flatness"].get<double>())
             << "\n";
      break;
    case Kind::Hadamard:
      if (r.contains("cv"))
        os << "  c0_hat mean = " << fmt(r["c0_mean"].get<double>()) << "  cv = " << fmt(r["cv"].get<double>())
           << "  c0 analytic = " << fmt(r["c0_analytic"].get<double>()) << "  ratio = "
           << fmt(r["ratio"].get<double>()) << "\n";
      break;
    case Kind::Flow:
      if (r.contains("steps") && !r["steps"].empty()) {
        const json& last = r["steps"].back();
        os << "  steps = " << last["step"] << "  Cap = " << fmt(last["capacity"].get<double>())
           << "  residual cv = " << fmt(last["residual_cv"].get<double>())
           << "  hausdorff/R = " << fmt(last["hausdorff_to_ball"].get<double>()) << "\n";
      }
      break;
    default:
      break;
  }
  if (rep.failed_stage) os << "error in stage " << *rep.failed_stage << "\n";
  os << "gates:\n";
  for (const Gate& g : rep.gates)
    os << "  " << (g.pass ? "PASS" : "FAIL") << "  " << g.name << "  value = " << fmt(g.value)
       << "  limit = " << fmt(g.limit) << "\n";
  os << "overall: " << (rep.passed() ? "PASS" : "FAIL") << "\n";
  return os.str();
}

}  // namespace

std::string to_string(Kind k) {
  for (const auto& [kk, name] : kKinds)
    if (kk == k) return name;
  return "?";
}

const json& default_config() {
  static const json d = {
      {"kind", nullptr},
      {"n", 2},
      {"alpha", 1.0},
      {"shape", "ball(1)"},
      {"shapes", json::array()},
      {"grid", 0},
      {"seed", 0},
      {"output", "capkit-out"},
      {"cache_dir", ""},
      {"cache", true},
      {"discretization", {{"cells", 2000}, {"grading", 0.0}}},
      {"solver", {{"max_iter", 4000000}, {"gap_tol", 1e-6}, {"flatness_tol", 0.02}}},
      {"trace", {{"t_min", 0.0}, {"t_max", 0.0}, {"k", 6}, {"max_residual", 0.05}}},
      {"probes", {{"interior", 20}, {"exterior", 10}, {"resolution", 1}}},
      {"hadamard", {{"step_factor", 0.02}, {"pairs", json::array()}}},
      {"flow",
       {{"constraint", "volume"},
        {"max_steps", 200},
        {"stall_tol", 0.01},
        {"step_factor", 0.1},
        {"filter_modes", 8},
        {"snapshot_every", 10}}},
      {"brunn_minkowski", {{"pairs", json::array()}, {"random_pairs", 0}, {"homothety_tol", 1e-3}}},
      {"constants", {{"resolution", 1}, {"s", json::array()}}},
      {"gates",
       {{"flatness_max", 0.02},
        {"probe_band", 0.02},
        {"harmonicity_max", 0.01},
        {"c0_cv_max", 0.05},
        {"homogeneity_tol", 0.02},
        {"classical_tol", 0.005},
        {"hausdorff_max", 0.02},
        {"residual_cv_max", 0.05},
        {"monotone_tol", 0.002},
        {"drift_max", 0.01},
        {"deficit_noise_factor", 3.0},
        {"homothetic_noise_factor", 2.0},
        {"cns_spread_max", 0.01},
        {"doubling_tol", 0.005}}},
  };
  return d;
}

json parse_structured(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (!j.is_discarded()) return j;
  try {
    return yaml_to_json(YAML::Load(text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is neither JSON nor YAML: ") + e.what());
  }
}

ExperimentPlan plan_from_json(const json& user) {
  json c = merge_checked(default_config(), user, "");
  if (c["kind"].is_null()) throw ConfigError("kind: required; one of capacity, hadamard, flow, brunn_minkowski, constants, selftest");
  ExperimentPlan p;
  const std::string kind = str(c, "kind");
  bool found = false;
  for (const auto& [k, name] : kKinds)
    if (name == kind) {
      p.kind = k;
      found = true;
    }
  if (!found) {
    json names = json::object();
    for (const auto& kv : kKinds) names[kv.second] = 0;
    throw ConfigError("kind: unknown experiment kind \"" + kind + "\"" + suggestion(kind, names));
  }

  p.n = integer(c, "n");
  range("n", p.n, p.n == 2 || p.n == 3, "n must be 2 or 3");
  p.alpha = num(c, "alpha");
  const double amax = std::min(2.0, static_cast<double>(p.n));
  range("alpha", p.alpha, p.alpha > 0.0 && p.alpha < amax, "alpha must lie in (0, " + fmt(amax) + ") for n = " + std::to_string(p.n));
  int grid = integer(c, "grid");
  range("grid", grid, grid == 0 || grid >= 16, "grid must be 0 (default) or at least 16");
  if (grid == 0) grid = p.n == 2 ? 256 : 400;
  c["grid"] = grid;
  p.grid = grid;
  const json& seed = c.at("seed");
  if (!seed.is_number_integer() || seed.get<long long>() < 0) throw ConfigError("seed: expected a non-negative integer");
  p.seed = seed.get<std::uint64_t>();

  range("discretization.cells", num(c, "discretization.cells"), integer(c, "discretization.cells") >= 100,
        "at least 100 cells");
  const double gr = num(c, "discretization.grading");
  range("discretization.grading", gr, gr == 0.0 || (gr >= 1.0 && gr <= 3.0), "0 (default) or within [1, 3]");
  range("solver.max_iter", num(c, "solver.max_iter"), num(c, "solver.max_iter") >= 1, "at least 1");
  const double gt = num(c, "solver.gap_tol");
  range("solver.gap_tol", gt, gt > 0.0 && gt <= 1e-2, "within (0, 0.01]");
  const double ft = num(c, "solver.flatness_tol");
  range("solver.flatness_tol", ft, ft > 0.0 && ft <= 1.0, "within (0, 1]");
  range("trace.k", integer(c, "trace.k"), integer(c, "trace.k") >= 3, "at least 3");
  range("trace.t_min", num(c, "trace.t_min"), num(c, "trace.t_min") >= 0.0, "non-negative");
  range("trace.t_max", num(c, "trace.t_max"), num(c, "trace.t_max") >= 0.0, "non-negative");
  range("trace.max_residual", num(c, "trace.max_residual"), num(c, "trace.max_residual") > 0.0, "positive");
  for (const char* k : {"probes.interior", "probes.exterior"})
    range(k, integer(c, k), integer(c, k) >= 0, "non-negative");
  range("probes.resolution", integer(c, "probes.resolution"), integer(c, "probes.resolution") >= 1, "at least 1");
  const double sf = num(c, "hadamard.step_factor");
  range("hadamard.step_factor", sf, sf > 0.0 && sf < 0.5, "within (0, 0.5)");
  opt::parse_constraint(str(c, "flow.constraint"));
  range("flow.max_steps", integer(c, "flow.max_steps"), integer(c, "flow.max_steps") >= 0, "non-negative");
  range("flow.stall_tol", num(c, "flow.stall_tol"), num(c, "flow.stall_tol") > 0.0, "positive");
  range("flow.step_factor", num(c, "flow.step_factor"), num(c, "flow.step_factor") > 0.0, "positive");
  range("flow.filter_modes", integer(c, "flow.filter_modes"), integer(c, "flow.filter_modes") >= 1, "at least 1");
  range("flow.snapshot_every", integer(c, "flow.snapshot_every"), integer(c, "flow.snapshot_every") >= 0,
        "non-negative");
  range("brunn_minkowski.random_pairs", integer(c, "brunn_minkowski.random_pairs"),
        integer(c, "brunn_minkowski.random_pairs") >= 0, "non-negative");
  range("brunn_minkowski.homothety_tol", num(c, "brunn_minkowski.homothety_tol"),
        num(c, "brunn_minkowski.homothety_tol") > 0.0, "positive");
  range("constants.resolution", integer(c, "constants.resolution"), integer(c, "constants.resolution") >= 1,
        "at least 1");
  if (!c["constants"]["s"].is_array()) throw ConfigError("constants.s: expected a list");
  for (const json& s : c["constants"]["s"]) {
    if (!s.is_number()) throw ConfigError("constants.s: expected numbers");
    range("constants.s", s.get<double>(), s.get<double>() > 0.0 && s.get<double>() < 1.0, "each s within (0, 1)");
  }
  for (auto it = c["gates"].begin(); it != c["gates"].end(); ++it)
    range("gates." + it.key(), num(c, "gates." + it.key()), num(c, "gates." + it.key()) >= 0.0, "non-negative");
  if (!c["cache"].is_boolean()) throw ConfigError("cache: expected true or false");

  if (p.kind == Kind::Flow && str(c, "flow.constraint") == "mean_width" && p.alpha != 1.0)
    throw ConfigError("alpha: mean-width flows require alpha = 1");
  if (p.kind == Kind::BrunnMinkowski && p.alpha != 1.0)
    throw ConfigError("alpha: brunn_minkowski checks Cap_1; alpha must be 1");

  // Every referenced shape must resolve on the plan's grid.
  const geom::GridPtr g = geom::make_direction_grid(p.n, p.grid);
  if (p.kind == Kind::Capacity || p.kind == Kind::Flow) {
    const auto shapes = p.kind == Kind::Capacity ? shape_list(c) : std::vector<json>{c["shape"]};
    for (std::size_t k = 0; k < shapes.size(); ++k) resolve_shape(shapes[k], g, c["shapes"].empty() ? "shape" : "shapes[" + std::to_string(k) + "]");
  }

  p.output = str(c, "output");
  const std::string cd = str(c, "cache_dir");
  if (c["cache"].get<bool>()) p.cache_dir = cd.empty() ? io::SolutionCache::default_dir() : std::filesystem::path(cd);
  p.config = std::move(c);
  return p;
}

ExperimentPlan parse_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return plan_from_json(parse_structured(ss.str()));
}

bool Report::passed() const {
  if (failed_stage) return false;
  for (const Gate& g : gates)
    if (!g.pass) return false;
  return true;
}

Report run_experiment(const ExperimentPlan& plan, const RunOptions& opts) {
  Report rep;
  rep.kind = plan.kind;
  Context cx{plan, opts, geom::make_direction_grid(plan.n, plan.grid),
             io::SolutionCache(opts.use_cache ? plan.cache_dir : std::filesystem::path{}), rep};

  // The echoed config omits machine-local paths so that reports compare
  // equal across machines.
  json echo = plan.config;
  echo.erase("cache_dir");
  echo.erase("output");
  json provenance = {{"config_hash", io::sha256_hex(echo.dump())},
                     {"code_version", io::code_version()},
                     {"config", echo}};
  json error = nullptr;
  try {
    cx.stage = "constants-lookup";
    provenance["constants"] = {{"c_ns", frac::cns_constant(plan.n, 0.5 * plan.alpha)}, {"s", 0.5 * plan.alpha}};
    switch (plan.kind) {
      case Kind::Capacity: run_capacity(cx); break;
      case Kind::Hadamard: run_hadamard(cx); break;
      case Kind::Flow: run_flow(cx); break;
      case Kind::BrunnMinkowski: run_bm(cx); break;
      case Kind::Constants: run_constants(cx); break;
      case Kind::Selftest: run_selftest_kind(cx); break;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    rep.failed_stage = cx.stage;
    error = {{"stage", cx.stage}, {"message", e.what()}, {"internal", e.kind() == ErrorKind::Internal}};
  } catch (const std::exception& e) {
    rep.failed_stage = cx.stage;
    error = {{"stage", cx.stage}, {"message", e.what()}, {"internal", true}};
  }

  json gates = json::array();
  for (const Gate& g : rep.gates)
    gates.push_back({{"name", g.name}, {"value", g.value}, {"limit", g.limit}, {"pass", g.pass}});
  rep.document = {{"kind", to_string(plan.kind)},
                  {"provenance", provenance},
                  {"result", cx.result},
                  {"gates", gates},
                  {"passed", rep.passed()}};
  if (!error.is_null()) rep.document["error"] = error;
  rep.summary = make_summary(rep, plan);
  return rep;
}

void write_report(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : report.tables) io::write_atomic(dir / name, text);
  io::write_atomic(dir / "summary.txt", report.summary);
  io::write_atomic(dir / "report.json", report.document.dump(2) + "\n");
}

int exit_code(const Report& report) {
  if (report.document.contains("error") && report.document["error"].value("internal", false)) return 3;
  return report.passed() ? 0 : 1;
}

int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace capkit::run
