#include "capkit/serialize.hpp"

#include "capkit/error.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#ifndef CAPKIT_VERSION
#define CAPKIT_VERSION "0.0.0"
#endif

namespace capkit::io {
namespace {

using nlohmann::json;

json vec_json(const geom::Vec& v) { return json::array({v.x(), v.y(), v.z()}); }

geom::Vec json_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

}  // namespace

const char* code_version() { return CAPKIT_VERSION; }

json body_to_json(const geom::Body& body, bool derived) {
  json j = {{"n", body.dim()}, {"N", body.size()}, {"h", body.support.h}};
  if (derived) {
    json sigma = json::array();
    for (const auto& p : body.sigma) sigma.push_back(vec_json(p));
    j["derived"] = {{"sigma", sigma}, {"G", body.curvature}, {"s", body.area}};
  }
  return j;
}

geom::SupportVector support_from_json(const json& j) {
  const int n = j.at("n").get<int>();
  const int N = j.at("N").get<int>();
  geom::SupportVector sv;
  sv.grid = geom::make_direction_grid(n, N);
  sv.h = j.at("h").get<std::vector<double>>();
  if (sv.size() != sv.grid->size())
    throw ConfigError("body JSON: h has " + std::to_string(sv.size()) + " entries, grid has " +
                      std::to_string(sv.grid->size()));
  return sv;
}

json solution_to_json(const eq::EquilibriumSolution& sol) {
  const eq::NodeSet& ns = *sol.nodes;
  json nodes = json::array();
  for (const auto& x : ns.nodes) nodes.push_back(vec_json(x));
  std::vector<int> outer(ns.outer.begin(), ns.outer.end());
  return {
      {"dim", sol.dim},
      {"alpha", sol.alpha},
      {"nodes",
       {{"center", vec_json(ns.center)},
        {"x", nodes},
        {"volume", ns.volume},
        {"radius", ns.radius},
        {"cell_size", ns.cell_size},
        {"outer", outer},
        {"layers", ns.layers},
        {"sectors", ns.sectors}}},
      {"weights", sol.weights},
      {"node_potential", sol.node_potential},
      {"energy", sol.energy},
      {"capacity", sol.capacity},
      {"flatness", sol.flatness},
      {"trace",
       {{"iterations", sol.trace.iterations},
        {"fw_steps", sol.trace.fw_steps},
        {"away_steps", sol.trace.away_steps},
        {"drop_steps", sol.trace.drop_steps},
        {"gap", sol.trace.gap},
        {"converged", sol.trace.converged},
        {"energy_history", sol.trace.energy_history}}},
  };
}

eq::EquilibriumSolution solution_from_json(const json& j) {
  auto ns = std::make_shared<eq::NodeSet>();
  const json& jn = j.at("nodes");
  ns->dim = j.at("dim").get<int>();
  ns->center = json_vec(jn.at("center"));
  for (const auto& x : jn.at("x")) ns->nodes.push_back(json_vec(x));
  ns->volume = jn.at("volume").get<std::vector<double>>();
  ns->radius = jn.at("radius").get<std::vector<double>>();
  ns->cell_size = jn.at("cell_size").get<std::vector<double>>();
  for (int v : jn.at("outer").get<std::vector<int>>()) ns->outer.push_back(static_cast<char>(v));
  ns->layers = jn.at("layers").get<int>();
  ns->sectors = jn.at("sectors").get<int>();

  eq::EquilibriumSolution sol;
  sol.nodes = ns;
  sol.dim = ns->dim;
  sol.alpha = j.at("alpha").get<double>();
  sol.weights = j.at("weights").get<std::vector<double>>();
  sol.node_potential = j.at("node_potential").get<std::vector<double>>();
  sol.energy = j.at("energy").get<double>();
  sol.capacity = j.at("capacity").get<double>();
  sol.flatness = j.at("flatness").get<double>();
  const json& t = j.at("trace");
  sol.trace.iterations = t.at("iterations").get<long>();
  sol.trace.fw_steps = t.at("fw_steps").get<long>();
  sol.trace.away_steps = t.at("away_steps").get<long>();
  sol.trace.drop_steps = t.at("drop_steps").get<long>();
  sol.trace.gap = t.at("gap").get<double>();
  sol.trace.converged = t.at("converged").get<bool>();
  sol.trace.energy_history = t.at("energy_history").get<std::vector<double>>();
  const int N = ns->size();
  if (static_cast<int>(sol.weights.size()) != N || static_cast<int>(sol.node_potential.size()) != N ||
      static_cast<int>(ns->volume.size()) != N)
    throw ConfigError("solution JSON: inconsistent array lengths");
  return sol;
}

json constants_to_json(const frac::FracConstants& c) {
  return {{"n", c.n}, {"s", c.s}, {"resolution", c.resolution}, {"c_ns", c.cns},
          {"a_ns", c.a_ns}, {"c_s", c.c_s}, {"c0", c.c0}};
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorKind::Internal, "sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ostringstream suffix;
  suffix << ".tmp." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << '.' << counter++;
  const std::filesystem::path tmp = path.string() + suffix.str();
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorKind::Internal, "cannot write " + tmp.string());
    f << content;
    if (!f.flush()) throw Error(ErrorKind::Internal, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

SolutionCache::SolutionCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path SolutionCache::default_dir() {
  if (const char* d = std::getenv("CAPKIT_CACHE_DIR"); d && *d) return d;
  if (const char* x = std::getenv("XDG_CACHE_HOME"); x && *x) return std::filesystem::path(x) / "capkit";
  if (const char* h = std::getenv("HOME"); h && *h) return std::filesystem::path(h) / ".cache" / "capkit";
  return std::filesystem::temp_directory_path() / "capkit-cache";
}

std::string SolutionCache::key(const geom::SupportVector& h, double alpha, const eq::DiscretizationOptions& d,
                               const eq::SolverOptions& s) {
  const json j = {{"version", code_version()},
                  {"n", h.dim()},
                  {"N", h.size()},
                  {"h", h.h},
                  {"alpha", alpha},
                  {"cells", d.target_cells},
                  {"grading", d.grading},
                  {"max_iter", s.max_iter},
                  {"gap_tol", s.gap_tol},
                  {"flatness_tol", s.flatness_tol},
                  {"history_stride", s.history_stride}};
  return sha256_hex(j.dump());
}

std::optional<eq::EquilibriumSolution> SolutionCache::load(const std::string& key) const {
  if (!enabled()) return std::nullopt;
  const std::filesystem::path p = dir_ / (key + ".json");
  std::ifstream f(p, std::ios::binary);
  if (!f) {
    ++misses_;
    return std::nullopt;
  }
  try {
    const json j = json::parse(f);
    ++hits_;
    return solution_from_json(j);
  } catch (const std::exception&) {
    ++misses_;
    return std::nullopt;  // unreadable entries are recomputed and overwritten
  }
}

void SolutionCache::store(const std::string& key, const eq::EquilibriumSolution& sol) const {
  if (!enabled()) return;
  write_atomic(dir_ / (key + ".json"), solution_to_json(sol).dump());
}

eq::EquilibriumSolution SolutionCache::solve(const geom::Body& body, double alpha, eq::DiscretizationOptions d,
                                             const eq::SolverOptions& s) {
  if (d.grading == 0.0) d.grading = eq::default_grading(alpha);
  const std::string k = key(body.support, alpha, d, s);
  if (auto hit = load(k)) return std::move(*hit);
  eq::EquilibriumSolution sol = eq::solve_body(body, alpha, d, s);
  if (sol.converged()) store(k, sol);
  return sol;
}

}  // namespace capkit::io
