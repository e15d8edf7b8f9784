// smi: command-line front end for topologies, routing tables, benchmarks and
// the example applications.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "smi/harness/bench.hpp"
#include "smi/harness/gesummv.hpp"
#include "smi/harness/stencil.hpp"
#include "smi/smi.hpp"

namespace {

using namespace smi;
namespace fs = std::filesystem;

int topo_validate(const std::string& file) {
  const auto t = load_topology(file);
  int max_deg = 0;
  for (int r = 0; r < t.num_ranks(); ++r) max_deg = std::max(max_deg, t.degree(r));
  std::cout << file << ": ok, " << t.num_ranks() << " ranks, " << t.ifaces_per_rank() << " ifaces per rank, "
            << t.connections().size() << " links, max degree " << max_deg << '\n';
  return 0;
}

int topo_gen(const std::string& shape, int ranks, int rows, int cols, int ifaces, const std::string& out) {
  TopologySpec t;
  if (shape == "bus") {
    t = make_bus(ranks, ifaces);
  } else if (shape == "torus") {
    if (rows == 0 && cols == 0) throw ConfigError("torus needs --rows and --cols");
    if (rows == 0) rows = ranks / cols;
    if (cols == 0) cols = ranks / rows;
    if (rows * cols != ranks) throw ConfigError("--rows x --cols must equal --ranks");
    t = make_torus(rows, cols, ifaces);
  } else {
    throw ConfigError("unknown shape '" + shape + "' (bus, torus)");
  }
  save_topology(t, out);
  std::cout << "wrote " << out << '\n';
  return 0;
}

int routes_gen(const std::string& topo_file, const std::string& ports_file, const std::string& scheme_name,
               const std::string& out) {
  const auto t = load_topology(topo_file);
  const auto ports = load_ports(ports_file);
  RoutingScheme scheme = RoutingScheme::kUpDown;
  if (scheme_name == "shortest") {
    scheme = RoutingScheme::kShortestPath;
  } else if (scheme_name != "updown") {
    throw ConfigError("unknown scheme '" + scheme_name + "' (updown, shortest)");
  }
  const auto rt = generate_routes(t, ports, scheme);
  const auto report = check_deadlock_free(t, rt);
  if (!report.acyclic) {
    std::cerr << "warning: channel-dependency cycle:";
    for (const auto& e : report.cycle) std::cerr << ' ' << to_string(e);
    std::cerr << '\n';
  }
  emit_tables(rt, out);
  std::cout << "wrote " << t.num_ranks() << " table files to " << out << '\n';
  return 0;
}

int routes_check(const std::string& dir, const std::string& topo_file) {
  const auto t = load_topology(topo_file);
  const auto rt = load_tables(dir);
  if (rt.num_ranks() != t.num_ranks() || rt.ifaces_per_rank() != t.ifaces_per_rank()) {
    throw ConfigError("tables are for " + std::to_string(rt.num_ranks()) + " ranks x " +
                      std::to_string(rt.ifaces_per_rank()) + " ifaces, topology has " +
                      std::to_string(t.num_ranks()) + " x " + std::to_string(t.ifaces_per_rank()));
  }
  int pairs = 0;
  for (int s = 0; s < t.num_ranks(); ++s) {
    for (int d = 0; d < t.num_ranks(); ++d) {
      if (s == d) continue;
      for (int j = 0; j < t.ifaces_per_rank(); ++j) walk_route(t, rt, s, d, j);
      ++pairs;
    }
  }
  std::cout << "reachability: " << pairs << " ordered pairs ok\n";
  const auto report = check_deadlock_free(t, rt);
  if (!report.acyclic) {
    std::cout << "deadlock: channel-dependency cycle:";
    for (const auto& e : report.cycle) std::cout << ' ' << to_string(e);
    std::cout << '\n';
    return 2;
  }
  std::cout << "deadlock-free: channel-dependency graph acyclic, order:";
  for (const auto& e : report.order) std::cout << ' ' << to_string(e);
  std::cout << '\n';
  return 0;
}

int run_bench(const std::string& name, const std::string& config, std::string out) {
  auto cfg = harness::load_bench_config(config);
  if (!name.empty()) cfg.name = name;
  if (out.empty()) out = cfg.output;
  if (out.empty()) {
    harness::run_benchmark(cfg, std::cout);
  } else {
    auto os = harness::open_output(out);
    harness::run_benchmark(cfg, os);
    std::cout << "wrote " << out << '\n';
  }
  return 0;
}

nlohmann::json load_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

/// Writes `v` as CSV, `row` values per line. `path` is relative to the config file.
void write_values(const std::string& config, const std::string& path, const std::vector<float>& v, int row) {
  const fs::path p(path);
  auto os = harness::open_output(p.is_absolute() ? path : (fs::path(config).parent_path() / p).string());
  os.precision(9);
  for (std::size_t i = 0; i < v.size(); ++i) {
    os << v[i] << ((i + 1) % static_cast<std::size_t>(row) == 0 ? '\n' : ',');
  }
}

int app_stencil(const std::string& config) {
  const auto j = load_json(config);
  const auto run = run_config_from_json(j, std::filesystem::path(config).parent_path());
  const auto sc = harness::stencil_config_from_json(j.value("stencil", nlohmann::json::object()));
  const auto initial = harness::stencil_initial_grid(sc, j.value("seed", 1u));
  Runtime rt = Runtime::from_config(run);
  const auto res = harness::app_stencil(rt, sc, initial);
  const bool match = res.grid == harness::stencil_reference(sc, initial);
  const auto hide = harness::stencil_hiding_check(sc);
  std::cout << "stencil " << sc.nx << "x" << sc.ny << " on " << sc.rx << "x" << sc.ry << " ranks, T=" << sc.timesteps
            << ": " << res.cycles << " cycles, " << (match ? "matches" : "DIFFERS FROM") << " the reference\n"
            << "hiding check: " << hide.lhs << " >= " << hide.rhs << " is " << (hide.hidden ? "true" : "false") << '\n';
  if (j.contains("output")) write_values(config, j.at("output").get<std::string>(), res.grid, sc.ny);
  return match ? 0 : 1;
}

int app_gesummv(const std::string& config) {
  const auto j = load_json(config);
  const auto run = run_config_from_json(j, std::filesystem::path(config).parent_path());
  const auto g = j.value("gesummv", nlohmann::json::object());
  const auto p = harness::random_gesummv(g.value("n", std::size_t{16}), g.value("seed", 1u));
  Runtime rt = Runtime::from_config(run);
  const auto res = harness::app_gesummv(rt, p);
  const bool match = res.y == harness::gesummv_reference(p);
  std::cout << "gesummv N=" << p.n << ": " << res.cycles << " cycles, " << (match ? "matches" : "DIFFERS FROM")
            << " the reference\n";
  if (j.contains("output")) write_values(config, j.at("output").get<std::string>(), res.y, 1);
  return match ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming message interface simulator"};
  app.require_subcommand(1);

  auto* topo = app.add_subcommand("topo", "topology files");
  topo->require_subcommand(1);
  std::string topo_file;
  auto* validate = topo->add_subcommand("validate", "check a topology file");
  validate->add_option("file", topo_file)->required();
  std::string shape, out;
  int ranks = 0, rows = 0, cols = 0, ifaces = 4;
  auto* gen = topo->add_subcommand("gen", "generate a bus or torus");
  gen->add_option("--shape", shape)->required();
  gen->add_option("--ranks", ranks)->required();
  gen->add_option("--rows", rows);
  gen->add_option("--cols", cols);
  gen->add_option("--ifaces", ifaces, "interfaces per rank")->capture_default_str();
  gen->add_option("-o,--output", out)->required();

  auto* routes = app.add_subcommand("routes", "routing tables");
  routes->require_subcommand(1);
  std::string ports_file, scheme = "updown", dir;
  auto* rgen = routes->add_subcommand("gen", "generate per-rank table files");
  rgen->add_option("--topology", topo_file)->required();
  rgen->add_option("--ports", ports_file)->required();
  rgen->add_option("--scheme", scheme, "updown or shortest")->capture_default_str();
  rgen->add_option("-o,--output", dir)->required();
  auto* rcheck = routes->add_subcommand("check", "check reachability and deadlock freedom");
  rcheck->add_option("dir", dir)->required();
  rcheck->add_option("--topology", topo_file)->required();

  std::string bench_name, config;
  auto* bench = app.add_subcommand("bench", "run a benchmark (bandwidth, latency, injection, collectives)");
  bench->add_option("name", bench_name)->required();
  bench->add_option("--config", config)->required();
  bench->add_option("-o,--output", out);

  auto* appcmd = app.add_subcommand("app", "run an application");
  appcmd->require_subcommand(1);
  auto* stencil = appcmd->add_subcommand("stencil", "2D stencil with halo exchange");
  stencil->add_option("--config", config)->required();
  auto* gesummv = appcmd->add_subcommand("gesummv", "two-rank GESUMMV");
  gesummv->add_option("--config", config)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return topo_validate(topo_file);
    if (gen->parsed()) return topo_gen(shape, ranks, rows, cols, ifaces, out);
    if (rgen->parsed()) return routes_gen(topo_file, ports_file, scheme, dir);
    if (rcheck->parsed()) return routes_check(dir, topo_file);
    if (bench->parsed()) return run_bench(bench_name, config, out);
    if (stencil->parsed()) return app_stencil(config);
    if (gesummv->parsed()) return app_gesummv(config);
  } catch (const smi::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
