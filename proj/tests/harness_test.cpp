#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "smi/harness/bench.hpp"
#include "smi/harness/gesummv.hpp"
#include "smi/harness/stencil.hpp"
#include "support.hpp"

using namespace smi;
using namespace smi::harness;

namespace {

RunConfig stencil_run(std::size_t k = 128) {
  RunConfig c;
  for (int p : {kWestPort, kEastPort, kNorthPort, kSouthPort}) c.async_degree[p] = k;
  return c;
}

StencilConfig grid(int n, int rx, int ry, int steps) {
  StencilConfig c;
  c.nx = c.ny = n;
  c.rx = rx;
  c.ry = ry;
  c.timesteps = steps;
  return c;
}

}  // namespace

TEST(Bandwidth, FullPacketsAreSevenEighthsEfficient) {
  for (int h : {1, 4, 7}) {
    const auto row = measure_bandwidth(make_bus(8), {}, 700, h);
    EXPECT_EQ(row.packets, 100u);
    EXPECT_EQ(row.efficiency, 0.875);
  }
}

TEST(Bandwidth, HopCountDoesNotChangeThroughput) {
  const auto a = measure_bandwidth(make_bus(8), {}, 700, 1);
  const auto b = measure_bandwidth(make_bus(8), {}, 700, 7);
  EXPECT_EQ(a.cycles_per_packet, b.cycles_per_packet);
  EXPECT_EQ(a.payload_bytes_per_cycle, b.payload_bytes_per_cycle);
}

TEST(Bandwidth, SingleElementMessage) {
  EXPECT_EQ(measure_bandwidth(make_bus(8), {}, 1, 1).efficiency, 4.0 / 32.0);
}

TEST(Bandwidth, NeedsALongEnoughBus) {
  EXPECT_THROW(measure_bandwidth(make_bus(4), {}, 7, 7), ConfigError);
  EXPECT_THROW(measure_bandwidth(make_torus(2, 4), {}, 7, 7), ConfigError);
}

TEST(Latency, AffineInHops) {
  std::vector<double> lat;
  for (int h = 1; h <= 7; ++h) {
    const auto row = measure_latency(make_bus(8), {}, h, 4);
    EXPECT_EQ(row.hops, h);
    lat.push_back(row.cycles);
  }
  const double step = lat[1] - lat[0];
  EXPECT_GT(step, 0);
  for (std::size_t i = 1; i < lat.size(); ++i) EXPECT_EQ(lat[i] - lat[i - 1], step) << i;
  EXPECT_EQ(lat[3] - lat[0], 3 * step);
}

TEST(Latency, LoopbackOnOneRank) {
  const auto zero = measure_latency(make_bus(8), {}, 0, 3);
  EXPECT_EQ(zero.hops, 0);
  EXPECT_GT(zero.cycles, 0);
  EXPECT_LT(zero.cycles, measure_latency(make_bus(8), {}, 1, 3).cycles);
}

TEST(Injection, MatchesPollingModel) {
  for (int r : {1, 4, 8, 16}) {
    const auto row = measure_injection(make_bus(2), {}, r);
    EXPECT_EQ(row.cycles_per_packet, static_cast<double>(r + 4) / r) << "R=" << r;
  }
}

TEST(CollectiveBench, ReduceGrowsWithDiameter) {
  for (std::size_t s : {100u, 256u}) {
    EXPECT_GT(measure_collective(make_bus(8), {}, PortKind::kReduce, s),
              measure_collective(make_torus(2, 4), {}, PortKind::kReduce, s));
  }
}

TEST(CollectiveBench, RowsAndCsv) {
  BenchConfig cfg;
  cfg.name = "collectives";
  cfg.sizes = {1, 16};
  const auto rows = bench_collectives(cfg);
  EXPECT_EQ(rows.size(), 2u * 4u * 2u);
  std::ostringstream a, b;
  run_benchmark(cfg, a);
  run_benchmark(cfg, b);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().substr(0, a.str().find('\n')), "kind,ranks,topology,size,cycles");
}

TEST(BenchConfig, ParsesAndValidates) {
  const auto cfg = bench_config_from_json(
      nlohmann::json::parse(R"({"benchmark":"latency","sizes":[1,2],"repetitions":2,"output":"x.csv"})"));
  EXPECT_EQ(cfg.name, "latency");
  EXPECT_EQ(cfg.sizes, (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(bench_config_from_json(nlohmann::json::parse(R"({"sizes":[0]})")), ConfigError);
  EXPECT_THROW(bench_config_from_json(nlohmann::json::parse(R"({"repetitions":0})")), ConfigError);
  EXPECT_THROW(bench_config_from_json(nlohmann::json::parse(R"({"mode":"concurrent"})")), ConfigError);
  std::ostringstream os;
  BenchConfig bad;
  bad.name = "throughput";
  EXPECT_THROW(run_benchmark(bad, os), ConfigError);
}

TEST(Stencil, MatchesIndependentOracle) {
  const auto c = grid(16, 2, 2, 4);
  const auto init = stencil_initial_grid(c, 1);
  auto rt = make_runtime(make_torus(2, 2), application_ports(), stencil_run());
  const auto res = app_stencil(rt, c, init);
  EXPECT_EQ(support::bytes_of(res.grid), support::bytes_of(support::stencil_oracle(16, 16, 4, init)));
  EXPECT_EQ(support::bytes_of(stencil_reference(c, init)), support::bytes_of(res.grid));
}

TEST(Stencil, ConstantGridStaysConstant) {
  const auto c = grid(16, 2, 4, 5);
  const std::vector<float> init(256, 3.5f);
  auto rt = make_runtime(make_bus(8), application_ports(), stencil_run());
  for (float v : app_stencil(rt, c, init).grid) EXPECT_EQ(v, 3.5f);
}

TEST(Stencil, BusAndTorusAgree) {
  const auto c = grid(32, 2, 4, 6);
  const auto init = stencil_initial_grid(c, 9);
  auto bus = make_runtime(make_bus(8), application_ports(), stencil_run());
  auto torus = make_runtime(make_torus(2, 4), application_ports(), stencil_run());
  const auto a = app_stencil(bus, c, init);
  const auto b = app_stencil(torus, c, init);
  EXPECT_EQ(support::bytes_of(a.grid), support::bytes_of(b.grid));
  EXPECT_EQ(support::bytes_of(a.grid), support::bytes_of(support::stencil_oracle(32, 32, 6, init)));
}

TEST(Stencil, WideHalosAndSpareRanks) {
  StencilConfig c = grid(24, 2, 2, 3);
  c.hx = 2;
  c.hy = 3;
  const auto init = stencil_initial_grid(c, 4);
  auto rt = make_runtime(make_bus(8), application_ports(), stencil_run());
  EXPECT_EQ(support::bytes_of(app_stencil(rt, c, init).grid),
            support::bytes_of(support::stencil_oracle(24, 24, 3, init)));
}

TEST(Stencil, ConfigErrors) {
  auto rt = make_runtime(make_bus(4), application_ports(), stencil_run());
  EXPECT_THROW(validate(grid(15, 2, 2, 1)), ConfigError);
  EXPECT_THROW(app_stencil(rt, grid(16, 2, 4, 1), std::vector<float>(256)), ConfigError);  // 8 ranks on 4
  auto small_k = make_runtime(make_bus(4), application_ports(), stencil_run(14));
  EXPECT_THROW(app_stencil(small_k, grid(16, 2, 2, 1), std::vector<float>(256)), ConfigError);
  EXPECT_THROW(stencil_config_from_json(nlohmann::json::parse(R"({"nx":16,"ny":16,"rx":3})")), ConfigError);
  EXPECT_EQ(stencil_config_from_json(nlohmann::json::parse(R"({"nx":8,"ny":8,"T":7})")).timesteps, 7);
}

TEST(HidingCheck, Examples) {
  StencilConfig big = grid(4096, 1, 1, 1);
  const auto a = stencil_hiding_check(big);
  EXPECT_EQ(a.lhs, 4094.0 * 4094.0);
  EXPECT_EQ(a.rhs, 4.0 * 8192.0);
  EXPECT_TRUE(a.hidden);

  const auto b = stencil_hiding_check(grid(4, 1, 1, 1));
  EXPECT_EQ(b.lhs, 4.0);
  EXPECT_EQ(b.rhs, 32.0);
  EXPECT_FALSE(b.hidden);

  StencilConfig none = grid(4, 1, 1, 1);
  none.hx = none.hy = 0;
  const auto c = stencil_hiding_check(none);
  EXPECT_EQ(c.rhs, 0.0);
  EXPECT_TRUE(c.hidden);

  big.b_mem = 0;
  EXPECT_THROW(stencil_hiding_check(big), ConfigError);
}

TEST(Gesummv, IdentityMatrices) {
  GesummvProblem p;
  p.n = 4;
  p.alpha = p.beta = 1.0f;
  p.a.assign(16, 0.0f);
  for (int i = 0; i < 4; ++i) p.a[static_cast<std::size_t>(5 * i)] = 1.0f;
  p.b = p.a;
  p.x = {1, 2, 3, 4};
  auto rt = make_runtime(make_bus(2), application_ports(), {});
  EXPECT_EQ(app_gesummv(rt, p).y, (std::vector<float>{2, 4, 6, 8}));
}

TEST(Gesummv, ZeroAlphaIgnoresA) {
  auto p = random_gesummv(8, 3);
  p.alpha = 0.0f;
  auto q = p;
  for (auto& v : q.a) v = 1e6f;
  auto rt = make_runtime(make_bus(2), application_ports(), {});
  EXPECT_EQ(app_gesummv(rt, p).y, app_gesummv(rt, q).y);
}

TEST(Gesummv, RandomInstancesMatchOracle) {
  RunConfig cfg;
  cfg.trace = true;
  auto rt = make_runtime(make_torus(2, 2), application_ports(), cfg);
  for (std::size_t n : {4u, 16u, 64u}) {
    const auto p = random_gesummv(n, static_cast<std::uint32_t>(n));
    const auto res = app_gesummv(rt, p);
    EXPECT_EQ(support::bytes_of(res.y), support::bytes_of(support::gesummv_oracle(n, p.alpha, p.beta, p.a, p.b, p.x)));
    EXPECT_EQ(support::elements_injected(res.trace, 0, 1, kGesummvPort), n);
    EXPECT_EQ(support::count_injected(res.trace, 0, 1, kGesummvPort, OpType::kData), (n + 6) / 7);
  }
  const auto p = random_gesummv(16, 1);
  EXPECT_THROW(
      {
        auto bad = p;
        bad.x.pop_back();
        app_gesummv(rt, bad);
      },
      ConfigError);
}
