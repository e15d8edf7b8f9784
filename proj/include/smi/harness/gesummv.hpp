#pragma once

// y = alpha*A*x + beta*B*x split over two ranks (MPMD): rank 0 holds A and
// streams the elements of A*x to rank 1, which holds B and produces y.
// Both ranks accumulate dot products left to right in single precision, the
// same order as the reference.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "smi/channel.hpp"
#include "smi/harness/common.hpp"

namespace smi::harness {

struct GesummvProblem {
  std::size_t n = 0;
  float alpha = 1.0f;
  float beta = 1.0f;
  std::vector<float> a;  // n x n, row-major
  std::vector<float> b;  // n x n, row-major
  std::vector<float> x;  // n
};

inline void validate(const GesummvProblem& p) {
  if (p.a.size() != p.n * p.n || p.b.size() != p.n * p.n || p.x.size() != p.n) {
    throw ConfigError("GESUMMV operands do not match N = " + std::to_string(p.n));
  }
}

inline GesummvProblem random_gesummv(std::size_t n, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  GesummvProblem p;
  p.n = n;
  p.alpha = dist(gen);
  p.beta = dist(gen);
  p.a.resize(n * n);
  p.b.resize(n * n);
  p.x.resize(n);
  for (auto& v : p.a) v = dist(gen);
  for (auto& v : p.b) v = dist(gen);
  for (auto& v : p.x) v = dist(gen);
  return p;
}

namespace detail {

inline float row_dot(const std::vector<float>& m, const std::vector<float>& x, std::size_t n, std::size_t row) {
  float acc = 0.0f;
  for (std::size_t j = 0; j < n; ++j) acc += m[row * n + j] * x[j];
  return acc;
}

}  // namespace detail

inline std::vector<float> gesummv_reference(const GesummvProblem& p) {
  validate(p);
  std::vector<float> y(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    const float ax = detail::row_dot(p.a, p.x, p.n, i);
    const float bx = detail::row_dot(p.b, p.x, p.n, i);
    y[i] = p.alpha * ax + p.beta * bx;
  }
  return y;
}

struct GesummvResult {
  std::vector<float> y;
  std::uint64_t cycles = 0;
  std::vector<TraceEvent> trace;  // when the run config enables tracing
};

/// Runs on ranks 0 and 1 of `rt`; other ranks stay idle.
inline GesummvResult app_gesummv(Runtime& rt, const GesummvProblem& p) {
  validate(p);
  if (rt.num_ranks() < 2) throw ConfigError("GESUMMV needs two ranks");
  require_port(rt.ports(), kGesummvPort, PortKind::kP2P, DataType::kFloat);
  GesummvResult res;
  res.y.resize(p.n);
  std::vector<Program> progs(2);
  progs[0] = [&](RankContext& ctx) {
    auto ch = open_send_channel<float>(ctx, p.n, 1, kGesummvPort);
    for (std::size_t i = 0; i < p.n; ++i) ch.push(detail::row_dot(p.a, p.x, p.n, i));
  };
  progs[1] = [&](RankContext& ctx) {
    auto ch = open_recv_channel<float>(ctx, p.n, 0, kGesummvPort);
    for (std::size_t i = 0; i < p.n; ++i) {
      const float bx = detail::row_dot(p.b, p.x, p.n, i);
      res.y[i] = p.alpha * ch.pop() + p.beta * bx;
    }
  };
  auto rep = rt.run(progs);
  res.cycles = rep.cycles;
  res.trace = std::move(rep.trace);
  return res;
}

}  // namespace smi::harness
