#pragma once

// SPMD 2D stencil with halo exchange. The N_x x N_y grid (row-major, x is the
// row) is split into R_x x R_y blocks; rank r owns block (r / R_y, r % R_y).
// Each timestep every rank sends its edge strips to its existing neighbours,
// receives their strips into its ghost cells, then applies a 4-point average
// (self excluded). Cells outside the global domain replicate the nearest
// edge cell. After the last step the blocks are gathered on rank 0.
//
// Halo messages are eager; a neighbour may run one timestep ahead, so the
// stencil ports need k of at least two halo messages (stencil_async_degree).

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smi/channel.hpp"
#include "smi/collectives.hpp"
#include "smi/harness/common.hpp"

namespace smi::harness {

struct StencilConfig {
  int nx = 16;
  int ny = 16;
  int hx = 1;
  int hy = 1;
  int timesteps = 1;
  int rx = 1;
  int ry = 1;
  double b_mem = 1.0;   // bytes per cycle
  double b_comm = 1.0;  // bytes per cycle
};

inline void validate(const StencilConfig& c) {
  if (c.nx < 1 || c.ny < 1 || c.rx < 1 || c.ry < 1 || c.timesteps < 0) {
    throw ConfigError("stencil sizes must be positive");
  }
  if (c.nx % c.rx != 0 || c.ny % c.ry != 0) {
    throw ConfigError("a " + std::to_string(c.nx) + "x" + std::to_string(c.ny) + " grid does not divide onto " +
                      std::to_string(c.rx) + "x" + std::to_string(c.ry) + " ranks");
  }
  if (c.hx < 1 || c.hy < 1) throw ConfigError("halo widths must be at least 1");
  if (c.hx > c.nx / c.rx || c.hy > c.ny / c.ry) throw ConfigError("halo is wider than a rank's block");
}

inline StencilConfig stencil_config_from_json(const nlohmann::json& j) {
  StencilConfig c;
  try {
    c.nx = j.value("nx", c.nx);
    c.ny = j.value("ny", c.ny);
    c.hx = j.value("hx", c.hx);
    c.hy = j.value("hy", c.hy);
    c.timesteps = j.value("T", c.timesteps);
    c.rx = j.value("rx", c.rx);
    c.ry = j.value("ry", c.ry);
    c.b_mem = j.value("b_mem", c.b_mem);
    c.b_comm = j.value("b_comm", c.b_comm);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("stencil configuration: ") + e.what());
  }
  validate(c);
  return c;
}

struct HidingCheck {
  double lhs = 0;  // (N_x - 2h_x)(N_y - 2h_y) / B_mem
  double rhs = 0;  // 4(N_x h_y + N_y h_x) / B_comm
  bool hidden = false;
};

/// Whether reading the non-halo region from memory takes at least as long as
/// moving the halos, i.e. whether communication can be fully hidden.
inline HidingCheck stencil_hiding_check(const StencilConfig& c) {
  if (!(c.b_mem > 0) || !(c.b_comm > 0)) throw ConfigError("bandwidths must be positive");
  HidingCheck h;
  h.lhs = static_cast<double>(c.nx - 2 * c.hx) * static_cast<double>(c.ny - 2 * c.hy) / c.b_mem;
  h.rhs = 4.0 * (static_cast<double>(c.nx) * c.hy + static_cast<double>(c.ny) * c.hx) / c.b_comm;
  h.hidden = h.lhs >= h.rhs;
  return h;
}

inline std::vector<float> stencil_initial_grid(const StencilConfig& c, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> g(static_cast<std::size_t>(c.nx) * static_cast<std::size_t>(c.ny));
  for (auto& v : g) v = dist(gen);
  return g;
}

/// Single-rank execution.
inline std::vector<float> stencil_reference(const StencilConfig& c, std::vector<float> grid) {
  const int nx = c.nx, ny = c.ny;
  std::vector<float> next(grid.size());
  auto at = [&](int i, int j) {
    i = std::clamp(i, 0, nx - 1);
    j = std::clamp(j, 0, ny - 1);
    return grid[static_cast<std::size_t>(i * ny + j)];
  };
  for (int t = 0; t < c.timesteps; ++t) {
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) {
        next[static_cast<std::size_t>(i * ny + j)] = 0.25f * ((at(i - 1, j) + at(i + 1, j)) + (at(i, j - 1) + at(i, j + 1)));
      }
    }
    grid.swap(next);
  }
  return grid;
}

/// Elements in the largest halo message.
inline std::size_t stencil_halo_elems(const StencilConfig& c) {
  const int bx = c.nx / c.rx, by = c.ny / c.ry;
  return static_cast<std::size_t>(std::max(c.hy * bx, c.hx * by));
}

/// Smallest k for the four stencil ports: room for two whole halo messages.
inline std::size_t stencil_async_degree(const StencilConfig& c) {
  const std::size_t m = max_elems_v<float>;
  return 2 * m * ((stencil_halo_elems(c) + m - 1) / m);
}

/// The rank procedure. Identical on every rank; neighbours are computed from
/// the rank id. `result` is filled on rank 0.
inline Program stencil_program(const StencilConfig& c, const std::vector<float>& initial, std::vector<float>& result) {
  return [c, &initial, &result](RankContext& ctx) {
    const int ranks = c.rx * c.ry;
    if (ctx.rank() >= ranks) return;  // spare ranks of a larger topology idle
    const int bx = c.nx / c.rx, by = c.ny / c.ry;
    const int hx = c.hx, hy = c.hy;
    const int r_x = ctx.rank() / c.ry;
    const int r_y = ctx.rank() % c.ry;
    const int px = bx + 2 * hx, py = by + 2 * hy;  // padded block
    std::vector<float> cur(static_cast<std::size_t>(px * py)), nxt(cur.size());
    auto cell = [&](std::vector<float>& g, int i, int j) -> float& {
      return g[static_cast<std::size_t>((i + hx) * py + (j + hy))];
    };
    for (int i = 0; i < bx; ++i) {
      for (int j = 0; j < by; ++j) {
        cell(cur, i, j) = initial[static_cast<std::size_t>((r_x * bx + i) * c.ny + (r_y * by + j))];
      }
    }
    const bool has_w = r_y > 0, has_e = r_y < c.ry - 1, has_n = r_x > 0, has_s = r_x < c.rx - 1;
    const int west = ctx.rank() - 1, east = ctx.rank() + 1, north = ctx.rank() - c.ry, south = ctx.rank() + c.ry;
    const auto ew = static_cast<std::size_t>(hy * bx), ns = static_cast<std::size_t>(hx * by);

    for (int t = 0; t < c.timesteps; ++t) {
      // Our west strip is the west neighbour's east halo, and so on.
      if (has_w) {
        auto ch = open_send_channel<float>(ctx, ew, west, kEastPort);
        for (int i = 0; i < bx; ++i)
          for (int j = 0; j < hy; ++j) ch.push(cell(cur, i, j));
      }
      if (has_e) {
        auto ch = open_send_channel<float>(ctx, ew, east, kWestPort);
        for (int i = 0; i < bx; ++i)
          for (int j = by - hy; j < by; ++j) ch.push(cell(cur, i, j));
      }
      if (has_n) {
        auto ch = open_send_channel<float>(ctx, ns, north, kSouthPort);
        for (int i = 0; i < hx; ++i)
          for (int j = 0; j < by; ++j) ch.push(cell(cur, i, j));
      }
      if (has_s) {
        auto ch = open_send_channel<float>(ctx, ns, south, kNorthPort);
        for (int i = bx - hx; i < bx; ++i)
          for (int j = 0; j < by; ++j) ch.push(cell(cur, i, j));
      }

      if (has_w) {
        auto ch = open_recv_channel<float>(ctx, ew, west, kWestPort);
        for (int i = 0; i < bx; ++i)
          for (int j = -hy; j < 0; ++j) cell(cur, i, j) = ch.pop();
      } else {
        for (int i = 0; i < bx; ++i) cell(cur, i, -1) = cell(cur, i, 0);
      }
      if (has_e) {
        auto ch = open_recv_channel<float>(ctx, ew, east, kEastPort);
        for (int i = 0; i < bx; ++i)
          for (int j = by; j < by + hy; ++j) cell(cur, i, j) = ch.pop();
      } else {
        for (int i = 0; i < bx; ++i) cell(cur, i, by) = cell(cur, i, by - 1);
      }
      if (has_n) {
        auto ch = open_recv_channel<float>(ctx, ns, north, kNorthPort);
        for (int i = -hx; i < 0; ++i)
          for (int j = 0; j < by; ++j) cell(cur, i, j) = ch.pop();
      } else {
        for (int j = 0; j < by; ++j) cell(cur, -1, j) = cell(cur, 0, j);
      }
      if (has_s) {
        auto ch = open_recv_channel<float>(ctx, ns, south, kSouthPort);
        for (int i = bx; i < bx + hx; ++i)
          for (int j = 0; j < by; ++j) cell(cur, i, j) = ch.pop();
      } else {
        for (int j = 0; j < by; ++j) cell(cur, bx, j) = cell(cur, bx - 1, j);
      }

      for (int i = 0; i < bx; ++i) {
        for (int j = 0; j < by; ++j) {
          cell(nxt, i, j) = 0.25f * ((cell(cur, i - 1, j) + cell(cur, i + 1, j)) +
                                     (cell(cur, i, j - 1) + cell(cur, i, j + 1)));
        }
      }
      cur.swap(nxt);
    }

    const auto block = static_cast<std::size_t>(bx * by);
    auto g = open_gather_channel<float>(ctx, block, kGridGatherPort, 0, Communicator::world(ranks));
    if (ctx.rank() != 0) {
      for (int i = 0; i < bx; ++i)
        for (int j = 0; j < by; ++j) {
          float unused = 0;
          g.gather(cell(cur, i, j), unused);
        }
      return;
    }
    result.assign(static_cast<std::size_t>(c.nx) * static_cast<std::size_t>(c.ny), 0.0f);
    for (int r = 0; r < ranks; ++r) {
      const int ox = (r / c.ry) * bx, oy = (r % c.ry) * by;
      for (int i = 0; i < bx; ++i)
        for (int j = 0; j < by; ++j) {
          float v = 0;
          g.gather(r == 0 ? cell(cur, i, j) : 0.0f, v);
          result[static_cast<std::size_t>((ox + i) * c.ny + (oy + j))] = v;
        }
    }
  };
}

struct StencilResult {
  std::vector<float> grid;
  std::uint64_t cycles = 0;
};

/// Runs the stencil on ranks 0 .. R_x*R_y-1 of `rt`; further ranks idle.
inline StencilResult app_stencil(Runtime& rt, const StencilConfig& c, const std::vector<float>& initial) {
  validate(c);
  if (rt.num_ranks() < c.rx * c.ry) {
    throw ConfigError("stencil on " + std::to_string(c.rx) + "x" + std::to_string(c.ry) + " ranks needs a " +
                      std::to_string(c.rx * c.ry) + "-rank topology or larger, got " + std::to_string(rt.num_ranks()));
  }
  if (initial.size() != static_cast<std::size_t>(c.nx) * static_cast<std::size_t>(c.ny)) {
    throw ConfigError("initial grid has the wrong size");
  }
  for (int p : {kWestPort, kEastPort, kNorthPort, kSouthPort}) {
    require_port(rt.ports(), p, PortKind::kP2P, DataType::kFloat);
    if (rt.async_degree(p) < stencil_async_degree(c)) {
      throw ConfigError("stencil port " + std::to_string(p) + " needs k >= " + std::to_string(stencil_async_degree(c)));
    }
  }
  require_port(rt.ports(), kGridGatherPort, PortKind::kGather, DataType::kFloat);
  StencilResult res;
  res.cycles = rt.run_spmd(stencil_program(c, initial, res.grid)).cycles;
  return res;
}

}  // namespace smi::harness
