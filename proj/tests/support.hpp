#pragma once

// Reference implementations, trace checks and randomized case runners shared
// by the unit tests and the acceptance program. Nothing here calls into the
// library code it is used to check, apart from running the runtime itself.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <deque>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "smi/channel.hpp"
#include "smi/collectives.hpp"
#include "smi/harness/common.hpp"
#include "smi/runtime.hpp"
#include "smi/topology.hpp"

namespace support {

using namespace smi;

// ------------------------------------------------------------------ graphs

/// All-pairs hop distances by breadth-first search over the connection list.
inline std::vector<std::vector<int>> bfs_distances(const TopologySpec& t) {
  const int n = t.num_ranks();
  std::vector<std::vector<int>> nb(static_cast<std::size_t>(n));
  for (const auto& [a, b] : t.connections()) {
    nb[a.rank].push_back(b.rank);
    nb[b.rank].push_back(a.rank);
  }
  std::vector<std::vector<int>> dist(static_cast<std::size_t>(n), std::vector<int>(static_cast<std::size_t>(n), -1));
  for (int s = 0; s < n; ++s) {
    std::deque<int> q{s};
    dist[s][s] = 0;
    while (!q.empty()) {
      const int x = q.front();
      q.pop_front();
      for (int y : nb[x]) {
        if (dist[s][y] < 0) {
          dist[s][y] = dist[s][x] + 1;
          q.push_back(y);
        }
      }
    }
  }
  return dist;
}

/// Random connected topology: a random spanning tree plus random extra links,
/// each on a random free iface.
inline TopologySpec random_connected(std::mt19937& gen, int max_ranks = 16, int max_ifaces = 4) {
  const int n = std::uniform_int_distribution<int>(2, max_ranks)(gen);
  const int nif = std::uniform_int_distribution<int>(2, max_ifaces)(gen);
  std::vector<std::vector<int>> free(static_cast<std::size_t>(n));
  for (auto& f : free) {
    for (int i = 0; i < nif; ++i) f.push_back(i);
  }
  auto take = [&](int r) {
    auto& f = free[r];
    const auto k = std::uniform_int_distribution<std::size_t>(0, f.size() - 1)(gen);
    const int iface = f[k];
    f.erase(f.begin() + static_cast<long>(k));
    return iface;
  };
  std::vector<TopologySpec::Connection> conns;
  std::set<std::pair<int, int>> linked;
  for (int r = 1; r < n; ++r) {
    std::vector<int> cand;
    for (int o = 0; o < r; ++o) {
      if (!free[o].empty()) cand.push_back(o);
    }
    const int o = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(gen)];
    conns.emplace_back(Endpoint{o, take(o)}, Endpoint{r, take(r)});
    linked.insert({o, r});
  }
  const int extra = std::uniform_int_distribution<int>(0, n)(gen);
  for (int e = 0; e < extra; ++e) {
    const int a = std::uniform_int_distribution<int>(0, n - 1)(gen);
    const int b = std::uniform_int_distribution<int>(0, n - 1)(gen);
    if (a == b || free[a].empty() || free[b].empty() || linked.count({std::min(a, b), std::max(a, b)})) continue;
    conns.emplace_back(Endpoint{a, take(a)}, Endpoint{b, take(b)});
    linked.insert({std::min(a, b), std::max(a, b)});
  }
  return TopologySpec(n, nif, std::move(conns));
}

// ------------------------------------------------------------------ values

template <class T>
std::vector<T> random_values(std::size_t n, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::vector<T> v(n);
  for (auto& x : v) {
    if constexpr (std::is_floating_point_v<T>) {
      x = static_cast<T>(std::uniform_real_distribution<double>(-1000.0, 1000.0)(gen));
    } else {
      x = static_cast<T>(std::uniform_int_distribution<long>(std::numeric_limits<T>::min(),
                                                             std::numeric_limits<T>::max())(gen));
    }
  }
  return v;
}

template <class T>
std::vector<std::uint8_t> bytes_of(const std::vector<T>& v) {
  std::vector<std::uint8_t> b(v.size() * sizeof(T));
  if (!v.empty()) std::memcpy(b.data(), v.data(), b.size());
  return b;
}

template <class F>
void visit_dtype(DataType t, F&& f) {
  switch (t) {
    case DataType::kChar: f(char{}); break;
    case DataType::kShort: f(std::int16_t{}); break;
    case DataType::kInt: f(std::int32_t{}); break;
    case DataType::kFloat: f(float{}); break;
    case DataType::kDouble: f(double{}); break;
  }
}

// ---------------------------------------------------------------- oracles

inline float fold(ReduceOp op, float acc, float v) {
  switch (op) {
    case ReduceOp::kAdd: return acc + v;
    case ReduceOp::kMax: return acc < v ? v : acc;
    case ReduceOp::kMin: return v < acc ? v : acc;
  }
  return acc;
}

/// Element-wise reduction over ranks, folded in ascending rank order.
inline std::vector<float> reduce_oracle(const std::vector<std::vector<float>>& contrib, ReduceOp op) {
  std::vector<float> out = contrib.at(0);
  for (std::size_t r = 1; r < contrib.size(); ++r) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fold(op, out[i], contrib[r][i]);
  }
  return out;
}

/// Sequential 4-point stencil on a grid padded by one replicated edge cell.
inline std::vector<float> stencil_oracle(int nx, int ny, int steps, std::vector<float> grid) {
  const int py = ny + 2;
  std::vector<float> pad(static_cast<std::size_t>((nx + 2) * py));
  auto P = [&](int i, int j) -> float& { return pad[static_cast<std::size_t>((i + 1) * py + (j + 1))]; };
  for (int t = 0; t < steps; ++t) {
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) P(i, j) = grid[static_cast<std::size_t>(i * ny + j)];
    for (int i = 0; i < nx; ++i) {
      P(i, -1) = P(i, 0);
      P(i, ny) = P(i, ny - 1);
    }
    for (int j = 0; j < ny; ++j) {
      P(-1, j) = P(0, j);
      P(nx, j) = P(nx - 1, j);
    }
    for (int i = 0; i < nx; ++i) {
      for (int j = 0; j < ny; ++j) {
        const float n = P(i - 1, j), s = P(i + 1, j), w = P(i, j - 1), e = P(i, j + 1);
        grid[static_cast<std::size_t>(i * ny + j)] = 0.25f * ((n + s) + (w + e));
      }
    }
  }
  return grid;
}

/// y = alpha*A*x + beta*B*x with dot products accumulated left to right.
inline std::vector<float> gesummv_oracle(std::size_t n, float alpha, float beta, const std::vector<float>& a,
                                         const std::vector<float>& b, const std::vector<float>& x) {
  std::vector<float> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    float sa = 0.0f, sb = 0.0f;
    for (std::size_t j = 0; j < n; ++j) {
      sa = sa + a[i * n + j] * x[j];
      sb = sb + b[i * n + j] * x[j];
    }
    const float ta = alpha * sa;
    const float tb = beta * sb;
    y[i] = ta + tb;
  }
  return y;
}

// ------------------------------------------------------------ trace checks

inline bool is_inject(const TraceEvent& e, int rank, int port, OpType op) {
  return e.unit == UnitKind::kApp && e.kind == TraceKind::kInject && e.rank == rank && e.index == port &&
         e.header.op == op;
}
inline bool is_deliver(const TraceEvent& e, int rank, int port, OpType op) {
  return e.unit == UnitKind::kApp && e.kind == TraceKind::kDeliver && e.rank == rank && e.index == port &&
         e.header.op == op;
}

/// Largest number of DATA packets src has injected towards dst on `port`
/// that dst has not yet answered with a CREDIT, over the whole trace.
inline std::size_t max_unacked(const std::vector<TraceEvent>& trace, int src, int dst, int port) {
  long out = 0, worst = 0;
  for (const auto& e : trace) {
    if (is_inject(e, src, port, OpType::kData) && e.header.dst_rank == dst) ++out;
    if (is_inject(e, dst, port, OpType::kCredit) && e.header.dst_rank == src) --out;
    worst = std::max(worst, out);
  }
  return static_cast<std::size_t>(worst);
}

inline std::size_t count_injected(const std::vector<TraceEvent>& trace, int src, int dst, int port, OpType op) {
  return static_cast<std::size_t>(std::count_if(trace.begin(), trace.end(), [&](const TraceEvent& e) {
    return is_inject(e, src, port, op) && e.header.dst_rank == dst;
  }));
}

/// Elements carried by DATA packets injected by src towards dst on `port`.
inline std::size_t elements_injected(const std::vector<TraceEvent>& trace, int src, int dst, int port) {
  std::size_t n = 0;
  for (const auto& e : trace) {
    if (is_inject(e, src, port, OpType::kData) && e.header.dst_rank == dst) n += e.header.valid_count;
  }
  return n;
}

/// Gather wire order: no DATA from a non-root rank leaves before the previous
/// non-root rank's DATA has fully reached the root. Returns a description of
/// the first violation, or an empty string.
inline std::string check_gather_order(const std::vector<TraceEvent>& trace, const Communicator& comm, int root,
                                      int port) {
  const int root_world = comm.world_rank(root);
  std::vector<int> order;
  for (int r = 0; r < comm.size(); ++r) {
    if (r != root) order.push_back(comm.world_rank(r));
  }
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const int a = order[i], b = order[i + 1];
    std::uint64_t last_a = 0, first_b = std::numeric_limits<std::uint64_t>::max();
    bool any_a = false;
    for (const auto& e : trace) {
      if (is_deliver(e, root_world, port, OpType::kData) && e.header.src_rank == a) {
        last_a = e.seq;
        any_a = true;
      }
      if (is_inject(e, b, port, OpType::kData) && e.header.dst_rank == root_world) first_b = std::min(first_b, e.seq);
    }
    if (any_a && first_b < last_a) {
      return "rank " + std::to_string(b) + " sent gather data before rank " + std::to_string(a) + " finished";
    }
  }
  return {};
}

/// Reduce pacing: a non-root rank injects its first packet of tile t only
/// after every rank's tile t-1 has reached the root.
inline std::string check_reduce_lag(const std::vector<TraceEvent>& trace, const Communicator& comm, int root,
                                    int port, std::size_t count, std::size_t tile, std::size_t per_packet) {
  const int root_world = comm.world_rank(root);
  // Tile index of each DATA packet a rank sends, in order.
  std::vector<std::size_t> tile_of;
  for (std::size_t t = 0; t * tile < count; ++t) {
    const std::size_t len = std::min(tile, count - t * tile);
    for (std::size_t p = 0; p < (len + per_packet - 1) / per_packet; ++p) tile_of.push_back(t);
  }
  const std::size_t tiles = tile_of.empty() ? 0 : tile_of.back() + 1;
  std::vector<std::uint64_t> done(tiles, 0);  // seq at which tile t had reached the root from everyone
  std::map<int, std::vector<std::uint64_t>> first_inject;  // rank -> seq of first packet per tile
  std::map<int, std::size_t> sent, got;
  for (const auto& e : trace) {
    if (is_deliver(e, root_world, port, OpType::kData)) {
      const std::size_t k = got[e.header.src_rank]++;
      if (k >= tile_of.size()) return "root received more reduce packets than expected";
      done[tile_of[k]] = std::max(done[tile_of[k]], e.seq);
    }
    if (e.unit == UnitKind::kApp && e.kind == TraceKind::kInject && e.index == port &&
        e.header.op == OpType::kData && e.header.dst_rank == root_world) {
      const std::size_t k = sent[e.rank]++;
      if (k >= tile_of.size()) return "a rank sent more reduce packets than expected";
      auto& fi = first_inject[e.rank];
      if (fi.size() == tile_of[k]) fi.push_back(e.seq);
    }
  }
  for (const auto& [rank, fi] : first_inject) {
    for (std::size_t t = 1; t < fi.size(); ++t) {
      if (fi[t] < done[t - 1]) {
        return "rank " + std::to_string(rank) + " started tile " + std::to_string(t) +
               " before tile " + std::to_string(t - 1) + " was complete";
      }
    }
  }
  return {};
}

// --------------------------------------------------- point-to-point suite

struct P2PCase {
  int src = 0;
  int dst = 1;
  int port = 0;
  std::size_t count = 0;
  std::uint32_t seed = 0;
};

inline std::string describe(const P2PCase& c) {
  std::ostringstream os;
  os << c.src << "->" << c.dst << " port " << c.port << " count " << c.count << " seed " << c.seed;
  return os.str();
}

/// Up to `n` cases with distinct (src, dst, port), so each one can be checked
/// on its own in the trace. About half fit in k (eager), the rest use credits.
inline std::vector<P2PCase> random_p2p_batch(std::mt19937& gen, const Runtime& rt, const std::vector<int>& ports,
                                             std::size_t n) {
  std::vector<P2PCase> out;
  std::set<std::tuple<int, int, int>> used;
  std::uniform_int_distribution<int> rank(0, rt.num_ranks() - 1);
  for (std::size_t tries = 0; out.size() < n && tries < 100 * n; ++tries) {
    P2PCase c;
    c.src = rank(gen);
    c.dst = rank(gen);
    c.port = ports[std::uniform_int_distribution<std::size_t>(0, ports.size() - 1)(gen)];
    if (c.src == c.dst || !used.insert({c.src, c.dst, c.port}).second) continue;
    const std::size_t k = rt.async_degree(c.port);
    c.count = std::bernoulli_distribution(0.5)(gen) ? std::uniform_int_distribution<std::size_t>(0, k)(gen)
                                                    : std::uniform_int_distribution<std::size_t>(k + 1, 6 * k)(gen);
    c.seed = static_cast<std::uint32_t>(gen());
    out.push_back(c);
  }
  return out;
}

/// Runs the cases in one go; every rank handles the cases it takes part in,
/// in list order. Checks delivered data, the credit bound and the absence of
/// credits on eager transfers. Needs tracing on. Returns the first failure.
inline std::string run_p2p_batch(Runtime& rt, const std::vector<P2PCase>& cases) {
  std::vector<std::vector<std::uint8_t>> got(cases.size()), want(cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    visit_dtype(rt.ports().at(cases[i].port).dtype, [&](auto tag) {
      want[i] = bytes_of(random_values<decltype(tag)>(cases[i].count, cases[i].seed));
    });
  }
  Program prog = [&](RankContext& ctx) {
    for (std::size_t i = 0; i < cases.size(); ++i) {
      const auto& c = cases[i];
      if (ctx.rank() != c.src && ctx.rank() != c.dst) continue;
      visit_dtype(ctx.port_decl(c.port).dtype, [&](auto tag) {
        using T = decltype(tag);
        if (ctx.rank() == c.src) {
          const auto v = random_values<T>(c.count, c.seed);
          auto ch = open_send_channel<T>(ctx, c.count, c.dst, c.port);
          for (const T& x : v) ch.push(x);
        } else {
          auto ch = open_recv_channel<T>(ctx, c.count, c.src, c.port);
          std::vector<T> v(c.count);
          for (auto& x : v) x = ch.pop();
          got[i] = bytes_of(v);
        }
      });
    }
  };
  RunReport rep;
  try {
    rep = rt.run_spmd(prog);
  } catch (const std::exception& e) {
    return std::string("run failed: ") + e.what();
  }
  if (rep.residual_packets != 0) return std::to_string(rep.residual_packets) + " packets left over";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = cases[i];
    if (got[i] != want[i]) return "data mismatch in case " + describe(c);
    const std::size_t per = max_elems_per_packet(rt.ports().at(c.port).dtype);
    const std::size_t k = rt.async_degree(c.port);
    const std::size_t budget = (k + per - 1) / per;
    const std::size_t packets = count_injected(rep.trace, c.src, c.dst, c.port, OpType::kData);
    if (packets != (c.count + per - 1) / per) return "unexpected packet count in case " + describe(c);
    const std::size_t credits = count_injected(rep.trace, c.dst, c.src, c.port, OpType::kCredit);
    if (c.count <= k) {
      if (credits != 0) return "credits on an eager transfer in case " + describe(c);
    } else if (max_unacked(rep.trace, c.src, c.dst, c.port) > budget) {
      return "credit bound exceeded in case " + describe(c);
    }
  }
  return {};
}

inline std::vector<int> p2p_suite_ports() {
  using namespace smi::harness;
  return {kGesummvPort, kCharPort, kShortPort, kIntPort, kDoublePort};
}

/// `batches` batches of up to 10 cases each; returns cases run and the first failure.
inline std::pair<std::size_t, std::string> p2p_suite(Runtime& rt, std::uint32_t seed, std::size_t batches) {
  const bool was = rt.config().trace;
  rt.config().trace = true;
  std::mt19937 gen(seed);
  std::size_t n = 0;
  std::string err;
  for (std::size_t b = 0; b < batches && err.empty(); ++b) {
    const auto cases = random_p2p_batch(gen, rt, p2p_suite_ports(), 10);
    n += cases.size();
    err = run_p2p_batch(rt, cases);
  }
  rt.config().trace = was;
  return {n, err};
}

// --------------------------------------------------------- collective suite

/// Runs Bcast, Scatter, Gather and Reduce (ADD, MAX, MIN) one after the other
/// on the members of `comm` using the application port layout, checks every
/// result against the oracles and the gather/reduce pacing in the trace.
inline std::string run_collective_case(Runtime& rt, const Communicator& comm, int root, std::size_t count,
                                       std::uint32_t seed) {
  using namespace smi::harness;
  const int size = comm.size();
  const auto n = static_cast<std::size_t>(size);
  std::vector<std::vector<float>> contrib(n);
  for (std::size_t r = 0; r < n; ++r) contrib[r] = random_values<float>(count, seed + static_cast<std::uint32_t>(r));
  const auto scatter_src = random_values<float>(count * n, seed ^ 0x5eedu);

  std::vector<std::vector<float>> bcast_out(n), scatter_out(n);
  std::vector<float> gather_out, add_out, max_out, min_out;
  const bool was = rt.config().trace;
  rt.config().trace = true;

  std::vector<Program> progs(static_cast<std::size_t>(rt.num_ranks()));
  for (int w : comm.members()) {
    progs[static_cast<std::size_t>(w)] = [&](RankContext& ctx) {
      const int me = ctx.comm_rank(comm);
      const auto m = static_cast<std::size_t>(me);
      {
        auto ch = open_bcast_channel<float>(ctx, count, kBcastPort, root, comm);
        for (std::size_t i = 0; i < count; ++i) {
          float v = me == root ? contrib[m][i] : 0.0f;
          ch.bcast(v);
          bcast_out[m].push_back(v);
        }
      }
      {
        auto ch = open_scatter_channel<float>(ctx, count, kScatterPort, root, comm);
        const std::size_t calls = me == root ? count * n : count;
        for (std::size_t i = 0; i < calls; ++i) {
          float v = 0;
          ch.scatter(me == root ? scatter_src[i] : 0.0f, v);
          if (me != root || i / count == static_cast<std::size_t>(root)) scatter_out[m].push_back(v);
        }
      }
      {
        auto ch = open_gather_channel<float>(ctx, count, kGatherPort, root, comm);
        if (me == root) {
          for (std::size_t i = 0; i < count * n; ++i) {
            float v = 0;
            ch.gather(i / count == static_cast<std::size_t>(root) ? contrib[m][i % count] : 0.0f, v);
            gather_out.push_back(v);
          }
        } else {
          float unused = 0;
          for (std::size_t i = 0; i < count; ++i) ch.gather(contrib[m][i], unused);
        }
      }
      const std::pair<int, ReduceOp> reduces[] = {
          {kReduceAddPort, ReduceOp::kAdd}, {kReduceMaxPort, ReduceOp::kMax}, {kReduceMinPort, ReduceOp::kMin}};
      for (const auto& [port, op] : reduces) {
        auto ch = open_reduce_channel<float>(ctx, count, op, port, root, comm);
        auto& out = op == ReduceOp::kAdd ? add_out : op == ReduceOp::kMax ? max_out : min_out;
        for (std::size_t i = 0; i < count; ++i) {
          float v = 0;
          ch.reduce(contrib[m][i], v);
          if (me == root) out.push_back(v);
        }
      }
    };
  }
  RunReport rep;
  try {
    rep = rt.run(progs);
  } catch (const std::exception& e) {
    rt.config().trace = was;
    return std::string("run failed: ") + e.what();
  }
  rt.config().trace = was;

  const auto r = static_cast<std::size_t>(root);
  if (rep.residual_packets != 0) return std::to_string(rep.residual_packets) + " packets left over";
  for (std::size_t i = 0; i < n; ++i) {
    if (bytes_of(bcast_out[i]) != bytes_of(contrib[r])) return "bcast result differs on rank " + std::to_string(i);
    const std::vector<float> block(scatter_src.begin() + static_cast<long>(i * count),
                                   scatter_src.begin() + static_cast<long>((i + 1) * count));
    if (bytes_of(scatter_out[i]) != bytes_of(block)) return "scatter result differs on rank " + std::to_string(i);
  }
  std::vector<float> all;
  for (const auto& c : contrib) all.insert(all.end(), c.begin(), c.end());
  if (bytes_of(gather_out) != bytes_of(all)) return "gather result differs";
  if (count > 0) {
    if (bytes_of(add_out) != bytes_of(reduce_oracle(contrib, ReduceOp::kAdd))) return "reduce add differs";
    if (bytes_of(max_out) != bytes_of(reduce_oracle(contrib, ReduceOp::kMax))) return "reduce max differs";
    if (bytes_of(min_out) != bytes_of(reduce_oracle(contrib, ReduceOp::kMin))) return "reduce min differs";
  }
  // Scatter blocks leave the root in rank order.
  int last = -1;
  for (const auto& e : rep.trace) {
    if (is_inject(e, comm.world_rank(root), kScatterPort, OpType::kData)) {
      const int dst = *comm.rank_of(e.header.dst_rank);
      if (dst < last) return "scatter blocks out of order";
      last = dst;
    }
  }
  if (auto err = check_gather_order(rep.trace, comm, root, kGatherPort); !err.empty()) return err;
  for (int port : {kReduceAddPort, kReduceMaxPort, kReduceMinPort}) {
    auto err = check_reduce_lag(rep.trace, comm, root, port, count, rt.config().reduce_tile, max_elems_v<float>);
    if (!err.empty()) return err;
  }
  return {};
}

/// Random communicator of `size` distinct world ranks in random order.
inline Communicator random_comm(std::mt19937& gen, int world, int size) {
  std::vector<int> ranks(static_cast<std::size_t>(world));
  for (int i = 0; i < world; ++i) ranks[static_cast<std::size_t>(i)] = i;
  std::shuffle(ranks.begin(), ranks.end(), gen);
  ranks.resize(static_cast<std::size_t>(size));
  return Communicator::from_world_ranks(ranks);
}

/// Sizes {2,4,8} x roots {0, size-1, random} x counts {1,7,100}. The 8-rank
/// communicator is the world in random order. Returns cases run and the first failure.
inline std::pair<std::size_t, std::string> collective_suite(Runtime& rt, std::uint32_t seed) {
  std::mt19937 gen(seed);
  std::size_t n = 0;
  for (int size : {2, 4, 8}) {
    if (size > rt.num_ranks()) continue;
    for (int which = 0; which < 3; ++which) {
      const int root = which == 0 ? 0 : which == 1 ? size - 1 : std::uniform_int_distribution<int>(0, size - 1)(gen);
      for (std::size_t count : {1u, 7u, 100u}) {
        const auto comm = random_comm(gen, rt.num_ranks(), size);
        ++n;
        auto err = run_collective_case(rt, comm, root, count, static_cast<std::uint32_t>(gen()));
        if (!err.empty()) {
          std::ostringstream os;
          os << "size " << size << " root " << root << " count " << count << ": " << err;
          return {n, os.str()};
        }
      }
    }
  }
  return {n, {}};
}

/// World Reduce(ADD) of `count` floats onto rank 0, checked against the
/// oracle; returns the cycle count (0 and an error message on failure).
inline std::uint64_t reduce_cycles(Runtime& rt, std::size_t count, std::string& err) {
  using namespace smi::harness;
  const auto world = Communicator::world(rt.num_ranks());
  std::vector<std::vector<float>> contrib(static_cast<std::size_t>(rt.num_ranks()));
  for (std::size_t r = 0; r < contrib.size(); ++r) contrib[r] = random_values<float>(count, 77 + static_cast<std::uint32_t>(r));
  std::vector<float> out;
  const auto rep = rt.run_spmd([&](RankContext& ctx) {
    auto ch = open_reduce_channel<float>(ctx, count, ReduceOp::kAdd, kReduceAddPort, 0, world);
    for (std::size_t i = 0; i < count; ++i) {
      float v = 0;
      ch.reduce(contrib[static_cast<std::size_t>(ctx.rank())][i], v);
      if (ctx.rank() == 0) out.push_back(v);
    }
  });
  if (bytes_of(out) != bytes_of(reduce_oracle(contrib, ReduceOp::kAdd))) {
    err = "reduce result differs";
    return 0;
  }
  return rep.cycles;
}

}  // namespace support
