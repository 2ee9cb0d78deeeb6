#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <new>
#include <optional>
#include <string>
#include <vector>

#include "fmm/addition_plan.hpp"
#include "fmm/algorithm.hpp"
#include "fmm/errors.hpp"
#include "fmm/kernel.hpp"
#include "fmm/matrix.hpp"
#include "fmm/parallel.hpp"

namespace fmm {

inline constexpr std::size_t kDefaultMaxSteps = 3;
inline constexpr std::size_t kMaxLevels = 32;

struct ExecutionConfig {
  std::optional<std::size_t> steps;  // explicit depth; otherwise decided by cutoff
  std::size_t cutoff = 1500;
  std::size_t max_steps = kDefaultMaxSteps;
  Strategy strategy = Strategy::write_once;
  bool cse = false;
  ExecMode mode = ExecMode::sequential;
  std::size_t workers = 1;
  BaseKernel kernel = blocked_kernel();
  double lambda = default_lambda();
  std::optional<std::size_t> max_temporary_bytes;
  WorkerPool* pool = nullptr;  // reused if set, otherwise one is created per call
};

struct LevelTraffic {
  std::uint64_t reads = 0;
  std::uint64_t writes = 0;

  friend bool operator==(const LevelTraffic&, const LevelTraffic&) = default;
};

struct InstrumentationCounters {
  std::uint64_t leaf_multiplies = 0;
  std::uint64_t leaf_flops = 0;          // 2pqr - pr per leaf
  std::uint64_t element_additions = 0;   // additions inside S, T and C chains
  std::uint64_t submatrix_reads = 0;
  std::uint64_t submatrix_writes = 0;
  std::uint64_t peel_multiplies = 0;
  std::uint64_t peel_flops = 0;
  std::uint64_t temp_bytes_high_water = 0;
  int max_concurrent_leaves = 0;
  int max_active_workers = 0;
  std::size_t steps = 0;
  std::vector<LevelTraffic> per_level;  // index 0 is the top-level node

  std::uint64_t flops() const { return leaf_flops + element_additions + peel_flops; }
};

//
// Boundary handling for a P x Q times Q x R problem on an <M,K,N> base case.
// The core (P', Q', R') recurses; the strips are classical multiplies.
//
struct StripJob {
  std::size_t row0, row1;      // rows of A and C
  std::size_t inner0, inner1;  // columns of A, rows of B
  std::size_t col0, col1;      // columns of B and C
  bool accumulate;

  friend bool operator==(const StripJob&, const StripJob&) = default;
};

struct PeelPlan {
  std::size_t p = 0, q = 0, r = 0;  // core dims
  std::vector<StripJob> strips;

  bool core_empty() const { return p == 0 || q == 0 || r == 0; }
};

inline PeelPlan dynamic_peel(std::size_t P, std::size_t Q, std::size_t R, std::size_t M, std::size_t K,
                             std::size_t N) {
  if (P == 0 || Q == 0 || R == 0 || M == 0 || K == 0 || N == 0) {
    throw ContractViolation("dynamic_peel: dimensions must be >= 1");
  }
  PeelPlan plan;
  plan.p = M * (P / M);
  plan.q = K * (Q / K);
  plan.r = N * (R / N);
  const bool core_runs = !plan.core_empty();
  if (Q > plan.q && plan.p > 0 && plan.r > 0) {
    plan.strips.push_back({0, plan.p, plan.q, Q, 0, plan.r, core_runs});
  }
  if (P > plan.p) plan.strips.push_back({plan.p, P, 0, Q, 0, R, false});
  if (R > plan.r && plan.p > 0) plan.strips.push_back({0, plan.p, 0, Q, plan.r, R, false});
  return plan;
}

// Largest L <= max_steps keeping every sub-dimension >= threshold.
inline std::size_t decide_steps(std::size_t P, std::size_t Q, std::size_t R, const FastAlgorithm& alg,
                                std::size_t threshold, std::size_t max_steps = kDefaultMaxSteps) {
  if (threshold == 0) throw ContractViolation("decide_steps: threshold must be >= 1");
  std::size_t steps = 0;
  while (steps < max_steps) {
    P /= alg.dims.m;
    Q /= alg.dims.k;
    R /= alg.dims.n;
    if (P < threshold || Q < threshold || R < threshold) break;
    ++steps;
  }
  return steps;
}

namespace detail {

struct NumTerm {
  std::size_t operand;
  double coef;
};

struct NumChain {
  std::vector<NumTerm> terms;
  bool materialize = true;
};

// A phase with coefficients instantiated at lambda. Chains 0..aux-1 are the
// auxiliaries (operand id num_inputs + t), then one chain per target.
struct NumPhase {
  std::size_t num_inputs = 0;
  std::vector<NumChain> aux;
  std::vector<NumChain> targets;
  PhaseCost cost;
};

inline NumPhase instantiate(const PhasePlan& p, Strategy strategy, double lambda) {
  NumPhase out;
  out.num_inputs = p.set.num_inputs;
  out.cost = p.cost;
  auto convert = [&](const AdditionChain& c) {
    NumChain n;
    for (const auto& t : c.terms) n.terms.push_back({t.operand, t.coef.to_double(lambda)});
    n.materialize = materializes(c, p.phase, strategy);
    return n;
  };
  for (const auto& c : p.set.aux) out.aux.push_back(convert(c));
  for (const auto& c : p.set.chains) out.targets.push_back(convert(c));
  return out;
}

class CounterState {
 public:
  std::atomic<std::uint64_t> leaf_multiplies{0}, leaf_flops{0}, element_additions{0}, peel_multiplies{0},
      peel_flops{0};
  std::array<std::atomic<std::uint64_t>, kMaxLevels> reads{}, writes{};
  std::atomic<std::uint64_t> temp_bytes{0}, temp_high{0};
  ActivityProbe leaves;

  void traffic(std::size_t level, std::uint64_t r, std::uint64_t w) {
    reads[level].fetch_add(r, std::memory_order_relaxed);
    writes[level].fetch_add(w, std::memory_order_relaxed);
  }

  void allocate(std::uint64_t bytes, std::optional<std::size_t> limit, bool streaming, std::size_t rank) {
    const std::uint64_t now = temp_bytes.fetch_add(bytes) + bytes;
    if (limit && now > *limit) {
      temp_bytes.fetch_sub(bytes);
      throw ResourceError(std::string("temporary storage limit exceeded: ") + std::to_string(now) + " > " +
                          std::to_string(*limit) + " bytes" +
                          (streaming ? " (streaming keeps all " + std::to_string(2 * rank) +
                                           " S/T temporaries alive, an R-fold requirement)"
                                     : ""));
    }
    std::uint64_t seen = temp_high.load();
    while (now > seen && !temp_high.compare_exchange_weak(seen, now)) {
    }
  }
  void release(std::uint64_t bytes) { temp_bytes.fetch_sub(bytes); }

  InstrumentationCounters snapshot(std::size_t depth) const {
    InstrumentationCounters c;
    c.leaf_multiplies = leaf_multiplies;
    c.leaf_flops = leaf_flops;
    c.element_additions = element_additions;
    c.peel_multiplies = peel_multiplies;
    c.peel_flops = peel_flops;
    c.temp_bytes_high_water = temp_high;
    c.steps = depth;
    c.max_concurrent_leaves = leaves.high_water();
    for (std::size_t l = 0; l < depth; ++l) {
      c.per_level.push_back({reads[l].load(), writes[l].load()});
      c.submatrix_reads += c.per_level.back().reads;
      c.submatrix_writes += c.per_level.back().writes;
    }
    return c;
  }
};

// Node-local temporary storage, accounted against the counters.
class Arena {
 public:
  Arena(CounterState& counters, std::size_t doubles, const ExecutionConfig& cfg, std::size_t rank)
      : counters_(counters), bytes_(doubles * sizeof(double)) {
    counters_.allocate(bytes_, cfg.max_temporary_bytes, cfg.strategy == Strategy::streaming, rank);
    try {
      data_.reset(new double[doubles]);
    } catch (const std::bad_alloc&) {
      counters_.release(bytes_);
      throw ResourceError("could not allocate " + std::to_string(bytes_) + " bytes of temporaries");
    }
  }
  ~Arena() { counters_.release(bytes_); }
  Arena(const Arena&) = delete;
  Arena& operator=(const Arena&) = delete;

  MatrixView take(std::size_t rows, std::size_t cols) {
    MatrixView v(data_.get() + used_, rows, cols, std::max<std::size_t>(cols, 1));
    used_ += rows * cols;
    return v;
  }

 private:
  CounterState& counters_;
  std::uint64_t bytes_;
  std::unique_ptr<double[]> data_;
  std::size_t used_ = 0;
};

struct Context {
  const FastAlgorithm* alg = nullptr;
  NumPhase s, t, c;
  Strategy strategy = Strategy::write_once;
  const ExecutionConfig* cfg = nullptr;
  SchedulePlan schedule;
  WorkerPool* pool = nullptr;
  TaskGroup* global = nullptr;  // BFS subtrees spawned from the calling thread
  CounterState counters;
  std::vector<std::uint64_t> span;  // leaves below a node at each level

  bool parallel_here(bool in_task) const { return !in_task && pool != nullptr && schedule.mode != ExecMode::sequential; }
};

// Row loop over [0, rows), split across workers when `parallel`.
template <typename F>
void rows_loop(Context& ctx, bool parallel, std::size_t rows, F&& f) {
  if (parallel) {
    parallel_for(ctx.pool, rows, f);
  } else {
    f(std::size_t{0}, rows);
  }
}

// dst = sum of coef * operand.
inline void form_chain(Context& ctx, bool parallel, std::size_t level, const NumChain& chain,
                       const std::vector<ConstMatrixView>& ops, MatrixView dst) {
  const auto& terms = chain.terms;
  const std::size_t n = terms.size();
  const std::size_t cols = dst.cols();
  if (ctx.strategy == Strategy::pairwise) {
    rows_loop(ctx, parallel, dst.rows(), [&](std::size_t r0, std::size_t r1) {
      const double c0 = terms[0].coef;
      for (std::size_t i = r0; i < r1; ++i) {
        const double* x = ops[terms[0].operand].row(i);
        double* d = dst.row(i);
        for (std::size_t j = 0; j < cols; ++j) d[j] = c0 * x[j];
      }
      for (std::size_t t = 1; t < n; ++t) {
        const double ct = terms[t].coef;
        for (std::size_t i = r0; i < r1; ++i) {
          const double* x = ops[terms[t].operand].row(i);
          double* d = dst.row(i);
          for (std::size_t j = 0; j < cols; ++j) d[j] += ct * x[j];
        }
      }
    });
    ctx.counters.traffic(level, 2 * n - 1, n);
  } else {
    rows_loop(ctx, parallel, dst.rows(), [&](std::size_t r0, std::size_t r1) {
      for (std::size_t i = r0; i < r1; ++i) {
        double* d = dst.row(i);
        const double* x0 = ops[terms[0].operand].row(i);
        const double c0 = terms[0].coef;
        for (std::size_t j = 0; j < cols; ++j) d[j] = c0 * x0[j];
        for (std::size_t t = 1; t < n; ++t) {
          const double* x = ops[terms[t].operand].row(i);
          const double ct = terms[t].coef;
          for (std::size_t j = 0; j < cols; ++j) d[j] += ct * x[j];
        }
      }
    });
    ctx.counters.traffic(level, n, 1);
  }
  ctx.counters.element_additions.fetch_add(static_cast<std::uint64_t>(n - 1) * dst.size(), std::memory_order_relaxed);
}

// Streaming evaluation of a list of chains: each operand row is read once and
// scattered into every chain that uses it.
inline void stream_chains(Context& ctx, bool parallel, const std::vector<const NumChain*>& chains,
                          const std::vector<ConstMatrixView>& ops, const std::vector<MatrixView>& dsts) {
  struct Use {
    std::size_t chain;
    double coef;
    bool first;
  };
  std::vector<std::vector<Use>> users(ops.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& terms = chains[c]->terms;
    for (std::size_t t = 0; t < terms.size(); ++t) users.at(terms[t].operand).push_back({c, terms[t].coef, false});
  }
  // The first use in operand order initializes the destination.
  std::vector<bool> started(chains.size(), false);
  for (auto& list : users)
    for (auto& u : list) {
      u.first = !started[u.chain];
      started[u.chain] = true;
    }
  if (dsts.empty()) return;
  const std::size_t rows = dsts.front().rows(), cols = dsts.front().cols();
  rows_loop(ctx, parallel, rows, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      for (std::size_t x = 0; x < ops.size(); ++x) {
        if (users[x].empty()) continue;
        const double* src = ops[x].row(i);
        for (const auto& u : users[x]) {
          double* d = dsts[u.chain].row(i);
          if (u.first) {
            for (std::size_t j = 0; j < cols; ++j) d[j] = u.coef * src[j];
          } else {
            for (std::size_t j = 0; j < cols; ++j) d[j] += u.coef * src[j];
          }
        }
      }
    }
  });
  for (const auto* chain : chains) {
    ctx.counters.element_additions.fetch_add(static_cast<std::uint64_t>(chain->terms.size() - 1) * rows * cols,
                                             std::memory_order_relaxed);
  }
}

inline void leaf_multiply(Context& ctx, ConstMatrixView a, ConstMatrixView b, MatrixView c, double alpha, bool in_task) {
  if (!in_task && ctx.global != nullptr) ctx.global->wait();  // DFS leaves start after every BFS task
  ctx.counters.leaves.enter();
  struct Exit {
    ActivityProbe& p;
    ~Exit() { p.exit(); }
  } exit_guard{ctx.counters.leaves};
  if (ctx.parallel_here(in_task)) {
    parallel_for(ctx.pool, c.rows(), [&](std::size_t r0, std::size_t r1) {
      ctx.cfg->kernel(a.block(r0, 0, r1 - r0, a.cols()), b, c.block(r0, 0, r1 - r0, c.cols()), alpha, false);
    });
  } else {
    ctx.cfg->kernel(a, b, c, alpha, false);
  }
  ctx.counters.leaf_multiplies.fetch_add(1, std::memory_order_relaxed);
  ctx.counters.leaf_flops.fetch_add(2ULL * a.rows() * a.cols() * b.cols() - static_cast<std::uint64_t>(a.rows()) * b.cols(),
                                    std::memory_order_relaxed);
}

inline void peel_multiply(Context& ctx, const StripJob& job, ConstMatrixView a, ConstMatrixView b, MatrixView c,
                          double alpha, bool in_task) {
  const auto as = a.block(job.row0, job.inner0, job.row1 - job.row0, job.inner1 - job.inner0);
  const auto bs = b.block(job.inner0, job.col0, job.inner1 - job.inner0, job.col1 - job.col0);
  auto cs = c.block(job.row0, job.col0, job.row1 - job.row0, job.col1 - job.col0);
  if (ctx.parallel_here(in_task)) {
    parallel_for(ctx.pool, cs.rows(), [&](std::size_t r0, std::size_t r1) {
      ctx.cfg->kernel(as.block(r0, 0, r1 - r0, as.cols()), bs, cs.block(r0, 0, r1 - r0, cs.cols()), alpha,
                      job.accumulate);
    });
  } else {
    ctx.cfg->kernel(as, bs, cs, alpha, job.accumulate);
  }
  ctx.counters.peel_multiplies.fetch_add(1, std::memory_order_relaxed);
  const std::uint64_t p = as.rows(), q = as.cols(), r = bs.cols();
  ctx.counters.peel_flops.fetch_add(job.accumulate ? 2 * p * q * r : 2 * p * q * r - p * r, std::memory_order_relaxed);
}

enum class Subtree { bfs, dfs, mixed };

inline Subtree classify(const Context& ctx, std::uint64_t lo, std::uint64_t span) {
  if (ctx.schedule.mode != ExecMode::bfs && ctx.schedule.mode != ExecMode::hybrid) return Subtree::dfs;
  if (lo + span <= ctx.schedule.bfs_count) return Subtree::bfs;
  if (lo >= ctx.schedule.bfs_count) return Subtree::dfs;
  return Subtree::mixed;
}

void run_node(Context& ctx, ConstMatrixView a, ConstMatrixView b, MatrixView c, double alpha, std::size_t level,
              std::uint64_t leaf_lo, bool in_task);

inline void run_core(Context& ctx, ConstMatrixView a, ConstMatrixView b, MatrixView c, double alpha,
                     std::size_t level, std::uint64_t leaf_lo, bool in_task) {
  const FastAlgorithm& alg = *ctx.alg;
  const auto [m, k, n] = alg.dims;
  const std::size_t R = alg.rank;
  const std::size_t bp = a.rows() / m, bq = a.cols() / k, br = b.cols() / n;
  const std::uint64_t child_span = ctx.span[level + 1];
  const bool parallel = ctx.parallel_here(in_task);

  std::vector<ConstMatrixView> a_ops, b_ops;
  std::vector<MatrixView> c_blocks;
  for (std::size_t i = 0; i < m * k; ++i) a_ops.push_back(a.block((i / k) * bp, (i % k) * bq, bp, bq));
  for (std::size_t j = 0; j < k * n; ++j) b_ops.push_back(b.block((j / n) * bq, (j % n) * br, bq, br));
  for (std::size_t x = 0; x < m * n; ++x) c_blocks.push_back(c.block((x / n) * bp, (x % n) * br, bp, br));

  // Children that run as tasks need their S_r and T_r to stay alive.
  bool spawns = false;
  if (in_task) {
    spawns = true;
  } else {
    for (std::size_t r = 0; r < R; ++r) spawns |= classify(ctx, leaf_lo + r * child_span, child_span) == Subtree::bfs;
  }
  const bool all_alive = ctx.strategy == Strategy::streaming || spawns;

  auto materialized = [](const NumPhase& p) {
    std::size_t n = 0;
    for (const auto& ch : p.targets) n += ch.materialize && !ch.terms.empty() ? 1 : 0;
    return n;
  };
  const std::size_t s_slots = all_alive ? materialized(ctx.s) : std::min<std::size_t>(1, materialized(ctx.s));
  const std::size_t t_slots = all_alive ? materialized(ctx.t) : std::min<std::size_t>(1, materialized(ctx.t));
  const std::size_t total = (s_slots + ctx.s.aux.size()) * bp * bq + (t_slots + ctx.t.aux.size()) * bq * br +
                            (R + ctx.c.aux.size()) * bp * br;
  Arena arena(ctx.counters, total, *ctx.cfg, R);

  std::vector<MatrixView> s_aux, t_aux, c_aux, s_slot, t_slot, products;
  for (std::size_t i = 0; i < ctx.s.aux.size(); ++i) s_aux.push_back(arena.take(bp, bq));
  for (std::size_t i = 0; i < ctx.t.aux.size(); ++i) t_aux.push_back(arena.take(bq, br));
  for (std::size_t i = 0; i < ctx.c.aux.size(); ++i) c_aux.push_back(arena.take(bp, br));
  for (std::size_t i = 0; i < s_slots; ++i) s_slot.push_back(arena.take(bp, bq));
  for (std::size_t i = 0; i < t_slots; ++i) t_slot.push_back(arena.take(bq, br));
  for (std::size_t i = 0; i < R; ++i) products.push_back(arena.take(bp, br));

  // Operands of a phase: inputs, then auxiliaries.
  auto with_aux = [](std::vector<ConstMatrixView> ops, const std::vector<MatrixView>& aux) {
    for (const auto& v : aux) ops.push_back(v);
    return ops;
  };
  const auto s_ops = with_aux(a_ops, s_aux);
  const auto t_ops = with_aux(b_ops, t_aux);

  // Where target r lives: slot index when materialized, operand when piped.
  auto slot_map = [&](const NumPhase& p) {
    std::vector<std::size_t> map(p.targets.size(), 0);
    std::size_t next = 0;
    for (std::size_t r = 0; r < p.targets.size(); ++r)
      if (p.targets[r].materialize && !p.targets[r].terms.empty()) map[r] = all_alive ? next++ : 0;
    return map;
  };
  const auto s_map = slot_map(ctx.s), t_map = slot_map(ctx.t);

  auto phase_aux = [&](const NumPhase& p, const std::vector<ConstMatrixView>& ops, std::vector<MatrixView>& aux) {
    // Auxiliaries may use earlier auxiliaries, so they are formed in order.
    for (std::size_t i = 0; i < p.aux.size(); ++i) form_chain(ctx, parallel, level, p.aux[i], ops, aux[i]);
  };

  if (ctx.strategy == Strategy::streaming) {
    auto stream_phase = [&](const NumPhase& p, const std::vector<ConstMatrixView>& ops,
                            const std::vector<MatrixView>& aux, const std::vector<MatrixView>& slots,
                            const std::vector<std::size_t>& map) {
      std::vector<const NumChain*> chains;
      std::vector<MatrixView> dsts;
      for (std::size_t i = 0; i < p.aux.size(); ++i) {
        chains.push_back(&p.aux[i]);
        dsts.push_back(aux[i]);
      }
      if (!chains.empty()) {
        // Auxiliaries first: targets may read them.
        stream_chains(ctx, parallel, chains, ops, dsts);
        chains.clear();
        dsts.clear();
      }
      for (std::size_t r = 0; r < p.targets.size(); ++r) {
        if (p.targets[r].terms.empty()) continue;
        chains.push_back(&p.targets[r]);
        dsts.push_back(slots[map[r]]);
      }
      stream_chains(ctx, parallel, chains, ops, dsts);
      ctx.counters.traffic(level, p.cost.reads, p.cost.writes);
    };
    stream_phase(ctx.s, s_ops, s_aux, s_slot, s_map);
    stream_phase(ctx.t, t_ops, t_aux, t_slot, t_map);
  } else {
    phase_aux(ctx.s, s_ops, s_aux);
    phase_aux(ctx.t, t_ops, t_aux);
  }

  // Leaf-side view and scalar of S_r / T_r, forming it first if needed.
  auto operand = [&](const NumPhase& p, const std::vector<ConstMatrixView>& ops, std::vector<MatrixView>& slots,
                     const std::vector<std::size_t>& map, std::size_t r) -> std::pair<ConstMatrixView, double> {
    const NumChain& chain = p.targets[r];
    if (!chain.materialize) {
      // Piped singleton: one read by the leaf, no write.
      ctx.counters.traffic(level, 1, 0);
      return {ops[chain.terms[0].operand], chain.terms[0].coef};
    }
    MatrixView dst = slots[map[r]];
    if (ctx.strategy != Strategy::streaming) form_chain(ctx, parallel, level, chain, ops, dst);
    return {dst, 1.0};
  };

  std::optional<TaskGroup> local;
  if (in_task) local.emplace(*ctx.pool);

  for (std::size_t r = 0; r < R; ++r) {
    if (ctx.s.targets[r].terms.empty() || ctx.t.targets[r].terms.empty()) {
      fill(products[r], 0.0);
      continue;
    }
    const auto s_pair = operand(ctx.s, s_ops, s_slot, s_map, r);
    const auto t_pair = operand(ctx.t, t_ops, t_slot, t_map, r);
    const ConstMatrixView sv = s_pair.first, tv = t_pair.first;
    const double child_alpha = alpha * s_pair.second * t_pair.second;
    const std::uint64_t lo = leaf_lo + r * child_span;
    MatrixView prod = products[r];
    if (in_task) {
      local->run([&ctx, sv, tv, prod, child_alpha, level, lo] { run_node(ctx, sv, tv, prod, child_alpha, level + 1, lo, true); },
                 lo);
    } else if (classify(ctx, lo, child_span) == Subtree::bfs) {
      ctx.global->run([&ctx, sv, tv, prod, child_alpha, level, lo] { run_node(ctx, sv, tv, prod, child_alpha, level + 1, lo, true); },
                      lo);
    } else {
      run_node(ctx, sv, tv, prod, child_alpha, level + 1, lo, false);
    }
  }
  if (in_task) {
    local->wait();
  } else if (ctx.global != nullptr) {
    ctx.global->wait();
  }

  // C assembly.
  std::vector<ConstMatrixView> c_ops(products.begin(), products.end());
  for (const auto& v : c_aux) c_ops.push_back(v);
  if (ctx.strategy == Strategy::streaming) {
    std::vector<const NumChain*> chains;
    std::vector<MatrixView> dsts;
    for (std::size_t i = 0; i < ctx.c.aux.size(); ++i) {
      chains.push_back(&ctx.c.aux[i]);
      dsts.push_back(c_aux[i]);
    }
    if (!chains.empty()) {
      stream_chains(ctx, parallel, chains, c_ops, dsts);
      chains.clear();
      dsts.clear();
    }
    for (std::size_t x = 0; x < ctx.c.targets.size(); ++x) {
      if (ctx.c.targets[x].terms.empty()) {
        fill(c_blocks[x], 0.0);
        continue;
      }
      chains.push_back(&ctx.c.targets[x]);
      dsts.push_back(c_blocks[x]);
    }
    stream_chains(ctx, parallel, chains, c_ops, dsts);
    ctx.counters.traffic(level, ctx.c.cost.reads, ctx.c.cost.writes);
  } else {
    for (std::size_t i = 0; i < ctx.c.aux.size(); ++i) form_chain(ctx, parallel, level, ctx.c.aux[i], c_ops, c_aux[i]);
    for (std::size_t x = 0; x < ctx.c.targets.size(); ++x) {
      if (ctx.c.targets[x].terms.empty()) {
        fill(c_blocks[x], 0.0);
        continue;
      }
      form_chain(ctx, parallel, level, ctx.c.targets[x], c_ops, c_blocks[x]);
    }
  }
}

inline void run_node(Context& ctx, ConstMatrixView a, ConstMatrixView b, MatrixView c, double alpha,
                     std::size_t level, std::uint64_t leaf_lo, bool in_task) {
  if (level == ctx.schedule.depth) {
    leaf_multiply(ctx, a, b, c, alpha, in_task);
    return;
  }
  const auto& d = ctx.alg->dims;
  const PeelPlan peel = dynamic_peel(a.rows(), a.cols(), b.cols(), d.m, d.k, d.n);
  if (!peel.core_empty()) {
    run_core(ctx, a.block(0, 0, peel.p, peel.q), b.block(0, 0, peel.q, peel.r), c.block(0, 0, peel.p, peel.r), alpha,
             level, leaf_lo, in_task);
  }
  for (const auto& job : peel.strips) peel_multiply(ctx, job, a, b, c, alpha, in_task);
}

}  // namespace detail

struct MultiplyResult {
  DenseMatrix c;
  InstrumentationCounters counters;
  std::size_t steps = 0;
};

// C = A B with `alg` applied recursively; C must not alias A or B.
inline InstrumentationCounters fast_multiply_into(ConstMatrixView a, ConstMatrixView b, MatrixView c,
                                                  const FastAlgorithm& alg, const ExecutionConfig& cfg) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
    throw ShapeError("fast_multiply: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " times " +
                     std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " into " +
                     std::to_string(c.rows()) + "x" + std::to_string(c.cols()));
  }
  if (cfg.workers == 0) throw ContractViolation("fast_multiply: workers must be >= 1");
  const std::size_t depth =
      cfg.steps ? *cfg.steps : decide_steps(a.rows(), a.cols(), b.cols(), alg, cfg.cutoff, cfg.max_steps);
  if (depth >= kMaxLevels) throw ContractViolation("fast_multiply: recursion depth too large");

  detail::Context ctx;
  ctx.alg = &alg;
  ctx.cfg = &cfg;
  ctx.strategy = cfg.strategy;
  ctx.schedule = make_schedule(alg, depth, cfg.workers, cfg.mode);
  const AdditionPlan plan = build_plan(alg, cfg.strategy, cfg.cse);
  const double lambda = alg.exactness == Exactness::apa ? cfg.lambda : 1.0;
  ctx.s = detail::instantiate(plan.s, cfg.strategy, lambda);
  ctx.t = detail::instantiate(plan.t, cfg.strategy, lambda);
  ctx.c = detail::instantiate(plan.c, cfg.strategy, lambda);
  ctx.span.assign(depth + 1, 1);
  for (std::size_t l = depth; l-- > 0;) ctx.span[l] = ctx.span[l + 1] * alg.rank;

  if (c.empty()) return ctx.counters.snapshot(depth);
  if (a.cols() == 0) {
    fill(c, 0.0);
    return ctx.counters.snapshot(depth);
  }

  std::unique_ptr<WorkerPool> owned;
  if (ctx.schedule.mode != ExecMode::sequential) {
    ctx.pool = cfg.pool;
    if (ctx.pool == nullptr) {
      owned = std::make_unique<WorkerPool>(cfg.workers);
      ctx.pool = owned.get();
    }
  }
  int active_high = 1;
  if (ctx.pool != nullptr) {
    ctx.pool->probe().reset();
    WorkerPool::Participant caller(*ctx.pool);
    TaskGroup global(*ctx.pool);
    ctx.global = &global;
    detail::run_node(ctx, a, b, c, 1.0, 0, 0, false);
    global.wait();
    active_high = ctx.pool->probe().high_water();
  } else {
    detail::run_node(ctx, a, b, c, 1.0, 0, 0, false);
  }
  auto counters = ctx.counters.snapshot(depth);
  counters.max_active_workers = active_high;
  return counters;
}

inline MultiplyResult fast_multiply(ConstMatrixView a, ConstMatrixView b, const FastAlgorithm& alg,
                                    const ExecutionConfig& cfg) {
  MultiplyResult out;
  out.c = DenseMatrix(a.rows(), b.cols());
  out.counters = fast_multiply_into(a, b, out.c, alg, cfg);
  out.steps = out.counters.steps;
  return out;
}

}  // namespace fmm
