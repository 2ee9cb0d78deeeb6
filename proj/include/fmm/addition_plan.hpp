#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "fmm/algorithm.hpp"
#include "fmm/errors.hpp"
#include "fmm/rational.hpp"

namespace fmm {

enum class Strategy { pairwise, write_once, streaming };

inline const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::pairwise:
      return "pairwise";
    case Strategy::write_once:
      return "write-once";
    case Strategy::streaming:
      return "streaming";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "pairwise") return Strategy::pairwise;
  if (s == "write-once" || s == "write_once" || s == "writeonce") return Strategy::write_once;
  if (s == "streaming") return Strategy::streaming;
  return std::nullopt;
}

// S: operands are A blocks, targets S_r. T: B blocks -> T_r. C: products M_r -> C blocks.
enum class Phase { s, t, c };

struct Term {
  std::size_t operand = 0;
  Coefficient coef;

  friend bool operator==(const Term&, const Term&) = default;
};

// target = sum of coef * operand. Operand ids below the phase's input count
// name inputs; larger ids name auxiliary chains in creation order.
struct AdditionChain {
  std::size_t target = 0;
  std::vector<Term> terms;

  bool singleton() const { return terms.size() == 1; }
  std::size_t additions() const { return terms.empty() ? 0 : terms.size() - 1; }

  friend bool operator==(const AdditionChain&, const AdditionChain&) = default;
};

struct CseReport {
  std::size_t original_additions = 0;
  std::size_t final_additions = 0;
  std::size_t subexpressions_eliminated = 0;
  std::size_t additions_saved = 0;
};

struct ChainSet {
  std::size_t num_inputs = 0;
  std::vector<AdditionChain> aux;     // aux[t].target == num_inputs + t
  std::vector<AdditionChain> chains;  // one per target

  std::size_t additions() const {
    std::size_t n = 0;
    for (const auto& c : aux) n += c.additions();
    for (const auto& c : chains) n += c.additions();
    return n;
  }
};

namespace detail {

inline void sort_terms(AdditionChain& c) {
  std::sort(c.terms.begin(), c.terms.end(), [](const Term& a, const Term& b) { return a.operand < b.operand; });
}

}  // namespace detail

//
// Greedy length-two elimination. A pair of operands (x, y), x < y, matches a
// chain containing c_x x + c_y y for any c_x, with the ratio c_y / c_x fixed.
// The most frequent (pair, ratio) occurring in at least two chains becomes
// Y = x + ratio y and every occurrence is rewritten as c_x Y. Ties go to the
// smallest (x, y), then the smallest ratio. Only target chains are scanned.
//
inline CseReport eliminate_cse(ChainSet& set) {
  CseReport report;
  report.original_additions = set.additions();
  for (auto& c : set.chains) detail::sort_terms(c);

  using Key = std::tuple<std::size_t, std::size_t, Coefficient>;
  auto key_less = [](const Key& a, const Key& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
    if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
    return std::get<2>(a) < std::get<2>(b);
  };

  for (;;) {
    std::map<Key, std::size_t, decltype(key_less)> counts(key_less);
    for (const auto& chain : set.chains) {
      std::set<Key, decltype(key_less)> seen(key_less);
      const auto& t = chain.terms;
      for (std::size_t a = 0; a < t.size(); ++a)
        for (std::size_t b = a + 1; b < t.size(); ++b) seen.insert({t[a].operand, t[b].operand, t[b].coef / t[a].coef});
      for (const auto& k : seen) ++counts[k];
    }
    const Key* best = nullptr;
    std::size_t best_count = 1;
    for (const auto& [k, n] : counts) {
      if (n > best_count) {  // map order makes the first maximum the tie-break winner
        best = &k;
        best_count = n;
      }
    }
    if (best == nullptr) break;

    const auto [x, y, ratio] = *best;
    const std::size_t id = set.num_inputs + set.aux.size();
    std::size_t rewritten = 0;
    for (auto& chain : set.chains) {
      auto& t = chain.terms;
      auto ix = std::find_if(t.begin(), t.end(), [&](const Term& e) { return e.operand == x; });
      auto iy = std::find_if(t.begin(), t.end(), [&](const Term& e) { return e.operand == y; });
      if (ix == t.end() || iy == t.end() || !(iy->coef / ix->coef == ratio)) continue;
      const Coefficient scale = ix->coef;
      t.erase(std::remove_if(t.begin(), t.end(), [&](const Term& e) { return e.operand == x || e.operand == y; }),
              t.end());
      t.push_back({id, scale});
      detail::sort_terms(chain);
      ++rewritten;
    }
    set.aux.push_back({id, {{x, Coefficient(1)}, {y, ratio}}});
    ++report.subexpressions_eliminated;
    report.additions_saved += rewritten - 1;
  }
  report.final_additions = set.additions();
  return report;
}

// Change in submatrix reads + writes from extracting a subexpression shared by
// k write-once chains: the auxiliary costs 2 reads and 1 write, each chain
// reads one operand fewer.
inline long long cost_delta_cse(std::size_t k) {
  if (k < 2) throw ContractViolation("cost_delta_cse: a common subexpression occurs at least twice");
  return 3 - static_cast<long long>(k);
}

struct PhaseCost {
  std::size_t reads = 0;
  std::size_t writes = 0;
};

struct PhasePlan {
  Phase phase = Phase::s;
  ChainSet set;
  CseReport cse;
  PhaseCost cost;
};

//
// Submatrix traffic of one phase at one recursion node.
//   pairwise:   a chain of n terms is one scaled copy and n - 1 axpys:
//               2n - 1 reads, n writes (singletons included).
//   write-once: one fused pass per chain: n reads, 1 write. S/T singletons
//               are never materialized; the leaf reads the operand directly.
//   streaming:  each distinct operand read once; every chain written once.
//
inline PhaseCost predict_phase_cost(const ChainSet& set, Phase phase, Strategy strategy) {
  PhaseCost cost;
  const bool pipe_singletons = phase != Phase::c;
  auto visit = [&](const AdditionChain& c, bool is_target) {
    const std::size_t n = c.terms.size();
    if (n == 0) return;
    switch (strategy) {
      case Strategy::pairwise:
        cost.reads += 2 * n - 1;
        cost.writes += n;
        break;
      case Strategy::write_once:
        cost.reads += n;
        if (!(is_target && pipe_singletons && c.singleton())) cost.writes += 1;
        break;
      case Strategy::streaming:
        cost.writes += 1;
        break;
    }
  };
  for (const auto& c : set.aux) visit(c, false);
  for (const auto& c : set.chains) visit(c, true);
  if (strategy == Strategy::streaming) {
    std::set<std::size_t> operands;
    for (const auto* list : {&set.aux, &set.chains})
      for (const auto& c : *list)
        for (const auto& t : c.terms) operands.insert(t.operand);
    cost.reads = operands.size();
  }
  return cost;
}

// Whether the runtime materializes this S/T target into a temporary.
inline bool materializes(const AdditionChain& c, Phase phase, Strategy strategy) {
  if (phase == Phase::c || strategy == Strategy::streaming) return true;
  if (strategy == Strategy::pairwise) return true;
  return !c.singleton();
}

struct AdditionPlan {
  Strategy strategy = Strategy::write_once;
  bool cse = false;
  BaseCase dims;
  std::size_t rank = 0;
  PhasePlan s, t, c;

  const PhasePlan& phase(Phase p) const { return p == Phase::s ? s : (p == Phase::t ? t : c); }

  std::size_t reads() const { return s.cost.reads + t.cost.reads + c.cost.reads; }
  std::size_t writes() const { return s.cost.writes + t.cost.writes + c.cost.writes; }
  std::size_t additions() const { return s.set.additions() + t.set.additions() + c.set.additions(); }

  // S and T temporaries alive at once in a node: one pair for the sequential
  // strategies, all R pairs for streaming.
  std::size_t st_temporaries() const { return strategy == Strategy::streaming ? 2 * rank : 2; }
  std::size_t aux_temporaries() const { return s.set.aux.size() + t.set.aux.size() + c.set.aux.size(); }
  std::size_t product_temporaries() const { return rank; }

  CseReport cse_report() const {
    CseReport r;
    for (const auto* p : {&s, &t, &c}) {
      r.original_additions += p->cse.original_additions;
      r.final_additions += p->cse.final_additions;
      r.subexpressions_eliminated += p->cse.subexpressions_eliminated;
      r.additions_saved += p->cse.additions_saved;
    }
    return r;
  }
};

inline ChainSet column_chains(const CoefficientMatrix& f) {
  ChainSet set;
  set.num_inputs = f.rows();
  for (std::size_t r = 0; r < f.cols(); ++r) {
    AdditionChain chain{r, {}};
    for (auto& [i, coef] : f.column_terms(r)) chain.terms.push_back({i, coef});
    set.chains.push_back(std::move(chain));
  }
  return set;
}

inline ChainSet row_chains(const CoefficientMatrix& f) {
  ChainSet set;
  set.num_inputs = f.cols();
  for (std::size_t k = 0; k < f.rows(); ++k) {
    AdditionChain chain{k, {}};
    for (auto& [r, coef] : f.row_terms(k)) chain.terms.push_back({r, coef});
    set.chains.push_back(std::move(chain));
  }
  return set;
}

inline AdditionPlan build_plan(const FastAlgorithm& alg, Strategy strategy, bool cse) {
  AdditionPlan plan;
  plan.strategy = strategy;
  plan.cse = cse;
  plan.dims = alg.dims;
  plan.rank = alg.rank;
  auto finish = [&](PhasePlan& p, Phase phase, ChainSet set) {
    p.phase = phase;
    p.set = std::move(set);
    if (cse) {
      p.cse = eliminate_cse(p.set);
    } else {
      p.cse.original_additions = p.cse.final_additions = p.set.additions();
    }
    p.cost = predict_phase_cost(p.set, phase, strategy);
  };
  finish(plan.s, Phase::s, column_chains(alg.u));
  finish(plan.t, Phase::t, column_chains(alg.v));
  finish(plan.c, Phase::c, row_chains(alg.w));
  return plan;
}

// Evaluates every target of `set` on the given input values; aux chains are
// resolved first. Value needs +, and * by Coefficient via `scale`.
template <typename Value, typename Scale>
std::vector<Value> evaluate_chains(const ChainSet& set, const std::vector<Value>& inputs, Scale scale) {
  if (inputs.size() != set.num_inputs) throw ShapeError("evaluate_chains: wrong number of inputs");
  std::vector<Value> values = inputs;
  auto eval = [&](const AdditionChain& c) {
    Value acc{};
    for (const auto& t : c.terms) acc = acc + scale(t.coef, values.at(t.operand));
    return acc;
  };
  for (const auto& a : set.aux) values.push_back(eval(a));
  std::vector<Value> out;
  out.reserve(set.chains.size());
  for (const auto& c : set.chains) out.push_back(eval(c));
  return out;
}

}  // namespace fmm
