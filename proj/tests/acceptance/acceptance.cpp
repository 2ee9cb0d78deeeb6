// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance                 criteria 1-9
//   acceptance --criterion N   just criterion N (10 is the performance check)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fmm/addition_plan.hpp"
#include "fmm/algorithm.hpp"
#include "fmm/algorithm_io.hpp"
#include "fmm/als.hpp"
#include "fmm/bench.hpp"
#include "fmm/numeric.hpp"
#include "fmm/parallel.hpp"
#include "fmm/runtime.hpp"
#include "fmm/tensor.hpp"
#include "fmm/transforms.hpp"
#include "support/oracles.hpp"

namespace {

using fmm::Coefficient;
using fmm::ExecMode;
using fmm::Rational;
using fmm::Strategy;

constexpr Strategy kStrategies[] = {Strategy::pairwise, Strategy::write_once, Strategy::streaming};

// Collects failed expectations; the first few are printed with the verdict.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_ << (notes_.tellp() > 0 ? "; " : "") << s; }

  bool passed() const { return failures_.empty(); }
  std::size_t checks() const { return checks_; }
  std::string summary() const {
    std::ostringstream os;
    os << checks_ << " checks";
    if (notes_.tellp() > 0) os << "; " << notes_.str();
    for (std::size_t i = 0; i < failures_.size() && i < 5; ++i) os << "\n      failed: " << failures_[i];
    if (failures_.size() > 5) os << "\n      ... " << failures_.size() - 5 << " more";
    return os.str();
  }

 private:
  std::size_t checks_ = 0;
  std::vector<std::string> failures_;
  mutable std::ostringstream notes_;
};

std::string str(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

fmm::ExecutionConfig config(std::size_t steps, Strategy strategy, bool cse = false) {
  fmm::ExecutionConfig cfg;
  cfg.steps = steps;
  cfg.strategy = strategy;
  cfg.cse = cse;
  return cfg;
}

// 1. Strassen coefficient file.
void strassen_fidelity(Check& c) {
  const auto alg = fmm::load_algorithm(std::string(FMM_DATA_DIR) + "/algorithms/strassen.alg");
  const auto v = fmm::validate(alg);
  const auto s = fmm::stats(alg);
  c.expect(v.rational_arithmetic, "validation not in rational arithmetic");
  c.expect(v.valid && v.max_residual == 0.0, "residual " + str(v.max_residual));
  c.expect(alg.dims == fmm::BaseCase{2, 2, 2}, "base case " + fmm::to_string(alg.dims));
  c.expect(s.rank == 7, "rank " + std::to_string(s.rank));
  c.expect(s.addition_count == 18, "additions " + std::to_string(s.addition_count));
  c.expect(std::lround(100 * s.speedup_per_step) == 14, "speedup " + str(s.speedup_per_step));
  c.note("R=" + std::to_string(s.rank) + " additions=" + std::to_string(s.addition_count) +
         " speedup=" + std::to_string(std::lround(100 * s.speedup_per_step)) + "% residual=" + str(v.max_residual));
}

// 2. Tensor slices and nonzero counts.
void tensor_correctness(Check& c) {
  constexpr int slices[4][4][4] = {
      {{1, 0, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 0}, {0, 0, 0, 0}},
      {{0, 1, 0, 0}, {0, 0, 0, 1}, {0, 0, 0, 0}, {0, 0, 0, 0}},
      {{0, 0, 0, 0}, {0, 0, 0, 0}, {1, 0, 0, 0}, {0, 0, 1, 0}},
      {{0, 0, 0, 0}, {0, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 1}},
  };
  const fmm::MatMulTensor t({2, 2, 2});
  const auto dense = t.materialize();
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        const std::string at = "(" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) + ")";
        c.expect(t.entry(i, j, k) == slices[k][i][j], "entry " + at);
        c.expect(dense[(k * 4 + i) * 4 + j] == slices[k][i][j], "dense entry " + at);
      }
  for (std::size_t m = 1; m <= 4; ++m)
    for (std::size_t k = 1; k <= 4; ++k)
      for (std::size_t n = 1; n <= 4; ++n) {
        const fmm::MatMulTensor tt({m, k, n});
        std::size_t ones = 0;
        for (std::size_t i = 0; i < tt.size_i(); ++i)
          for (std::size_t j = 0; j < tt.size_j(); ++j)
            for (std::size_t x = 0; x < tt.size_k(); ++x) ones += tt.entry(i, j, x) == 1 ? 1 : 0;
        c.expect(ones == m * k * n && tt.nnz() == m * k * n, "nnz of " + fmm::to_string(fmm::BaseCase{m, k, n}));
      }
}

// 3. Every algorithm x strategy x depth x shape against the triple loop.
void oracle_equivalence(Check& c) {
  std::vector<fmm::FastAlgorithm> algs{fmm::classical_algorithm(2, 2, 2), fmm::strassen_algorithm(),
                                       fmm::compose(fmm::strassen_algorithm(), fmm::strassen_algorithm()).algorithm};
  for (auto& a : fmm::all_permutations(fmm::classical_algorithm(2, 3, 4))) algs.push_back(a);
  const std::vector<fmm::ProblemShape> shapes{{128, 128, 128}, {5, 5, 5}, {101, 67, 89}, {96, 160, 96}};
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::size_t runs = 0;
  for (const auto& sh : shapes) {
    const auto a = fmm::testing::random_matrix(sh.p, sh.q, rng);
    const auto b = fmm::testing::random_matrix(sh.q, sh.r, rng);
    const auto expect = fmm::testing::naive_multiply(a, b);
    for (const auto& alg : algs)
      for (auto strategy : kStrategies)
        for (std::size_t steps = 0; steps <= 2; ++steps) {
          const auto r = fmm::fast_multiply(a, b, alg, config(steps, strategy));
          const double err = fmm::relative_error(r.c, expect);
          worst = std::max(worst, err);
          ++runs;
          c.expect(err <= 1e-9, alg.name + " " + fmm::to_string(strategy) + " L=" + std::to_string(steps) + " " +
                                    std::to_string(sh.p) + "x" + std::to_string(sh.q) + "x" + std::to_string(sh.r) +
                                    " error " + str(err));
        }
  }
  c.note(std::to_string(algs.size()) + " algorithms, " + std::to_string(runs) + " runs, worst error " + str(worst));
}

// 4. Instrumented traffic and flops against closed forms.
void cost_model(Check& c) {
  // Closed forms per node from factor sparsity: chains are the R columns of
  // U and of V and the MN rows of W.
  auto closed_form = [](const fmm::FastAlgorithm& alg, Strategy strategy) {
    const std::size_t nnz = alg.u.nnz() + alg.v.nnz() + alg.w.nnz();
    const std::size_t chains = 2 * alg.rank + alg.dims.c_blocks();
    switch (strategy) {
      case Strategy::pairwise:
        return fmm::LevelTraffic{2 * nnz - chains, nnz};
      case Strategy::write_once: {
        std::size_t writes = alg.dims.c_blocks();
        for (std::size_t r = 0; r < alg.rank; ++r) {
          writes += alg.u.column_nnz(r) > 1 ? 1 : 0;
          writes += alg.v.column_nnz(r) > 1 ? 1 : 0;
        }
        return fmm::LevelTraffic{nnz, writes};
      }
      case Strategy::streaming:
        return fmm::LevelTraffic{alg.dims.a_blocks() + alg.dims.b_blocks() + alg.rank, chains};
    }
    return fmm::LevelTraffic{};
  };
  const auto strassen = fmm::strassen_algorithm();
  c.expect(closed_form(strassen, Strategy::pairwise) == fmm::LevelTraffic{54, 36}, "pairwise closed form");
  c.expect(closed_form(strassen, Strategy::write_once) == fmm::LevelTraffic{36, 14}, "write-once closed form");
  c.expect(closed_form(strassen, Strategy::streaming) == fmm::LevelTraffic{15, 18}, "streaming closed form");

  std::mt19937_64 rng(4);
  const auto a = fmm::testing::random_matrix(32, 32, rng), b = fmm::testing::random_matrix(32, 32, rng);
  for (const auto& alg : {strassen, fmm::classical_algorithm(2, 2, 2)})
    for (auto strategy : kStrategies) {
      const auto want = closed_form(alg, strategy);
      const auto r = fmm::fast_multiply(a, b, alg, config(3, strategy));
      for (std::size_t level = 0; level < 3; ++level) {
        const std::uint64_t nodes = fmm::power(alg.rank, level);
        const auto& got = r.counters.per_level.at(level);
        c.expect(got.reads == nodes * want.reads && got.writes == nodes * want.writes,
                 alg.name + " " + fmm::to_string(strategy) + " level " + std::to_string(level) + ": " +
                     std::to_string(got.reads) + "/" + std::to_string(got.writes));
      }
    }
  for (auto strategy : kStrategies) {
    const auto w = closed_form(strassen, strategy);
    c.note(std::string(fmm::to_string(strategy)) + " " + std::to_string(w.reads) + "/" + std::to_string(w.writes));
  }

  const auto a8 = fmm::testing::random_matrix(8, 8, rng), b8 = fmm::testing::random_matrix(8, 8, rng);
  for (auto strategy : kStrategies) {
    const auto fc = fmm::fast_multiply(a8, b8, fmm::classical_algorithm(2, 2, 2), config(3, strategy)).counters.flops();
    const auto fs = fmm::fast_multiply(a8, b8, strassen, config(3, strategy)).counters.flops();
    c.expect(fc == 960, "classical flops " + std::to_string(fc));
    c.expect(fs == 2017, "Strassen flops " + std::to_string(fs));
  }
  c.note("F_C(8)=960 F_S(8)=2017");
}

// 5. Common subexpression elimination.
void cse(Check& c) {
  // B blocks of a 2x4 matrix: B12 = 1, B22 = 5, B23 = 6, B24 = 7.
  fmm::ChainSet set;
  set.num_inputs = 8;
  set.chains.push_back({0, {{7, 1}, {1, -1}, {5, -1}}});  // T11 = B24 - B12 - B22
  set.chains.push_back({1, {{6, 1}, {1, 1}, {5, 1}}});    // T25 = B23 + B12 + B22
  const auto report = fmm::eliminate_cse(set);
  c.expect(set.aux.size() == 1 && set.aux[0] == fmm::AdditionChain{8, {{1, 1}, {5, 1}}}, "Y1 = B12 + B22");
  c.expect(set.chains[0] == fmm::AdditionChain{0, {{7, 1}, {8, -1}}}, "T11 = B24 - Y1");
  c.expect(set.chains[1] == fmm::AdditionChain{1, {{6, 1}, {8, 1}}}, "T25 = B23 + Y1");
  c.expect(report.additions_saved == 1, "saved " + std::to_string(report.additions_saved));
  c.expect(fmm::cost_delta_cse(2) == 1 && fmm::cost_delta_cse(3) == 0 && fmm::cost_delta_cse(4) == -1,
           "cost_delta_cse(2,3,4)");

  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> n_inputs(2, 8), n_chains(1, 12), coef(-4, 4), den(1, 5);
  std::bernoulli_distribution present(0.5);
  auto scale = [](const Coefficient& k, const Rational& x) { return k.value * x; };
  std::size_t saved = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    fmm::ChainSet s;
    s.num_inputs = static_cast<std::size_t>(n_inputs(rng));
    const int chains = n_chains(rng);
    for (int ch = 0; ch < chains; ++ch) {
      fmm::AdditionChain chain{static_cast<std::size_t>(ch), {}};
      for (std::size_t i = 0; i < s.num_inputs; ++i) {
        if (!present(rng)) continue;
        int v = coef(rng);
        if (v == 0) v = -1;
        chain.terms.push_back({i, Coefficient(Rational(v, den(rng)))});
      }
      if (chain.terms.empty()) chain.terms.push_back({0, 1});
      s.chains.push_back(std::move(chain));
    }
    const auto original = s;
    saved += fmm::eliminate_cse(s).additions_saved;
    std::vector<Rational> inputs;
    for (std::size_t i = 0; i < s.num_inputs; ++i) inputs.emplace_back(coef(rng) * 7 + 1, den(rng));
    c.expect(fmm::evaluate_chains(original, inputs, scale) == fmm::evaluate_chains(s, inputs, scale),
             "semantics, trial " + std::to_string(trial));
  }
  c.note("1000 random chain sets, " + std::to_string(saved) + " additions saved");
}

// 6. Parallel schedules and results.
void parallel(Check& c) {
  const auto s = fmm::strassen_algorithm();
  const auto h1 = fmm::make_schedule(s, 1, 6, ExecMode::hybrid);
  c.expect(h1.bfs_count == 6 && h1.dfs_count == 1, "hybrid R=7 L=1 P=6");
  const auto h2 = fmm::make_schedule(s, 2, 24, ExecMode::hybrid);
  c.expect(h2.bfs_count == 48 && h2.dfs_count == 1, "hybrid R=7 L=2 P=24");

  std::mt19937_64 rng(6);
  const auto a = fmm::testing::random_matrix(240, 240, rng), b = fmm::testing::random_matrix(240, 240, rng);
  const auto seq = fmm::fast_multiply(a, b, s, config(1, Strategy::write_once));
  int peak = 0;
  double worst = 0.0;
  constexpr std::size_t kWorkers = 4;
  for (auto mode : {ExecMode::dfs, ExecMode::bfs, ExecMode::hybrid}) {
    auto cfg = config(1, Strategy::write_once);
    cfg.mode = mode;
    cfg.workers = kWorkers;
    const auto r = fmm::fast_multiply(a, b, s, cfg);
    const double err = fmm::relative_error(r.c, seq.c);
    worst = std::max(worst, err);
    peak = std::max(peak, r.counters.max_active_workers);
    c.expect(err <= 1e-12, std::string(fmm::to_string(mode)) + " error " + str(err));
    c.expect(r.counters.max_active_workers <= static_cast<int>(kWorkers),
             std::string(fmm::to_string(mode)) + " active workers " + std::to_string(r.counters.max_active_workers));
  }
  c.note("6+1, 48+1; worst error " + str(worst) + "; peak active threads " + std::to_string(peak) + " <= " +
         std::to_string(kWorkers));
}

// 7. Random equivalence transforms of Strassen.
void transform_closure(Check& c) {
  std::mt19937_64 rng(7);
  const auto base = fmm::strassen_algorithm();
  std::uniform_int_distribution<int> small(-3, 3), kind(0, 3);
  std::normal_distribution<double> g;
  std::size_t exact = 0, numeric = 0;
  double worst_float = 0.0;
  auto unimodular = [&] {
    fmm::RationalMatrix lo = fmm::RationalMatrix::identity(2), up = fmm::RationalMatrix::identity(2);
    lo(1, 0) = small(rng);
    up(0, 1) = Rational(small(rng), 1 + (small(rng) + 3) % 3);
    fmm::RationalMatrix out(2, 2);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 2; ++k) out(i, j) += lo(i, k) * up(k, j);
    return out;
  };
  for (int t = 0; t < 100; ++t) {
    const int which = kind(rng);
    if (which == 3) {
      auto well_conditioned = [&] {
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2, 2);
        for (Eigen::Index i = 0; i < 4; ++i) m.data()[i] += 0.3 * g(rng);
        return m;
      };
      const auto f = fmm::change_basis(fmm::to_numeric(base), well_conditioned(), well_conditioned(),
                                       well_conditioned());
      const double res = fmm::numeric_residual(f).max_abs;
      worst_float = std::max(worst_float, res);
      c.expect(res <= 1e-10, "float basis change residual " + str(res));
      ++numeric;
      continue;
    }
    fmm::FastAlgorithm alg;
    if (which == 0) {
      std::vector<std::size_t> perm(7);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      alg = fmm::permute_columns(base, perm);
    } else if (which == 1) {
      std::vector<Coefficient> dx, dy, dz;
      for (int r = 0; r < 7; ++r) {
        int p = small(rng), q = small(rng);
        if (p == 0) p = 2;
        if (q == 0) q = -1;
        dx.emplace_back(Rational(p));
        dy.emplace_back(Rational(1) / q);
        dz.emplace_back(Rational(q) / p);
      }
      alg = fmm::scale_columns(base, dx, dy, dz);
    } else {
      alg = fmm::change_basis(base, unimodular(), unimodular(), unimodular());
    }
    const auto v = fmm::validate(alg);
    c.expect(v.rational_arithmetic && v.valid && v.max_residual == 0.0, "exact transform " + std::to_string(t));
    ++exact;
  }
  c.note(std::to_string(exact) + " exact (rational), " + std::to_string(numeric) + " float, worst float residual " +
         str(worst_float));
}

// 8. Composition rank and exponent.
void composition(Check& c) {
  const auto s = fmm::strassen_algorithm();
  const auto s2 = fmm::compose(s, s);
  const auto s3 = fmm::compose(s2.algorithm, s);
  const auto st = fmm::stats(s3.algorithm);
  c.expect(s3.algorithm.dims == fmm::BaseCase{8, 8, 8}, "dims " + fmm::to_string(s3.algorithm.dims));
  c.expect(s3.algorithm.rank == 343, "rank " + std::to_string(s3.algorithm.rank));
  c.expect(s3.valid && s3.max_residual == 0.0, "composed residual " + str(s3.max_residual));
  c.expect(st.exponent && std::abs(*st.exponent - std::log(343.0) / std::log(8.0)) <= 1e-12, "exponent");
  c.expect(st.exponent && std::abs(*st.exponent - std::log2(7.0)) <= 1e-12, "exponent vs log2 7");
  std::ostringstream os;
  os.precision(15);
  os << "<8,8,8> R=" << s3.algorithm.rank << " exponent " << (st.exponent ? *st.exponent : 0.0)
     << (s3.exact_check ? " (rational check)" : " (randomized check)");
  c.note(os.str());
}

// 9. ALS behaviour.
void als(Check& c) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  auto random = [&](Eigen::Index r, Eigen::Index k) {
    Eigen::MatrixXd m(r, k);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
    return m;
  };
  std::uniform_int_distribution<int> dim(1, 3), rank(1, 8);
  std::size_t half_steps = 0;
  for (int problem = 0; problem < 50; ++problem) {
    const auto t = fmm::DenseTensor3::matmul(
        {static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng)), static_cast<std::size_t>(dim(rng))});
    const Eigen::Index r = rank(rng);
    fmm::Factors f{random(static_cast<Eigen::Index>(t.size_i()), r), random(static_cast<Eigen::Index>(t.size_j()), r),
                   random(static_cast<Eigen::Index>(t.size_k()), r)};
    double before = fmm::decomposition_residual(t, f);
    bool monotone = true;
    for (int sweep = 0; sweep < 20; ++sweep)
      for (auto mode : {fmm::FactorMode::u, fmm::FactorMode::v, fmm::FactorMode::w}) {
        const double after = fmm::als_step(t, f, mode, 0.0).residual;
        monotone &= after <= before * (1 + 1e-12) + 1e-12;
        before = after;
        ++half_steps;
      }
    c.expect(monotone, "monotone, problem " + std::to_string(problem));
  }

  const auto planted = fmm::DenseTensor3::from_factors(random(8, 3), random(8, 3), random(8, 3));
  int recovered = 0;
  for (int start = 0; start < 20; ++start) {
    fmm::Factors f{random(8, 3), random(8, 3), random(8, 3)};
    double res = fmm::decomposition_residual(planted, f);
    for (int it = 0; it < 500 && res >= 1e-10; ++it) res = fmm::als_sweep(planted, f, 0.0).residual;
    recovered += res < 1e-8 ? 1 : 0;
  }
  c.expect(recovered >= 1, "planted rank 3 recovered in " + std::to_string(recovered) + " of 20");

  fmm::SearchConfig cfg;
  cfg.dims = {2, 2, 2};
  cfg.rank = 6;
  cfg.starts = 50;
  cfg.max_iterations = 500;
  cfg.workers = std::max<std::size_t>(1, std::min<std::size_t>(4, std::thread::hardware_concurrency()));
  const auto result = fmm::search(cfg);
  const double best = *std::min_element(result.final_residuals.begin(), result.final_residuals.end());
  c.expect(result.final_residuals.size() == 50, "50 starts");
  c.expect(result.candidates.empty() && best >= 1e-6, "rank 6 residual " + str(best));
  c.note(std::to_string(half_steps) + " monotone half-steps; planted " + std::to_string(recovered) +
         "/20; rank-6 best residual " + str(best));
}

// 10. Sequential Strassen against the same kernel at L = 0, N = 4096.
void performance(Check& c) {
  constexpr std::size_t n = 4096;
  const unsigned cores = std::thread::hardware_concurrency();
  auto median_time = [&](std::size_t steps) {
    fmm::BenchCell cell;
    cell.algorithm = "strassen";
    cell.shape = {n, n, n};
    cell.steps = {steps};
    cell.check = steps != 0;
    const auto rec = fmm::run_cell(cell);
    c.expect(rec.error.empty(), "L=" + std::to_string(steps) + ": " + rec.error);
    if (rec.max_rel_error) c.expect(*rec.max_rel_error <= 1e-9, "L=" + std::to_string(steps) + " error");
    return rec.median_s;
  };
  const double t0 = median_time(0);
  const double t1 = median_time(1);
  const double t2 = median_time(2);
  const double best = std::min(t1, t2);
  const double speedup = t0 / best;
  c.expect(speedup >= 1.05, "speedup " + str(speedup) + " < 1.05");
  std::ostringstream os;
  os.precision(4);
  os << "L=0 " << t0 << " s, L=1 " << t1 << " s, L=2 " << t2 << " s, speedup " << speedup << "x on " << cores
     << " hardware thread" << (cores == 1 ? "" : "s");
  if (cores < 4) os << " (criterion assumes >= 4 cores)";
  c.note(os.str());
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<void(Check&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "Strassen fidelity", 1, strassen_fidelity},
      {2, "Tensor correctness", 1, tensor_correctness},
      {3, "Oracle equivalence", 120, oracle_equivalence},
      {4, "Cost-model conformance", 10, cost_model},
      {5, "CSE", 10, cse},
      {6, "Parallel correctness and scheduling", 60, parallel},
      {7, "Transform closure", 60, transform_closure},
      {8, "Composition exponent", 10, composition},
      {9, "ALS behavior", 300, als},
      {10, "Desk-scale performance", 600, performance},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--criterion" && i + 1 < argc) {
      selected.push_back(std::atoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 2;
    }
  }
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  int failed = 0;
  for (int id : selected) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const Criterion& k) { return k.id == id; });
    if (it == all.end()) {
      std::cerr << "no criterion " << id << '\n';
      return 2;
    }
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      it->run(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check.expect(secs < it->budget_s, "runtime " + str(secs) + " s over budget " + str(it->budget_s) + " s");
    std::ostringstream t;
    t.precision(3);
    t << secs;
    std::cout << (check.passed() ? "PASS" : "FAIL") << "  criterion " << it->id << ": " << it->name << " (" << t.str()
              << " s): " << check.summary() << std::endl;
    failed += check.passed() ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
