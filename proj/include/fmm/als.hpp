#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fmm/algorithm.hpp"
#include "fmm/errors.hpp"
#include "fmm/numeric.hpp"
#include "fmm/parallel.hpp"
#include "fmm/rational.hpp"
#include "fmm/tensor.hpp"

namespace fmm {

// Dense I x J x K tensor with its three matrix unfoldings:
// mode 1 is I x JK (column j*K + k), mode 2 is J x IK (i*K + k),
// mode 3 is K x IJ (i*J + j).
class DenseTensor3 {
 public:
  DenseTensor3(std::size_t I, std::size_t J, std::size_t K)
      : dims_{I, J, K},
        m1_(Eigen::MatrixXd::Zero(idx(I), idx(J * K))),
        m2_(Eigen::MatrixXd::Zero(idx(J), idx(I * K))),
        m3_(Eigen::MatrixXd::Zero(idx(K), idx(I * J))) {}

  static DenseTensor3 matmul(BaseCase dims) {
    const MatMulTensor t(dims);
    DenseTensor3 out(t.size_i(), t.size_j(), t.size_k());
    for (const auto& nz : t.nonzeros()) out.set(nz.i, nz.j, nz.k, 1.0);
    return out;
  }

  // sum_r u_r (x) v_r (x) w_r
  static DenseTensor3 from_factors(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, const Eigen::MatrixXd& w) {
    DenseTensor3 out(static_cast<std::size_t>(u.rows()), static_cast<std::size_t>(v.rows()),
                     static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      for (Eigen::Index j = 0; j < v.rows(); ++j)
        for (Eigen::Index k = 0; k < w.rows(); ++k)
          out.set(static_cast<std::size_t>(i), static_cast<std::size_t>(j), static_cast<std::size_t>(k),
                  (u.row(i).cwiseProduct(v.row(j)).cwiseProduct(w.row(k))).sum());
    return out;
  }

  std::size_t size_i() const { return dims_[0]; }
  std::size_t size_j() const { return dims_[1]; }
  std::size_t size_k() const { return dims_[2]; }

  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return m1_(idx(i), idx(j * dims_[2] + k));
  }
  void set(std::size_t i, std::size_t j, std::size_t k, double x) {
    m1_(idx(i), idx(j * dims_[2] + k)) = x;
    m2_(idx(j), idx(i * dims_[2] + k)) = x;
    m3_(idx(k), idx(i * dims_[1] + j)) = x;
  }

  const Eigen::MatrixXd& unfolding(int mode) const { return mode == 0 ? m1_ : (mode == 1 ? m2_ : m3_); }
  double norm() const { return m1_.norm(); }

 private:
  static Eigen::Index idx(std::size_t x) { return static_cast<Eigen::Index>(x); }

  std::size_t dims_[3];
  Eigen::MatrixXd m1_, m2_, m3_;
};

enum class FactorMode { u = 0, v = 1, w = 2 };

struct Factors {
  Eigen::MatrixXd u, v, w;

  Eigen::MatrixXd& get(FactorMode m) { return m == FactorMode::u ? u : (m == FactorMode::v ? v : w); }
  const Eigen::MatrixXd& get(FactorMode m) const { return m == FactorMode::u ? u : (m == FactorMode::v ? v : w); }
  Eigen::Index rank() const { return u.cols(); }
};

namespace detail {

// Row j*B.rows() + k is a_j .* b_k.
inline Eigen::MatrixXd khatri_rao(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.rows(); ++j)
    for (Eigen::Index k = 0; k < b.rows(); ++k) out.row(j * b.rows() + k) = a.row(j).cwiseProduct(b.row(k));
  return out;
}

inline Eigen::MatrixXd design(const Factors& f, FactorMode free) {
  switch (free) {
    case FactorMode::u:
      return khatri_rao(f.v, f.w);
    case FactorMode::v:
      return khatri_rao(f.u, f.w);
    case FactorMode::w:
      return khatri_rao(f.u, f.v);
  }
  return {};
}

}  // namespace detail

// Frobenius norm of T minus the factors' reconstruction.
inline double decomposition_residual(const DenseTensor3& t, const Factors& f) {
  return (t.unfolding(0) - f.u * detail::khatri_rao(f.v, f.w).transpose()).norm();
}

// Entries held at fixed values during sparsification (true = fixed).
using FixedMask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct AlsStepResult {
  double residual = 0.0;
  bool rank_deficient = false;
};

//
// Replaces the free factor with the minimizer of
//   ||T - [[U, V, W]]||^2 + reg ||free factor - prior||^2
// given the other two (prior defaults to zero). Ridge problems are solved by QR on the stacked system;
// reg = 0 uses a complete orthogonal decomposition (minimum-norm solution)
// and reports rank deficiency. With a mask, fixed entries keep their values
// and each row is solved over its free entries only.
//
inline AlsStepResult als_step(const DenseTensor3& t, Factors& f, FactorMode free, double reg,
                              const FixedMask* mask = nullptr, const Eigen::MatrixXd* prior = nullptr) {
  if (reg < 0) throw ContractViolation("als_step: regularization must be >= 0");
  const int mode = static_cast<int>(free);
  const Eigen::MatrixXd& unf = t.unfolding(mode);
  Eigen::MatrixXd& x = f.get(free);
  if (x.rows() != unf.rows() || f.u.cols() != f.v.cols() || f.u.cols() != f.w.cols()) {
    throw ShapeError("als_step: factor shapes do not match the tensor");
  }
  if (prior != nullptr && (prior->rows() != x.rows() || prior->cols() != x.cols())) {
    throw ShapeError("als_step: prior shape does not match the factor");
  }
  const Eigen::MatrixXd kr = detail::design(f, free);
  const Eigen::Index R = kr.cols();
  AlsStepResult result;

  // p: prior for the unknowns, a.cols() x b.cols(), or empty for zero.
  auto solve = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& p) -> Eigen::MatrixXd {
    if (a.cols() == 0) return Eigen::MatrixXd(0, b.cols());
    if (reg > 0) {
      Eigen::MatrixXd a_aug(a.rows() + a.cols(), a.cols());
      a_aug << a, std::sqrt(reg) * Eigen::MatrixXd::Identity(a.cols(), a.cols());
      Eigen::MatrixXd b_aug = Eigen::MatrixXd::Zero(a.rows() + a.cols(), b.cols());
      b_aug.topRows(a.rows()) = b;
      if (p.size() != 0) b_aug.bottomRows(a.cols()) = std::sqrt(reg) * p;
      return a_aug.householderQr().solve(b_aug);
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
    if (cod.rank() < a.cols()) result.rank_deficient = true;
    return cod.solve(b);
  };

  if (mask == nullptr || mask->count() == 0) {
    x = solve(kr, unf.transpose(), prior == nullptr ? Eigen::MatrixXd() : Eigen::MatrixXd(prior->transpose()))
            .transpose();
  } else {
    for (Eigen::Index row = 0; row < x.rows(); ++row) {
      std::vector<Eigen::Index> free_cols, fixed_cols;
      for (Eigen::Index r = 0; r < R; ++r) ((*mask)(row, r) ? fixed_cols : free_cols).push_back(r);
      if (free_cols.empty()) continue;
      Eigen::VectorXd rhs = unf.row(row).transpose();
      for (auto r : fixed_cols) rhs -= kr.col(r) * x(row, r);
      Eigen::MatrixXd a(kr.rows(), static_cast<Eigen::Index>(free_cols.size()));
      for (std::size_t c = 0; c < free_cols.size(); ++c) a.col(static_cast<Eigen::Index>(c)) = kr.col(free_cols[c]);
      Eigen::MatrixXd p;
      if (prior != nullptr) {
        p.resize(static_cast<Eigen::Index>(free_cols.size()), 1);
        for (std::size_t c = 0; c < free_cols.size(); ++c) p(static_cast<Eigen::Index>(c), 0) = (*prior)(row, free_cols[c]);
      }
      const Eigen::MatrixXd sol = solve(a, rhs, p);
      for (std::size_t c = 0; c < free_cols.size(); ++c) x(row, free_cols[c]) = sol(static_cast<Eigen::Index>(c), 0);
    }
  }
  result.residual = decomposition_residual(t, f);
  return result;
}

// One sweep: U, then V, then W.
inline AlsStepResult als_sweep(const DenseTensor3& t, Factors& f, double reg, const FixedMask* masks = nullptr,
                               const Factors* prior = nullptr) {
  AlsStepResult last;
  bool deficient = false;
  for (auto m : {FactorMode::u, FactorMode::v, FactorMode::w}) {
    last = als_step(t, f, m, reg, masks == nullptr ? nullptr : &masks[static_cast<int>(m)],
                    prior == nullptr ? nullptr : &prior->get(m));
    deficient |= last.rank_deficient;
  }
  last.rank_deficient = deficient;
  return last;
}

struct SearchConfig {
  BaseCase dims{2, 2, 2};
  std::size_t rank = 7;
  std::size_t starts = 10;
  std::size_t max_iterations = 500;  // regularized sweeps
  std::size_t polish_iterations = 200;  // unregularized sweeps afterwards
  double reg_initial = 0.1;
  double reg_decay = 0.5;
  std::size_t reg_decay_every = 50;
  double reg_floor = 1e-6;
  std::vector<Rational> grid{Rational(0), Rational(1), Rational(-1), Rational(1, 2), Rational(-1, 2),
                             Rational(1, 4), Rational(-1, 4), Rational(2), Rational(-2)};
  double snap_tolerance = 0.05;
  std::size_t sparsify_refits = 400;
  std::size_t sparsify_sweeps = 100;
  double sparsify_tolerance = 1e-3;  // fit kept while rounding; exactness is checked at the end
  double accept_tolerance = 1e-6;   // numeric candidate
  double converged_tolerance = 1e-12;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  std::size_t log_every = 10;

  void check() const {
    if (rank == 0) throw ContractViolation("search: rank must be >= 1");
    if (accept_tolerance <= 0 || converged_tolerance <= 0 || snap_tolerance <= 0) {
      throw ContractViolation("search: tolerances must be positive");
    }
    if (reg_initial < 0 || reg_floor < 0 || reg_decay <= 0) throw ContractViolation("search: bad regularization");
    if (grid.empty()) throw ContractViolation("search: empty rounding grid");
  }

  double reg_at(std::size_t iteration) const {
    if (reg_initial == 0) return 0.0;
    const double steps = reg_decay_every == 0 ? 0.0 : static_cast<double>(iteration / reg_decay_every);
    return std::max(reg_floor, reg_initial * std::pow(reg_decay, steps));
  }
};

struct SearchLogEntry {
  std::size_t start = 0;
  std::size_t iteration = 0;
  double residual = 0.0;
  double reg = 0.0;
};

struct Candidate {
  std::size_t start = 0;
  double residual = 0.0;   // numeric residual after polishing
  bool exact = false;      // rounded rationals validated exactly
  std::optional<FastAlgorithm> algorithm;
  NumericFactors factors;
};

struct SearchResult {
  std::vector<Candidate> candidates;  // sorted by start
  std::vector<double> final_residuals;  // one per start
  std::vector<SearchLogEntry> log;
};

namespace detail {

inline std::optional<Rational> snap(double x, const std::vector<Rational>& grid, double tol) {
  const Rational* best = nullptr;
  double best_d = tol;
  for (const auto& g : grid) {
    const double d = std::abs(x - to_double(g));
    if (d <= best_d) {
      best_d = d;
      best = &g;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

// Rescales column r of U, V and W to a common max-abs value, keeping their
// product (and so the decomposition) unchanged.
inline void balance_columns(Factors& f) {
  for (Eigen::Index r = 0; r < f.rank(); ++r) {
    const double su = f.u.col(r).cwiseAbs().maxCoeff(), sv = f.v.col(r).cwiseAbs().maxCoeff(),
                 sw = f.w.col(r).cwiseAbs().maxCoeff();
    if (su == 0 || sv == 0 || sw == 0) continue;
    const double c = std::cbrt(su * sv * sw);
    f.u.col(r) *= c / su;
    f.v.col(r) *= c / sv;
    f.w.col(r) *= c / sw;
  }
}

inline std::optional<FastAlgorithm> round_to_algorithm(const Factors& f, const SearchConfig& cfg,
                                                       const std::string& name) {
  auto convert = [&](const Eigen::MatrixXd& m) -> std::optional<CoefficientMatrix> {
    CoefficientMatrix out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        auto q = snap(m(i, j), cfg.grid, cfg.snap_tolerance);
        if (!q) return std::nullopt;
        out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = Coefficient(*q);
      }
    return out;
  };
  auto u = convert(f.u), v = convert(f.v), w = convert(f.w);
  if (!u || !v || !w) return std::nullopt;
  FastAlgorithm alg(name, cfg.dims, std::move(*u), std::move(*v), std::move(*w));
  if (!validate(alg).valid) return std::nullopt;
  return alg;
}

struct StartOutcome {
  double residual = 0.0;
  std::optional<Candidate> candidate;
  std::vector<SearchLogEntry> log;
};

struct Rounding {
  const DenseTensor3& t;
  const SearchConfig& cfg;
  Factors f;
  FixedMask masks[3];
  std::size_t refits = 0;

  struct Entry {
    double distance;
    int mode;
    Eigen::Index row, col;
    double target;
  };

  Rounding(const DenseTensor3& tensor, const SearchConfig& config, Factors factors)
      : t(tensor), cfg(config), f(std::move(factors)) {
    for (int m = 0; m < 3; ++m) {
      const auto& x = f.get(static_cast<FactorMode>(m));
      masks[m] = FixedMask::Constant(x.rows(), x.cols(), false);
    }
  }

  double refit(Factors& g) const {
    double res = decomposition_residual(t, g);
    for (std::size_t s = 0; s < cfg.sparsify_sweeps && res > cfg.converged_tolerance; ++s) {
      res = als_sweep(t, g, 0.0, masks).residual;
    }
    return res;
  }

  //
  // Fixes free entries to target(x) in order of |x - target(x)|, a batch at a
  // time, re-fitting the rest after each batch. A batch that breaks the fit
  // is retried at half size; an entry that cannot be fixed alone is passed
  // over. Returns the number of entries left free.
  //
  template <typename Target>
  std::size_t fix(Target target) {
    for (;;) {
      std::vector<Entry> free;
      for (int m = 0; m < 3; ++m) {
        const Eigen::MatrixXd& x = f.get(static_cast<FactorMode>(m));
        for (Eigen::Index i = 0; i < x.rows(); ++i)
          for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (masks[m](i, j)) continue;
            const double y = target(x(i, j));
            if (std::isfinite(y)) free.push_back({std::abs(x(i, j) - y), m, i, j, y});
          }
      }
      if (free.empty()) return 0;
      std::stable_sort(free.begin(), free.end(), [](const Entry& a, const Entry& b) { return a.distance < b.distance; });
      std::size_t near = 0;
      while (near < free.size() && free[near].distance <= cfg.snap_tolerance) ++near;
      std::size_t batch = std::max<std::size_t>(near, std::max<std::size_t>(1, free.size() / 4));
      std::size_t first = 0;
      for (;;) {
        if (++refits > cfg.sparsify_refits) return free.size();
        Factors trial = f;
        for (std::size_t e = first; e < first + batch; ++e) {
          trial.get(static_cast<FactorMode>(free[e].mode))(free[e].row, free[e].col) = free[e].target;
          masks[free[e].mode](free[e].row, free[e].col) = true;
        }
        if (refit(trial) < cfg.sparsify_tolerance) {
          f = std::move(trial);
          break;
        }
        for (std::size_t e = first; e < first + batch; ++e) masks[free[e].mode](free[e].row, free[e].col) = false;
        if (batch > 1) {
          batch /= 2;
        } else if (++first == free.size()) {
          return free.size();
        }
      }
    }
  }
};

//
// Rounding toward an exact algorithm: zero out as many entries as the fit
// allows, balance the column scales, then fix the rest to grid values.
//
inline std::optional<FastAlgorithm> sparsify(const DenseTensor3& t, const Factors& f, const SearchConfig& cfg,
                                             const std::string& name) {
  Rounding r(t, cfg, f);
  const double inf = std::numeric_limits<double>::infinity();
  r.fix([inf](double x) { return std::abs(x) < 0.5 ? 0.0 : inf; });
  balance_columns(r.f);
  if (r.fix([&](double x) { return to_double(*snap(x, cfg.grid, inf)); }) != 0) return std::nullopt;
  return round_to_algorithm(r.f, cfg, name);
}

inline StartOutcome run_start(const DenseTensor3& t, const SearchConfig& cfg, std::size_t start) {
  StartOutcome out;
  std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), static_cast<std::uint64_t>(start)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, 0.5);
  const auto R = static_cast<Eigen::Index>(cfg.rank);
  auto random = [&](std::size_t rows) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), R);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
    return m;
  };
  Factors f{random(t.size_i()), random(t.size_j()), random(t.size_k())};

  double res = decomposition_residual(t, f);
  const std::size_t total = cfg.max_iterations + cfg.polish_iterations;
  for (std::size_t it = 0; it < total; ++it) {
    const double reg = it < cfg.max_iterations ? cfg.reg_at(it) : 0.0;
    res = als_sweep(t, f, reg).residual;
    if (!std::isfinite(res)) break;
    if (cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == total)) out.log.push_back({start, it, res, reg});
    if (it >= cfg.max_iterations && res < cfg.converged_tolerance) {
      out.log.push_back({start, it, res, reg});
      break;
    }
  }
  out.residual = res;
  if (!(res < cfg.accept_tolerance)) return out;

  Candidate c;
  c.start = start;
  c.residual = res;
  c.factors = {cfg.dims, f.u, f.v, f.w};
  const std::string name = "search_" + std::to_string(cfg.dims.m) + std::to_string(cfg.dims.k) +
                           std::to_string(cfg.dims.n) + "_r" + std::to_string(cfg.rank) + "_s" + std::to_string(start);
  c.algorithm = sparsify(t, f, cfg, name);
  c.exact = c.algorithm.has_value();
  out.candidate = std::move(c);
  return out;
}

}  // namespace detail

// Multi-start regularized ALS for the <M,K,N> tensor at rank R. Starts run in
// parallel; results do not depend on the worker count.
inline SearchResult search(const SearchConfig& cfg) {
  cfg.check();
  const DenseTensor3 t = DenseTensor3::matmul(cfg.dims);
  std::vector<detail::StartOutcome> outcomes(cfg.starts);
  auto body = [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) outcomes[s] = detail::run_start(t, cfg, s);
  };
  if (cfg.workers > 1) {
    WorkerPool pool(cfg.workers);
    TaskGroup group(pool);
    for (std::size_t s = 0; s < cfg.starts; ++s) group.run([&, s] { body(s, s + 1); }, s);
    group.wait();
  } else {
    body(0, cfg.starts);
  }
  SearchResult result;
  for (auto& o : outcomes) {
    result.final_residuals.push_back(o.residual);
    result.log.insert(result.log.end(), o.log.begin(), o.log.end());
    if (o.candidate) result.candidates.push_back(std::move(*o.candidate));
  }
  return result;
}

inline void write_log_jsonl(std::ostream& out, const std::vector<SearchLogEntry>& log) {
  for (const auto& e : log) {
    nlohmann::json j{{"start", e.start}, {"iteration", e.iteration}, {"residual", e.residual}, {"reg", e.reg}};
    out << j.dump() << '\n';
  }
}

}  // namespace fmm
