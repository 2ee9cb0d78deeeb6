#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <type_traits>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fmm/errors.hpp"
#include "fmm/rational.hpp"
#include "fmm/tensor.hpp"

namespace fmm {

// Dense row-major matrix of exact coefficients.
class CoefficientMatrix {
 public:
  CoefficientMatrix() = default;
  CoefficientMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  Coefficient& operator()(std::size_t r, std::size_t c) { return data_.at(r * cols_ + c); }
  const Coefficient& operator()(std::size_t r, std::size_t c) const { return data_.at(r * cols_ + c); }

  std::size_t nnz() const {
    return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(), [](const Coefficient& x) {
      return !x.is_zero();
    }));
  }
  std::size_t column_nnz(std::size_t c) const {
    std::size_t n = 0;
    for (std::size_t r = 0; r < rows_; ++r) n += (*this)(r, c).is_zero() ? 0 : 1;
    return n;
  }
  std::size_t row_nnz(std::size_t r) const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < cols_; ++c) n += (*this)(r, c).is_zero() ? 0 : 1;
    return n;
  }
  bool exact() const {
    return std::all_of(data_.begin(), data_.end(), [](const Coefficient& x) { return x.is_exact(); });
  }

  // (row, coefficient) pairs of the nonzeros in column c.
  std::vector<std::pair<std::size_t, Coefficient>> column_terms(std::size_t c) const {
    std::vector<std::pair<std::size_t, Coefficient>> out;
    for (std::size_t r = 0; r < rows_; ++r)
      if (!(*this)(r, c).is_zero()) out.emplace_back(r, (*this)(r, c));
    return out;
  }
  std::vector<std::pair<std::size_t, Coefficient>> row_terms(std::size_t r) const {
    std::vector<std::pair<std::size_t, Coefficient>> out;
    for (std::size_t c = 0; c < cols_; ++c)
      if (!(*this)(r, c).is_zero()) out.emplace_back(c, (*this)(r, c));
    return out;
  }

  friend bool operator==(const CoefficientMatrix&, const CoefficientMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Coefficient> data_;
};

enum class Exactness { exact, apa };

inline const char* to_string(Exactness e) { return e == Exactness::exact ? "exact" : "apa"; }

//
// A bilinear algorithm <U,V,W> for the <M,K,N> base case:
//   S_r = sum_i U(i,r) A_i,  T_r = sum_j V(j,r) B_j,  M_r = S_r T_r,
//   C_k = sum_r W(k,r) M_r,
// with A, B, C blocks numbered in row-major order.
//
struct FastAlgorithm {
  std::string name;
  BaseCase dims;
  std::size_t rank = 0;
  CoefficientMatrix u;  // MK x R
  CoefficientMatrix v;  // KN x R
  CoefficientMatrix w;  // MN x R
  Exactness exactness = Exactness::exact;

  FastAlgorithm() = default;
  FastAlgorithm(std::string name_, BaseCase dims_, CoefficientMatrix u_, CoefficientMatrix v_,
                CoefficientMatrix w_, Exactness exactness_ = Exactness::exact)
      : name(std::move(name_)),
        dims(dims_),
        rank(u_.cols()),
        u(std::move(u_)),
        v(std::move(v_)),
        w(std::move(w_)),
        exactness(exactness_) {
    check_shape();
  }

  void check_shape() const {
    if (u.rows() != dims.a_blocks() || v.rows() != dims.b_blocks() || w.rows() != dims.c_blocks()) {
      throw ShapeError("factor row counts do not match base case " + to_string(dims));
    }
    if (u.cols() != rank || v.cols() != rank || w.cols() != rank) {
      throw ShapeError("factor matrices must all have R = " + std::to_string(rank) + " columns");
    }
    if (rank == 0 || rank > dims.classical_rank()) {
      throw ContractViolation("rank " + std::to_string(rank) + " outside [1, MKN] for " + to_string(dims));
    }
    if (exactness == Exactness::exact && !(u.exact() && v.exact() && w.exact())) {
      throw ContractViolation("exact algorithm contains lambda-dependent coefficients");
    }
  }

  friend bool operator==(const FastAlgorithm& a, const FastAlgorithm& b) {
    return a.dims == b.dims && a.rank == b.rank && a.u == b.u && a.v == b.v && a.w == b.w &&
           a.exactness == b.exactness;
  }
};

// The rank-MKN indicator decomposition; column r = (row, col, inner).
inline FastAlgorithm classical_algorithm(std::size_t m, std::size_t k, std::size_t n) {
  if (m == 0 || k == 0 || n == 0) throw ContractViolation("classical_algorithm: dims must be >= 1");
  const BaseCase dims{m, k, n};
  const std::size_t rank = m * k * n;
  CoefficientMatrix u(dims.a_blocks(), rank), v(dims.b_blocks(), rank), w(dims.c_blocks(), rank);
  std::size_t r = 0;
  for (std::size_t row = 0; row < m; ++row) {
    for (std::size_t col = 0; col < n; ++col) {
      for (std::size_t inner = 0; inner < k; ++inner, ++r) {
        u(row * k + inner, r) = 1;
        v(inner * n + col, r) = 1;
        w(row * n + col, r) = 1;
      }
    }
  }
  return FastAlgorithm("classical" + std::to_string(m) + std::to_string(k) + std::to_string(n), dims,
                       std::move(u), std::move(v), std::move(w));
}

// Strassen's rank-7 <2,2,2> algorithm.
inline FastAlgorithm strassen_algorithm() {
  const int uu[4][7] = {{1, 0, 1, 0, 1, -1, 0}, {0, 0, 0, 0, 1, 0, 1}, {0, 1, 0, 0, 0, 1, 0}, {1, 1, 0, 1, 0, 0, -1}};
  const int vv[4][7] = {{1, 1, 0, -1, 0, 1, 0}, {0, 0, 1, 0, 0, 1, 0}, {0, 0, 0, 1, 0, 0, 1}, {1, 0, -1, 0, 1, 0, 1}};
  const int ww[4][7] = {{1, 0, 0, 1, -1, 0, 1}, {0, 0, 1, 0, 1, 0, 0}, {0, 1, 0, 1, 0, 0, 0}, {1, -1, 1, 0, 0, 1, 0}};
  CoefficientMatrix u(4, 7), v(4, 7), w(4, 7);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t r = 0; r < 7; ++r) {
      u(i, r) = uu[i][r];
      v(i, r) = vv[i][r];
      w(i, r) = ww[i][r];
    }
  }
  return FastAlgorithm("strassen", {2, 2, 2}, std::move(u), std::move(v), std::move(w));
}

struct ValidationResult {
  bool valid = false;
  double max_residual = 0.0;
  bool rational_arithmetic = false;  // residual computed exactly
};

namespace detail {

// Sum over r of the rank-one terms, restricted to their nonzero support, minus T.
// Value type is Rational (exact) or double (numeric instantiation).
template <typename Value, typename Convert>
double decomposition_residual(const FastAlgorithm& alg, Convert convert) {
  const MatMulTensor tensor(alg.dims);
  const std::uint64_t nj = tensor.size_j();
  const std::uint64_t nk = tensor.size_k();
  std::unordered_map<std::uint64_t, Value> acc;
  for (std::size_t r = 0; r < alg.rank; ++r) {
    const auto us = alg.u.column_terms(r);
    const auto vs = alg.v.column_terms(r);
    const auto ws = alg.w.column_terms(r);
    for (const auto& [i, cu] : us) {
      const Value xu = convert(cu);
      for (const auto& [j, cv] : vs) {
        const Value xuv = xu * convert(cv);
        for (const auto& [k, cw] : ws) {
          acc[(i * nj + j) * nk + k] += xuv * convert(cw);
        }
      }
    }
  }
  for (const auto& nz : tensor.nonzeros()) acc[(nz.i * nj + nz.j) * nk + nz.k] -= Value(1);
  double worst = 0.0;
  for (const auto& [key, value] : acc) {
    if constexpr (std::is_same_v<Value, Rational>) {
      if (value != 0) worst = std::max(worst, std::abs(to_double(value)));
    } else {
      worst = std::max(worst, std::abs(value));
    }
  }
  return worst;
}

}  // namespace detail

// Default lambda for approximate algorithms: sqrt(machine epsilon).
inline double default_lambda() { return std::sqrt(std::numeric_limits<double>::epsilon()); }

//
// Max over (i,j,k) of |sum_r U(i,r) V(j,r) W(k,r) - T(i,j,k)|. Exact
// algorithms are checked in rational arithmetic; approximate ones numerically
// at the supplied lambda.
//
inline ValidationResult validate(const FastAlgorithm& alg, double tolerance = 0.0,
                                 double lambda = default_lambda()) {
  ValidationResult result;
  if (alg.exactness == Exactness::exact) {
    result.rational_arithmetic = true;
    result.max_residual =
        detail::decomposition_residual<Rational>(alg, [](const Coefficient& c) -> const Rational& { return c.value; });
  } else {
    result.max_residual =
        detail::decomposition_residual<double>(alg, [lambda](const Coefficient& c) { return c.to_double(lambda); });
  }
  result.valid = result.max_residual <= tolerance;
  return result;
}

struct AlgorithmStats {
  std::size_t rank = 0;
  std::size_t classical_multiplies = 0;
  double speedup_per_step = 0.0;  // MKN / R - 1
  std::size_t nnz_u = 0;
  std::size_t nnz_v = 0;
  std::size_t nnz_w = 0;
  std::size_t nnz_total = 0;
  long long addition_count = 0;   // (nnz(U)-R) + (nnz(V)-R) + (nnz(W)-MN)
  std::optional<double> exponent; // log_M R, square base cases only
};

inline AlgorithmStats stats(const FastAlgorithm& alg) {
  AlgorithmStats s;
  s.rank = alg.rank;
  s.classical_multiplies = alg.dims.classical_rank();
  s.speedup_per_step = static_cast<double>(s.classical_multiplies) / static_cast<double>(s.rank) - 1.0;
  s.nnz_u = alg.u.nnz();
  s.nnz_v = alg.v.nnz();
  s.nnz_w = alg.w.nnz();
  s.nnz_total = s.nnz_u + s.nnz_v + s.nnz_w;
  const auto r = static_cast<long long>(alg.rank);
  s.addition_count = (static_cast<long long>(s.nnz_u) - r) + (static_cast<long long>(s.nnz_v) - r) +
                     (static_cast<long long>(s.nnz_w) - static_cast<long long>(alg.dims.c_blocks()));
  if (alg.dims.square() && alg.dims.m > 1) {
    s.exponent = std::log(static_cast<double>(alg.rank)) / std::log(static_cast<double>(alg.dims.m));
  }
  return s;
}

//
// Scalar operation count of `levels` recursive steps on a P x Q times Q x R
// problem, with classical leaves (2pqr - pr flops) and one element-wise
// addition per chain term beyond the first at every internal node.
//
inline std::uint64_t flop_count(const FastAlgorithm& alg, std::size_t levels, std::size_t p, std::size_t q,
                                std::size_t r) {
  if (levels == 0) {
    return 2ULL * p * q * r - static_cast<std::uint64_t>(p) * r;
  }
  const BaseCase& b = alg.dims;
  if (p % b.m != 0 || q % b.k != 0 || r % b.n != 0) {
    throw ContractViolation("flop_count: " + std::to_string(p) + "x" + std::to_string(q) + "x" +
                            std::to_string(r) + " not divisible by " + to_string(b));
  }
  const std::size_t bp = p / b.m, bq = q / b.k, br = r / b.n;
  const std::uint64_t s_adds = alg.u.nnz() - alg.rank;
  const std::uint64_t t_adds = alg.v.nnz() - alg.rank;
  const std::uint64_t c_adds = alg.w.nnz() - b.c_blocks();
  return alg.rank * flop_count(alg, levels - 1, bp, bq, br) + s_adds * bp * bq + t_adds * bq * br +
         c_adds * bp * br;
}

}  // namespace fmm
