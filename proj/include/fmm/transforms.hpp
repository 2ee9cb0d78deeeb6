#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fmm/algorithm.hpp"
#include "fmm/errors.hpp"
#include "fmm/rational.hpp"

namespace fmm {

// Small dense matrix of rationals, used for basis-change transforms.
class RationalMatrix {
 public:
  RationalMatrix() = default;
  RationalMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  static RationalMatrix identity(std::size_t n) {
    RationalMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  Rational& operator()(std::size_t r, std::size_t c) { return data_.at(r * cols_ + c); }
  const Rational& operator()(std::size_t r, std::size_t c) const { return data_.at(r * cols_ + c); }

  RationalMatrix transposed() const {
    RationalMatrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
  }

  // Gauss-Jordan inverse; throws ContractViolation when singular.
  RationalMatrix inverse() const {
    if (rows_ != cols_) throw ContractViolation("inverse of a non-square matrix");
    const std::size_t n = rows_;
    RationalMatrix a = *this;
    RationalMatrix inv = identity(n);
    for (std::size_t col = 0; col < n; ++col) {
      std::size_t pivot = col;
      while (pivot < n && a(pivot, col) == 0) ++pivot;
      if (pivot == n) throw ContractViolation("basis-change matrix is singular");
      if (pivot != col) {
        for (std::size_t c = 0; c < n; ++c) {
          std::swap(a(pivot, c), a(col, c));
          std::swap(inv(pivot, c), inv(col, c));
        }
      }
      const Rational scale = a(col, col);
      for (std::size_t c = 0; c < n; ++c) {
        a(col, c) /= scale;
        inv(col, c) /= scale;
      }
      for (std::size_t r = 0; r < n; ++r) {
        if (r == col || a(r, col) == 0) continue;
        const Rational f = a(r, col);
        for (std::size_t c = 0; c < n; ++c) {
          a(r, c) -= f * a(col, c);
          inv(r, c) -= f * inv(col, c);
        }
      }
    }
    return inv;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Rational> data_;
};

namespace detail {

// Rows reordered by P_{I x J}: the row for vec(X) index i*J + j moves to the
// row for vec(X^T) index j*I + i.
inline CoefficientMatrix vec_transpose_rows(const CoefficientMatrix& f, std::size_t I, std::size_t J) {
  CoefficientMatrix out(f.rows(), f.cols());
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t c = 0; c < f.cols(); ++c) out(j * I + i, c) = f(i * J + j, c);
  return out;
}

// (L kron R) * F with row-major block indexing.
inline CoefficientMatrix kron_apply(const RationalMatrix& left, const RationalMatrix& right,
                                    const CoefficientMatrix& f) {
  const std::size_t nl = left.rows();
  const std::size_t nr = right.rows();
  CoefficientMatrix out(nl * nr, f.cols());
  for (std::size_t a = 0; a < nl; ++a) {
    for (std::size_t b = 0; b < nr; ++b) {
      for (std::size_t c = 0; c < f.cols(); ++c) {
        Rational sum = 0;
        for (std::size_t p = 0; p < left.cols(); ++p) {
          if (left(a, p) == 0) continue;
          for (std::size_t q = 0; q < right.cols(); ++q) {
            const auto& x = f(p * right.cols() + q, c);
            if (right(b, q) == 0 || x.is_zero()) continue;
            sum += left(a, p) * right(b, q) * x.value;
          }
        }
        out(a * nr + b, c) = Coefficient(sum);
      }
    }
  }
  return out;
}

}  // namespace detail

// <M,K,N> -> <N,M,K>:  <P_{MxN} W, U, P_{KxN} V>.
inline FastAlgorithm permute_cyclic(const FastAlgorithm& alg) {
  const auto [m, k, n] = alg.dims;
  return FastAlgorithm(alg.name + "_cyc", {n, m, k}, detail::vec_transpose_rows(alg.w, m, n), alg.u,
                       detail::vec_transpose_rows(alg.v, k, n), alg.exactness);
}

// <M,K,N> -> <N,K,M>:  <P_{KxN} V, P_{MxK} U, P_{MxN} W>  (C^T = B^T A^T).
inline FastAlgorithm permute_transpose(const FastAlgorithm& alg) {
  const auto [m, k, n] = alg.dims;
  return FastAlgorithm(alg.name + "_tr", {n, k, m}, detail::vec_transpose_rows(alg.v, k, n),
                       detail::vec_transpose_rows(alg.u, m, k), detail::vec_transpose_rows(alg.w, m, n),
                       alg.exactness);
}

// All six orderings of the base case reachable from alg, starting with alg.
inline std::vector<FastAlgorithm> all_permutations(const FastAlgorithm& alg) {
  std::vector<FastAlgorithm> out;
  FastAlgorithm cur = alg;
  for (int i = 0; i < 3; ++i) {
    out.push_back(cur);
    out.push_back(permute_transpose(cur));
    cur = permute_cyclic(cur);
  }
  return out;
}

// Column permutation: new column c is old column perm[c].
inline FastAlgorithm permute_columns(const FastAlgorithm& alg, std::span<const std::size_t> perm) {
  if (perm.size() != alg.rank) throw ContractViolation("permutation length must equal the rank");
  std::vector<bool> seen(alg.rank, false);
  for (auto p : perm) {
    if (p >= alg.rank || seen[p]) throw ContractViolation("not a permutation of the columns");
    seen[p] = true;
  }
  auto apply = [&](const CoefficientMatrix& f) {
    CoefficientMatrix out(f.rows(), f.cols());
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t c = 0; c < f.cols(); ++c) out(r, c) = f(r, perm[c]);
    return out;
  };
  return FastAlgorithm(alg.name, alg.dims, apply(alg.u), apply(alg.v), apply(alg.w), alg.exactness);
}

// <U Dx, V Dy, W Dz>; requires Dx Dy Dz = I.
inline FastAlgorithm scale_columns(const FastAlgorithm& alg, std::span<const Coefficient> dx,
                                   std::span<const Coefficient> dy, std::span<const Coefficient> dz) {
  if (dx.size() != alg.rank || dy.size() != alg.rank || dz.size() != alg.rank) {
    throw ContractViolation("diagonal scalings must have one entry per column");
  }
  for (std::size_t r = 0; r < alg.rank; ++r) {
    if (!(dx[r] * dy[r] * dz[r] == Coefficient(1))) {
      throw ContractViolation("Dx*Dy*Dz != I at column " + std::to_string(r));
    }
  }
  auto apply = [&](const CoefficientMatrix& f, std::span<const Coefficient> d) {
    CoefficientMatrix out(f.rows(), f.cols());
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t c = 0; c < f.cols(); ++c) out(r, c) = f(r, c) * d[c];
    return out;
  };
  return FastAlgorithm(alg.name, alg.dims, apply(alg.u, dx), apply(alg.v, dy), apply(alg.w, dz), alg.exactness);
}

//
// Basis change with nonsingular X (MxM), Y (KxK), Z (NxN). The algorithm
// computing A B is rewritten to compute the same product through
// (X A Y^-1)(Y B Z^-1) = X A B Z^-1, giving
//   U' = (X^T kron Y^-1) U,  V' = (Y^T kron Z^-1) V,  W' = (X^-1 kron Z^T) W.
//
inline FastAlgorithm change_basis(const FastAlgorithm& alg, const RationalMatrix& x, const RationalMatrix& y,
                                  const RationalMatrix& z) {
  const auto [m, k, n] = alg.dims;
  if (x.rows() != m || x.cols() != m || y.rows() != k || y.cols() != k || z.rows() != n || z.cols() != n) {
    throw ContractViolation("basis-change matrices must be MxM, KxK and NxN");
  }
  if (alg.exactness != Exactness::exact) throw ContractViolation("basis change requires an exact algorithm");
  const RationalMatrix xi = x.inverse();
  const RationalMatrix yi = y.inverse();
  const RationalMatrix zi = z.inverse();
  return FastAlgorithm(alg.name, alg.dims, detail::kron_apply(x.transposed(), yi, alg.u),
                       detail::kron_apply(y.transposed(), zi, alg.v), detail::kron_apply(xi, z.transposed(), alg.w),
                       alg.exactness);
}

struct ComposeResult {
  FastAlgorithm algorithm;
  bool exact_check = false;          // validated in rational arithmetic
  double max_residual = 0.0;         // exact residual, or max relative error of randomized checks
  bool valid = false;
};

// Number of random (A, B) pairs used when the composed tensor is too large.
inline constexpr int kRandomizedComposeTrials = 50;

namespace detail {

// Max relative error of C = W (U^T a .* V^T b) against the classical product.
inline double randomized_contraction_error(const FastAlgorithm& alg, int trials, unsigned seed,
                                           double lambda = default_lambda()) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  const MatMulTensor tensor(alg.dims);
  auto dense = [&](const CoefficientMatrix& f) {
    std::vector<double> d(f.rows() * f.cols());
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t c = 0; c < f.cols(); ++c) d[r * f.cols() + c] = f(r, c).to_double(lambda);
    return d;
  };
  const auto u = dense(alg.u), v = dense(alg.v), w = dense(alg.w);
  const std::size_t R = alg.rank;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> a(tensor.size_i()), b(tensor.size_j());
    for (auto& x : a) x = dist(rng);
    for (auto& x : b) x = dist(rng);
    std::vector<double> prod(R, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      double s = 0.0, tt = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += u[i * R + r] * a[i];
      for (std::size_t j = 0; j < b.size(); ++j) tt += v[j * R + r] * b[j];
      prod[r] = s * tt;
    }
    const auto ref = tensor.contract(a, b);
    double diff = 0.0, norm = 0.0;
    for (std::size_t kk = 0; kk < ref.size(); ++kk) {
      double c = 0.0;
      for (std::size_t r = 0; r < R; ++r) c += w[kk * R + r] * prod[r];
      diff += (c - ref[kk]) * (c - ref[kk]);
      norm += ref[kk] * ref[kk];
    }
    worst = std::max(worst, std::sqrt(diff / norm));
  }
  return worst;
}

}  // namespace detail

//
// Two-level algorithm for <M1 M2, K1 K2, N1 N2>: outer blocks follow `outer`,
// each block product is computed by `inner`. Column r1*R2 + r2 pairs the
// columns of the two inputs; rows address row-major vectorizations of the
// composed matrices.
//
inline ComposeResult compose(const FastAlgorithm& outer, const FastAlgorithm& inner) {
  if (outer.exactness == Exactness::apa && inner.exactness == Exactness::apa) {
    throw ContractViolation("composing two approximate algorithms is not supported");
  }
  const BaseCase o = outer.dims, i = inner.dims;
  const BaseCase dims{o.m * i.m, o.k * i.k, o.n * i.n};
  const std::size_t rank = outer.rank * inner.rank;

  // f_outer rows are (p1, q1) of a P1 x Q1 grid; f_inner rows (p2, q2) of P2 x Q2.
  auto combine = [&](const CoefficientMatrix& fo, std::size_t p1n, std::size_t q1n, const CoefficientMatrix& fi,
                     std::size_t p2n, std::size_t q2n) {
    CoefficientMatrix out(p1n * p2n * q1n * q2n, rank);
    const std::size_t cols = q1n * q2n;
    for (std::size_t p1 = 0; p1 < p1n; ++p1)
      for (std::size_t q1 = 0; q1 < q1n; ++q1)
        for (std::size_t r1 = 0; r1 < outer.rank; ++r1) {
          const auto& a = fo(p1 * q1n + q1, r1);
          if (a.is_zero()) continue;
          for (std::size_t p2 = 0; p2 < p2n; ++p2)
            for (std::size_t q2 = 0; q2 < q2n; ++q2)
              for (std::size_t r2 = 0; r2 < inner.rank; ++r2) {
                const auto& b = fi(p2 * q2n + q2, r2);
                if (b.is_zero()) continue;
                out((p1 * p2n + p2) * cols + q1 * q2n + q2, r1 * inner.rank + r2) = a * b;
              }
        }
    return out;
  };

  const Exactness exactness =
      (outer.exactness == Exactness::exact && inner.exactness == Exactness::exact) ? Exactness::exact
                                                                                    : Exactness::apa;
  ComposeResult result{FastAlgorithm(outer.name + "*" + inner.name, dims, combine(outer.u, o.m, o.k, inner.u, i.m, i.k),
                                     combine(outer.v, o.k, o.n, inner.v, i.k, i.n),
                                     combine(outer.w, o.m, o.n, inner.w, i.m, i.n), exactness)};
  if (MatMulTensor(dims).entry_count() <= kMaxDenseTensorEntries) {
    const auto check = validate(result.algorithm, exactness == Exactness::exact ? 0.0 : 1e-6);
    result.exact_check = check.rational_arithmetic;
    result.max_residual = check.max_residual;
    result.valid = check.valid;
  } else {
    result.max_residual = detail::randomized_contraction_error(result.algorithm, kRandomizedComposeTrials, 12345);
    result.valid = result.max_residual <= 1e-10;
  }
  return result;
}

// Rank and exponent of a composition, without materializing its factors.
struct CompositionShape {
  BaseCase dims;
  std::size_t rank = 0;
  std::optional<double> exponent;
};

inline CompositionShape composition_shape(std::span<const BaseCase> dims, std::span<const std::size_t> ranks) {
  if (dims.size() != ranks.size() || dims.empty()) throw ContractViolation("composition_shape: mismatched inputs");
  CompositionShape s{{1, 1, 1}, 1, std::nullopt};
  for (std::size_t t = 0; t < dims.size(); ++t) {
    s.dims = {s.dims.m * dims[t].m, s.dims.k * dims[t].k, s.dims.n * dims[t].n};
    s.rank *= ranks[t];
  }
  if (s.dims.square() && s.dims.m > 1) {
    s.exponent = std::log(static_cast<double>(s.rank)) / std::log(static_cast<double>(s.dims.m));
  }
  return s;
}

}  // namespace fmm
