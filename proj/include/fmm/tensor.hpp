#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmm/errors.hpp"

namespace fmm {

// Block structure <M,K,N>: an M x K block matrix times a K x N block matrix.
struct BaseCase {
  std::size_t m = 1;
  std::size_t k = 1;
  std::size_t n = 1;

  std::size_t a_blocks() const noexcept { return m * k; }
  std::size_t b_blocks() const noexcept { return k * n; }
  std::size_t c_blocks() const noexcept { return m * n; }
  std::size_t classical_rank() const noexcept { return m * k * n; }
  bool square() const noexcept { return m == k && k == n; }

  friend bool operator==(const BaseCase&, const BaseCase&) = default;
};

inline std::string to_string(const BaseCase& b) {
  return "<" + std::to_string(b.m) + "," + std::to_string(b.k) + "," + std::to_string(b.n) + ">";
}

// Largest tensor (I*J*K entries) that may be materialized densely.
inline constexpr std::uint64_t kMaxDenseTensorEntries = 10'000'000;

//
// The MK x KN x MN 0/1 coefficient tensor of <M,K,N> matrix multiplication.
// Indices are 0-based and address row-major vectorizations of A, B and C:
// i = a_row*K + a_col, j = b_row*N + b_col, k = c_row*N + c_col.
//
class MatMulTensor {
 public:
  explicit MatMulTensor(BaseCase dims) : dims_(dims) {
    if (dims.m == 0 || dims.k == 0 || dims.n == 0) throw ContractViolation("tensor dims must be >= 1");
  }

  const BaseCase& dims() const noexcept { return dims_; }
  std::size_t size_i() const noexcept { return dims_.m * dims_.k; }
  std::size_t size_j() const noexcept { return dims_.k * dims_.n; }
  std::size_t size_k() const noexcept { return dims_.m * dims_.n; }
  std::uint64_t entry_count() const noexcept {
    return static_cast<std::uint64_t>(size_i()) * size_j() * size_k();
  }
  std::size_t nnz() const noexcept { return dims_.m * dims_.k * dims_.n; }

  // 1 iff a_col == b_row, b_col == c_col and a_row == c_row.
  int entry(std::size_t i, std::size_t j, std::size_t k) const {
    if (i >= size_i() || j >= size_j() || k >= size_k()) {
      throw RangeError("tensor index (" + std::to_string(i) + "," + std::to_string(j) + "," +
                       std::to_string(k) + ") outside " + to_string(dims_));
    }
    return entry_unchecked(i, j, k);
  }

  int entry_unchecked(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    const std::size_t K = dims_.k;
    const std::size_t N = dims_.n;
    return (i % K == j / N) && (j % N == k % N) && (i / K == k / N) ? 1 : 0;
  }

  // The MKN nonzero positions, ordered by (c_row, c_col, inner index).
  struct Nonzero {
    std::size_t i, j, k;
  };
  std::vector<Nonzero> nonzeros() const {
    std::vector<Nonzero> out;
    out.reserve(nnz());
    for (std::size_t row = 0; row < dims_.m; ++row)
      for (std::size_t col = 0; col < dims_.n; ++col)
        for (std::size_t inner = 0; inner < dims_.k; ++inner)
          out.push_back({row * dims_.k + inner, inner * dims_.n + col, row * dims_.n + col});
    return out;
  }

  // Dense entries, index (k * I + i) * J + j, i.e. frontal slices T_k stored
  // one after another as I x J row-major matrices.
  std::vector<std::uint8_t> materialize() const {
    if (entry_count() > kMaxDenseTensorEntries) {
      throw ContractViolation("tensor for " + to_string(dims_) + " is too large to materialize densely");
    }
    std::vector<std::uint8_t> dense(entry_count(), 0);
    for (const auto& nz : nonzeros()) dense[(nz.k * size_i() + nz.i) * size_j() + nz.j] = 1;
    return dense;
  }

  // c_k = sum_ij T[i,j,k] a_i b_j. With a = vec(A), b = vec(B) this is vec(A*B).
  std::vector<double> contract(std::span<const double> a, std::span<const double> b) const {
    if (a.size() != size_i() || b.size() != size_j()) {
      throw ShapeError("contract: expected vectors of length " + std::to_string(size_i()) + " and " +
                       std::to_string(size_j()) + ", got " + std::to_string(a.size()) + " and " +
                       std::to_string(b.size()));
    }
    std::vector<double> c(size_k(), 0.0);
    for (const auto& nz : nonzeros()) c[nz.k] += a[nz.i] * b[nz.j];
    return c;
  }

 private:
  BaseCase dims_;
};

inline int tensor_entry(BaseCase dims, std::size_t i, std::size_t j, std::size_t k) {
  return MatMulTensor(dims).entry(i, j, k);
}

}  // namespace fmm
