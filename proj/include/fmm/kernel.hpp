#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fmm/errors.hpp"
#include "fmm/matrix.hpp"

namespace fmm {

namespace detail {

// Register tile and cache blocking of the packed kernel.
inline constexpr std::size_t kMR = 8;
inline constexpr std::size_t kNR = 16;
inline constexpr std::size_t kKC = 256;
inline constexpr std::size_t kMC = 128;
inline constexpr std::size_t kNC = 2048;

typedef double v8d __attribute__((vector_size(64)));

// ab (MR x NR, row-major) = sum over k of a[k] (MR values) times b[k] (NR values).
inline void micro_kernel(std::size_t kc, const double* __restrict a, const double* __restrict b,
                         double* __restrict ab) {
  v8d c0[kMR] = {}, c1[kMR] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    v8d b0, b1;
    std::memcpy(&b0, b, sizeof b0);
    std::memcpy(&b1, b + 8, sizeof b1);
    for (std::size_t i = 0; i < kMR; ++i) {
      c0[i] += a[i] * b0;
      c1[i] += a[i] * b1;
    }
    a += kMR;
    b += kNR;
  }
  for (std::size_t i = 0; i < kMR; ++i) {
    std::memcpy(ab + i * kNR, &c0[i], sizeof c0[i]);
    std::memcpy(ab + i * kNR + 8, &c1[i], sizeof c1[i]);
  }
}

// MR-row panels, each stored k-major; short panels are zero padded.
inline void pack_a(ConstMatrixView a, double* out) {
  for (std::size_t i0 = 0; i0 < a.rows(); i0 += kMR) {
    const std::size_t mr = std::min(kMR, a.rows() - i0);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      std::size_t i = 0;
      for (; i < mr; ++i) out[i] = a(i0 + i, p);
      for (; i < kMR; ++i) out[i] = 0.0;
      out += kMR;
    }
  }
}

inline void pack_b(ConstMatrixView b, double* out) {
  for (std::size_t j0 = 0; j0 < b.cols(); j0 += kNR) {
    const std::size_t nr = std::min(kNR, b.cols() - j0);
    for (std::size_t p = 0; p < b.rows(); ++p) {
      const double* src = b.row(p) + j0;
      std::size_t j = 0;
      for (; j < nr; ++j) out[j] = src[j];
      for (; j < kNR; ++j) out[j] = 0.0;
      out += kNR;
    }
  }
}

inline std::vector<double>& pack_buffer_a() {
  thread_local std::vector<double> buf(kMC * kKC);
  return buf;
}

inline std::vector<double>& pack_buffer_b() {
  thread_local std::vector<double> buf;
  return buf;
}

}  // namespace detail

// C = alpha A B, or C += alpha A B when accumulate is set. Packed and cache
// blocked; C must not alias A or B.
inline void classical_base_multiply(ConstMatrixView a, ConstMatrixView b, MatrixView c, double alpha = 1.0,
                                    bool accumulate = false) {
  using namespace detail;
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
    throw ShapeError("classical_base_multiply: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + " into " +
                     std::to_string(c.rows()) + "x" + std::to_string(c.cols()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (m == 0 || n == 0) return;
  if (k == 0 || alpha == 0.0) {
    if (!accumulate) fill(c, 0.0);
    return;
  }

  auto& abuf = pack_buffer_a();
  auto& bbuf = pack_buffer_b();
  alignas(64) double ab[kMR * kNR];

  for (std::size_t jc = 0; jc < n; jc += kNC) {
    const std::size_t nc = std::min(kNC, n - jc);
    const std::size_t nc_padded = (nc + kNR - 1) / kNR * kNR;
    for (std::size_t pc = 0; pc < k; pc += kKC) {
      const std::size_t kc = std::min(kKC, k - pc);
      const bool overwrite = !accumulate && pc == 0;
      if (bbuf.size() < kc * nc_padded) bbuf.resize(kc * nc_padded);
      pack_b(b.block(pc, jc, kc, nc), bbuf.data());
      for (std::size_t ic = 0; ic < m; ic += kMC) {
        const std::size_t mc = std::min(kMC, m - ic);
        pack_a(a.block(ic, pc, mc, kc), abuf.data());
        for (std::size_t jr = 0; jr < nc; jr += kNR) {
          const std::size_t nr = std::min(kNR, nc - jr);
          const double* bp = bbuf.data() + jr * kc;
          for (std::size_t ir = 0; ir < mc; ir += kMR) {
            const std::size_t mr = std::min(kMR, mc - ir);
            micro_kernel(kc, abuf.data() + ir * kc, bp, ab);
            for (std::size_t i = 0; i < mr; ++i) {
              double* crow = c.row(ic + ir + i) + jc + jr;
              const double* src = ab + i * kNR;
              if (overwrite) {
                for (std::size_t j = 0; j < nr; ++j) crow[j] = alpha * src[j];
              } else {
                for (std::size_t j = 0; j < nr; ++j) crow[j] += alpha * src[j];
              }
            }
          }
        }
      }
    }
  }
}

// Pluggable classical multiply used at the leaves and for peeling fixups.
// Same contract as classical_base_multiply.
using BaseKernel = std::function<void(ConstMatrixView, ConstMatrixView, MatrixView, double, bool)>;

inline BaseKernel blocked_kernel() { return classical_base_multiply; }

// Adapter onto Eigen's GEMM, as an example of an external classical library.
inline BaseKernel eigen_kernel() {
  return [](ConstMatrixView a, ConstMatrixView b, MatrixView c, double alpha, bool accumulate) {
    if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
      throw ShapeError("eigen_kernel: non-conformable operands");
    }
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Stride = Eigen::OuterStride<>;
    const auto rows = [](auto v) { return static_cast<Eigen::Index>(v.rows()); };
    const auto cols = [](auto v) { return static_cast<Eigen::Index>(v.cols()); };
    Eigen::Map<const RowMajor, 0, Stride> ea(a.data(), rows(a), cols(a), Stride(static_cast<Eigen::Index>(a.ld())));
    Eigen::Map<const RowMajor, 0, Stride> eb(b.data(), rows(b), cols(b), Stride(static_cast<Eigen::Index>(b.ld())));
    Eigen::Map<RowMajor, 0, Stride> ec(c.data(), rows(c), cols(c), Stride(static_cast<Eigen::Index>(c.ld())));
    if (c.empty()) return;
    if (!accumulate) ec.setZero();
    if (a.cols() == 0) return;
    ec.noalias() += alpha * (ea * eb);
  };
}

inline BaseKernel kernel_by_name(const std::string& name) {
  if (name == "blocked") return blocked_kernel();
  if (name == "eigen") return eigen_kernel();
  throw ContractViolation("unknown base kernel '" + name + "' (expected blocked or eigen)");
}

}  // namespace fmm
