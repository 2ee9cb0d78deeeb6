#pragma once

#include <cmath>
#include <cstddef>

#include <Eigen/Dense>

#include "fmm/algorithm.hpp"
#include "fmm/errors.hpp"
#include "fmm/tensor.hpp"

namespace fmm {

// Floating-point factor matrices, as produced by numerical search or by
// instantiating an algorithm's coefficients.
struct NumericFactors {
  BaseCase dims;
  Eigen::MatrixXd u;  // MK x R
  Eigen::MatrixXd v;  // KN x R
  Eigen::MatrixXd w;  // MN x R

  std::size_t rank() const { return static_cast<std::size_t>(u.cols()); }
};

inline NumericFactors to_numeric(const FastAlgorithm& alg, double lambda = default_lambda()) {
  auto dense = [lambda](const CoefficientMatrix& f) {
    Eigen::MatrixXd d(f.rows(), f.cols());
    for (std::size_t r = 0; r < f.rows(); ++r)
      for (std::size_t c = 0; c < f.cols(); ++c) d(r, c) = f(r, c).to_double(lambda);
    return d;
  };
  return {alg.dims, dense(alg.u), dense(alg.v), dense(alg.w)};
}

// Frontal-slice unfolding of the matmul tensor: row i, column j*K + k.
inline Eigen::MatrixXd unfold_mode1(const MatMulTensor& t) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(t.size_i(), t.size_j() * t.size_k());
  for (const auto& nz : t.nonzeros()) m(nz.i, nz.j * t.size_k() + nz.k) = 1.0;
  return m;
}

// Max-abs and Frobenius residuals of an arbitrary dense tensor against its
// rank-R reconstruction. `tensor(i, j*K + k)` is the mode-1 unfolding.
struct NumericResidual {
  double max_abs = 0.0;
  double frobenius = 0.0;
};

inline NumericResidual numeric_residual(const Eigen::MatrixXd& tensor_mode1, const Eigen::MatrixXd& u,
                                        const Eigen::MatrixXd& v, const Eigen::MatrixXd& w) {
  const Eigen::Index nj = v.rows(), nk = w.rows();
  // Khatri-Rao product of V and W: row j*K + k holds v_j .* w_k.
  Eigen::MatrixXd kr(nj * nk, u.cols());
  for (Eigen::Index j = 0; j < nj; ++j)
    for (Eigen::Index k = 0; k < nk; ++k) kr.row(j * nk + k) = v.row(j).cwiseProduct(w.row(k));
  const Eigen::MatrixXd diff = tensor_mode1 - u * kr.transpose();
  return {diff.cwiseAbs().maxCoeff(), diff.norm()};
}

inline NumericResidual numeric_residual(const NumericFactors& f) {
  if (static_cast<std::size_t>(f.u.rows()) != f.dims.a_blocks() ||
      static_cast<std::size_t>(f.v.rows()) != f.dims.b_blocks() ||
      static_cast<std::size_t>(f.w.rows()) != f.dims.c_blocks() || f.u.cols() != f.v.cols() ||
      f.u.cols() != f.w.cols()) {
    throw ShapeError("numeric factors do not match base case " + to_string(f.dims));
  }
  return numeric_residual(unfold_mode1(MatMulTensor(f.dims)), f.u, f.v, f.w);
}

namespace detail {

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace detail

// Floating-point counterpart of change_basis() for real-valued X, Y, Z.
inline NumericFactors change_basis(const NumericFactors& f, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                   const Eigen::MatrixXd& z) {
  const auto [m, k, n] = f.dims;
  if (static_cast<std::size_t>(x.rows()) != m || static_cast<std::size_t>(y.rows()) != k ||
      static_cast<std::size_t>(z.rows()) != n || x.rows() != x.cols() || y.rows() != y.cols() ||
      z.rows() != z.cols()) {
    throw ContractViolation("basis-change matrices must be MxM, KxK and NxN");
  }
  auto inverse = [](const Eigen::MatrixXd& a) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw ContractViolation("basis-change matrix is singular");
    return Eigen::MatrixXd(lu.inverse());
  };
  const Eigen::MatrixXd xi = inverse(x), yi = inverse(y), zi = inverse(z);
  return {f.dims, detail::kron(x.transpose(), yi) * f.u, detail::kron(y.transpose(), zi) * f.v,
          detail::kron(xi, z.transpose()) * f.w};
}

}  // namespace fmm
