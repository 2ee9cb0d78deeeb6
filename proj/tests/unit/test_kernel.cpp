#include <gtest/gtest.h>

#include <random>

#include "fmm/kernel.hpp"
#include "support/oracles.hpp"

namespace {

using fmm::DenseMatrix;
using fmm::testing::naive_multiply;
using fmm::testing::random_matrix;

TEST(ClassicalKernel, ScalarCase) {
  DenseMatrix a(1, 1, 2.0), b(1, 1, 3.0), c(1, 1);
  fmm::classical_base_multiply(a, b, c, -1.0);
  EXPECT_EQ(c(0, 0), -6.0);
}

TEST(ClassicalKernel, Random50) {
  std::mt19937_64 rng(1);
  const auto a = random_matrix(50, 50, rng), b = random_matrix(50, 50, rng);
  DenseMatrix c(50, 50);
  fmm::classical_base_multiply(a, b, c);
  EXPECT_LE(fmm::relative_error(c, naive_multiply(a, b)), 1e-13);
}

TEST(ClassicalKernel, AccumulatesOntoExistingValues) {
  std::mt19937_64 rng(2);
  const auto a = random_matrix(37, 29, rng), b = random_matrix(29, 41, rng);
  auto c = random_matrix(37, 41, rng);
  const DenseMatrix before = c;
  fmm::classical_base_multiply(a, b, c, 0.5, true);
  const auto ab = naive_multiply(a, b);
  DenseMatrix expect(37, 41);
  for (std::size_t i = 0; i < 37; ++i)
    for (std::size_t j = 0; j < 41; ++j) expect(i, j) = before(i, j) + 0.5 * ab(i, j);
  EXPECT_LE(fmm::relative_error(c, expect), 1e-13);
}

TEST(ClassicalKernel, BlockBoundariesAndStridedViews) {
  std::mt19937_64 rng(3);
  // Sizes straddle the register tile and the k and m cache blocks.
  const std::size_t shapes[][3] = {{1, 300, 1}, {9, 257, 17}, {130, 5, 33}, {129, 513, 15}, {7, 1, 2049}};
  for (const auto& s : shapes) {
    const auto pa = random_matrix(s[0] + 3, s[1] + 2, rng), pb = random_matrix(s[1] + 1, s[2] + 4, rng);
    const auto a = pa.view().block(1, 2, s[0], s[1]);
    const auto b = pb.view().block(1, 3, s[1], s[2]);
    DenseMatrix parent(s[0] + 2, s[2] + 2, 7.0);
    auto c = parent.view().block(1, 1, s[0], s[2]);
    fmm::classical_base_multiply(a, b, c);
    DenseMatrix got(s[0], s[2]);
    fmm::copy(c, got);
    EXPECT_LE(fmm::relative_error(got, naive_multiply(a, b)), 1e-13) << s[0] << "x" << s[1] << "x" << s[2];
    EXPECT_EQ(parent(0, 0), 7.0);
    EXPECT_EQ(parent(s[0] + 1, s[2] + 1), 7.0);
  }
}

TEST(ClassicalKernel, EmptyInnerDimension) {
  DenseMatrix a(3, 0), b(0, 4), c(3, 4, 5.0);
  fmm::classical_base_multiply(a, b, c, 1.0, true);
  EXPECT_EQ(c(2, 3), 5.0);
  fmm::classical_base_multiply(a, b, c);
  EXPECT_EQ(c(2, 3), 0.0);
}

TEST(ClassicalKernel, RejectsNonConformable) {
  DenseMatrix a(3, 4), b(5, 2), c(3, 2);
  EXPECT_THROW(fmm::classical_base_multiply(a, b, c), fmm::ShapeError);
  DenseMatrix b2(4, 2), c2(2, 2);
  EXPECT_THROW(fmm::classical_base_multiply(a, b2, c2), fmm::ShapeError);
}

TEST(KernelAdapter, EigenMatchesBlocked) {
  std::mt19937_64 rng(4);
  const auto a = random_matrix(70, 45, rng), b = random_matrix(45, 90, rng);
  DenseMatrix c1(70, 90), c2(70, 90);
  fmm::kernel_by_name("blocked")(a, b, c1, 2.0, false);
  fmm::kernel_by_name("eigen")(a, b, c2, 2.0, false);
  EXPECT_LE(fmm::relative_error(c1, c2), 1e-13);
  EXPECT_THROW((void)fmm::kernel_by_name("mkl"), fmm::ContractViolation);
}

}  // namespace
