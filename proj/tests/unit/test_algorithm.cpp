#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "fmm/algorithm.hpp"
#include "fmm/algorithm_io.hpp"
#include "support/oracles.hpp"

namespace {

using fmm::FastAlgorithm;

const std::string kStrassenText = R"(# Strassen
2 2 2 7 exact
1 0 1 0 1 -1 0
0 0 0 0 1 0 1
0 1 0 0 0 1 0
1 1 0 1 0 0 -1

1 1 0 -1 0 1 0
0 0 1 0 0 1 0
0 0 0 1 0 0 1
1 0 -1 0 1 0 1

1 0 0 1 -1 0 1
0 0 1 0 1 0 0
0 1 0 1 0 0 0
1 -1 1 0 0 1 0
)";

TEST(ParseAlgorithm, StrassenFile) {
  const auto alg = fmm::load_algorithm(std::string(FMM_DATA_DIR) + "/algorithms/strassen.alg");
  EXPECT_EQ(alg.dims, (fmm::BaseCase{2, 2, 2}));
  EXPECT_EQ(alg.rank, 7u);
  EXPECT_EQ(alg.exactness, fmm::Exactness::exact);
  EXPECT_EQ(alg, fmm::strassen_algorithm());
  EXPECT_EQ(alg, fmm::parse_algorithm(kStrassenText));
}

TEST(ParseAlgorithm, RoundTripIsCanonical) {
  const std::string messy = R"(
# header comment
2 2 2 7
1  0 1 0 1 -1 0
0 0 0 0 1 0 1
0 1 0 0 0 1 0
1 1 0 1 0 0 -2/2

# V
1 1 0 -1 0 1 0
0 0 1 0 0 1 0
0 0 0 1 0 0 1
1.0 0 -1 0 1 0 1

1 0 0 1 -1 0 1
0 0 1 0 1 0 0
0 1 0 1 0 0 0
1 -1 1 0 0 1 0
)";
  const auto alg = fmm::parse_algorithm(messy);
  const auto canonical = fmm::serialize_algorithm(alg);
  EXPECT_EQ(canonical, fmm::serialize_algorithm(fmm::strassen_algorithm()));
  EXPECT_EQ(fmm::serialize_algorithm(fmm::parse_algorithm(canonical)), canonical);
  EXPECT_EQ(canonical.substr(0, 16), "2 2 2 7 exact\n1 ");
}

TEST(ParseAlgorithm, RationalsDecimalsAndLambda) {
  const std::string text = "1 1 1 1 apa\n1/2*L\n\n-0.25\n\n8/L\n";
  const auto alg = fmm::parse_algorithm(text);
  EXPECT_EQ(alg.exactness, fmm::Exactness::apa);
  EXPECT_EQ(alg.u(0, 0), fmm::Coefficient(fmm::Rational(1, 2), 1));
  EXPECT_EQ(alg.v(0, 0), fmm::Coefficient(fmm::Rational(-1, 4)));
  EXPECT_EQ(alg.w(0, 0), fmm::Coefficient(fmm::Rational(8), -1));
  EXPECT_EQ(fmm::serialize_algorithm(alg), "1 1 1 1 apa\n1/2*L\n\n-1/4\n\n8/L\n");
  // (1/2 L)(-1/4)(8/L) = -1: exact regardless of lambda.
  EXPECT_NEAR(fmm::validate(alg, 1e-12, 0.1).max_residual, 2.0, 1e-12);
}

TEST(ParseAlgorithm, RejectsColumnCountMismatch) {
  std::string text = kStrassenText;
  // Drop the last entry of the first U row: 6 columns but header says 7.
  text.replace(text.find("1 0 1 0 1 -1 0"), 14, "1 0 1 0 1 -1");
  try {
    (void)fmm::parse_algorithm(text);
    FAIL() << "expected ParseError";
  } catch (const fmm::ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseAlgorithm, RejectsMalformedInput) {
  EXPECT_THROW((void)fmm::parse_algorithm("2 2 2 7 exact\n2 2 2 7 exact\n"), fmm::ParseError);
  EXPECT_THROW((void)fmm::parse_algorithm(""), fmm::ParseError);
  EXPECT_THROW((void)fmm::parse_algorithm("1 1 1 1\nx\n\n1\n\n1\n"), fmm::ParseError);
  EXPECT_THROW((void)fmm::parse_algorithm("1 1 1 1\n1/0\n\n1\n\n1\n"), fmm::ParseError);
  EXPECT_THROW((void)fmm::parse_algorithm("1 1 1 1\n1*L\n\n1\n\n1\n"), fmm::ParseError);
  EXPECT_THROW((void)fmm::parse_algorithm("1 1 1 1\n1\n1\n\n1\n\n1\n"), fmm::ParseError);  // extra U row
  EXPECT_THROW((void)fmm::parse_algorithm("1 1 1 1\n1\n\n1\n"), fmm::ParseError);         // missing W
  EXPECT_THROW((void)fmm::parse_algorithm("1 1 1 2\n1 1\n\n1 1\n\n1 1\n"), fmm::ParseError);  // R > MKN
}

TEST(ClassicalAlgorithm, Shape222) {
  const auto alg = fmm::classical_algorithm(2, 2, 2);
  EXPECT_EQ(alg.rank, 8u);
  EXPECT_EQ(fmm::stats(alg).addition_count, 4);
  EXPECT_EQ(alg, fmm::load_algorithm(std::string(FMM_DATA_DIR) + "/algorithms/classical222.alg"));
  for (std::size_t r = 0; r < alg.rank; ++r) {
    EXPECT_EQ(alg.u.column_nnz(r), 1u);
    EXPECT_EQ(alg.v.column_nnz(r), 1u);
    EXPECT_EQ(alg.w.column_nnz(r), 1u);
  }
}

TEST(ClassicalAlgorithm, ScalarCase) {
  const auto alg = fmm::classical_algorithm(1, 1, 1);
  EXPECT_EQ(alg.rank, 1u);
  EXPECT_EQ(alg.u(0, 0), fmm::Coefficient(1));
  EXPECT_EQ(alg.v(0, 0), fmm::Coefficient(1));
  EXPECT_EQ(alg.w(0, 0), fmm::Coefficient(1));
}

TEST(ClassicalAlgorithm, ValidatesForAllSmallShapes) {
  for (std::size_t m = 1; m <= 5; ++m)
    for (std::size_t k = 1; k <= 5; ++k)
      for (std::size_t n = 1; n <= 5; ++n) {
        const auto res = fmm::validate(fmm::classical_algorithm(m, k, n));
        EXPECT_TRUE(res.valid);
        EXPECT_TRUE(res.rational_arithmetic);
        EXPECT_EQ(res.max_residual, 0.0);
      }
  EXPECT_EQ(fmm::classical_algorithm(2, 3, 4).rank, 24u);
}

TEST(Validate, StrassenIsExact) {
  const auto res = fmm::validate(fmm::strassen_algorithm());
  EXPECT_TRUE(res.valid);
  EXPECT_EQ(res.max_residual, 0.0);
  EXPECT_EQ(fmm::testing::brute_force_residual(fmm::strassen_algorithm()), 0.0);
}

TEST(Validate, PerturbedStrassenFails) {
  auto alg = fmm::strassen_algorithm();
  alg.u(0, 0) = -1;
  const auto res = fmm::validate(alg);
  EXPECT_FALSE(res.valid);
  EXPECT_GE(res.max_residual, 1.0);
  EXPECT_EQ(res.max_residual, fmm::testing::brute_force_residual(alg));
}

TEST(Validate, ResidualMatchesBruteForceOnRandomPerturbations) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pick(0, 3), col(0, 6), val(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    auto alg = fmm::strassen_algorithm();
    auto& f = trial % 3 == 0 ? alg.u : (trial % 3 == 1 ? alg.v : alg.w);
    f(pick(rng), col(rng)) = val(rng);
    EXPECT_DOUBLE_EQ(fmm::validate(alg).max_residual, fmm::testing::brute_force_residual(alg));
  }
}

TEST(Stats, Strassen) {
  const auto s = fmm::stats(fmm::strassen_algorithm());
  EXPECT_EQ(s.rank, 7u);
  EXPECT_EQ(s.classical_multiplies, 8u);
  EXPECT_EQ(s.nnz_u, 12u);
  EXPECT_EQ(s.nnz_v, 12u);
  EXPECT_EQ(s.nnz_w, 12u);
  EXPECT_EQ(s.addition_count, 18);
  EXPECT_NEAR(s.speedup_per_step, 8.0 / 7.0 - 1.0, 1e-15);
  EXPECT_EQ(std::lround(100 * s.speedup_per_step), 14);
  ASSERT_TRUE(s.exponent.has_value());
  EXPECT_NEAR(*s.exponent, std::log2(7.0), 1e-12);
}

TEST(Stats, ClassicalHasNoSpeedup) {
  const auto s = fmm::stats(fmm::classical_algorithm(2, 2, 2));
  EXPECT_EQ(s.speedup_per_step, 0.0);
  EXPECT_NEAR(*s.exponent, 3.0, 1e-15);
}

// Rank-R placeholder for a base case: only the shape matters for the speedup.
FastAlgorithm placeholder(fmm::BaseCase d, std::size_t rank) {
  fmm::CoefficientMatrix u(d.a_blocks(), rank), v(d.b_blocks(), rank), w(d.c_blocks(), rank);
  return FastAlgorithm("placeholder", d, u, v, w);
}

TEST(Stats, SpeedupPercentagesOfKnownRanks) {
  struct Row {
    fmm::BaseCase dims;
    std::size_t rank;
    long percent;
  };
  const Row rows[] = {{{2, 2, 3}, 11, 9},  {{2, 2, 5}, 18, 11}, {{2, 2, 2}, 7, 14},  {{2, 2, 4}, 14, 14},
                      {{3, 3, 3}, 23, 17}, {{2, 3, 3}, 15, 20}, {{2, 3, 4}, 20, 20}, {{2, 4, 4}, 26, 23},
                      {{3, 3, 4}, 29, 24}, {{3, 4, 4}, 38, 26}, {{3, 3, 6}, 40, 35}};
  for (const auto& row : rows) {
    const auto s = fmm::stats(placeholder(row.dims, row.rank));
    EXPECT_EQ(std::lround(100 * s.speedup_per_step), row.percent) << fmm::to_string(row.dims);
  }
  EXPECT_NEAR(fmm::stats(placeholder({3, 3, 6}, 40)).speedup_per_step, 0.35, 1e-15);
}

TEST(FlopCount, ClassicalFullRecursion) {
  // F_C(8) = 2*8^3 - 8^2.
  EXPECT_EQ(fmm::flop_count(fmm::classical_algorithm(2, 2, 2), 3, 8, 8, 8), 960u);
}

TEST(FlopCount, StrassenFullRecursion) {
  // F_S(8) = 7*8^log2(7) - 6*64 = 7*343 - 384.
  EXPECT_EQ(fmm::flop_count(fmm::strassen_algorithm(), 3, 8, 8, 8), 2017u);
  EXPECT_EQ(fmm::flop_count(fmm::strassen_algorithm(), 3, 8, 8, 8),
            7 * fmm::flop_count(fmm::strassen_algorithm(), 2, 4, 4, 4) + 18 * 16);
}

TEST(FlopCount, ZeroLevelsIsClassical) {
  EXPECT_EQ(fmm::flop_count(fmm::strassen_algorithm(), 0, 5, 7, 3), 2u * 5 * 7 * 3 - 5 * 3);
}

TEST(FlopCount, IndivisibleDimsViolateContract) {
  EXPECT_THROW((void)fmm::flop_count(fmm::strassen_algorithm(), 1, 5, 4, 4), fmm::ContractViolation);
}

}  // namespace
