// Times classical vs Strassen on one square problem and prints the error.
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <random>

#include "fmm/algorithm.hpp"
#include "fmm/bench.hpp"
#include "fmm/kernel.hpp"
#include "fmm/runtime.hpp"

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::strtoul(argv[1], nullptr, 10) : 1024;
  std::mt19937_64 rng(7);
  const auto a = fmm::DenseMatrix::random(n, n, rng);
  const auto b = fmm::DenseMatrix::random(n, n, rng);
  fmm::DenseMatrix ref(n, n);
  fmm::classical_base_multiply(a, b, ref);

  const auto strassen = fmm::strassen_algorithm();
  for (std::size_t steps = 0; steps <= 3; ++steps) {
    fmm::ExecutionConfig cfg;
    cfg.steps = steps;
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = fmm::fast_multiply(a, b, strassen, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "L=" << steps << "  " << secs << " s  " << fmm::effective_gflops(n, n, n, secs)
              << " effective GFLOPS  rel.err " << fmm::relative_error(result.c, ref) << '\n';
  }
}
