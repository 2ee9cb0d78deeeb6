#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fmm/addition_plan.hpp"
#include "fmm/algorithm.hpp"
#include "fmm/algorithm_io.hpp"
#include "fmm/als.hpp"
#include "fmm/bench.hpp"
#include "fmm/kernel.hpp"
#include "fmm/runtime.hpp"
#include "fmm/transforms.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) out.push_back(item);
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& s, std::size_t expected, const char* what) {
  std::vector<std::size_t> out;
  for (const auto& item : split_commas(s)) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != item.size()) throw UsageError(std::string("bad ") + what + " '" + s + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (expected != 0 && out.size() != expected) {
    throw UsageError(std::string(what) + " needs " + std::to_string(expected) + " comma-separated values");
  }
  return out;
}

std::vector<fmm::Coefficient> parse_coefficients(const std::string& s, const char* what) {
  std::vector<fmm::Coefficient> out;
  for (const auto& item : split_commas(s)) {
    auto c = fmm::parse_coefficient(item);
    if (!c) throw UsageError(std::string("bad coefficient '") + item + "' in " + what);
    out.push_back(*c);
  }
  return out;
}

// n*n rationals, row-major.
fmm::RationalMatrix parse_square(const std::string& s, std::size_t n, const char* what) {
  const auto items = split_commas(s);
  if (items.size() != n * n) {
    throw UsageError(std::string(what) + " needs " + std::to_string(n * n) + " entries (row-major)");
  }
  fmm::RationalMatrix m(n, n);
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto q = fmm::parse_rational(items[i]);
    if (!q) throw UsageError(std::string("bad rational '") + items[i] + "' in " + what);
    m(i / n, i % n) = *q;
  }
  return m;
}

std::size_t env_workers(std::size_t fallback) {
  if (const char* env = std::getenv("FMM_WORKERS"); env != nullptr && *env != '\0') {
    const auto v = parse_sizes(env, 1, "FMM_WORKERS");
    if (v[0] == 0) throw UsageError("FMM_WORKERS must be >= 1");
    return v[0];
  }
  return fallback;
}

void emit(const fmm::FastAlgorithm& alg, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << fmm::serialize_algorithm(alg);
  } else {
    fmm::save_algorithm(alg, out_path);
  }
}

int cmd_validate(const std::string& file, double tolerance, double lambda) {
  const auto alg = fmm::resolve_algorithm(file);
  const auto v = fmm::validate(alg, tolerance, lambda);
  std::cout << (v.valid ? "valid" : "INVALID") << ' ' << fmm::to_string(alg.dims) << " R=" << alg.rank
            << " residual=" << v.max_residual << " arithmetic=" << (v.rational_arithmetic ? "rational" : "float")
            << '\n';
  return v.valid ? kOk : kInvalid;
}

int cmd_stats(const std::string& file, bool json) {
  const auto alg = fmm::resolve_algorithm(file);
  const auto s = fmm::stats(alg);
  if (json) {
    nlohmann::json j{{"name", alg.name},
                     {"dims", {alg.dims.m, alg.dims.k, alg.dims.n}},
                     {"rank", s.rank},
                     {"classical_multiplies", s.classical_multiplies},
                     {"speedup_per_step", s.speedup_per_step},
                     {"nnz", {s.nnz_u, s.nnz_v, s.nnz_w}},
                     {"additions", s.addition_count},
                     {"exact", alg.exactness == fmm::Exactness::exact}};
    if (s.exponent) j["exponent"] = *s.exponent;
    std::cout << j.dump(2) << '\n';
    return kOk;
  }
  std::cout << "name        " << alg.name << '\n'
            << "base case   " << fmm::to_string(alg.dims) << '\n'
            << "rank        " << s.rank << '\n'
            << "classical   " << s.classical_multiplies << '\n'
            << "speedup     " << std::lround(100 * s.speedup_per_step) << "% per step\n"
            << "nnz U/V/W   " << s.nnz_u << '/' << s.nnz_v << '/' << s.nnz_w << '\n'
            << "additions   " << s.addition_count << '\n'
            << "exactness   " << (alg.exactness == fmm::Exactness::exact ? "exact" : "apa") << '\n';
  if (s.exponent) std::cout << "exponent    " << std::setprecision(6) << *s.exponent << '\n';
  return kOk;
}

struct TransformArgs {
  std::string file, op, perm, dx, dy, dz, x, y, z, out;
};

int cmd_transform(const TransformArgs& a) {
  const auto alg = fmm::resolve_algorithm(a.file);
  fmm::FastAlgorithm result;
  if (a.op == "cyclic") {
    result = fmm::permute_cyclic(alg);
  } else if (a.op == "transpose") {
    result = fmm::permute_transpose(alg);
  } else if (a.op == "permcols") {
    if (a.perm.empty()) throw UsageError("permcols needs --perm");
    const auto perm = parse_sizes(a.perm, alg.rank, "--perm");
    result = fmm::permute_columns(alg, perm);
  } else if (a.op == "scale") {
    if (a.dx.empty() || a.dy.empty() || a.dz.empty()) throw UsageError("scale needs --dx, --dy and --dz");
    const auto dx = parse_coefficients(a.dx, "--dx"), dy = parse_coefficients(a.dy, "--dy"),
               dz = parse_coefficients(a.dz, "--dz");
    result = fmm::scale_columns(alg, dx, dy, dz);
  } else if (a.op == "basis") {
    const auto [m, k, n] = alg.dims;
    const auto x = a.x.empty() ? fmm::RationalMatrix::identity(m) : parse_square(a.x, m, "--x");
    const auto y = a.y.empty() ? fmm::RationalMatrix::identity(k) : parse_square(a.y, k, "--y");
    const auto z = a.z.empty() ? fmm::RationalMatrix::identity(n) : parse_square(a.z, n, "--z");
    result = fmm::change_basis(alg, x, y, z);
  } else {
    throw UsageError("unknown transform '" + a.op + "'");
  }
  const auto v = fmm::validate(result);
  emit(result, a.out);
  std::cerr << (v.valid ? "valid" : "INVALID") << " residual=" << v.max_residual << '\n';
  return v.valid ? kOk : kInvalid;
}

int cmd_compose(const std::vector<std::string>& files, const std::string& out) {
  if (files.size() < 2) throw UsageError("compose needs at least two algorithms");
  auto r = fmm::compose(fmm::resolve_algorithm(files[0]), fmm::resolve_algorithm(files[1]));
  for (std::size_t i = 2; i < files.size(); ++i) r = fmm::compose(r.algorithm, fmm::resolve_algorithm(files[i]));
  const auto s = fmm::stats(r.algorithm);
  std::cout << (r.valid ? "valid" : "INVALID") << ' ' << fmm::to_string(r.algorithm.dims) << " R=" << r.algorithm.rank
            << " residual=" << r.max_residual << " check=" << (r.exact_check ? "rational" : "randomized");
  if (s.exponent) std::cout << " exponent=" << std::setprecision(12) << *s.exponent;
  std::cout << '\n';
  if (!out.empty()) emit(r.algorithm, out);
  return r.valid ? kOk : kInvalid;
}

struct MultiplyArgs {
  std::string alg = "strassen", dims, strategy = "write-once", mode = "seq", kernel = "blocked";
  std::optional<std::size_t> steps;
  std::size_t workers = 1;
  std::size_t cutoff = 1500;
  bool cse = false, check = false, json = false;
  std::uint64_t seed = 1;
};

int cmd_multiply(const MultiplyArgs& a) {
  const auto alg = fmm::resolve_algorithm(a.alg);
  const auto d = parse_sizes(a.dims, 3, "--dims");
  fmm::ExecutionConfig cfg;
  cfg.steps = a.steps;
  cfg.cutoff = a.cutoff;
  const auto st = fmm::parse_strategy(a.strategy);
  if (!st) throw UsageError("unknown strategy '" + a.strategy + "'");
  cfg.strategy = *st;
  cfg.cse = a.cse;
  const auto mode = fmm::parse_exec_mode(a.mode);
  if (!mode) throw UsageError("unknown mode '" + a.mode + "'");
  cfg.mode = *mode;
  cfg.workers = env_workers(a.workers);
  cfg.kernel = fmm::kernel_by_name(a.kernel);

  std::mt19937_64 rng(a.seed);
  const auto A = fmm::DenseMatrix::random(d[0], d[1], rng);
  const auto B = fmm::DenseMatrix::random(d[1], d[2], rng);
  fmm::DenseMatrix C(d[0], d[2]);
  const auto t0 = std::chrono::steady_clock::now();
  const auto counters = fmm::fast_multiply_into(A, B, C, alg, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::optional<double> err;
  if (a.check) {
    fmm::DenseMatrix ref(d[0], d[2]);
    fmm::classical_base_multiply(A, B, ref);
    err = fmm::relative_error(C, ref);
  }
  const double gflops = secs > 0 ? fmm::effective_gflops(d[0], d[1], d[2], secs) : 0.0;
  if (a.json) {
    nlohmann::json j{{"algorithm", alg.name},         {"dims", d},
                     {"steps", counters.steps},       {"strategy", fmm::to_string(cfg.strategy)},
                     {"cse", cfg.cse},                {"mode", fmm::to_string(cfg.mode)},
                     {"workers", cfg.workers},        {"seconds", secs},
                     {"effective_gflops", gflops},    {"leaf_multiplies", counters.leaf_multiplies},
                     {"flops", counters.flops()},     {"element_additions", counters.element_additions},
                     {"temp_bytes_high_water", counters.temp_bytes_high_water},
                     {"max_active_workers", counters.max_active_workers}};
    if (err) j["max_rel_error"] = *err;
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << alg.name << ' ' << d[0] << 'x' << d[1] << 'x' << d[2] << " L=" << counters.steps
              << " strategy=" << fmm::to_string(cfg.strategy) << (cfg.cse ? "+cse" : "")
              << " mode=" << fmm::to_string(cfg.mode) << " workers=" << cfg.workers << '\n'
              << "time " << secs << " s, " << gflops << " effective GFLOPS\n"
              << "leaves " << counters.leaf_multiplies << ", flops " << counters.flops() << ", temp bytes "
              << counters.temp_bytes_high_water << '\n';
    if (err) std::cout << "relative error " << *err << '\n';
  }
  return err && !(*err <= 1e-9) ? kInvalid : kOk;
}

int cmd_bench(const std::string& suite_file, const std::string& out_file) {
  auto suite = fmm::load_suite(suite_file);
  for (auto& cell : suite.cells) cell.workers = env_workers(cell.workers);
  std::ofstream file;
  if (!out_file.empty()) {
    file.open(out_file);
    if (!file) throw fmm::Error("cannot write " + out_file);
  }
  std::ostream& out = out_file.empty() ? std::cout : file;
  fmm::write_csv_header(out);
  std::size_t failed = 0;
  fmm::run_bench(suite, [&](const fmm::BenchRecord& r) {
    fmm::write_csv_row(out, r);
    out.flush();
    if (!r.error.empty()) ++failed;
    std::cerr << r.algorithm << ' ' << r.shape.p << 'x' << r.shape.q << 'x' << r.shape.r << " L=" << r.steps << ": "
              << (r.error.empty() ? std::to_string(r.gflops) + " GFLOPS" : "error: " + r.error) << '\n';
  });
  return failed == 0 ? kOk : kInvalid;
}

int cmd_cse(const std::string& file) {
  const auto alg = fmm::resolve_algorithm(file);
  std::cout << alg.name << ' ' << fmm::to_string(alg.dims) << " R=" << alg.rank << '\n';
  for (auto strategy : {fmm::Strategy::pairwise, fmm::Strategy::write_once, fmm::Strategy::streaming}) {
    const auto off = fmm::build_plan(alg, strategy, false);
    const auto on = fmm::build_plan(alg, strategy, true);
    std::cout << std::left << std::setw(11) << fmm::to_string(strategy) << " reads/writes " << off.reads() << '/'
              << off.writes() << " -> " << on.reads() << '/' << on.writes() << " with cse\n";
  }
  const auto plan = fmm::build_plan(alg, fmm::Strategy::write_once, true);
  const char* names[] = {"S", "T", "C"};
  for (auto p : {fmm::Phase::s, fmm::Phase::t, fmm::Phase::c}) {
    const auto& ph = plan.phase(p);
    std::cout << names[static_cast<int>(p)] << ": additions " << ph.cse.original_additions << " -> "
              << ph.cse.final_additions << ", " << ph.cse.subexpressions_eliminated << " subexpressions\n";
  }
  return kOk;
}

struct SearchArgs {
  std::string target, out_dir, log_file;
  std::size_t starts = 10, iterations = 500, workers = 1;
  std::uint64_t seed = 1;
};

int cmd_search(const SearchArgs& a) {
  const auto t = parse_sizes(a.target, 4, "--target");
  fmm::SearchConfig cfg;
  cfg.dims = {t[0], t[1], t[2]};
  cfg.rank = t[3];
  cfg.starts = a.starts;
  cfg.seed = a.seed;
  cfg.max_iterations = a.iterations;
  cfg.workers = env_workers(a.workers);
  const auto result = fmm::search(cfg);
  if (!a.log_file.empty()) {
    std::ofstream log(a.log_file);
    if (!log) throw fmm::Error("cannot write " + a.log_file);
    fmm::write_log_jsonl(log, result.log);
  }
  std::size_t exact = 0;
  for (const auto& c : result.candidates) {
    std::cout << "start " << c.start << " residual " << c.residual << (c.exact ? " exact" : "") << '\n';
    if (!c.exact) continue;
    ++exact;
    if (!a.out_dir.empty()) {
      std::filesystem::create_directories(a.out_dir);
      fmm::save_algorithm(*c.algorithm, std::filesystem::path(a.out_dir) / (c.algorithm->name + ".alg"));
    }
  }
  std::cout << result.candidates.size() << " numeric candidates, " << exact << " exact, from " << cfg.starts
            << " starts\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fast matrix multiplication toolkit"};
  app.require_subcommand(1);

  std::string file;
  double tolerance = 0.0, lambda = fmm::default_lambda();
  auto* validate = app.add_subcommand("validate", "Check an algorithm against the matmul tensor");
  validate->add_option("file", file, "Coefficient file, or strassen/classical")->required();
  validate->add_option("--tolerance", tolerance, "Allowed residual (0 for exact)");
  validate->add_option("--lambda", lambda, "Lambda for approximate algorithms");

  bool json = false;
  auto* stats = app.add_subcommand("stats", "Rank, additions and speedup of an algorithm");
  stats->add_option("file", file)->required();
  stats->add_flag("--json", json);

  TransformArgs ta;
  auto* transform = app.add_subcommand("transform", "Apply an equivalence transform");
  transform->add_option("file", ta.file)->required();
  transform->add_option("--op", ta.op)->required()->check(CLI::IsMember({"cyclic", "transpose", "permcols", "scale", "basis"}));
  transform->add_option("--perm", ta.perm, "permcols: new column c is old column perm[c]");
  transform->add_option("--dx", ta.dx, "scale: diagonal of Dx");
  transform->add_option("--dy", ta.dy, "scale: diagonal of Dy");
  transform->add_option("--dz", ta.dz, "scale: diagonal of Dz");
  transform->add_option("--x", ta.x, "basis: X, row-major");
  transform->add_option("--y", ta.y, "basis: Y, row-major");
  transform->add_option("--z", ta.z, "basis: Z, row-major");
  transform->add_option("-o,--out", ta.out, "Output file (default stdout)");

  std::vector<std::string> files;
  std::string out;
  auto* compose = app.add_subcommand("compose", "Compose algorithms (outer first)");
  compose->add_option("files", files)->required()->expected(2, 16);
  compose->add_option("-o,--out", out);

  MultiplyArgs ma;
  std::size_t steps = 0;
  auto* multiply = app.add_subcommand("multiply", "Multiply random matrices");
  multiply->add_option("--alg", ma.alg);
  multiply->add_option("--dims", ma.dims, "P,Q,R")->required();
  auto* steps_opt = multiply->add_option("--steps", steps, "Recursive steps (default: cutoff rule)");
  multiply->add_option("--cutoff", ma.cutoff);
  multiply->add_option("--strategy", ma.strategy, "pairwise|writeonce|streaming");
  multiply->add_flag("--cse", ma.cse);
  multiply->add_option("--mode", ma.mode, "seq|dfs|bfs|hybrid");
  multiply->add_option("--workers", ma.workers);
  multiply->add_option("--kernel", ma.kernel, "blocked|eigen");
  multiply->add_option("--seed", ma.seed);
  multiply->add_flag("--check", ma.check, "Compare with the classical kernel");
  multiply->add_flag("--json", ma.json);

  std::string suite;
  auto* bench = app.add_subcommand("bench", "Run a benchmark suite and write CSV");
  bench->add_option("--suite", suite)->required();
  bench->add_option("--out", out, "CSV file (default stdout)");

  auto* cse = app.add_subcommand("cse", "Addition counts and traffic with and without CSE");
  cse->add_option("file", file)->required();

  SearchArgs sa;
  auto* search = app.add_subcommand("search", "Numerical search for algorithms");
  search->add_option("--target", sa.target, "M,K,N,R")->required();
  search->add_option("--starts", sa.starts);
  search->add_option("--seed", sa.seed);
  search->add_option("--iterations", sa.iterations);
  search->add_option("--workers", sa.workers);
  search->add_option("--out", sa.out_dir, "Directory for exact candidates");
  search->add_option("--log", sa.log_file, "JSON-lines log of (start, iteration, residual)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*validate) return cmd_validate(file, tolerance, lambda);
    if (*stats) return cmd_stats(file, json);
    if (*transform) return cmd_transform(ta);
    if (*compose) return cmd_compose(files, out);
    if (*multiply) {
      if (*steps_opt) ma.steps = steps;
      return cmd_multiply(ma);
    }
    if (*bench) return cmd_bench(suite, out);
    if (*cse) return cmd_cse(file);
    if (*search) return cmd_search(sa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}
