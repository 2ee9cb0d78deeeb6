#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmm/algorithm.hpp"
#include "fmm/algorithm_io.hpp"
#include "fmm/errors.hpp"
#include "fmm/kernel.hpp"
#include "fmm/matrix.hpp"
#include "fmm/runtime.hpp"

namespace fmm {

inline constexpr std::size_t kBenchSamples = 5;

// (2PQR - PR) / seconds, in units of 1e9.
inline double effective_gflops(std::size_t P, std::size_t Q, std::size_t R, double seconds) {
  if (!(seconds > 0)) throw ContractViolation("effective_gflops: time must be positive");
  if (P == 0 || Q == 0 || R == 0) throw ContractViolation("effective_gflops: dimensions must be >= 1");
  const double p = static_cast<double>(P), q = static_cast<double>(Q), r = static_cast<double>(R);
  return (2.0 * p * q * r - p * r) / seconds * 1e-9;
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) throw ContractViolation("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

struct ProblemShape {
  std::size_t p = 0, q = 0, r = 0;

  friend bool operator==(const ProblemShape&, const ProblemShape&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline std::size_t parse_size(std::string_view s, std::string_view what) {
  std::size_t v = 0;
  if (s.empty()) throw ParseError("empty number in " + std::string(what));
  for (char ch : s) {
    if (ch < '0' || ch > '9') throw ParseError("bad number '" + std::string(s) + "' in " + std::string(what));
    v = v * 10 + static_cast<std::size_t>(ch - '0');
  }
  return v;
}

}  // namespace detail

//
// Shape specs: "1024" (square), "2000x1600x2000", or with variables
// "Nx1600xN : N=2000,4000" and "NxFxF : N=1000,2000; F=100". 'X' and the
// multiplication sign also separate dimensions. Variables expand to the
// cartesian product, first variable outermost.
//
inline std::vector<ProblemShape> parse_shapes(std::string_view spec) {
  const std::string text = [&] {
    std::string t(spec);
    for (std::size_t pos; (pos = t.find("\xC3\x97")) != std::string::npos;) t.replace(pos, 2, "x");
    return t;
  }();
  const std::string_view s(text);
  const auto colon = s.find(':');
  const auto dims_part = detail::trim(s.substr(0, colon));
  std::vector<std::string> tokens;
  {
    std::string cur;
    for (char ch : dims_part) {
      if (ch == 'x' || ch == 'X') {
        tokens.push_back(std::string(detail::trim(cur)));
        cur.clear();
      } else {
        cur += ch;
      }
    }
    tokens.push_back(std::string(detail::trim(cur)));
  }
  if (tokens.size() == 1) tokens = {tokens[0], tokens[0], tokens[0]};
  if (tokens.size() != 3) throw ParseError("shape '" + text + "' needs one or three dimensions");

  std::vector<std::pair<std::string, std::vector<std::size_t>>> vars;
  if (colon != std::string_view::npos) {
    for (auto binding : detail::split(s.substr(colon + 1), ';')) {
      if (binding.empty()) continue;
      const auto eq = binding.find('=');
      if (eq == std::string_view::npos) throw ParseError("binding '" + std::string(binding) + "' has no '='");
      std::string name(detail::trim(binding.substr(0, eq)));
      std::vector<std::size_t> values;
      for (auto v : detail::split(binding.substr(eq + 1), ',')) values.push_back(detail::parse_size(v, text));
      if (name.empty() || values.empty()) throw ParseError("empty binding in shape '" + text + "'");
      vars.emplace_back(std::move(name), std::move(values));
    }
  }

  std::vector<ProblemShape> out;
  std::map<std::string, std::size_t> env;
  auto resolve = [&](const std::string& tok) -> std::size_t {
    if (tok.empty()) throw ParseError("empty dimension in shape '" + text + "'");
    if (tok[0] >= '0' && tok[0] <= '9') return detail::parse_size(tok, text);
    auto it = env.find(tok);
    if (it == env.end()) throw ParseError("unbound variable '" + tok + "' in shape '" + text + "'");
    return it->second;
  };
  std::function<void(std::size_t)> expand = [&](std::size_t v) {
    if (v == vars.size()) {
      ProblemShape sh{resolve(tokens[0]), resolve(tokens[1]), resolve(tokens[2])};
      if (sh.p == 0 || sh.q == 0 || sh.r == 0) throw ParseError("zero dimension in shape '" + text + "'");
      out.push_back(sh);
      return;
    }
    for (std::size_t x : vars[v].second) {
      env[vars[v].first] = x;
      expand(v + 1);
    }
  };
  expand(0);
  return out;
}

struct BenchCell {
  std::string algorithm;  // "classical", "strassen", or a coefficient file
  ProblemShape shape;
  std::vector<std::size_t> steps{1};  // several with best_over_steps: one row, fastest L
  bool best_over_steps = false;
  Strategy strategy = Strategy::write_once;
  bool cse = false;
  ExecMode mode = ExecMode::sequential;
  std::size_t workers = 1;
  std::string kernel = "blocked";
  bool check = true;
  std::uint64_t seed = 42;
};

struct BenchRecord {
  std::string algorithm;
  ProblemShape shape;
  std::size_t steps = 0;
  Strategy strategy = Strategy::write_once;
  bool cse = false;
  ExecMode mode = ExecMode::sequential;
  std::size_t workers = 1;
  std::vector<double> samples;  // seconds
  double median_s = 0.0;
  double gflops = 0.0;
  InstrumentationCounters counters;
  std::optional<double> max_rel_error;
  std::string error;  // empty on success
};

struct BenchSuite {
  std::vector<BenchCell> cells;
};

//
// Suite JSON:
//   { "algorithms": ["classical", "strassen", "file.alg"],
//     "shapes": ["N : N=1024,2048", "Nx1600xN : N=2000"],
//     "steps": [1, 2, 3], "best_over_steps": false,
//     "strategies": ["write-once"], "cse": [false], "modes": ["seq"],
//     "workers": [1], "kernel": "blocked", "check": true, "seed": 42 }
// "classical" is the base kernel alone and gets one cell per shape at L = 0.
// Relative file names are resolved against base_dir.
//
inline BenchSuite parse_suite(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  BenchSuite suite;
  if (!j.is_object()) throw ParseError("bench suite must be a JSON object");
  auto list = [&](const char* key, nlohmann::json fallback) {
    const auto& v = j.contains(key) ? j.at(key) : fallback;
    if (!v.is_array()) throw ParseError(std::string("suite field '") + key + "' must be an array");
    return v;
  };
  try {
    std::vector<ProblemShape> shapes;
    for (const auto& s : list("shapes", nlohmann::json::array())) {
      auto more = parse_shapes(s.get<std::string>());
      shapes.insert(shapes.end(), more.begin(), more.end());
    }
    std::vector<std::size_t> steps;
    for (const auto& s : list("steps", {1})) steps.push_back(s.get<std::size_t>());
    const bool best = j.value("best_over_steps", false);
    std::vector<Strategy> strategies;
    for (const auto& s : list("strategies", {"write-once"})) {
      auto st = parse_strategy(s.get<std::string>());
      if (!st) throw ParseError("unknown strategy '" + s.get<std::string>() + "'");
      strategies.push_back(*st);
    }
    std::vector<bool> cses;
    for (const auto& s : list("cse", {false})) cses.push_back(s.get<bool>());
    std::vector<ExecMode> modes;
    for (const auto& s : list("modes", {"seq"})) {
      auto m = parse_exec_mode(s.get<std::string>());
      if (!m) throw ParseError("unknown mode '" + s.get<std::string>() + "'");
      modes.push_back(*m);
    }
    std::vector<std::size_t> workers;
    for (const auto& s : list("workers", {1})) workers.push_back(s.get<std::size_t>());
    const std::string kernel = j.value("kernel", std::string("blocked"));
    const bool check = j.value("check", true);
    const std::uint64_t seed = j.value("seed", std::uint64_t{42});

    for (const auto& a : list("algorithms", nlohmann::json::array())) {
      std::string name = a.get<std::string>();
      const bool classical = name == "classical";
      if (!classical && name != "strassen") {
        const std::filesystem::path p(name);
        if (p.is_relative() && !base_dir.empty()) name = (base_dir / p).string();
      }
      for (const auto& shape : shapes) {
        BenchCell base;
        base.algorithm = name;
        base.shape = shape;
        base.kernel = kernel;
        base.check = check;
        base.seed = seed;
        if (classical) {
          base.steps = {0};
          suite.cells.push_back(base);
          continue;
        }
        for (auto st : strategies)
          for (bool cse : cses)
            for (auto mode : modes)
              for (auto w : workers) {
                BenchCell cell = base;
                cell.strategy = st;
                cell.cse = cse;
                cell.mode = mode;
                cell.workers = w;
                if (best) {
                  cell.steps = steps;
                  cell.best_over_steps = true;
                  suite.cells.push_back(cell);
                } else {
                  for (auto l : steps) {
                    cell.steps = {l};
                    suite.cells.push_back(cell);
                  }
                }
              }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bench suite: ") + e.what());
  }
  return suite;
}

inline BenchSuite load_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open suite file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return parse_suite(j, path.parent_path());
}

inline FastAlgorithm resolve_algorithm(const std::string& name) {
  if (name == "classical") return classical_algorithm(2, 2, 2);
  if (name == "strassen") return strassen_algorithm();
  return load_algorithm(name);
}

namespace detail {

inline std::string algorithm_label(const std::string& name) {
  if (name == "classical" || name == "strassen") return name;
  return std::filesystem::path(name).stem().string();
}

}  // namespace detail

//
// One warm-up run, then kBenchSamples timed runs per depth. With several
// depths (best over steps) the row reports the depth with the lowest median.
// Failures are reported in the record rather than thrown.
//
inline BenchRecord run_cell(const BenchCell& cell) {
  BenchRecord rec;
  rec.algorithm = detail::algorithm_label(cell.algorithm);
  rec.shape = cell.shape;
  rec.strategy = cell.strategy;
  rec.cse = cell.cse;
  rec.mode = cell.mode;
  rec.workers = cell.workers;
  rec.steps = cell.steps.empty() ? 0 : cell.steps.front();
  try {
    if (cell.steps.empty()) throw ContractViolation("bench cell has no recursion depth");
    const FastAlgorithm alg = resolve_algorithm(cell.algorithm);
    std::mt19937_64 rng(cell.seed);
    const DenseMatrix a = DenseMatrix::random(cell.shape.p, cell.shape.q, rng);
    const DenseMatrix b = DenseMatrix::random(cell.shape.q, cell.shape.r, rng);
    DenseMatrix c(cell.shape.p, cell.shape.r);

    ExecutionConfig cfg;
    cfg.strategy = cell.strategy;
    cfg.cse = cell.cse;
    cfg.mode = cell.mode;
    cfg.workers = cell.workers;
    cfg.kernel = kernel_by_name(cell.kernel);
    std::optional<WorkerPool> pool;
    if (cell.workers > 1) {
      pool.emplace(cell.workers);
      cfg.pool = &*pool;
    }

    bool have = false;
    for (std::size_t l : cell.steps) {
      cfg.steps = l;
      fast_multiply_into(a, b, c, alg, cfg);
      std::vector<double> samples;
      InstrumentationCounters counters;
      for (std::size_t s = 0; s < kBenchSamples; ++s) {
        const auto t0 = std::chrono::steady_clock::now();
        counters = fast_multiply_into(a, b, c, alg, cfg);
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double>(t1 - t0).count());
      }
      const double med = median_of(samples);
      if (!have || med < rec.median_s) {
        have = true;
        rec.steps = l;
        rec.samples = samples;
        rec.median_s = med;
        rec.counters = counters;
      }
    }
    // Guard against a zero-resolution clock on tiny problems.
    rec.median_s = std::max(rec.median_s, 1e-9);
    rec.gflops = effective_gflops(cell.shape.p, cell.shape.q, cell.shape.r, rec.median_s);

    if (cell.check) {
      cfg.steps = rec.steps;
      fast_multiply_into(a, b, c, alg, cfg);
      DenseMatrix ref(cell.shape.p, cell.shape.r);
      classical_base_multiply(a, b, ref);
      rec.max_rel_error = relative_error(c, ref);
    }
  } catch (const std::exception& e) {
    rec.error = e.what();
    rec.samples.clear();
    rec.median_s = 0.0;
    rec.gflops = 0.0;
  }
  return rec;
}

// Cells run one at a time. on_record (optional) sees each row as it completes.
inline std::vector<BenchRecord> run_bench(const BenchSuite& suite,
                                          const std::function<void(const BenchRecord&)>& on_record = {}) {
  std::vector<BenchRecord> out;
  for (const auto& cell : suite.cells) {
    out.push_back(run_cell(cell));
    if (on_record) on_record(out.back());
  }
  return out;
}

inline const std::vector<std::string>& bench_csv_columns() {
  static const std::vector<std::string> cols{
      "algorithm", "P", "Q", "R", "steps", "strategy", "cse", "mode", "workers", "t1", "t2", "t3", "t4", "t5",
      "median_s", "effective_gflops", "leaf_multiplies", "element_additions", "temp_bytes_high_water",
      "max_rel_error", "error"};
  return cols;
}

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace detail

inline void write_csv_header(std::ostream& out) {
  const auto& cols = bench_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
}

inline void write_csv_row(std::ostream& out, const BenchRecord& r) {
  std::vector<std::string> f{detail::csv_field(r.algorithm),
                             std::to_string(r.shape.p),
                             std::to_string(r.shape.q),
                             std::to_string(r.shape.r),
                             std::to_string(r.steps),
                             to_string(r.strategy),
                             r.cse ? "1" : "0",
                             to_string(r.mode),
                             std::to_string(r.workers)};
  const bool ok = r.error.empty();
  for (std::size_t s = 0; s < kBenchSamples; ++s) f.push_back(ok && s < r.samples.size() ? detail::fmt(r.samples[s]) : "");
  f.push_back(ok ? detail::fmt(r.median_s) : "");
  f.push_back(ok ? detail::fmt(r.gflops) : "");
  f.push_back(ok ? std::to_string(r.counters.leaf_multiplies) : "");
  f.push_back(ok ? std::to_string(r.counters.element_additions) : "");
  f.push_back(ok ? std::to_string(r.counters.temp_bytes_high_water) : "");
  f.push_back(r.max_rel_error ? detail::fmt(*r.max_rel_error) : "");
  f.push_back(detail::csv_field(r.error));
  for (std::size_t i = 0; i < f.size(); ++i) out << (i ? "," : "") << f[i];
  out << '\n';
}

inline void write_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
  write_csv_header(out);
  for (const auto& r : records) write_csv_row(out, r);
}

}  // namespace fmm
