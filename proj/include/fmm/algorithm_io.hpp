#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fmm/algorithm.hpp"
#include "fmm/errors.hpp"

namespace fmm {

//
// Coefficient file format (UTF-8 text):
//
//   # comment lines start with '#'
//   M K N R [exact|apa]
//   <MK rows of R entries: U>
//   <blank line>
//   <KN rows of R entries: V>
//   <blank line>
//   <MN rows of R entries: W>
//
// Entries are "p", "-p/q", decimal literals, or (apa only) "p/q*L", "p/q/L".
//

namespace detail {

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline bool is_comment(std::string_view line) {
  const auto pos = line.find_first_not_of(" \t\r");
  return pos != std::string_view::npos && line[pos] == '#';
}

inline bool looks_like_header(const std::vector<std::string>& toks) {
  return (toks.size() == 4 || toks.size() == 5) && (toks.back() == "exact" || toks.back() == "apa");
}

inline std::size_t parse_count(const std::string& tok, std::size_t line) {
  if (!all_digits(tok) || tok.size() > 9) throw ParseError(line, "expected a positive integer, found '" + tok + "'");
  const auto value = static_cast<std::size_t>(std::stoul(tok));
  if (value == 0) throw ParseError(line, "dimensions and rank must be >= 1");
  return value;
}

}  // namespace detail

inline FastAlgorithm parse_algorithm(std::string_view text, std::string name = "algorithm") {
  struct Line {
    std::size_t number;
    std::string content;
  };
  std::vector<Line> lines;
  {
    std::size_t number = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto end = text.find('\n', start);
      const auto piece = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
      ++number;
      if (!detail::is_comment(piece)) lines.push_back({number, std::string(piece)});
      if (end == std::string_view::npos) break;
      start = end + 1;
    }
  }

  std::size_t pos = 0;
  while (pos < lines.size() && detail::is_blank(lines[pos].content)) ++pos;
  if (pos == lines.size()) throw ParseError(lines.empty() ? 1 : lines.back().number, "missing header line");

  const auto header = detail::split_ws(lines[pos].content);
  const std::size_t header_line = lines[pos].number;
  if (header.size() != 4 && header.size() != 5) {
    throw ParseError(header_line, "header must be 'M K N R [exact|apa]'");
  }
  const BaseCase dims{detail::parse_count(header[0], header_line), detail::parse_count(header[1], header_line),
                      detail::parse_count(header[2], header_line)};
  const std::size_t rank = detail::parse_count(header[3], header_line);
  Exactness exactness = Exactness::exact;
  if (header.size() == 5) {
    if (header[4] == "apa") {
      exactness = Exactness::apa;
    } else if (header[4] != "exact") {
      throw ParseError(header_line, "unknown exactness flag '" + header[4] + "'");
    }
  }
  if (rank > dims.classical_rank()) {
    throw ParseError(header_line, "rank " + std::to_string(rank) + " exceeds MKN = " +
                                      std::to_string(dims.classical_rank()));
  }
  ++pos;

  auto read_section = [&](std::size_t rows, const char* label) {
    CoefficientMatrix m(rows, rank);
    while (pos < lines.size() && detail::is_blank(lines[pos].content)) ++pos;
    for (std::size_t r = 0; r < rows; ++r, ++pos) {
      if (pos >= lines.size() || detail::is_blank(lines[pos].content)) {
        const std::size_t at = pos < lines.size() ? lines[pos].number : (lines.empty() ? 1 : lines.back().number);
        throw ParseError(at, std::string(label) + " has " + std::to_string(r) + " rows, expected " +
                                 std::to_string(rows));
      }
      const auto toks = detail::split_ws(lines[pos].content);
      const std::size_t number = lines[pos].number;
      if (detail::looks_like_header(toks)) throw ParseError(number, "duplicate header");
      if (toks.size() != rank) {
        throw ParseError(number, std::string(label) + " row has " + std::to_string(toks.size()) +
                                     " entries, header says R = " + std::to_string(rank));
      }
      for (std::size_t c = 0; c < rank; ++c) {
        auto coeff = parse_coefficient(toks[c]);
        if (!coeff) throw ParseError(number, "unparseable coefficient '" + toks[c] + "'");
        if (!coeff->is_exact() && exactness == Exactness::exact) {
          throw ParseError(number, "lambda coefficient '" + toks[c] + "' in an exact algorithm");
        }
        m(r, c) = std::move(*coeff);
      }
    }
    if (pos < lines.size() && !detail::is_blank(lines[pos].content)) {
      throw ParseError(lines[pos].number, std::string(label) + " has more than " + std::to_string(rows) + " rows");
    }
    return m;
  };

  auto u = read_section(dims.a_blocks(), "U");
  auto v = read_section(dims.b_blocks(), "V");
  auto w = read_section(dims.c_blocks(), "W");
  while (pos < lines.size() && detail::is_blank(lines[pos].content)) ++pos;
  if (pos < lines.size()) throw ParseError(lines[pos].number, "unexpected content after W");

  return FastAlgorithm(std::move(name), dims, std::move(u), std::move(v), std::move(w), exactness);
}

// Canonical form: no comments, reduced rationals, single spaces.
inline std::string serialize_algorithm(const FastAlgorithm& alg) {
  std::ostringstream out;
  out << alg.dims.m << ' ' << alg.dims.k << ' ' << alg.dims.n << ' ' << alg.rank << ' '
      << to_string(alg.exactness) << '\n';
  auto section = [&](const CoefficientMatrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << to_string(m(r, c));
      out << '\n';
    }
  };
  section(alg.u);
  out << '\n';
  section(alg.v);
  out << '\n';
  section(alg.w);
  return out.str();
}

inline FastAlgorithm load_algorithm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open algorithm file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_algorithm(buf.str(), path.stem().string());
}

inline void save_algorithm(const FastAlgorithm& alg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write algorithm file " + path.string());
  out << "# " << alg.name << '\n' << serialize_algorithm(alg);
}

}  // namespace fmm
