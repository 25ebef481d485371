#include "missfit/csv_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace missfit {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\"");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\"");
  return s.substr(first, last - first + 1);
}

bool is_missing_token(const std::string& cell) {
  return cell.empty() || cell == "NA";
}

double parse_number(const std::string& cell, std::size_t line, std::size_t col) {
  double v = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end) {
    throw DataError(fmt::format("line {}, column {}: cannot parse '{}'", line,
                                col + 1, cell));
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

MaskedDataset read_csv(std::istream& in, const std::string& target,
                       bool require_target) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV: header row required");
  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);

  std::ptrdiff_t target_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (!target.empty() && header[c] == target) target_col = static_cast<std::ptrdiff_t>(c);
  }
  if (target_col < 0 && require_target) {
    throw DataError(fmt::format("target column '{}' not found in header", target));
  }

  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (static_cast<std::ptrdiff_t>(c) != target_col) names.push_back(header[c]);
  }
  const auto d = static_cast<Index>(names.size());

  std::vector<std::vector<double>> xs;
  std::vector<std::vector<std::uint8_t>> ms;
  std::vector<double> ys;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError(fmt::format("line {}: expected {} fields, found {}",
                                  line_no, header.size(), cells.size()));
    }
    std::vector<double> xrow;
    std::vector<std::uint8_t> mrow;
    xrow.reserve(static_cast<std::size_t>(d));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::string cell = trim(cells[c]);
      if (static_cast<std::ptrdiff_t>(c) == target_col) {
        if (is_missing_token(cell)) {
          throw DataError(fmt::format("line {}: missing target value", line_no));
        }
        ys.push_back(parse_number(cell, line_no, c));
        continue;
      }
      if (is_missing_token(cell)) {
        xrow.push_back(0.0);
        mrow.push_back(1);
      } else {
        xrow.push_back(parse_number(cell, line_no, c));
        mrow.push_back(0);
      }
    }
    if (target_col < 0) ys.push_back(0.0);
    xs.push_back(std::move(xrow));
    ms.push_back(std::move(mrow));
  }

  const auto n = static_cast<Index>(xs.size());
  Matrix x(n, d);
  Mask m(n, d);
  Vector y(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      x(i, j) = xs[i][j];
      m(i, j) = ms[i][j];
    }
    y[i] = ys[i];
  }
  auto data = make_dataset(std::move(x), std::move(m), std::move(y), std::move(names));
  validate(data);
  return data;
}

MaskedDataset read_csv(const std::string& path, const std::string& target,
                       bool require_target) {
  std::ifstream in(path);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path));
  return read_csv(in, target, require_target);
}

void write_csv(std::ostream& out, const MaskedDataset& data,
               const std::string& target) {
  for (Index j = 0; j < data.cols(); ++j) {
    if (data.feature_names.empty()) {
      out << 'x' << (j + 1);
    } else {
      out << data.feature_names[j];
    }
    out << ',';
  }
  out << target << '\n';
  for (Index i = 0; i < data.rows(); ++i) {
    for (Index j = 0; j < data.cols(); ++j) {
      out << (data.missing(i, j) ? std::string("NA") : format_double(data.x(i, j)))
          << ',';
    }
    out << format_double(data.y[i]) << '\n';
  }
}

void write_csv(const std::string& path, const MaskedDataset& data,
               const std::string& target) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path));
  write_csv(out, data, target);
}

}  // namespace missfit
