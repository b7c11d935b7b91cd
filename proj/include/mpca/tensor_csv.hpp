#pragma once

// Long-format CSV for dense tensors.
//
//   i1,i2,...,ip,value
//
// One row per cell (or per nonzero); indices are 1-based. Cells that do not
// appear are 0 for the plain readers (analyze treats them as missing). A value of "NA", "NaN" or an empty field marks a missing
// cell; readers that track missingness report it, the plain tensor reader
// stores 0.

#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mpca/spiked_model.hpp"
#include "mpca/tensor.hpp"

namespace mpca {

/// Shortest decimal representation that reads back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "NaN";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "NULL")
    return std::numeric_limits<double>::quiet_NaN();
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidInput("cannot parse number '" + std::string(s) + "'");
  return v;
}

/// Raw rows of a long-format file: 0-based index tuples plus values
/// (NaN for missing).
struct LongTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::size_t>> index;
  std::vector<double> values;

  std::size_t arity() const { return columns.empty() ? 0 : columns.size() - 1; }

  /// Largest index per column, 1-based (i.e. the implied dims).
  Dims implied_dims() const {
    Dims d(arity(), 0);
    for (const auto& idx : index)
      for (std::size_t c = 0; c < idx.size(); ++c) d[c] = std::max(d[c], idx[c] + 1);
    return d;
  }
};

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

inline LongTable read_long_table(std::istream& in) {
  LongTable t;
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput("empty CSV input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  for (auto f : split_csv_line(line)) t.columns.emplace_back(f);
  detail::require(t.columns.size() >= 2, "CSV header needs at least one index column and a value");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != t.columns.size())
      throw InvalidInput("CSV line " + std::to_string(lineno) + ": expected " +
                         std::to_string(t.columns.size()) + " fields");
    std::vector<std::size_t> idx;
    for (std::size_t c = 0; c + 1 < fields.size(); ++c) {
      const double x = parse_double(fields[c]);
      if (!(x >= 1.0) || x != std::floor(x))
        throw InvalidInput("CSV line " + std::to_string(lineno) + ": indices must be integers >= 1");
      idx.push_back(static_cast<std::size_t>(x) - 1);
    }
    t.index.push_back(std::move(idx));
    t.values.push_back(parse_double(fields.back()));
  }
  return t;
}

/// Scatters a table into a dense tensor of the given dims (or the implied
/// dims when `dims` is empty). Missing and absent cells become 0.
inline Tensor table_to_tensor(const LongTable& t, Dims dims = {}) {
  if (dims.empty()) dims = t.implied_dims();
  detail::require(dims.size() == t.arity(), "CSV arity does not match the requested dims");
  std::vector<double> data(dims_product(dims), 0.0);
  Tensor shape(dims);
  for (std::size_t row = 0; row < t.index.size(); ++row) {
    for (std::size_t c = 0; c < dims.size(); ++c)
      if (t.index[row][c] >= dims[c])
        throw InvalidInput("CSV index exceeds dims " + dims_to_string(dims));
    const double v = t.values[row];
    data[shape.offset(t.index[row])] = std::isnan(v) ? 0.0 : v;
  }
  return Tensor(std::move(dims), std::move(data));
}

inline Tensor read_tensor_csv(std::istream& in, Dims dims = {}) {
  return table_to_tensor(read_long_table(in), std::move(dims));
}

namespace detail {

inline void write_rows(std::ostream& out, const Dims& dims, std::span<const double> data) {
  std::vector<std::size_t> idx(dims.size(), 0);
  std::string line;
  for (std::size_t off = 0; off < data.size(); ++off) {
    line.clear();
    for (auto i : idx) {
      line += std::to_string(i + 1);
      line += ',';
    }
    line += format_double(data[off]);
    line += '\n';
    out << line;
    for (std::size_t q = dims.size(); q-- > 0;) {
      if (++idx[q] < dims[q]) break;
      idx[q] = 0;
    }
  }
}

}  // namespace detail

inline void write_tensor_csv(std::ostream& out, const Tensor& t) {
  for (std::size_t q = 0; q < t.order(); ++q) out << "i" << (q + 1) << ",";
  out << "value\n";
  detail::write_rows(out, t.dims(), t.data());
}

/// Stacked observations with the observation index as the first column:
/// obs,i1,...,ip,value.
inline void write_samples_csv(std::ostream& out, const SampleSet& s) {
  out << "obs,";
  for (std::size_t q = 0; q < s.order(); ++q) out << "i" << (q + 1) << ",";
  out << "value\n";
  Dims full{s.n()};
  full.insert(full.end(), s.dims().begin(), s.dims().end());
  detail::write_rows(out, full, s.stacked());
}

inline SampleSet tensor_to_samples(const Tensor& stacked) {
  detail::require(stacked.order() >= 2, "stacked tensor needs an observation mode plus data modes");
  Dims dims(stacked.dims().begin() + 1, stacked.dims().end());
  auto d = stacked.data();
  return SampleSet(std::move(dims), stacked.dim(0), std::vector<double>(d.begin(), d.end()));
}

inline SampleSet read_samples_csv(std::istream& in, Dims full_dims = {}) {
  return tensor_to_samples(read_tensor_csv(in, std::move(full_dims)));
}

}  // namespace mpca
