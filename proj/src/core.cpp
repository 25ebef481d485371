#include "missfit/core.hpp"

#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

namespace missfit {

MaskedDataset make_dataset(Matrix x, Mask m, Vector y,
                           std::vector<std::string> feature_names) {
  MaskedDataset data;
  data.x = std::move(x);
  data.m = std::move(m);
  data.y = std::move(y);
  data.feature_names = std::move(feature_names);
  data.row_ids.resize(static_cast<std::size_t>(data.x.rows()));
  std::iota(data.row_ids.begin(), data.row_ids.end(), Index{0});
  return data;
}

double masked_dot(const Eigen::Ref<const Vector>& w,
                  const Eigen::Ref<const Vector>& x,
                  const Eigen::Ref<const MaskVector>& m) {
  if (w.size() != x.size() || x.size() != m.size()) {
    throw ContractError(fmt::format(
        "masked_dot: length mismatch (w={}, x={}, m={})", w.size(), x.size(),
        m.size()));
  }
  double acc = 0.0;
  for (Index j = 0; j < w.size(); ++j) {
    if (m[j] == 0) acc += w[j] * x[j];
  }
  return acc;
}

void validate(const MaskedDataset& data) {
  const Index n = data.x.rows();
  const Index d = data.x.cols();
  if (data.m.rows() != n || data.m.cols() != d) {
    throw DataError(fmt::format("mask shape {}x{} does not match features {}x{}",
                                data.m.rows(), data.m.cols(), n, d));
  }
  if (data.y.size() != n) {
    throw DataError(
        fmt::format("target has {} rows, features have {}", data.y.size(), n));
  }
  if (!data.feature_names.empty() &&
      static_cast<Index>(data.feature_names.size()) != d) {
    throw DataError(fmt::format("{} feature names for {} columns",
                                data.feature_names.size(), d));
  }
  if (!data.row_ids.empty() && static_cast<Index>(data.row_ids.size()) != n) {
    throw DataError("row_ids length does not match row count");
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      const auto mv = data.m(i, j);
      if (mv > 1) {
        throw DataError(fmt::format("mask value {} at row {}, column {}",
                                    static_cast<int>(mv), i, j));
      }
      if (mv == 0 && !std::isfinite(data.x(i, j))) {
        throw DataError(fmt::format(
            "non-finite observed value at row {}, column {}", i, j));
      }
    }
    if (!std::isfinite(data.y[i])) {
      throw DataError(fmt::format("non-finite target at row {}", i));
    }
  }
}

std::string PatternKey::to_string() const {
  std::string s;
  s.reserve(bits.size());
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

std::size_t PatternKeyHash::operator()(const PatternKey& key) const noexcept {
  // FNV-1a
  std::size_t h = 1469598103934665603ULL;
  for (auto b : key.bits) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

PatternKey pattern_of(const Mask& m, Index row) {
  PatternKey key;
  key.bits.resize(static_cast<std::size_t>(m.cols()));
  for (Index j = 0; j < m.cols(); ++j) key.bits[j] = m(row, j) ? 1 : 0;
  return key;
}

std::vector<PatternGroup> unique_patterns(const MaskedDataset& data) {
  std::vector<PatternGroup> groups;
  std::unordered_map<PatternKey, std::size_t, PatternKeyHash> slot;
  for (Index i = 0; i < data.rows(); ++i) {
    auto key = pattern_of(data.m, i);
    auto [it, inserted] = slot.try_emplace(key, groups.size());
    if (inserted) groups.push_back(PatternGroup{std::move(key), {}});
    groups[it->second].rows.push_back(i);
  }
  return groups;
}

MaskedDataset subset_rows(const MaskedDataset& data,
                          const std::vector<Index>& rows) {
  const auto k = static_cast<Index>(rows.size());
  MaskedDataset out;
  out.x.resize(k, data.cols());
  out.m.resize(k, data.cols());
  out.y.resize(k);
  out.feature_names = data.feature_names;
  out.row_ids.resize(rows.size());
  for (Index r = 0; r < k; ++r) {
    const Index src = rows[r];
    if (src < 0 || src >= data.rows()) {
      throw ContractError(fmt::format("row index {} out of range", src));
    }
    out.x.row(r) = data.x.row(src);
    out.m.row(r) = data.m.row(src);
    out.y[r] = data.y[src];
    out.row_ids[r] = data.row_ids.empty() ? src : data.row_ids[src];
  }
  return out;
}

MaskedDataset subset_cols(const MaskedDataset& data,
                          const std::vector<Index>& cols) {
  MaskedDataset out;
  const auto k = static_cast<Index>(cols.size());
  out.x.resize(data.rows(), k);
  out.m.resize(data.rows(), k);
  for (Index c = 0; c < k; ++c) {
    out.x.col(c) = data.x.col(cols[c]);
    out.m.col(c) = data.m.col(cols[c]);
    if (!data.feature_names.empty()) {
      out.feature_names.push_back(data.feature_names[cols[c]]);
    }
  }
  out.y = data.y;
  out.row_ids = data.row_ids;
  return out;
}

Vector missing_fraction(const MaskedDataset& data) {
  Vector frac(data.cols());
  for (Index j = 0; j < data.cols(); ++j) {
    frac[j] = data.rows() == 0
                  ? 0.0
                  : data.m.col(j).cast<double>().sum() /
                        static_cast<double>(data.rows());
  }
  return frac;
}

std::vector<Index> never_missing_columns(const MaskedDataset& data) {
  std::vector<Index> cols;
  for (Index j = 0; j < data.cols(); ++j) {
    if ((data.m.col(j).array() == 0).all()) cols.push_back(j);
  }
  return cols;
}

bool is_binary_target(const Vector& y) {
  if (y.size() == 0) return false;
  bool zero = false;
  bool one = false;
  for (Index i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) {
      zero = true;
    } else if (y[i] == 1.0) {
      one = true;
    } else {
      return false;
    }
  }
  return zero && one;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace missfit
