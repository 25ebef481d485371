#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace missfit {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using MaskVector = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;

// Caller broke a documented precondition (shape mismatch, bad parameter).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Input data is malformed (bad mask value, non-finite observed entry, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Observations (x_i, m_i, y_i). Entries of `x` where `m` is 1 are stored but
// carry no meaning: nothing downstream may read them.
struct MaskedDataset {
  Matrix x;
  Mask m;
  Vector y;
  std::vector<std::string> feature_names;
  // Index of each row in the dataset it was cut from; lets callers audit
  // which original rows an operation has seen.
  std::vector<Index> row_ids;

  Index rows() const { return x.rows(); }
  Index cols() const { return x.cols(); }
  bool missing(Index i, Index j) const { return m(i, j) != 0; }
};

MaskedDataset make_dataset(Matrix x, Mask m, Vector y,
                           std::vector<std::string> feature_names = {});

// sum_j w_j (1 - m_j) x_j
double masked_dot(const Eigen::Ref<const Vector>& w,
                  const Eigen::Ref<const Vector>& x,
                  const Eigen::Ref<const MaskVector>& m);

// Throws DataError naming the first offending cell.
void validate(const MaskedDataset& data);

struct PatternKey {
  std::vector<std::uint8_t> bits;

  friend bool operator==(const PatternKey&, const PatternKey&) = default;
  friend auto operator<=>(const PatternKey&, const PatternKey&) = default;
  std::string to_string() const;
};

struct PatternKeyHash {
  std::size_t operator()(const PatternKey& key) const noexcept;
};

PatternKey pattern_of(const Mask& m, Index row);

struct PatternGroup {
  PatternKey key;
  std::vector<Index> rows;
};

// Groups are ordered by first occurrence; rows inside a group are ascending.
std::vector<PatternGroup> unique_patterns(const MaskedDataset& data);

MaskedDataset subset_rows(const MaskedDataset& data,
                          const std::vector<Index>& rows);
MaskedDataset subset_cols(const MaskedDataset& data,
                          const std::vector<Index>& cols);

// Fraction of missing entries per column.
Vector missing_fraction(const MaskedDataset& data);

// Columns with no missing entry.
std::vector<Index> never_missing_columns(const MaskedDataset& data);

bool is_binary_target(const Vector& y);

// Independent, reproducible sub-stream seed (splitmix64 of base and stream).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace missfit
