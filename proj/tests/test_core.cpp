#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "missfit/core.hpp"
#include "missfit/csv_io.hpp"
#include "support.hpp"

using namespace missfit;
using namespace testing_support;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

MaskVector mvec(std::initializer_list<int> v) {
  MaskVector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (int x : v) out[i++] = static_cast<std::uint8_t>(x);
  return out;
}

}  // namespace

TEST(MaskedDot, NoMissingIsPlainDot) {
  EXPECT_DOUBLE_EQ(masked_dot(vec({1, 2}), vec({3, 4}), mvec({0, 0})), 11.0);
}

TEST(MaskedDot, AllMissingIsZero) {
  EXPECT_DOUBLE_EQ(masked_dot(vec({1, 2}), vec({3, 4}), mvec({1, 1})), 0.0);
}

TEST(MaskedDot, SkipsMissingTerm) {
  EXPECT_DOUBLE_EQ(masked_dot(vec({1, 2, -1}), vec({5, 7, 2}), mvec({0, 1, 0})), 3.0);
}

TEST(MaskedDot, DimensionMismatchThrows) {
  EXPECT_THROW(masked_dot(vec({1, 2}), vec({3}), mvec({0, 0})), ContractError);
}

TEST(MaskedDot, IgnoresValuesAtMissingPositions) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Vector w = random_matrix(6, 1, rng).col(0);
    Vector x = random_matrix(6, 1, rng).col(0);
    MaskVector m = random_mask(6, 1, 0.5, rng).col(0);
    Vector x2 = x;
    for (Index j = 0; j < 6; ++j)
      if (m[j]) x2[j] = 1e6 * (j + 1);
    EXPECT_EQ(masked_dot(w, x, m), masked_dot(w, x2, m));
  }
}

TEST(Validate, WellFormedPasses) {
  Matrix x(3, 2);
  x << 1, 2, 3, 4, 5, 6;
  EXPECT_NO_THROW(validate(make_dataset(x, Mask::Zero(3, 2), Vector::Zero(3))));
}

TEST(Validate, BadMaskValueNamesCell) {
  Matrix x = Matrix::Zero(3, 2);
  Mask m = Mask::Zero(3, 2);
  m(1, 0) = 2;
  MaskedDataset d{x, m, Vector::Zero(3), {}, {}};
  try {
    validate(d);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1, column 0"), std::string::npos) << e.what();
  }
}

TEST(Validate, NanOnlyMattersWhenObserved) {
  Matrix x = Matrix::Zero(2, 2);
  x(0, 1) = std::nan("");
  Mask m = Mask::Zero(2, 2);
  MaskedDataset observed{x, m, Vector::Zero(2), {}, {}};
  EXPECT_THROW(validate(observed), DataError);
  m(0, 1) = 1;
  MaskedDataset hidden{x, m, Vector::Zero(2), {}, {}};
  EXPECT_NO_THROW(validate(hidden));
}

TEST(Validate, ShapeMismatch) {
  MaskedDataset d{Matrix::Zero(3, 2), Mask::Zero(2, 2), Vector::Zero(3), {}, {}};
  EXPECT_THROW(validate(d), DataError);
}

TEST(UniquePatterns, TwoGroups) {
  Mask m(3, 2);
  m << 0, 0, 0, 0, 1, 0;
  const auto groups = unique_patterns(make_dataset(Matrix::Zero(3, 2), m, Vector::Zero(3)));
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].key.to_string(), "00");
  EXPECT_EQ(groups[0].rows, (std::vector<Index>{0, 1}));
  EXPECT_EQ(groups[1].key.to_string(), "10");
  EXPECT_EQ(groups[1].rows, (std::vector<Index>{2}));
}

TEST(UniquePatterns, FullyObservedIsOneGroup) {
  const auto groups = unique_patterns(make_dataset(Matrix::Zero(7, 3), Mask::Zero(7, 3), Vector::Zero(7)));
  ASSERT_EQ(groups.size(), 1u);
  EXPECT_EQ(groups[0].rows.size(), 7u);
}

TEST(UniquePatterns, MatchesBruteForceGrouping) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    std::mt19937_64 rng(seed);
    const Index n = 6, d = 3;
    Mask m = random_mask(n, d, 0.4, rng);
    const auto groups = unique_patterns(make_dataset(Matrix::Zero(n, d), m, Vector::Zero(n)));
    std::map<std::string, std::vector<Index>> oracle;
    for (Index i = 0; i < n; ++i) {
      std::string key;
      for (Index j = 0; j < d; ++j) key += m(i, j) ? '1' : '0';
      oracle[key].push_back(i);
    }
    ASSERT_EQ(groups.size(), oracle.size());
    std::size_t total = 0;
    for (const auto& g : groups) {
      total += g.rows.size();
      ASSERT_TRUE(oracle.count(g.key.to_string()));
      EXPECT_EQ(g.rows, oracle[g.key.to_string()]);
    }
    EXPECT_EQ(total, static_cast<std::size_t>(n));
  }
}

TEST(UniquePatterns, GroupCountBounded) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    const Index n = 5 + static_cast<Index>(seed % 40), d = 1 + static_cast<Index>(seed % 4);
    const auto groups = unique_patterns(make_dataset(Matrix::Zero(n, d), random_mask(n, d, 0.5, rng), Vector::Zero(n)));
    EXPECT_LE(static_cast<Index>(groups.size()), std::min<Index>(n, Index{1} << d));
  }
}

TEST(UniquePatterns, InvariantToScrambling) {
  const auto data = random_dataset(40, 4, 0.4, 11);
  const auto a = unique_patterns(data);
  const auto b = unique_patterns(scramble_missing(data, 5));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t g = 0; g < a.size(); ++g) {
    EXPECT_EQ(a[g].key, b[g].key);
    EXPECT_EQ(a[g].rows, b[g].rows);
  }
}

TEST(PatternKey, HashAgreesWithEquality) {
  Mask m(2, 3);
  m << 1, 0, 1, 1, 0, 1;
  const auto a = pattern_of(m, 0);
  const auto b = pattern_of(m, 1);
  EXPECT_EQ(a, b);
  EXPECT_EQ(PatternKeyHash{}(a), PatternKeyHash{}(b));
}

TEST(SubsetRows, CarriesRowIds) {
  const auto data = random_dataset(10, 2, 0.3, 1);
  const auto sub = subset_rows(data, {7, 2});
  EXPECT_EQ(sub.row_ids, (std::vector<Index>{7, 2}));
  const auto sub2 = subset_rows(sub, {1});
  EXPECT_EQ(sub2.row_ids, (std::vector<Index>{2}));
  EXPECT_EQ(sub2.x.row(0), data.x.row(2));
}

TEST(NeverMissing, FindsCompleteColumns) {
  Mask m(3, 3);
  m << 0, 1, 0, 0, 0, 0, 1, 0, 0;
  const auto data = make_dataset(Matrix::Zero(3, 3), m, Vector::Zero(3));
  EXPECT_EQ(never_missing_columns(data), (std::vector<Index>{2}));
  const Vector frac = missing_fraction(data);
  EXPECT_DOUBLE_EQ(frac[0], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(frac[2], 0.0);
}

TEST(DeriveSeed, DistinctStreams) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(9, 4), derive_seed(9, 4));
}

TEST(Csv, EmptyAndNaBecomeMissing) {
  std::istringstream in("a,b,y\n1,,3\nNA,2.5,4\n");
  const auto d = read_csv(in, "y");
  ASSERT_EQ(d.rows(), 2);
  ASSERT_EQ(d.cols(), 2);
  EXPECT_EQ(d.m(0, 1), 1);
  EXPECT_EQ(d.x(0, 1), 0.0);
  EXPECT_EQ(d.m(1, 0), 1);
  EXPECT_EQ(d.x(1, 1), 2.5);
  EXPECT_EQ(d.y[1], 4.0);
  EXPECT_EQ(d.feature_names, (std::vector<std::string>{"a", "b"}));
}

TEST(Csv, RoundTripIsExact) {
  auto data = random_dataset(20, 3, 0.3, 8);
  data.feature_names = {"u", "v", "w"};
  std::ostringstream out;
  write_csv(out, data);
  std::istringstream in(out.str());
  const auto back = read_csv(in, "y");
  EXPECT_EQ(back.m, data.m);
  EXPECT_EQ(back.y, data.y);
  for (Index i = 0; i < data.rows(); ++i)
    for (Index j = 0; j < data.cols(); ++j)
      if (!data.m(i, j)) {
        EXPECT_EQ(back.x(i, j), data.x(i, j));
      }
}

TEST(Csv, MissingTargetColumnThrows) {
  std::istringstream in("a,b\n1,2\n");
  EXPECT_THROW(read_csv(in, "y"), DataError);
}

TEST(Csv, RaggedRowThrows) {
  std::istringstream in("a,y\n1,2,3\n");
  EXPECT_THROW(read_csv(in, "y"), DataError);
}
