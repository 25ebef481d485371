#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "missfit/core.hpp"

namespace missfit {

enum class SignalKind { Linear, NeuralNet };
enum class Mechanism { MCAR, Censoring };

std::string to_string(SignalKind s);
std::string to_string(Mechanism m);
SignalKind parse_signal(const std::string& s);
Mechanism parse_mechanism(const std::string& s);

struct GeneratorSpec {
  Index n = 1000;
  Index d = 10;
  Index r = 5;
  double eps = 0.1;
  SignalKind signal = SignalKind::Linear;
  Index k = 5;
  double snr = 2.0;
  Mechanism mechanism = Mechanism::MCAR;
  double p = 0.5;
  std::uint64_t seed = 0;

  void check() const;
};

// Ground truth f. Inputs are x[support] followed by m[mask_support].
struct SignalModel {
  SignalKind kind = SignalKind::Linear;
  std::vector<Index> support;
  std::vector<Index> mask_support;
  // Linear: f = bias + weights . inputs
  double bias = 0.0;
  Vector weights;
  // NeuralNet: f = (out_w . relu(hidden_w inputs + hidden_b) + out_b - center) / scale
  Matrix hidden_w;
  Vector hidden_b;
  Vector out_w;
  double out_b = 0.0;
  double center = 0.0;
  double scale = 1.0;

  double evaluate_row(const Eigen::Ref<const Eigen::RowVectorXd>& x,
                      const Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>& m) const;
  Vector evaluate(const Matrix& x, const Mask& m) const;
};

inline constexpr int kHiddenUnits = 10;

// Covariance B B^T + eps I with B ~ N(0,1)^{d x r}, drawn from the seed.
Matrix design_covariance(const GeneratorSpec& spec);
Matrix gen_design(const GeneratorSpec& spec);

// Draws f over `support` (and optional mask inputs); the NN variant is
// standardized on (x, m). Mask inputs' weights are drawn after all other
// weights, so an empty mask_support reproduces the mask-free model.
SignalModel draw_signal(SignalKind kind, const std::vector<Index>& support,
                        const std::vector<Index>& mask_support,
                        const Matrix& x, const Mask& m, std::uint64_t seed);

struct SignalDraw {
  Vector y;
  Vector f;
  double noise_sd = 0.0;
  SignalModel model;
};

// y = f + N(0, Var(f) / snr). Throws DataError when f has zero variance.
SignalDraw add_noise(const SignalModel& model, const Matrix& x, const Mask& m,
                     double snr, std::uint64_t seed);

// Support of size k chosen uniformly from the seed, then signal and noise.
SignalDraw gen_signal(const Matrix& x, const GeneratorSpec& spec);

Mask apply_mcar(Index n, Index d, double p, std::uint64_t seed);

// Type-7 empirical (1-p) quantile of each column.
Vector censoring_thresholds(const Matrix& x, double p);
// Masks entries strictly above their column threshold.
Mask apply_censoring(const Matrix& x, const Vector& thresholds);
Mask apply_censoring(const Matrix& x, double p);

struct GeneratedData {
  MaskedDataset data;
  Matrix x_full;
  Vector f;
  SignalModel model;
  Vector thresholds;  // censoring only
};

GeneratedData generate(const GeneratorSpec& spec);

// Rows split by a seeded shuffle; censoring thresholds come from the
// training rows only and are reused on the test rows.
struct SplitInstance {
  GeneratedData train;
  GeneratedData test;
};

SplitInstance generate_split(const GeneratorSpec& spec, double test_fraction,
                             std::uint64_t split_seed);

// Row indices of the train and test parts of a seeded shuffle, both sorted.
std::pair<std::vector<Index>, std::vector<Index>> train_test_rows(
    Index n, double test_fraction, std::uint64_t seed);

enum class SemiSetting { MAR, NMAR, AM };
std::string to_string(SemiSetting s);
SemiSetting parse_semi_setting(const std::string& s);

struct SemiSyntheticSpec {
  SemiSetting setting = SemiSetting::MAR;
  Index k = -1;  // -1 = min(10, d)
  Index k_missing = 0;
  SignalKind signal = SignalKind::Linear;
  double snr = 2.0;
  std::uint64_t seed = 0;
};

struct SemiSynthetic {
  Vector y;
  Mask m;  // reassigned for AM, otherwise the input mask
  SignalModel model;
  std::vector<Index> permutation;  // AM only: row i takes mask row permutation[i]
};

SemiSynthetic gen_semisynthetic(const Matrix& x_full, const Mask& m,
                                const SemiSyntheticSpec& spec);

nlohmann::json to_json(const GeneratorSpec& spec);
GeneratorSpec generator_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SignalModel& model);

}  // namespace missfit
