#include "missfit/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "missfit/assignment.hpp"

namespace missfit {
namespace {

// Sub-streams of a generator seed.
enum Stream : std::uint64_t { kLoadings = 1, kSamples = 2, kSignal = 3, kNoise = 4, kMask = 5, kSupport = 6 };

using Rng = std::mt19937_64;

double variance(const Vector& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size());
}

std::vector<Index> choose(Index from, Index count, Rng& rng) {
  std::vector<Index> idx(from);
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<Index> pick(i, from - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<Index> choose_from(const std::vector<Index>& pool, Index count, Rng& rng) {
  std::vector<Index> out;
  for (Index i : choose(static_cast<Index>(pool.size()), count, rng)) out.push_back(pool[i]);
  return out;
}

GeneratedData restrict_rows(const GeneratedData& g, const std::vector<Index>& rows) {
  GeneratedData out;
  out.model = g.model;
  out.thresholds = g.thresholds;
  out.x_full.resize(static_cast<Index>(rows.size()), g.x_full.cols());
  out.f.resize(static_cast<Index>(rows.size()));
  Vector y(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<Index>(r);
    out.x_full.row(i) = g.x_full.row(rows[r]);
    out.f[i] = g.f[rows[r]];
    y[i] = g.data.y[rows[r]];
  }
  out.data = make_dataset(out.x_full, Mask::Zero(out.x_full.rows(), out.x_full.cols()), y,
                          g.data.feature_names);
  out.data.row_ids = rows;
  return out;
}

void hide_missing(MaskedDataset& data) {
  for (Index j = 0; j < data.cols(); ++j)
    for (Index i = 0; i < data.rows(); ++i)
      if (data.missing(i, j)) data.x(i, j) = 0.0;
}

std::vector<std::string> default_names(Index d) {
  std::vector<std::string> names;
  for (Index j = 0; j < d; ++j) names.push_back(fmt::format("x{}", j + 1));
  return names;
}

}  // namespace

std::string to_string(SignalKind s) { return s == SignalKind::Linear ? "linear" : "nn"; }
std::string to_string(Mechanism m) { return m == Mechanism::MCAR ? "mcar" : "censoring"; }

SignalKind parse_signal(const std::string& s) {
  if (s == "linear") return SignalKind::Linear;
  if (s == "nn" || s == "neural-net") return SignalKind::NeuralNet;
  throw ContractError(fmt::format("unknown signal '{}' (expected linear or nn)", s));
}

Mechanism parse_mechanism(const std::string& s) {
  if (s == "mcar") return Mechanism::MCAR;
  if (s == "censoring") return Mechanism::Censoring;
  throw ContractError(fmt::format("unknown mechanism '{}' (expected mcar or censoring)", s));
}

void GeneratorSpec::check() const {
  if (n < 1) throw ContractError("generator: n must be >= 1");
  if (d < 1 || r < 1) throw ContractError("generator: d and r must be >= 1");
  if (k < 1 || k > d) throw ContractError(fmt::format("generator: need 1 <= k <= d, got k={} d={}", k, d));
  if (!(p > 0.0 && p < 1.0)) throw ContractError(fmt::format("generator: p must be in (0,1), got {}", p));
  if (!(snr > 0.0)) throw ContractError("generator: snr must be > 0");
  if (!(eps > 0.0)) throw ContractError("generator: eps must be > 0");
}

double SignalModel::evaluate_row(
    const Eigen::Ref<const Eigen::RowVectorXd>& x,
    const Eigen::Ref<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>>& m) const {
  const auto n_in = static_cast<Index>(support.size() + mask_support.size());
  Vector in(n_in);
  Index t = 0;
  for (Index j : support) in[t++] = x[j];
  for (Index j : mask_support) in[t++] = m[j];
  if (kind == SignalKind::Linear) return bias + weights.dot(in);
  double out = out_b;
  for (Index h = 0; h < hidden_w.rows(); ++h) {
    out += out_w[h] * std::max(0.0, hidden_w.row(h).dot(in) + hidden_b[h]);
  }
  return (out - center) / scale;
}

Vector SignalModel::evaluate(const Matrix& x, const Mask& m) const {
  Vector f(x.rows());
  for (Index i = 0; i < x.rows(); ++i) f[i] = evaluate_row(x.row(i), m.row(i));
  return f;
}

Matrix design_covariance(const GeneratorSpec& spec) {
  Rng rng(derive_seed(spec.seed, kLoadings));
  std::normal_distribution<double> normal;
  Matrix b(spec.d, spec.r);
  for (Index i = 0; i < spec.d; ++i) {
    for (Index j = 0; j < spec.r; ++j) b(i, j) = normal(rng);
  }
  Matrix sigma = b * b.transpose();
  sigma.diagonal().array() += spec.eps;
  return sigma;
}

Matrix gen_design(const GeneratorSpec& spec) {
  spec.check();
  const Matrix sigma = design_covariance(spec);
  const Matrix l = Eigen::LLT<Matrix>(sigma).matrixL();
  Rng rng(derive_seed(spec.seed, kSamples));
  std::normal_distribution<double> normal;
  Matrix z(spec.n, spec.d);
  for (Index i = 0; i < spec.n; ++i) {
    for (Index j = 0; j < spec.d; ++j) z(i, j) = normal(rng);
  }
  return z * l.transpose();
}

SignalModel draw_signal(SignalKind kind, const std::vector<Index>& support,
                        const std::vector<Index>& mask_support, const Matrix& x,
                        const Mask& m, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  SignalModel model;
  model.kind = kind;
  model.support = support;
  model.mask_support = mask_support;
  const auto kx = static_cast<Index>(support.size());
  const auto km = static_cast<Index>(mask_support.size());
  if (kind == SignalKind::Linear) {
    model.bias = normal(rng);
    model.weights.resize(kx + km);
    for (Index j = 0; j < kx + km; ++j) model.weights[j] = unif(rng);
    return model;
  }
  model.hidden_w.resize(kHiddenUnits, kx + km);
  model.hidden_b.resize(kHiddenUnits);
  model.out_w.resize(kHiddenUnits);
  for (Index h = 0; h < kHiddenUnits; ++h) {
    for (Index j = 0; j < kx; ++j) model.hidden_w(h, j) = normal(rng);
  }
  for (Index h = 0; h < kHiddenUnits; ++h) model.hidden_b[h] = normal(rng);
  for (Index h = 0; h < kHiddenUnits; ++h) model.out_w[h] = normal(rng);
  model.out_b = normal(rng);
  for (Index h = 0; h < kHiddenUnits; ++h) {
    for (Index j = kx; j < kx + km; ++j) model.hidden_w(h, j) = normal(rng);
  }
  const Vector raw = model.evaluate(x, m);
  const double var = variance(raw);
  if (!(var > 1e-12 * std::max(1.0, raw.mean() * raw.mean()))) {
    throw DataError("signal: neural-net output has zero variance on this design");
  }
  model.center = raw.mean();
  model.scale = std::sqrt(var);
  return model;
}

SignalDraw add_noise(const SignalModel& model, const Matrix& x, const Mask& m, double snr,
                     std::uint64_t seed) {
  if (!(snr > 0.0)) throw ContractError("signal: snr must be > 0");
  SignalDraw out;
  out.model = model;
  out.f = model.evaluate(x, m);
  const double var = variance(out.f);
  if (!(var > 1e-12 * std::max(1.0, out.f.mean() * out.f.mean()))) {
    throw DataError("signal: f has zero empirical variance, cannot calibrate noise");
  }
  out.noise_sd = std::sqrt(var / snr);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, out.noise_sd);
  out.y.resize(out.f.size());
  for (Index i = 0; i < out.f.size(); ++i) out.y[i] = out.f[i] + normal(rng);
  return out;
}

SignalDraw gen_signal(const Matrix& x, const GeneratorSpec& spec) {
  spec.check();
  if (x.cols() != spec.d) throw ContractError("signal: design width does not match spec.d");
  Rng rng(derive_seed(spec.seed, kSupport));
  const auto support = choose(spec.d, spec.k, rng);
  const Mask none = Mask::Zero(x.rows(), x.cols());
  const auto model = draw_signal(spec.signal, support, {}, x, none, derive_seed(spec.seed, kSignal));
  return add_noise(model, x, none, spec.snr, derive_seed(spec.seed, kNoise));
}

Mask apply_mcar(Index n, Index d, double p, std::uint64_t seed) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError(fmt::format("mcar: p must be in (0,1), got {}", p));
  Rng rng(seed);
  std::bernoulli_distribution coin(p);
  Mask m(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) m(i, j) = coin(rng) ? 1 : 0;
  }
  return m;
}

Vector censoring_thresholds(const Matrix& x, double p) {
  if (!(p > 0.0 && p < 1.0)) throw ContractError(fmt::format("censoring: p must be in (0,1), got {}", p));
  if (x.rows() == 0) throw ContractError("censoring: empty design");
  const double q = 1.0 - p;
  Vector t(x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    std::vector<double> col(x.col(j).begin(), x.col(j).end());
    std::sort(col.begin(), col.end());
    const double h = static_cast<double>(col.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, col.size() - 1);
    t[j] = col[lo] + (h - static_cast<double>(lo)) * (col[hi] - col[lo]);
  }
  return t;
}

Mask apply_censoring(const Matrix& x, const Vector& thresholds) {
  if (thresholds.size() != x.cols()) throw ContractError("censoring: threshold count mismatch");
  Mask m(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j) m(i, j) = x(i, j) > thresholds[j] ? 1 : 0;
  }
  return m;
}

Mask apply_censoring(const Matrix& x, double p) {
  return apply_censoring(x, censoring_thresholds(x, p));
}

GeneratedData generate(const GeneratorSpec& spec) {
  spec.check();
  GeneratedData out;
  out.x_full = gen_design(spec);
  auto signal = gen_signal(out.x_full, spec);
  out.f = std::move(signal.f);
  out.model = std::move(signal.model);
  Mask m;
  if (spec.mechanism == Mechanism::MCAR) {
    m = apply_mcar(spec.n, spec.d, spec.p, derive_seed(spec.seed, kMask));
  } else {
    out.thresholds = censoring_thresholds(out.x_full, spec.p);
    m = apply_censoring(out.x_full, out.thresholds);
  }
  out.data = make_dataset(out.x_full, m, std::move(signal.y), default_names(spec.d));
  hide_missing(out.data);
  return out;
}

std::pair<std::vector<Index>, std::vector<Index>> train_test_rows(Index n, double test_fraction,
                                                                  std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ContractError(fmt::format("split: test fraction must be in (0,1), got {}", test_fraction));
  }
  const auto n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test < 1 || n_test >= n) throw ContractError(fmt::format("split: cannot split {} rows", n));
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> test(order.begin(), order.begin() + n_test);
  std::vector<Index> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

SplitInstance generate_split(const GeneratorSpec& spec, double test_fraction,
                             std::uint64_t split_seed) {
  GeneratorSpec full = spec;
  full.mechanism = Mechanism::MCAR;  // mask redone below per split
  GeneratedData all = generate(full);
  const auto [train_rows, test_rows] = train_test_rows(spec.n, test_fraction, split_seed);
  SplitInstance out{restrict_rows(all, train_rows), restrict_rows(all, test_rows)};
  if (spec.mechanism == Mechanism::MCAR) {
    for (auto [part, rows] : {std::pair{&out.train, &train_rows}, std::pair{&out.test, &test_rows}}) {
      for (std::size_t r = 0; r < rows->size(); ++r) {
        part->data.m.row(static_cast<Index>(r)) = all.data.m.row((*rows)[r]);
      }
    }
  } else {
    const Vector t = censoring_thresholds(out.train.x_full, spec.p);
    out.train.thresholds = t;
    out.test.thresholds = t;
    out.train.data.m = apply_censoring(out.train.x_full, t);
    out.test.data.m = apply_censoring(out.test.x_full, t);
  }
  hide_missing(out.train.data);
  hide_missing(out.test.data);
  return out;
}

std::string to_string(SemiSetting s) {
  switch (s) {
    case SemiSetting::MAR: return "mar";
    case SemiSetting::NMAR: return "nmar";
    case SemiSetting::AM: return "am";
  }
  return "unknown";
}

SemiSetting parse_semi_setting(const std::string& s) {
  if (s == "mar") return SemiSetting::MAR;
  if (s == "nmar") return SemiSetting::NMAR;
  if (s == "am") return SemiSetting::AM;
  throw ContractError(fmt::format("unknown setting '{}' (expected mar, nmar or am)", s));
}

SemiSynthetic gen_semisynthetic(const Matrix& x_full, const Mask& m, const SemiSyntheticSpec& spec) {
  if (x_full.rows() != m.rows() || x_full.cols() != m.cols()) {
    throw ContractError("semisynthetic: x_full and mask shapes differ");
  }
  if (!x_full.allFinite()) throw ContractError("semisynthetic: x_full must be fully numeric");
  const Index d = x_full.cols();
  const Index k = spec.k < 0 ? std::min<Index>(10, d) : spec.k;
  if (k < 1 || k > d) throw ContractError(fmt::format("semisynthetic: need 1 <= k <= d, got k={}", k));
  if (spec.k_missing < 0 || spec.k_missing > k) {
    throw ContractError(fmt::format("semisynthetic: k_missing must be in [0, {}]", k));
  }
  std::vector<Index> affected;
  std::vector<Index> clean;
  for (Index j = 0; j < d; ++j) {
    (m.col(j).cast<int>().sum() > 0 ? affected : clean).push_back(j);
  }
  if (spec.k_missing > static_cast<Index>(affected.size())) {
    throw ContractError(fmt::format("semisynthetic: k_missing={} but only {} columns have missing values",
                                    spec.k_missing, affected.size()));
  }
  if (k - spec.k_missing > static_cast<Index>(clean.size())) {
    throw ContractError(fmt::format("semisynthetic: need {} never-missing columns, only {} available",
                                    k - spec.k_missing, clean.size()));
  }
  Rng rng(derive_seed(spec.seed, kSupport));
  const auto missing_part = choose_from(affected, spec.k_missing, rng);
  const auto clean_part = choose_from(clean, k - spec.k_missing, rng);
  std::vector<Index> support = missing_part;
  support.insert(support.end(), clean_part.begin(), clean_part.end());
  std::sort(support.begin(), support.end());
  const std::vector<Index> mask_support =
      spec.setting == SemiSetting::NMAR ? missing_part : std::vector<Index>{};

  const auto model = draw_signal(spec.signal, support, mask_support, x_full, m,
                                 derive_seed(spec.seed, kSignal));
  auto draw = add_noise(model, x_full, m, spec.snr, derive_seed(spec.seed, kNoise));
  SemiSynthetic out;
  out.y = std::move(draw.y);
  out.model = std::move(draw.model);
  out.m = m;
  if (spec.setting == SemiSetting::AM) {
    out.permutation = adversarial_permute(x_full, m).sigma;
    for (Index i = 0; i < m.rows(); ++i) out.m.row(i) = m.row(out.permutation[i]);
  }
  return out;
}

nlohmann::json to_json(const GeneratorSpec& spec) {
  return {{"n", spec.n},           {"d", spec.d},
          {"r", spec.r},           {"eps", spec.eps},
          {"signal", to_string(spec.signal)},
          {"k", spec.k},           {"snr", spec.snr},
          {"mechanism", to_string(spec.mechanism)},
          {"p", spec.p},           {"seed", spec.seed}};
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
  GeneratorSpec s;
  s.n = j.value("n", s.n);
  s.d = j.value("d", s.d);
  s.r = j.value("r", s.r);
  s.eps = j.value("eps", s.eps);
  s.signal = parse_signal(j.value("signal", to_string(s.signal)));
  s.k = j.value("k", s.k);
  s.snr = j.value("snr", s.snr);
  s.mechanism = parse_mechanism(j.value("mechanism", to_string(s.mechanism)));
  s.p = j.value("p", s.p);
  s.seed = j.value("seed", s.seed);
  return s;
}

nlohmann::json to_json(const SignalModel& model) {
  nlohmann::json j = {{"kind", to_string(model.kind)},
                      {"support", model.support},
                      {"mask_support", model.mask_support}};
  if (model.kind == SignalKind::Linear) {
    j["bias"] = model.bias;
    j["weights"] = std::vector<double>(model.weights.begin(), model.weights.end());
    return j;
  }
  std::vector<std::vector<double>> hidden;
  for (Index h = 0; h < model.hidden_w.rows(); ++h) {
    hidden.emplace_back(model.hidden_w.row(h).begin(), model.hidden_w.row(h).end());
  }
  j["hidden_weights"] = hidden;
  j["hidden_bias"] = std::vector<double>(model.hidden_b.begin(), model.hidden_b.end());
  j["output_weights"] = std::vector<double>(model.out_w.begin(), model.out_w.end());
  j["output_bias"] = model.out_b;
  j["center"] = model.center;
  j["scale"] = model.scale;
  return j;
}

}  // namespace missfit
