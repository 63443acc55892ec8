// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pfr/data/synthetic.hpp"
#include "pfr/data/tasks.hpp"
#include "pfr/eval/csv.hpp"
#include "pfr/eval/matrix.hpp"
#include "pfr/eval/metrics.hpp"
#include "pfr/eval/probe.hpp"
#include "pfr/nets/bundle.hpp"

namespace {

using namespace pfr::eval;

AccuracyMatrix random_matrix(std::size_t n, std::uint64_t seed) {
  pfr::Rng rng(seed);
  auto a = AccuracyMatrix::empty(n, n);
  for (auto& row : a.cells)
    for (auto& v : row) v = rng.uniform();
  for (auto& v : a.agnostic) v = rng.uniform();
  return a;
}

/// Forgetting by scanning every earlier session explicitly.
double forgetting_oracle(const AccuracyMatrix& a, std::size_t k) {
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < k; ++l)
      if (!std::isnan(a.cells[l][j]) && a.cells[l][j] > best) best = a.cells[l][j];
    total += best - a.cells[k][j];
  }
  return total / static_cast<double>(k);
}

std::vector<double> random_rows(std::size_t n, std::size_t p, std::uint64_t seed) {
  pfr::Rng rng(seed);
  std::vector<double> v(n * p);
  for (auto& x : v) x = rng.normal();
  return v;
}

/// CKA through centered Gram matrices: HSIC(K, L) / sqrt(HSIC(K, K) HSIC(L, L)).
double cka_hsic_oracle(const std::vector<double>& x, std::size_t p, const std::vector<double>& y, std::size_t q) {
  const std::size_t n = x.size() / p;
  const auto gram = [n](const std::vector<double>& m, std::size_t d) {
    std::vector<double> k(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < d; ++c) k[i * n + j] += m[i * d + c] * m[j * d + c];
    return k;
  };
  const auto center = [n](std::vector<double> k) {
    std::vector<double> h(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) h[i * n + j] = (i == j ? 1.0 : 0.0) - 1.0 / static_cast<double>(n);
    std::vector<double> tmp(n * n, 0.0), out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < n; ++l) tmp[i * n + j] += h[i * n + l] * k[l * n + j];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < n; ++l) out[i * n + j] += tmp[i * n + l] * h[l * n + j];
    return out;
  };
  const auto hsic = [n](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n * n; ++i) s += a[i] * b[i];
    return s / static_cast<double>((n - 1) * (n - 1));
  };
  const auto kx = center(gram(x, p)), ky = center(gram(y, q));
  return hsic(kx, ky) / std::sqrt(hsic(kx, kx) * hsic(ky, ky));
}

/// Random orthogonal matrix by Gram-Schmidt on Gaussian columns.
std::vector<double> random_orthogonal(std::size_t d, std::uint64_t seed) {
  auto m = random_rows(d, d, seed);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (std::size_t r = 0; r < d; ++r) dot += m[r * d + c] * m[r * d + prev];
      for (std::size_t r = 0; r < d; ++r) m[r * d + c] -= dot * m[r * d + prev];
    }
    double n = 0.0;
    for (std::size_t r = 0; r < d; ++r) n += m[r * d + c] * m[r * d + c];
    n = std::sqrt(n);
    for (std::size_t r = 0; r < d; ++r) m[r * d + c] /= n;
  }
  return m;
}

std::vector<double> matmul(const std::vector<double>& a, std::size_t n, std::size_t p, const std::vector<double>& b,
                           std::size_t q) {
  std::vector<double> out(n * q, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k)
      for (std::size_t j = 0; j < q; ++j) out[i * q + j] += a[i * p + k] * b[k * q + j];
  return out;
}

TEST(Forgetting, ConstantMatrixIsZero) {
  auto a = AccuracyMatrix::empty(4, 4);
  for (auto& row : a.cells) std::fill(row.begin(), row.end(), 0.6);
  for (std::size_t k = 1; k < 4; ++k) EXPECT_EQ(forgetting(a, k), 0.0);
}

TEST(Forgetting, TwoTaskHandCase) {
  auto a = AccuracyMatrix::empty(2, 2);
  a.cells = {{0.8, kMissing}, {0.6, 0.9}};
  EXPECT_NEAR(forgetting(a, 1), 0.2, 1e-15);
}

TEST(Forgetting, RandomMatricesMatchMaxScan) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_matrix(4, seed);
    for (std::size_t k = 1; k < 4; ++k) EXPECT_NEAR(forgetting(a, k), forgetting_oracle(a, k), 1e-9);
  }
}

TEST(Forgetting, FirstMinusLastRule) {
  auto a = AccuracyMatrix::empty(3, 3);
  a.cells = {{0.5, 0.0, 0.0}, {0.9, 0.7, 0.0}, {0.4, 0.6, 0.8}};
  EXPECT_NEAR(forgetting(a, 2, ForgettingRule::first_minus_last), (0.1 + 0.1) / 2.0, 1e-15);
  EXPECT_NEAR(forgetting(a, 2), (0.5 + 0.1) / 2.0, 1e-15);
}

TEST(Forgetting, DefinedOnlyFromSecondSession) {
  const auto a = random_matrix(3, 1);
  EXPECT_THROW(forgetting(a, 0), pfr::ContractError);
  EXPECT_THROW(forgetting(a, 3), pfr::ContractError);
  auto holes = AccuracyMatrix::empty(2, 2);
  holes.cells[1][0] = 0.5;
  EXPECT_THROW(forgetting(holes, 1), pfr::ContractError);
}

TEST(Intransigence, HandCases) {
  auto a = AccuracyMatrix::empty(2, 2);
  a.cells = {{0.7, kMissing}, {0.5, 0.6}};
  EXPECT_EQ(intransigence(a, 0, 0.7), 0.0);
  EXPECT_NEAR(intransigence(a, 1, 0.7), 0.1, 1e-15);
}

TEST(Intransigence, MissingReferenceNamesCj) {
  const auto a = random_matrix(2, 2);
  try {
    intransigence(a, 1, std::nullopt);
    FAIL() << "expected ContractError";
  } catch (const pfr::ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("CJ"), std::string::npos);
  }
}

TEST(Intransigence, RandomMatricesMatchDirectDifference) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_matrix(4, seed), ref = random_matrix(4, seed + 100);
    const auto m = cl_metrics(a, &ref);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(m.intransigence[k], ref.cells[k][k] - a.cells[k][k], 1e-12);
      EXPECT_EQ(m.referential[k], ref.cells[k][k]);
      if (k > 0) {
        EXPECT_NEAR(m.forgetting[k], forgetting_oracle(a, k), 1e-12);
      }
    }
    EXPECT_TRUE(std::isnan(m.forgetting[0]));
    EXPECT_TRUE(std::isnan(cl_metrics(a).intransigence[1]));
  }
}

TEST(Cka, SelfSimilarityIsOne) {
  const auto x = random_rows(10, 4, 1);
  EXPECT_NEAR(cka_linear(x, 4, x, 4), 1.0, 1e-12);
}

TEST(Cka, HandCaseMatchesHsic) {
  const std::vector<double> x{1, 2, 3, 0, -1, 1};
  const std::vector<double> y{0.5, 1, -1, 2, 3, 0};
  EXPECT_NEAR(cka_linear(x, 2, y, 2), cka_hsic_oracle(x, 2, y, 2), 1e-12);
}

TEST(Cka, RandomCasesMatchHsic) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_rows(7, 3, seed), y = random_rows(7, 5, seed + 50);
    const double c = cka_linear(x, 3, y, 5);
    EXPECT_NEAR(c, cka_hsic_oracle(x, 3, y, 5), 1e-9);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0 + 1e-12);
  }
}

TEST(Cka, OrthogonalAndIsotropicInvariance) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t n = 12, p = 4, q = 6;
    const auto x = random_rows(n, p, seed), y = random_rows(n, q, seed + 10);
    const double base = cka_linear(x, p, y, q);
    const auto xq = matmul(x, n, p, random_orthogonal(p, seed + 20), p);
    const auto yq = matmul(y, n, q, random_orthogonal(q, seed + 30), q);
    EXPECT_NEAR(cka_linear(xq, p, y, q), base, 1e-10);
    EXPECT_NEAR(cka_linear(x, p, yq, q), base, 1e-10);
    auto xs = x;
    for (auto& v : xs) v *= 37.5;
    auto ys = y;
    for (auto& v : ys) v *= 1e-3;
    EXPECT_NEAR(cka_linear(xs, p, ys, q), base, 1e-10);
    EXPECT_NEAR(cka_linear(xq, p, xq, p), 1.0, 1e-10);
  }
}

TEST(Cka, ErrorsOnBadInput) {
  const std::vector<double> x(6, 1.0);
  EXPECT_THROW(cka_linear(x, 2, random_rows(3, 2, 1), 2), pfr::NumericError);
  EXPECT_THROW(cka_linear(random_rows(3, 2, 1), 2, random_rows(4, 2, 1), 2), pfr::DimensionError);
}

TEST(Spearman, KnownValues) {
  const std::vector<double> a{1, 2, 3, 4}, b{10, 20, 30, 40}, c{4, 3, 2, 1};
  EXPECT_NEAR(spearman(a, b), 1.0, 1e-15);
  EXPECT_NEAR(spearman(a, c), -1.0, 1e-15);
  const std::vector<double> ties{1, 1, 2, 3}, other{1, 2, 3, 4};
  // Ranks (1.5, 1.5, 3, 4) against (1, 2, 3, 4).
  EXPECT_NEAR(spearman(ties, other), 0.9486832980505138, 1e-12);
  const std::vector<double> nonlinear{1, 8, 27, 64};
  EXPECT_NEAR(spearman(a, nonlinear), 1.0, 1e-15);
  EXPECT_EQ(spearman(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), 0.0);
}

FeatureSet gaussian_features(std::size_t per_class, std::vector<std::vector<double>> means, double sigma,
                             std::uint64_t seed) {
  pfr::Rng rng(seed);
  FeatureSet fs;
  fs.dim = means.front().size();
  for (std::size_t c = 0; c < means.size(); ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      for (double m : means[c]) fs.values.push_back(m + sigma * rng.normal());
      fs.labels.push_back(static_cast<int>(c));
    }
  return fs;
}

TEST(Probe, SeparableFeaturesReachFullAccuracy) {
  const std::vector<std::vector<double>> means{{2, 0}, {-2, 0}};
  const auto train = gaussian_features(50, means, 0.1, 1), val = gaussian_features(10, means, 0.1, 2);
  const auto test = gaussian_features(50, means, 0.1, 3);
  const auto probe = train_linear_probe(train, val, ProbeConfig{});
  EXPECT_EQ(probe.accuracy(test), 1.0);
}

TEST(Probe, ZeroFeaturesPredictMajorityClass) {
  FeatureSet train{3, std::vector<double>(100 * 3, 0.0), {}};
  for (int i = 0; i < 100; ++i) train.labels.push_back(i < 70 ? 1 : 0);
  FeatureSet test{3, std::vector<double>(20 * 3, 0.0), {}};
  for (int i = 0; i < 20; ++i) test.labels.push_back(i < 13 ? 1 : 0);
  const auto probe = train_linear_probe(train, {}, ProbeConfig{});
  EXPECT_DOUBLE_EQ(probe.accuracy(test), 13.0 / 20.0);
}

TEST(Probe, RawInputsMatchNearestMeanBaseline) {
  pfr::data::SyntheticSpec spec;
  spec.n_classes = 8;
  spec.dim = 16;
  spec.per_class = 200;
  spec.sigma = 0.3;
  const auto d = pfr::data::gen_synthetic_split(spec, 100);
  const auto all_train = d.train.all_indices(), all_test = d.test.all_indices();
  const auto probe = train_linear_probe(raw_features(d.train, all_train), {}, ProbeConfig{});
  const double probe_acc = probe.accuracy(raw_features(d.test, all_test));
  std::size_t hit = 0;
  for (const auto& s : d.test.samples) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      const auto mu = pfr::data::synthetic_mean(spec, c, 0);
      double dist = 0.0;
      for (std::size_t j = 0; j < spec.dim; ++j) dist += (s.input[j] - mu[j]) * (s.input[j] - mu[j]);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    hit += best == static_cast<std::size_t>(s.label);
  }
  const double nearest_mean = static_cast<double>(hit) / static_cast<double>(d.test.size());
  EXPECT_NEAR(probe_acc, nearest_mean, 0.02);
}

TEST(Probe, AccuracyOnSubsetAndErrors) {
  const std::vector<std::vector<double>> means{{3, 0}, {-3, 0}, {0, 3}};
  const auto train = gaussian_features(30, means, 0.1, 4);
  const auto probe = train_linear_probe(train, train, ProbeConfig{});
  const std::vector<int> subset{2};
  EXPECT_EQ(probe.accuracy_on(train, subset), 1.0);
  const std::vector<int> absent{7};
  EXPECT_THROW(probe.accuracy_on(train, absent), pfr::ContractError);
  FeatureSet one{2, {0, 0, 1, 1}, {0, 0}};
  EXPECT_THROW(train_linear_probe(one, {}, ProbeConfig{}), pfr::ConfigError);
  FeatureSet bad_val{2, {0, 0}, {5}};
  EXPECT_THROW(train_linear_probe(train, bad_val, ProbeConfig{}), pfr::ConfigError);
}

struct SmallStream {
  pfr::data::LabeledData data;
  pfr::data::TaskStream stream;
  pfr::nets::ModelBundle<double> model;
};

SmallStream small_stream(std::size_t n_classes, std::size_t n_tasks, bool encoder_bn = false) {
  pfr::data::SyntheticSpec spec;
  spec.n_classes = n_classes;
  spec.dim = 6;
  spec.per_class = 40;
  spec.sigma = 0.3;
  SmallStream s;
  s.data = pfr::data::gen_synthetic_split(spec, 20);
  pfr::data::SplitOptions opt;
  opt.n_tasks = n_tasks;
  opt.seed = 0;
  s.stream = pfr::data::split_tasks(s.data.train, s.data.test, opt);
  pfr::nets::ArchSpec arch;
  arch.input_dim = 6;
  arch.encoder_hidden = {16};
  arch.feature_dim = 8;
  arch.encoder_batchnorm = encoder_bn;
  s.model = pfr::nets::ModelBundle<double>::create(arch, 1, false);
  return s;
}

TEST(Matrix, AwareFirstDiagonalEqualsDirectProbe) {
  auto s = small_stream(4, 2);
  const std::vector<const pfr::nets::Mlp<double>*> encs{&s.model.encoder};
  MatrixOptions opt;
  const auto a = eval_matrix<double>(encs, s.data.train, s.data.test, s.stream, opt);
  const auto& t = s.stream.tasks[0];
  EXPECT_EQ(a.at(0, 0), probe_accuracy(s.model.encoder, s.data.train, t.train, t.val, s.data.test, t.test, opt.probe));
  EXPECT_TRUE(std::isnan(a.cells[0][1]));
  opt.future_data = true;
  const auto full = eval_matrix<double>(encs, s.data.train, s.data.test, s.stream, opt);
  EXPECT_FALSE(std::isnan(full.cells[0][1]));
}

TEST(Matrix, AgnosticCellsComeFromTheAllClassProbe) {
  auto s = small_stream(4, 2);
  const std::vector<const pfr::nets::Mlp<double>*> encs{&s.model.encoder, &s.model.encoder};
  MatrixOptions opt;
  opt.kind = MatrixKind::agnostic;
  const auto a = eval_matrix<double>(encs, s.data.train, s.data.test, s.stream, opt);
  const auto n = s.stream.size();
  const auto probe = train_linear_probe(extract_features(s.model.encoder, s.data.train, s.stream.train_upto(n)),
                                        extract_features(s.model.encoder, s.data.train, s.stream.val_upto(n)),
                                        opt.probe);
  const auto test_fs = extract_features(s.model.encoder, s.data.test, s.stream.test_upto(n));
  EXPECT_EQ(a.agnostic[1], probe.accuracy(test_fs));
  for (std::size_t j = 0; j < n; ++j) EXPECT_EQ(a.at(1, j), probe.accuracy_on(test_fs, s.stream.tasks[j].classes));
  // Equal-sized tasks: the all-class accuracy is the mean of the cells.
  EXPECT_NEAR(a.agnostic[1], 0.5 * (a.at(1, 0) + a.at(1, 1)), 1e-12);
}

TEST(Matrix, AwareModeRejectsSingleClassTasks) {
  auto s = small_stream(4, 4);
  const std::vector<const pfr::nets::Mlp<double>*> encs{&s.model.encoder};
  MatrixOptions opt;
  EXPECT_THROW(eval_matrix<double>(encs, s.data.train, s.data.test, s.stream, opt), pfr::ConfigError);
  opt.kind = MatrixKind::agnostic;
  EXPECT_NO_THROW(eval_matrix<double>(encs, s.data.train, s.data.test, s.stream, opt));
}

TEST(Matrix, ProbingDoesNotMutateTheBackbone) {
  auto s = small_stream(4, 2, true);
  const auto before = s.model.state_dict();
  const std::vector<const pfr::nets::Mlp<double>*> encs{&s.model.encoder};
  eval_matrix<double>(encs, s.data.train, s.data.test, s.stream, MatrixOptions{});
  EXPECT_EQ(s.model.state_dict(), before);
  for (const auto& p : s.model.encoder.parameters()) EXPECT_FALSE(p.has_grad());
}

TEST(Matrix, SingleSessionGivesOneByOneMatrix) {
  auto s = small_stream(4, 1);
  const std::vector<const pfr::nets::Mlp<double>*> encs{&s.model.encoder};
  const auto a = eval_matrix<double>(encs, s.data.train, s.data.test, s.stream, MatrixOptions{});
  EXPECT_EQ(a.sessions(), 1u);
  EXPECT_EQ(a.tasks(), 1u);
}

TEST(Downstream, SourceDatasetReproducesAgnosticProbe) {
  auto s = small_stream(4, 1);
  ProbeConfig probe;
  probe.seed = 0;
  const std::vector<const pfr::nets::Mlp<double>*> encs{&s.model.encoder};
  MatrixOptions opt;
  opt.kind = MatrixKind::agnostic;
  opt.probe = probe;
  const auto a = eval_matrix<double>(encs, s.data.train, s.data.test, s.stream, opt);
  EXPECT_EQ(downstream_eval(s.model.encoder, s.data, probe), a.agnostic[0]);
}

TEST(Downstream, RandomBackboneBeatsMajorityRate) {
  auto s = small_stream(4, 1);
  EXPECT_GE(downstream_eval(s.model.encoder, s.data, ProbeConfig{}), 0.25);
}

TEST(Downstream, DimensionMismatchNeedsResampling) {
  auto s = small_stream(4, 1);
  pfr::data::SyntheticSpec spec;
  spec.n_classes = 3;
  spec.dim = 11;
  spec.per_class = 30;
  const auto foreign = pfr::data::gen_synthetic_split(spec, 10);
  EXPECT_THROW(downstream_eval(s.model.encoder, foreign, ProbeConfig{}), pfr::ConfigError);
  const double acc = downstream_eval(s.model.encoder, foreign, ProbeConfig{}, Resample::linear);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST(Resample, LinearInterpolation) {
  const std::vector<double> x{0, 1, 2, 3};
  EXPECT_EQ(resample_linear(x, 7), (std::vector<double>{0, 0.5, 1, 1.5, 2, 2.5, 3}));
  EXPECT_EQ(resample_linear(x, 2), (std::vector<double>{0, 3}));
  EXPECT_EQ(resample_linear(x, 4), x);
}

TEST(Csv, RoundTripIsExact) {
  std::vector<MetricRow> rows{
      {"run-a", "PFR", 25.0, 3, 2, 1, "acc_agnostic", 0.1 + 0.2},
      {"run-a", "PFR", 25.0, 3, 2, 0, "forgetting", -1e-300},
      {"run-b", "FT", 0.0, 18446744073709551615ull, 0, 0, "raw_baseline", kMissing},
      {"run-b", "FT", 0.0, 0, 4, 0, "acc_all", 1.0 / 3.0},
  };
  const auto text = to_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kCsvHeader);
  const auto back = parse_csv(text);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(back[i].run_id, rows[i].run_id);
    EXPECT_EQ(back[i].seed, rows[i].seed);
    EXPECT_EQ(back[i].session, rows[i].session);
    EXPECT_EQ(back[i].metric, rows[i].metric);
    if (std::isnan(rows[i].value)) {
      EXPECT_TRUE(std::isnan(back[i].value));
    } else {
      EXPECT_EQ(back[i].value, rows[i].value);
    }
  }
  EXPECT_EQ(to_csv(back), text);
}

TEST(Csv, MalformedInputs) {
  EXPECT_THROW(parse_csv("wrong,header\n"), pfr::FormatError);
  EXPECT_THROW(parse_csv(std::string(kCsvHeader) + "\na,b,c\n"), pfr::FormatError);
  EXPECT_THROW(parse_csv(std::string(kCsvHeader) + "\nr,FT,x,0,1,0,acc_all,0.5\n"), pfr::FormatError);
}

}  // namespace
