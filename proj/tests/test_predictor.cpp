#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "maskfeat/error.hpp"
#include "maskfeat/predictor.hpp"
#include "maskfeat/synthetic.hpp"
#include "support/finite_diff.hpp"
#include "support/generators.hpp"

using namespace maskfeat;
using testsupport::Engine;
using testsupport::max_fd_error;
using testsupport::random_model;
using testsupport::random_sample;

namespace {

std::vector<DatasetItem<double>> bars_dataset(int count, std::uint64_t seed = 7) {
  OrientedBarsConfig cfg;
  cfg.count = count;
  cfg.seed = seed;
  std::vector<DatasetItem<double>> out;
  std::uint64_t i = 0;
  for (auto& bar : oriented_bars(cfg)) out.push_back({VideoClipd::single(std::move(bar.image)), i++});
  return out;
}

TargetSpec<double> toy_spec(const std::vector<DatasetItem<double>>& data) {
  TargetSpec<double> t;
  t.hog.cell_size = 4;
  std::vector<Imaged> imgs;
  for (const auto& d : data) imgs.push_back(d.clip.frame(0));
  t.stats = compute_dataset_stats(imgs);
  return t;
}

MaskConfig toy_mask() {
  MaskConfig m;
  m.strategy = MaskStrategy::Block2D;
  m.min_block_tokens = 1;
  return m;
}

}  // namespace

TEST(LinearPredictor, InitShapesAndRange) {
  Rng rng(3);
  const auto m = LinearPredictor<double>::init(10, 4, 0.02, rng);
  EXPECT_EQ(m.W.rows(), 4);
  EXPECT_EQ(m.W.cols(), 20);
  EXPECT_EQ(m.token_dim(), 10);
  EXPECT_EQ(m.target_dim(), 4);
  EXPECT_LE(m.W.cwiseAbs().maxCoeff(), 0.02);
  EXPECT_LE(m.mask_embedding.cwiseAbs().maxCoeff(), 0.02);
  EXPECT_NO_THROW(m.validate());
  auto bad = m;
  bad.b[0] = std::nan("");
  EXPECT_THROW(bad.validate(), InvalidInput);
}

TEST(Forward, ZeroModelGivesMeanSquaredTarget) {
  Engine e(81);
  const auto s = random_sample(e, 5, 3);
  LinearPredictor<double> m;
  m.W = RowMatrix<double>::Zero(3, 10);
  m.b = Eigen::VectorXd::Zero(3);
  m.mask_embedding = Eigen::VectorXd::Zero(5);
  double expected = 0.0;
  for (Eigen::Index i = 0; i < s.targets[0].values.rows(); ++i) expected += s.targets[0].values.row(i).squaredNorm() / 3.0;
  EXPECT_NEAR(forward(m, s).loss, expected / double(s.targets[0].values.rows()), 1e-15);
}

TEST(Forward, MeanBiasGivesPerDimensionVariance) {
  Engine e(82);
  const auto s = random_sample(e, 5, 4);
  const auto& t = s.targets[0].values;
  const Eigen::Index m = t.rows();
  LinearPredictor<double> model;
  model.W = RowMatrix<double>::Zero(4, 10);
  model.mask_embedding = Eigen::VectorXd::Zero(5);
  model.b = Eigen::VectorXd::Zero(4);
  for (Eigen::Index i = 0; i < m; ++i) model.b += t.row(i).transpose() / double(m);
  // Oracle: mean over dims of the population variance of each target dim.
  double var = 0.0;
  for (int d = 0; d < 4; ++d) {
    double mu = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) mu += t(i, d) / double(m);
    for (Eigen::Index i = 0; i < m; ++i) var += (t(i, d) - mu) * (t(i, d) - mu) / double(m);
  }
  EXPECT_NEAR(forward(model, s).loss, var / 4.0, 1e-14);
}

TEST(Forward, PredictionUsesEmbeddingAndVisibleContext) {
  Engine e(83);
  const auto s = random_sample(e, 4, 2);
  const auto model = random_model(e, 4, 2);
  Eigen::VectorXd context = Eigen::VectorXd::Zero(4);
  int visible = 0;
  for (int i = 0; i < 9; ++i) {
    if (!s.mask.bits()[i]) {
      context += s.tokens.tokens.row(i).transpose();
      ++visible;
    }
  }
  if (visible) context /= visible;
  const Eigen::VectorXd expected =
      model.W.leftCols(4) * model.mask_embedding + model.W.rightCols(4) * context + model.b;
  const auto out = forward(model, s);
  for (Eigen::Index i = 0; i < out.preds.rows(); ++i) {
    EXPECT_LE((out.preds.row(i).transpose() - expected).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Forward, Errors) {
  Engine e(84);
  auto s = random_sample(e, 4, 2);
  const auto model = random_model(e, 4, 2);
  EXPECT_THROW(forward(random_model(e, 5, 2), s), InvalidInput);
  EXPECT_THROW(forward(random_model(e, 4, 3), s), InvalidInput);
  EXPECT_THROW(forward(model, s, 1), InvalidInput);
  s.mask.bits().setConstant(false);
  s.masked_indices.clear();
  s.targets[0].values.resize(0, 2);
  EXPECT_THROW(forward(model, s), InvalidInput);
}

TEST(Backward, ZeroAtExactFit) {
  Engine e(85);
  auto s = random_sample(e, 6, 3);
  const auto model = random_model(e, 6, 3);
  s.targets[0].values = forward(model, s).preds;
  const auto g = backward(model, s);
  EXPECT_EQ(g.dW.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.db.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.d_mask_embedding.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, BiasGradientIsMeanScaledResidual) {
  Engine e(86);
  const auto s = random_sample(e, 6, 5);
  const auto model = random_model(e, 6, 5);
  const auto out = forward(model, s);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(5);
  const Eigen::Index m = out.preds.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    expected += 2.0 * (out.preds.row(i) - s.targets[0].values.row(i)).transpose() / 5.0 / double(m);
  }
  EXPECT_LE((backward(model, s).db - expected).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Backward, MatchesFiniteDifferencesProperty) {
  Engine e(87);
  for (int trial = 0; trial < 20; ++trial) {
    const int token_dim = testsupport::uniform_int(e, 1, 64), target_dim = testsupport::uniform_int(e, 1, 32);
    const auto s = random_sample(e, token_dim, target_dim);
    auto model = random_model(e, token_dim, target_dim);
    const auto g = backward(model, s);
    ASSERT_LT(max_fd_error(model, model.W, g.dW, s), 1e-4) << "trial " << trial;
    ASSERT_LT(max_fd_error(model, model.b, g.db, s), 1e-4) << "trial " << trial;
    ASSERT_LT(max_fd_error(model, model.mask_embedding, g.d_mask_embedding, s), 1e-4) << "trial " << trial;
  }
}

TEST(MeanBaseline, SingleTokenIsExact) {
  Engine e(88);
  std::vector<DatasetItem<double>> data{{VideoClipd::single(testsupport::random_image(e, 16, 16, 3)), 0}};
  TargetSpec<double> tspec;
  tspec.stats = compute_dataset_stats(std::vector<Imaged>{data[0].clip.frame(0)});
  const auto base = mean_baseline(data, PatchSpec{16, 1}, tspec);
  EXPECT_EQ(base.mean_target, hog_dense(data[0].clip.frame(0), HogConfig{}).data());
  EXPECT_EQ(base.loss, 0.0);
}

TEST(MeanBaseline, SymmetricPair) {
  TargetSpec<double> tspec;
  tspec.components = {{TargetKind::Pixel, 1.0}};
  tspec.stats.mean = Eigen::Vector3d::Zero();
  tspec.stats.std = Eigen::Vector3d::Ones();
  std::vector<DatasetItem<double>> data{{VideoClipd::single(Imaged::constant(4, 4, 3, 0.0)), 0},
                                        {VideoClipd::single(Imaged::constant(4, 4, 3, 2.0)), 1}};
  const auto base = mean_baseline(data, PatchSpec{4, 1}, tspec);
  EXPECT_TRUE(base.mean_target.isApprox(Eigen::VectorXd::Ones(48)));
  EXPECT_DOUBLE_EQ(base.loss, 1.0);
}

TEST(MeanBaseline, MatchesBruteForceOnOrientedBars) {
  const auto data = bars_dataset(24);
  const auto tspec = toy_spec(data);
  const PatchSpec pspec{8, 1};
  const auto base = mean_baseline(data, pspec, tspec);

  // Oracle: every patch vector read straight out of each image's HOG map.
  std::vector<std::vector<double>> vectors;
  for (const auto& d : data) {
    const auto map = hog_dense(d.clip.frame(0), tspec.hog);
    for (int py = 0; py < 4; ++py)
      for (int px = 0; px < 4; ++px) {
        std::vector<double> v;
        for (int c = 0; c < 3; ++c)
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx)
              for (int b = 0; b < 9; ++b) v.push_back(map(c, py * 2 + dy, px * 2 + dx, b));
        vectors.push_back(v);
      }
  }
  const std::size_t dim = vectors.front().size();
  std::vector<double> mean(dim, 0.0);
  for (const auto& v : vectors)
    for (std::size_t k = 0; k < dim; ++k) mean[k] += v[k] / double(vectors.size());
  double loss = 0.0;
  for (const auto& v : vectors)
    for (std::size_t k = 0; k < dim; ++k) loss += (v[k] - mean[k]) * (v[k] - mean[k]);
  loss /= double(vectors.size() * dim);

  ASSERT_EQ(std::size_t(base.mean_target.size()), dim);
  for (std::size_t k = 0; k < dim; ++k) EXPECT_NEAR(base.mean_target[Eigen::Index(k)], mean[k], 1e-12);
  EXPECT_NEAR(base.loss, loss, 1e-12);
}

TEST(MeanBaseline, Errors) {
  EXPECT_THROW(mean_baseline(std::vector<DatasetItem<double>>{}, PatchSpec{8, 1}, TargetSpec<double>{}), InvalidInput);
}

TEST(Train, ZeroLearningRateKeepsLossConstant) {
  const auto data = bars_dataset(16);
  TrainConfig tcfg;
  tcfg.learning_rate = 0.0;
  tcfg.epochs = 4;
  const auto r = train(data, PatchSpec{8, 1}, toy_spec(data), toy_mask(), tcfg);
  ASSERT_EQ(r.loss_curve.size(), 4u);
  for (double v : r.loss_curve) EXPECT_EQ(v, r.loss_curve.front());
}

TEST(Train, DeterministicUnderFixedSeeds) {
  const auto data = bars_dataset(16);
  TrainConfig tcfg;
  tcfg.epochs = 5;
  tcfg.learning_rate = 0.5;
  const auto a = train(data, PatchSpec{8, 1}, toy_spec(data), toy_mask(), tcfg);
  const auto b = train(data, PatchSpec{8, 1}, toy_spec(data), toy_mask(), tcfg);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_EQ(a.model.W, b.model.W);
}

TEST(Train, LossDecreasesAndFreezeKeepsEmbedding) {
  const auto data = bars_dataset(64);
  TrainConfig tcfg;
  tcfg.epochs = 30;
  tcfg.learning_rate = 0.5;
  const auto spec = toy_spec(data);
  const auto full = train(data, PatchSpec{8, 1}, spec, toy_mask(), tcfg);
  EXPECT_LT(full.loss_curve.back(), full.loss_curve.front());

  tcfg.freeze_mask_embedding = true;
  const auto frozen = train(data, PatchSpec{8, 1}, spec, toy_mask(), tcfg);
  EXPECT_LT(frozen.loss_curve.back(), frozen.loss_curve.front());

  Rng init(tcfg.seed);
  const auto initial = LinearPredictor<double>::init(full.model.token_dim(), full.model.target_dim(), tcfg.init_scale, init);
  EXPECT_EQ(frozen.model.mask_embedding, initial.mask_embedding);
  EXPECT_NE(full.model.mask_embedding, initial.mask_embedding);
}

TEST(Train, Errors) {
  const auto data = bars_dataset(4);
  auto spec = toy_spec(data);
  TrainConfig tcfg;
  EXPECT_THROW(train(std::vector<DatasetItem<double>>{}, PatchSpec{8, 1}, spec, toy_mask(), tcfg), InvalidInput);
  tcfg.epochs = 0;
  EXPECT_THROW(train(data, PatchSpec{8, 1}, spec, toy_mask(), tcfg), InvalidInput);
  tcfg = TrainConfig{};
  spec.components = {{TargetKind::Pixel, 1.0}, {TargetKind::Hog, 1.0}};
  EXPECT_THROW(train(data, PatchSpec{8, 1}, spec, toy_mask(), tcfg), InvalidInput);
}

TEST(OrientedBars, DeterministicAndBalanced) {
  OrientedBarsConfig cfg;
  const auto a = oriented_bars(cfg), b = oriented_bars(cfg);
  ASSERT_EQ(a.size(), 256u);
  int counts[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].image.data(), b[i].image.data());
    ++counts[a[i].orientation];
  }
  for (int c : counts) EXPECT_GT(c, 40);
}
