#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "maskfeat/error.hpp"
#include "maskfeat/losses.hpp"
#include "maskfeat/masking.hpp"
#include "maskfeat/rng.hpp"
#include "maskfeat/targets.hpp"

namespace maskfeat {

/// Linear masked-token predictor. For a masked token i the input feature is
/// [x_i ; c], where x_i is the token after [MASK] replacement (always the
/// learnable mask embedding) and c is the mean of the sample's visible
/// tokens (zero when nothing is visible). pred_i = W [x_i ; c] + b.
template <typename Scalar>
struct LinearPredictor {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  RowMatrix<Scalar> W;     // target_dim x (2 * token_dim): [self | context]
  Vector b;                // target_dim
  Vector mask_embedding;   // token_dim

  Eigen::Index token_dim() const noexcept { return mask_embedding.size(); }
  Eigen::Index target_dim() const noexcept { return b.size(); }

  static LinearPredictor init(Eigen::Index token_dim, Eigen::Index target_dim, double scale, Rng& rng) {
    if (token_dim < 1 || target_dim < 1) throw InvalidInput("predictor dimensions must be >= 1");
    LinearPredictor m;
    auto draw = [&](Scalar) { return Scalar(rng.uniform(-scale, scale)); };
    m.W = RowMatrix<Scalar>::Zero(target_dim, 2 * token_dim).unaryExpr(draw);
    m.b = Vector::Zero(target_dim).unaryExpr(draw);
    m.mask_embedding = Vector::Zero(token_dim).unaryExpr(draw);
    return m;
  }

  void validate() const {
    if (W.rows() != b.size() || W.cols() != 2 * mask_embedding.size()) {
      throw InvalidInput("predictor parameter shapes are inconsistent");
    }
    if (!W.allFinite() || !b.allFinite() || !mask_embedding.allFinite()) {
      throw InvalidInput("predictor parameters must be finite");
    }
  }
};

template <typename Scalar>
struct PredictorGradients {
  RowMatrix<Scalar> dW;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> db;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d_mask_embedding;
};

template <typename Scalar>
struct ForwardResult {
  RowMatrix<Scalar> preds;  // one row per masked token
  Scalar loss;
};

namespace detail {

template <typename Scalar>
const TargetSet<Scalar>& checked_target(const LinearPredictor<Scalar>& model, const TrainingSample<Scalar>& sample,
                                        std::size_t component) {
  model.validate();
  if (component >= sample.targets.size()) throw InvalidInput("sample has no target component " + std::to_string(component));
  const auto& target = sample.targets[component];
  if (sample.tokens.dim() != model.token_dim()) throw InvalidInput("token length does not match predictor");
  if (target.dim() != model.target_dim()) throw InvalidInput("target length does not match predictor");
  if (sample.masked_indices.empty()) throw InvalidInput("sample has no masked tokens");
  return target;
}

/// Input features of the masked tokens, one row each.
template <typename Scalar>
RowMatrix<Scalar> masked_features(const LinearPredictor<Scalar>& model, const TrainingSample<Scalar>& sample) {
  const auto& tokens = sample.tokens.tokens;
  const Eigen::Index d = tokens.cols();
  const RowMatrix<Scalar> replaced = apply_mask_tokens(tokens, sample.mask, model.mask_embedding);

  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> context = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Zero(d);
  Eigen::Index visible = 0;
  for (Eigen::Index i = 0; i < tokens.rows(); ++i) {
    if (!sample.mask.bits()[i]) {
      context += tokens.row(i);
      ++visible;
    }
  }
  if (visible > 0) context /= Scalar(visible);

  RowMatrix<Scalar> features(static_cast<Eigen::Index>(sample.masked_indices.size()), 2 * d);
  for (std::size_t i = 0; i < sample.masked_indices.size(); ++i) {
    features.row(Eigen::Index(i)).head(d) = replaced.row(sample.masked_indices[i]);
    features.row(Eigen::Index(i)).tail(d) = context;
  }
  return features;
}

}  // namespace detail

template <typename Scalar>
ForwardResult<Scalar> forward(const LinearPredictor<Scalar>& model, const TrainingSample<Scalar>& sample,
                              std::size_t component = 0) {
  const auto& target = detail::checked_target(model, sample, component);
  const RowMatrix<Scalar> features = detail::masked_features(model, sample);
  ForwardResult<Scalar> out;
  out.preds = (features * model.W.transpose()).rowwise() + model.b.transpose();
  out.loss = l2_masked(out.preds, target.values);
  return out;
}

/// Analytic gradients of forward().loss. With G = 2 (P - T) / (m * dim):
/// dW = G^T F, db = G^T 1, and since every masked token's self input is the
/// embedding, d_emb = W_self^T db.
template <typename Scalar>
PredictorGradients<Scalar> backward(const LinearPredictor<Scalar>& model, const TrainingSample<Scalar>& sample,
                                    std::size_t component = 0) {
  const auto& target = detail::checked_target(model, sample, component);
  const RowMatrix<Scalar> features = detail::masked_features(model, sample);
  const RowMatrix<Scalar> preds = (features * model.W.transpose()).rowwise() + model.b.transpose();
  const Scalar scale = Scalar(2) / Scalar(preds.rows() * preds.cols());
  const RowMatrix<Scalar> g = scale * (preds - target.values);

  PredictorGradients<Scalar> grads;
  grads.dW = g.transpose() * features;
  grads.db = g.colwise().sum().transpose();
  grads.d_mask_embedding = model.W.leftCols(model.token_dim()).transpose() * grads.db;
  return grads;
}

struct TrainConfig {
  double learning_rate = 0.1;
  int epochs = 10;
  int batch_size = 8;
  std::uint64_t seed = 0;
  double init_scale = 0.02;
  bool freeze_mask_embedding = false;

  void validate() const {
    if (!(learning_rate >= 0.0)) throw InvalidInput("learning_rate must be >= 0");
    if (epochs < 1) throw InvalidInput("epochs must be >= 1");
    if (batch_size < 1) throw InvalidInput("batch_size must be >= 1");
  }
};

/// A clip and the seed of its mask.
template <typename Scalar>
struct DatasetItem {
  VideoClip<Scalar> clip;
  std::uint64_t mask_seed = 0;
};

template <typename Scalar>
struct TrainResult {
  LinearPredictor<Scalar> model;
  std::vector<double> loss_curve;  // mean forward loss per epoch, before that step's update
};

/// Mask of one dataset item over its token grid. The seed combines the
/// config seed with the item's seed, so the mask is fixed across epochs.
template <typename Scalar>
MaskMap sample_mask(const TokenGrid<Scalar>& grid, const MaskConfig& mcfg, std::uint64_t item_seed) {
  MaskConfig cfg = mcfg;
  cfg.seed = mix_seed(mcfg.seed, item_seed);
  return generate_mask(grid.t, grid.h, grid.w, cfg);
}

namespace detail {

template <typename Scalar>
void require_single_target(const TargetSpec<Scalar>& tspec) {
  if (tspec.components.size() != 1) throw InvalidInput("the linear predictor takes exactly one target component");
}

template <typename Scalar>
MaskMap full_mask(const TokenGrid<Scalar>& grid) {
  MaskMap m(grid.t, grid.h, grid.w);
  m.bits().setConstant(true);
  return m;
}

}  // namespace detail

/// Minibatch SGD over a fixed dataset. Each item's mask is drawn once from
/// its seed; item order is reshuffled every epoch from tcfg.seed.
template <typename Scalar>
TrainResult<Scalar> train(const std::vector<DatasetItem<Scalar>>& dataset, const PatchSpec& pspec,
                          const TargetSpec<Scalar>& tspec, const MaskConfig& mcfg, const TrainConfig& tcfg) {
  if (dataset.empty()) throw InvalidInput("training dataset is empty");
  tcfg.validate();
  detail::require_single_target(tspec);

  std::vector<TrainingSample<Scalar>> samples;
  samples.reserve(dataset.size());
  for (const auto& item : dataset) {
    const TokenGrid<Scalar> grid = tokenize(item.clip, pspec, tspec.stats);
    samples.push_back(assemble_targets(item.clip, sample_mask(grid, mcfg, item.mask_seed), pspec, tspec));
    if (samples.back().masked_indices.empty()) throw InvalidInput("a training sample has no masked tokens");
  }

  Rng init_rng(tcfg.seed);
  TrainResult<Scalar> result;
  result.model = LinearPredictor<Scalar>::init(samples.front().tokens.dim(), samples.front().targets.front().dim(),
                                               tcfg.init_scale, init_rng);
  auto& model = result.model;

  std::vector<std::size_t> order(samples.size());
  std::vector<double> losses(samples.size());
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(tcfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, std::int64_t(i) - 1))]);
    }

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
      PredictorGradients<Scalar> acc{RowMatrix<Scalar>::Zero(model.W.rows(), model.W.cols()),
                                     decltype(model.b)::Zero(model.b.size()),
                                     decltype(model.mask_embedding)::Zero(model.mask_embedding.size())};
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = samples[order[k]];
        losses[order[k]] = static_cast<double>(forward(model, s).loss);
        const auto g = backward(model, s);
        acc.dW += g.dW;
        acc.db += g.db;
        acc.d_mask_embedding += g.d_mask_embedding;
      }
      const Scalar step = Scalar(tcfg.learning_rate) / Scalar(end - start);
      model.W -= step * acc.dW;
      model.b -= step * acc.db;
      if (!tcfg.freeze_mask_embedding) model.mask_embedding -= step * acc.d_mask_embedding;
    }
    // Summed in dataset order so the value does not depend on the shuffle.
    result.loss_curve.push_back(std::accumulate(losses.begin(), losses.end(), 0.0) / double(losses.size()));
  }
  return result;
}

template <typename Scalar>
struct BaselineResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean_target;
  Scalar loss;
};

/// Constant predictor equal to the per-dimension mean of every token's
/// target over the dataset, scored as if every token were masked.
template <typename Scalar>
BaselineResult<Scalar> mean_baseline(const std::vector<DatasetItem<Scalar>>& dataset, const PatchSpec& pspec,
                                     const TargetSpec<Scalar>& tspec) {
  if (dataset.empty()) throw InvalidInput("baseline dataset is empty");
  detail::require_single_target(tspec);
  std::vector<RowMatrix<Scalar>> all;
  Eigen::Index rows = 0;
  for (const auto& item : dataset) {
    const TokenGrid<Scalar> grid = tokenize(item.clip, pspec, tspec.stats);
    auto sample = assemble_targets(item.clip, detail::full_mask(grid), pspec, tspec);
    rows += sample.targets.front().values.rows();
    all.push_back(std::move(sample.targets.front().values));
  }
  RowMatrix<Scalar> stacked(rows, all.front().cols());
  Eigen::Index r = 0;
  for (const auto& m : all) {
    stacked.middleRows(r, m.rows()) = m;
    r += m.rows();
  }
  BaselineResult<Scalar> out;
  out.mean_target = stacked.colwise().mean().transpose();
  const RowMatrix<Scalar> constant = RowMatrix<Scalar>::Ones(stacked.rows(), 1) * out.mean_target.transpose();
  out.loss = l2_masked(constant, stacked);
  return out;
}

}  // namespace maskfeat
