#pragma once

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

#include "maskfeat/error.hpp"

namespace maskfeat {

namespace detail {

template <typename A, typename B>
void check_loss_shapes(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw InvalidInput("prediction and target shapes differ");
  }
  if (pred.rows() == 0) throw InvalidInput("loss needs at least one masked token");
  if (pred.cols() == 0) throw InvalidInput("loss needs a non-empty target dimension");
}

}  // namespace detail

/// Mean squared error over masked tokens (rows) and target dimensions (cols).
template <typename A, typename B>
typename A::Scalar l2_masked(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& target) {
  detail::check_loss_shapes(pred, target);
  using Scalar = typename A::Scalar;
  return (pred - target).squaredNorm() / Scalar(pred.rows() * pred.cols());
}

/// Mean squared error between row-wise l2-normalized predictions and targets,
/// i.e. 2 (1 - cos) / dim per token. Prediction norms are floored at epsilon.
template <typename A, typename B>
typename A::Scalar cosine_masked(const Eigen::MatrixBase<A>& pred, const Eigen::MatrixBase<B>& target,
                                 double epsilon = 1e-12) {
  detail::check_loss_shapes(pred, target);
  using Scalar = typename A::Scalar;
  Scalar sum(0);
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    const Scalar tn = target.row(i).norm();
    if (!(tn > Scalar(epsilon))) throw InvalidInput("cosine loss target row " + std::to_string(i) + " has zero norm");
    const Scalar pn = std::max(pred.row(i).norm(), Scalar(epsilon));
    sum += (pred.row(i) / pn - target.row(i) / tn).squaredNorm();
  }
  return sum / Scalar(pred.rows() * pred.cols());
}

struct LossTerm {
  std::string name;
  double value = 0.0;
  double weight = 1.0;
};

struct LossReport {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> per_component;
  std::size_t masked_count = 0;
};

/// Weighted mean sum(w_i L_i) / sum(w_i).
inline LossReport multi_task(const std::vector<LossTerm>& terms, std::size_t masked_count = 0) {
  if (terms.empty()) throw InvalidInput("multi_task needs at least one loss");
  double weighted = 0.0, weights = 0.0;
  LossReport report;
  report.masked_count = masked_count;
  for (const auto& t : terms) {
    if (!(t.weight >= 0.0)) throw InvalidInput("loss weights must be >= 0");
    weighted += t.weight * t.value;
    weights += t.weight;
    report.per_component.emplace_back(t.name, t.value);
  }
  if (!(weights > 0.0)) throw InvalidInput("loss weights must not all be zero");
  report.total = weighted / weights;
  return report;
}

}  // namespace maskfeat
