#pragma once

#include <Eigen/Core>

namespace cadd {

/// Aligned descriptor lists: row i of `a` pairs with row i of `b`.
struct PairLoss {
  double value = 0.0;
  Eigen::MatrixXd grad_a;  // filled only when requested
  Eigen::MatrixXd grad_b;
  long active = 0;         // pairs contributing to the loss
};

/// Mean squared L2 distance over matched pairs; 0 for an empty batch.
PairLoss match_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool with_grad = false);

/// Squared hinge max(0, M - ||a - b||)^2 summed and divided by the number of
/// pairs closer than the margin; 0 when no pair is inside the margin.
PairLoss nonmatch_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double margin, bool with_grad = false);

struct TripletLoss {
  double value = 0.0;
  Eigen::VectorXd grad_anchor;
  Eigen::VectorXd grad_positive;
  Eigen::VectorXd grad_negative;
};

/// ReLU(||A - P|| - ||A - N|| + c * M). Subgradients at the hinge and at zero norms are 0.
TripletLoss hard_triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                              const Eigen::VectorXd& negative, double confidence, double margin,
                              bool with_grad = false);

/// L_pos,non-match + L_pos,match + c * L_neg,non-match.
double soft_total_loss(double pos_match, double pos_nonmatch, double neg_nonmatch, double confidence);

}  // namespace cadd
