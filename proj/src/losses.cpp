#include "cadd/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace cadd {

namespace {
void check_aligned(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("loss: descriptor lists must have equal shapes");
}
}  // namespace

PairLoss match_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool with_grad) {
  check_aligned(a, b);
  PairLoss out;
  if (with_grad) {
    out.grad_a = Eigen::MatrixXd::Zero(a.rows(), a.cols());
    out.grad_b = Eigen::MatrixXd::Zero(b.rows(), b.cols());
  }
  const auto n = a.rows();
  if (n == 0) return out;
  const Eigen::MatrixXd diff = a - b;
  out.value = diff.rowwise().squaredNorm().sum() / static_cast<double>(n);
  out.active = n;
  if (with_grad) {
    out.grad_a = (2.0 / static_cast<double>(n)) * diff;
    out.grad_b = -out.grad_a;
  }
  return out;
}

PairLoss nonmatch_loss(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double margin, bool with_grad) {
  check_aligned(a, b);
  if (!(margin > 0)) throw std::invalid_argument("nonmatch_loss: margin must be positive");
  PairLoss out;
  if (with_grad) {
    out.grad_a = Eigen::MatrixXd::Zero(a.rows(), a.cols());
    out.grad_b = Eigen::MatrixXd::Zero(b.rows(), b.cols());
  }
  const Eigen::MatrixXd diff = a - b;
  const Eigen::VectorXd dist = diff.rowwise().norm();
  double sum = 0.0;
  long active = 0;
  for (Eigen::Index i = 0; i < dist.size(); ++i) {
    if (dist[i] < margin) {
      const double h = margin - dist[i];
      sum += h * h;
      ++active;
    }
  }
  out.active = active;
  if (active == 0) return out;
  out.value = sum / static_cast<double>(active);
  if (with_grad) {
    for (Eigen::Index i = 0; i < dist.size(); ++i) {
      if (dist[i] >= margin || dist[i] <= 0.0) continue;
      const double scale = -2.0 * (margin - dist[i]) / (static_cast<double>(active) * dist[i]);
      out.grad_a.row(i) = scale * diff.row(i);
      out.grad_b.row(i) = -scale * diff.row(i);
    }
  }
  return out;
}

TripletLoss hard_triplet_loss(const Eigen::VectorXd& anchor, const Eigen::VectorXd& positive,
                              const Eigen::VectorXd& negative, double confidence, double margin,
                              bool with_grad) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    throw std::invalid_argument("hard_triplet_loss: embedding sizes differ");
  TripletLoss out;
  if (with_grad) {
    out.grad_anchor = Eigen::VectorXd::Zero(anchor.size());
    out.grad_positive = Eigen::VectorXd::Zero(anchor.size());
    out.grad_negative = Eigen::VectorXd::Zero(anchor.size());
  }
  const Eigen::VectorXd ap = anchor - positive;
  const Eigen::VectorXd an = anchor - negative;
  const double d_ap = ap.norm();
  const double d_an = an.norm();
  const double z = d_ap - d_an + confidence * margin;
  if (z <= 0.0) return out;
  out.value = z;
  if (with_grad) {
    if (d_ap > 0.0) {
      out.grad_anchor += ap / d_ap;
      out.grad_positive -= ap / d_ap;
    }
    if (d_an > 0.0) {
      out.grad_anchor -= an / d_an;
      out.grad_negative += an / d_an;
    }
  }
  return out;
}

double soft_total_loss(double pos_match, double pos_nonmatch, double neg_nonmatch, double confidence) {
  return pos_nonmatch + pos_match + confidence * neg_nonmatch;
}

}  // namespace cadd
