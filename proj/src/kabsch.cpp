#include <cmath>

#include "deepicp/pipeline.hpp"

namespace deepicp::pipeline {

KabschResult weighted_kabsch(Tape* tape, const CorrespondenceSet& corr) {
  const int n = static_cast<int>(corr.x.size());
  if (n < 3) {
    throw std::invalid_argument("weighted_kabsch: need at least 3 correspondences");
  }
  if (corr.y.rank() != 2 || corr.y.dim(0) != n || corr.y.dim(1) != 3) {
    throw std::invalid_argument("weighted_kabsch: y must be [N, 3]");
  }
  if (corr.weights.size() != n) {
    throw std::invalid_argument("weighted_kabsch: weight count != correspondence count");
  }
  for (int i = 0; i < n; ++i) {
    if (!(corr.weights[i] > 0.0)) {
      throw std::invalid_argument("weighted_kabsch: weights must be positive");
    }
  }
  (void)tape;  // the graph structure is carried by the tensors themselves

  Tensor x_const({n, 3});
  for (int i = 0; i < n; ++i) {
    x_const.data()[i * 3 + 0] = corr.x[static_cast<std::size_t>(i)].x();
    x_const.data()[i * 3 + 1] = corr.x[static_cast<std::size_t>(i)].y();
    x_const.data()[i * 3 + 2] = corr.x[static_cast<std::size_t>(i)].z();
  }

  // Normalize the weights; the solve is invariant to their overall scale.
  Tensor w = corr.weights.rank() == 2 ? ad::reshape(corr.weights, {n}) : corr.weights;
  Tensor w_norm = ad::div_by_scalar(w, ad::sum_all(w));
  Tensor w_row = ad::reshape(w_norm, {1, n});

  Tensor x_bar = ad::matmul(w_row, x_const);  // [1,3]
  Tensor y_bar = ad::matmul(w_row, corr.y);   // [1,3]

  Tensor x_centered = ad::sub_rowvec(x_const, x_bar);
  Tensor y_centered = ad::sub_rowvec(corr.y, y_bar);
  Tensor x_weighted = ad::scale_rows(x_centered, w_norm);
  Tensor h = ad::matmul(ad::transpose(x_weighted), y_centered);  // [3,3]

  ad::Svd3 svd = ad::svd3(h);

  KabschResult result;
  // Reflection guard: flip the least-significant axis when det(VU^T) < 0.
  // The sign is locally constant, so it is applied as a constant factor.
  Mat3 u_val, v_val;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      u_val(i, j) = svd.u.data()[i * 3 + j];
      v_val(i, j) = svd.v.data()[i * 3 + j];
    }
  const double det = (v_val * u_val.transpose()).determinant();
  Tensor correction({3, 3});
  correction.data()[0] = 1.0;
  correction.data()[4] = 1.0;
  correction.data()[8] = det < 0.0 ? -1.0 : 1.0;

  // Degenerate spectrum: the smallest two singular values nearly coincide
  // (rank-deficient / collinear configurations make the reflection guard
  // ill-conditioned). Flagged; the computation proceeds.
  const double s1 = svd.s.data()[1], s2 = svd.s.data()[2];
  result.degenerate = (s1 - s2) <= 1e-12 * std::max(1.0, svd.s.data()[0]);

  // R = V * diag(1,1,det) * U^T
  result.rotation = ad::matmul(ad::matmul(svd.v, correction), ad::transpose(svd.u));
  // T = ybar - R xbar  -> as a row: ybar - xbar R^T
  result.translation =
      ad::sub(y_bar, ad::matmul(x_bar, ad::transpose(result.rotation)));
  return result;
}

RigidTransform to_transform(const KabschResult& result) {
  RigidTransform t;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t.rotation(i, j) = result.rotation.data()[i * 3 + j];
  t.translation =
      Vec3(result.translation[0], result.translation[1], result.translation[2]);
  return t;
}

Tensor loss1(Tape* tape, const Tensor& generated, const std::vector<Vec3>& ground_truth) {
  (void)tape;
  const int n = static_cast<int>(ground_truth.size());
  if (generated.rank() != 2 || generated.dim(0) != n || generated.dim(1) != 3) {
    throw std::invalid_argument("loss1: generated points must be [N, 3] matching ground truth");
  }
  Tensor gt({n, 3});
  for (int i = 0; i < n; ++i) {
    gt.data()[i * 3 + 0] = ground_truth[static_cast<std::size_t>(i)].x();
    gt.data()[i * 3 + 1] = ground_truth[static_cast<std::size_t>(i)].y();
    gt.data()[i * 3 + 2] = ground_truth[static_cast<std::size_t>(i)].z();
  }
  return ad::mul_scalar(ad::sum_all(ad::abs_val(ad::sub(gt, generated))),
                        1.0 / static_cast<double>(n));
}

Tensor loss2(Tape* tape, const CorrespondenceSet& corr,
             const std::vector<Vec3>& ground_truth) {
  const int n = static_cast<int>(corr.x.size());
  if (static_cast<int>(ground_truth.size()) != n) {
    throw std::invalid_argument("loss2: ground-truth count != correspondence count");
  }
  KabschResult pose = weighted_kabsch(tape, corr);

  Tensor x_const({n, 3});
  Tensor gt({n, 3});
  for (int i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      x_const.data()[i * 3 + a] = corr.x[static_cast<std::size_t>(i)](a);
      gt.data()[i * 3 + a] = ground_truth[static_cast<std::size_t>(i)](a);
    }
  }
  Tensor mapped = ad::add_rowvec(ad::matmul(x_const, ad::transpose(pose.rotation)),
                                 ad::reshape(pose.translation, {3}));
  return ad::mul_scalar(ad::sum_all(ad::abs_val(ad::sub(gt, mapped))),
                        1.0 / static_cast<double>(n));
}

Tensor combined_loss(const Tensor& l1, const Tensor& l2, const LossConfig& config) {
  config.validate();
  return ad::add(ad::mul_scalar(l1, config.alpha), ad::mul_scalar(l2, 1.0 - config.alpha));
}

}  // namespace deepicp::pipeline
