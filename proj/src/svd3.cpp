#include <Eigen/Core>
#include <Eigen/SVD>
#include <cmath>

#include "deepicp/autodiff.hpp"

namespace deepicp::ad {

namespace {

int parent_of(const Tensor& t, Tape* tape) {
  return (tape != nullptr && t.tape() == tape) ? t.node() : -1;
}

// Coefficients 1/(s_j^2 - s_i^2), safeguarded against coinciding singular
// values by sign(d) / max(|d|, eps).
double safeguarded_inv(double d) {
  constexpr double kEps = 1e-8;
  if (d == 0.0) return 0.0;
  const double sign = d > 0.0 ? 1.0 : -1.0;
  return sign / std::max(std::abs(d), kEps);
}

// View a packed [u(9) | s(3) | v(9)] node as three tensors.
Tensor segment(Tape* tape, const Tensor& packed, int begin, int count, Shape shape) {
  Tensor out(std::move(shape));
  for (int i = 0; i < count; ++i) out.data()[i] = packed[begin + i];
  if (tape == nullptr) return out;
  const int parent = packed.node();
  return tape->record(std::move(out), {parent},
                      [parent, begin, count](Tape& t, const std::vector<double>& g) {
                        std::vector<double>& gp = t.grad(parent);
                        for (int i = 0; i < count; ++i) gp[begin + i] += g[i];
                      });
}

}  // namespace

Svd3 svd3(const Tensor& m) {
  if (m.rank() != 2 || m.dim(0) != 3 || m.dim(1) != 3) {
    throw std::invalid_argument("svd3: expected a [3,3] tensor");
  }
  if (!m.all_finite()) throw std::invalid_argument("svd3: non-finite input");

  Eigen::Matrix3d mm;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) mm(i, j) = m.data()[i * 3 + j];
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(mm, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  const Eigen::Vector3d s = svd.singularValues();  // descending, non-negative

  Tensor packed({21});
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) packed.data()[i * 3 + j] = u(i, j);
  for (int i = 0; i < 3; ++i) packed.data()[9 + i] = s(i);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) packed.data()[12 + i * 3 + j] = v(i, j);

  Tape* tape = m.tape();
  if (tape != nullptr) {
    const int nm = parent_of(m, tape);
    packed = tape->record(
        std::move(packed), {nm},
        [nm, u, v, s](Tape& t, const std::vector<double>& g) {
          if (nm < 0) return;
          Eigen::Matrix3d gu, gv;
          Eigen::Vector3d gs;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
              gu(i, j) = g[i * 3 + j];
              gv(i, j) = g[12 + i * 3 + j];
            }
          for (int i = 0; i < 3; ++i) gs(i) = g[9 + i];

          Eigen::Matrix3d f;
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
              f(i, j) = i == j ? 0.0 : safeguarded_inv(s(j) * s(j) - s(i) * s(i));

          const Eigen::Matrix3d sd = s.asDiagonal();
          const Eigen::Matrix3d utgu = u.transpose() * gu;
          const Eigen::Matrix3d vtgv = v.transpose() * gv;
          const Eigen::Matrix3d term_u =
              u * f.cwiseProduct(utgu - utgu.transpose()) * sd * v.transpose();
          const Eigen::Matrix3d term_s = u * gs.asDiagonal() * v.transpose();
          const Eigen::Matrix3d term_v =
              u * sd * f.cwiseProduct(vtgv - vtgv.transpose()) * v.transpose();
          const Eigen::Matrix3d dm = term_u + term_s + term_v;

          std::vector<double>& gm = t.grad(nm);
          for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) gm[i * 3 + j] += dm(i, j);
        });
  }

  Svd3 out;
  out.u = segment(tape, packed, 0, 9, {3, 3});
  out.s = segment(tape, packed, 9, 3, {3});
  out.v = segment(tape, packed, 12, 9, {3, 3});
  return out;
}

}  // namespace deepicp::ad
