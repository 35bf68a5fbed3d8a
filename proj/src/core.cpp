#include "deepicp/core.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace deepicp {

void validate_cloud(const PointCloud& cloud, const std::string& what) {
  if (cloud.empty()) {
    throw std::invalid_argument(what + ": point cloud is empty");
  }
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw std::invalid_argument(what + ": non-finite coordinate at point " +
                                  std::to_string(i));
    }
  }
}

double RigidTransform::rotation_drift() const {
  const Mat3 gram = rotation.transpose() * rotation;
  const double ortho = (gram - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = std::abs(rotation.determinant() - 1.0);
  return std::max(ortho, det);
}

Mat3 rotation_rpy(double roll, double pitch, double yaw) {
  const Eigen::AngleAxisd rx(roll, Vec3::UnitX());
  const Eigen::AngleAxisd ry(pitch, Vec3::UnitY());
  const Eigen::AngleAxisd rz(yaw, Vec3::UnitZ());
  return (rz * ry * rx).toRotationMatrix();
}

PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.size());
  for (const Point& p : cloud.points) {
    const Vec3 q = t.apply(p.position());
    out.points.push_back({q.x(), q.y(), q.z(), p.intensity});
  }
  return out;
}

double angular_error_deg(const Mat3& r, const Mat3& r_bar) {
  const double chordal = (r - r_bar).norm();  // Frobenius
  double ratio = chordal / std::sqrt(8.0);
  if (ratio > 1.0) ratio = 1.0;
  if (ratio < 0.0) ratio = 0.0;
  return 2.0 * std::asin(ratio) * 180.0 / M_PI;
}

double translational_error_m(const Vec3& t, const Vec3& t_bar) {
  return (t - t_bar).norm();
}

RegistrationError registration_error(const RigidTransform& estimate,
                                     const RigidTransform& truth) {
  return {angular_error_deg(estimate.rotation, truth.rotation),
          translational_error_m(estimate.translation, truth.translation)};
}

RigidTransform rigid_align(const std::vector<Vec3>& x, const std::vector<Vec3>& y,
                           const std::vector<double>& w) {
  if (x.size() != y.size() || x.size() != w.size()) {
    throw std::invalid_argument("rigid_align: size mismatch");
  }
  if (x.size() < 3) {
    throw std::invalid_argument("rigid_align: need at least 3 correspondences");
  }
  double wsum = 0.0;
  for (double wi : w) {
    if (!(wi >= 0.0)) throw std::invalid_argument("rigid_align: negative weight");
    wsum += wi;
  }
  if (wsum <= 0.0) throw std::invalid_argument("rigid_align: zero total weight");

  Vec3 cx = Vec3::Zero();
  Vec3 cy = Vec3::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) {
    cx += w[i] * x[i];
    cy += w[i] * y[i];
  }
  cx /= wsum;
  cy /= wsum;

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < x.size(); ++i) {
    h += w[i] * (x[i] - cx) * (y[i] - cy).transpose();
  }

  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Vec3 signs = Vec3::Ones();
  signs(2) = ((v * u.transpose()).determinant() < 0.0) ? -1.0 : 1.0;

  RigidTransform out;
  out.rotation = v * signs.asDiagonal() * u.transpose();
  out.translation = cy - out.rotation * cx;
  return out;
}

}  // namespace deepicp
