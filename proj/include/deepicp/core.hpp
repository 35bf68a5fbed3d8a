#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepicp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;  // reflectance in [0, 1]

  Vec3 position() const { return Vec3(x, y, z); }
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Point& operator[](std::size_t i) const { return points[i]; }
  Point& operator[](std::size_t i) { return points[i]; }
};

// Throws std::invalid_argument if the cloud is empty or contains non-finite
// coordinates. Registration entry points call this on their inputs.
void validate_cloud(const PointCloud& cloud, const std::string& what);

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return RigidTransform{}; }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  RigidTransform inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }

  // this ∘ other: apply `other` first, then this.
  RigidTransform compose(const RigidTransform& other) const {
    RigidTransform out;
    out.rotation = rotation * other.rotation;
    out.translation = rotation * other.translation + translation;
    return out;
  }

  // Orthonormality / determinant drift from a proper rotation.
  double rotation_drift() const;
  bool is_valid(double tol = 1e-9) const { return rotation_drift() <= tol; }
};

// Rotation from roll-pitch-yaw (radians), applied in that order:
// R = Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 rotation_rpy(double roll, double pitch, double yaw);

// Transformed copy: p' = R p + T, intensity unchanged.
PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud);

struct RegistrationError {
  double angular_deg = 0.0;
  double translational_m = 0.0;
};

// Chordal angular error in degrees: theta = 2 asin(||R - Rbar||_F / sqrt(8)),
// with the asin argument clamped to [0, 1] against rounding.
double angular_error_deg(const Mat3& r, const Mat3& r_bar);

double translational_error_m(const Vec3& t, const Vec3& t_bar);

RegistrationError registration_error(const RigidTransform& estimate,
                                     const RigidTransform& truth);

// Weighted rigid alignment (closed-form, not differentiable; the tape-based
// variant lives in pipeline.hpp). Minimizes sum_i w_i ||y_i - (R x_i + T)||^2.
RigidTransform rigid_align(const std::vector<Vec3>& x, const std::vector<Vec3>& y,
                           const std::vector<double>& w);

// Signaled when a radius query that requires at least one point finds none.
struct EmptyNeighborhood : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Neighbor {
  int index = -1;
  double distance = 0.0;
};

// Balanced kd-tree over a point cloud. Immutable after construction;
// concurrent read queries are safe.
class SpatialIndex {
 public:
  explicit SpatialIndex(const PointCloud& cloud);
  ~SpatialIndex();
  SpatialIndex(SpatialIndex&&) noexcept;
  SpatialIndex& operator=(SpatialIndex&&) noexcept;
  SpatialIndex(const SpatialIndex&) = delete;
  SpatialIndex& operator=(const SpatialIndex&) = delete;

  std::size_t size() const;

  // All points within `radius` of `center`, ascending distance, ties broken
  // by insertion index. May be empty.
  std::vector<Neighbor> radius_search(const Vec3& center, double radius) const;

  // k nearest neighbors (fewer if the cloud is smaller), ascending
  // (distance, index).
  std::vector<Neighbor> knn_search(const Vec3& center, int k) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SpatialIndex build_index(const PointCloud& cloud);

// Radius query capped at `cap` entries; if fewer than cap points are found
// (but at least one) the result is padded to exactly cap entries by cyclic
// duplication. Zero points in radius -> EmptyNeighborhood.
std::vector<Neighbor> radius_neighbors(const SpatialIndex& index, const Vec3& center,
                                       double radius, int cap);

}  // namespace deepicp
