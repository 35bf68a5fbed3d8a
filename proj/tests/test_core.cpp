#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "deepicp/core.hpp"
#include "deepicp/rng.hpp"

using namespace deepicp;

namespace {

PointCloud random_cloud(int n, Rng& rng, double extent = 10.0) {
  PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    cloud.points.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                            rng.uniform(-extent, extent), rng.uniform()});
  }
  return cloud;
}

// Brute-force radius scan, the oracle for every index query.
std::vector<Neighbor> brute_radius(const PointCloud& cloud, const Vec3& center,
                                   double radius) {
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double d = (cloud[i].position() - center).norm();
    if (d <= radius) out.push_back({static_cast<int>(i), d});
  }
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  });
  return out;
}

Mat3 random_rotation(Rng& rng) {
  return rotation_rpy(rng.uniform(-M_PI, M_PI), rng.uniform(-M_PI / 2, M_PI / 2),
                      rng.uniform(-M_PI, M_PI));
}

}  // namespace

TEST_CASE("spatial index: singleton cloud") {
  PointCloud cloud;
  cloud.points.push_back({1.0, 2.0, 3.0, 0.5});
  SpatialIndex index = build_index(cloud);
  const auto found = index.radius_search(Vec3(1.0, 2.0, 3.0), 0.1);
  REQUIRE(found.size() == 1);
  CHECK(found[0].index == 0);
}

TEST_CASE("spatial index: unit cube corners") {
  PointCloud cloud;
  for (int x = 0; x <= 1; ++x)
    for (int y = 0; y <= 1; ++y)
      for (int z = 0; z <= 1; ++z)
        cloud.points.push_back({double(x), double(y), double(z), 0.0});
  SpatialIndex index = build_index(cloud);
  // Radius 1.2 from the origin covers the origin corner and the three corners
  // at distance 1.
  const auto found = index.radius_search(Vec3::Zero(), 1.2);
  REQUIRE(found.size() == 4);
  CHECK(found[0].distance == doctest::Approx(0.0));
  for (std::size_t i = 1; i < 4; ++i) CHECK(found[i].distance == doctest::Approx(1.0));
  const auto oracle = brute_radius(cloud, Vec3::Zero(), 1.2);
  for (std::size_t i = 0; i < found.size(); ++i) CHECK(found[i].index == oracle[i].index);
}

TEST_CASE("spatial index: random queries match brute force") {
  Rng rng(42);
  PointCloud cloud = random_cloud(500, rng);
  SpatialIndex index = build_index(cloud);
  for (int q = 0; q < 20; ++q) {
    const Vec3 center(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    const double radius = rng.uniform(0.5, 6.0);
    const auto got = index.radius_search(center, radius);
    const auto oracle = brute_radius(cloud, center, radius);
    REQUIRE(got.size() == oracle.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].index == oracle[i].index);
      CHECK(got[i].distance == doctest::Approx(oracle[i].distance).epsilon(1e-12));
    }
  }
}

TEST_CASE("spatial index: property check over random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    PointCloud cloud = random_cloud(static_cast<int>(rng.uniform_index(900)) + 50, rng);
    SpatialIndex index = build_index(cloud);
    for (int q = 0; q < 5; ++q) {
      const Vec3 center(rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12));
      const double radius = rng.uniform(0.2, 8.0);
      const auto got = index.radius_search(center, radius);
      const auto oracle = brute_radius(cloud, center, radius);
      REQUIRE(got.size() == oracle.size());
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].index == oracle[i].index);
    }
  }
}

TEST_CASE("spatial index: empty cloud rejected") {
  PointCloud empty;
  CHECK_THROWS_AS(build_index(empty), std::invalid_argument);
}

TEST_CASE("knn: ordering and determinism") {
  Rng rng(3);
  PointCloud cloud = random_cloud(200, rng);
  SpatialIndex index = build_index(cloud);
  for (int q = 0; q < 10; ++q) {
    const Vec3 center(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10));
    const auto nn = index.knn_search(center, 5);
    REQUIRE(nn.size() == 5);
    std::vector<Neighbor> all;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      all.push_back({static_cast<int>(i), (cloud[i].position() - center).norm()});
    }
    std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    });
    for (int i = 0; i < 5; ++i) CHECK(nn[i].index == all[i].index);
  }
}

TEST_CASE("radius_neighbors: duplication padding") {
  PointCloud cloud;
  cloud.points.push_back({0.1, 0.0, 0.0, 0.0});
  cloud.points.push_back({0.2, 0.0, 0.0, 0.0});
  cloud.points.push_back({5.0, 0.0, 0.0, 0.0});
  SpatialIndex index = build_index(cloud);

  SUBCASE("2 in radius, cap 4 -> p1 p2 p1 p2") {
    const auto got = radius_neighbors(index, Vec3::Zero(), 1.0, 4);
    REQUIRE(got.size() == 4);
    CHECK(got[0].index == 0);
    CHECK(got[1].index == 1);
    CHECK(got[2].index == 0);
    CHECK(got[3].index == 1);
  }
  SUBCASE("exact fit stays unpadded") {
    const auto got = radius_neighbors(index, Vec3::Zero(), 1.0, 2);
    REQUIRE(got.size() == 2);
    CHECK(got[0].index == 0);
    CHECK(got[1].index == 1);
  }
  SUBCASE("empty window signals EmptyNeighborhood") {
    CHECK_THROWS_AS(radius_neighbors(index, Vec3(100, 0, 0), 1.0, 4), EmptyNeighborhood);
  }
}

TEST_CASE("apply: identity, translation, round trip") {
  Rng rng(11);
  PointCloud cloud = random_cloud(50, rng);

  const PointCloud same = apply_transform(RigidTransform::identity(), cloud);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(same[i].x == cloud[i].x);
    CHECK(same[i].intensity == cloud[i].intensity);
  }

  RigidTransform shift;
  shift.translation = Vec3(1, 0, 0);
  PointCloud origin;
  origin.points.push_back({0, 0, 0, 0.3});
  const PointCloud moved = apply_transform(shift, origin);
  CHECK(moved[0].x == doctest::Approx(1.0));
  CHECK(moved[0].intensity == doctest::Approx(0.3));

  RigidTransform a;
  a.rotation = random_rotation(rng);
  a.translation = Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
  const PointCloud round = apply_transform(a.inverse(), apply_transform(a, cloud));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(std::abs(round[i].x - cloud[i].x) < 1e-12);
    CHECK(std::abs(round[i].y - cloud[i].y) < 1e-12);
    CHECK(std::abs(round[i].z - cloud[i].z) < 1e-12);
  }
}

TEST_CASE("apply preserves pairwise distances") {
  Rng rng(13);
  PointCloud cloud = random_cloud(40, rng);
  RigidTransform t;
  t.rotation = random_rotation(rng);
  t.translation = Vec3(3, -1, 2);
  const PointCloud moved = apply_transform(t, cloud);
  for (int k = 0; k < 100; ++k) {
    const std::size_t i = rng.uniform_index(cloud.size());
    const std::size_t j = rng.uniform_index(cloud.size());
    const double before = (cloud[i].position() - cloud[j].position()).norm();
    const double after = (moved[i].position() - moved[j].position()).norm();
    CHECK(std::abs(before - after) <= 1e-9);
  }
}

TEST_CASE("angular error: identities and symmetry") {
  Rng rng(17);
  CHECK(angular_error_deg(Mat3::Identity(), Mat3::Identity()) == 0.0);

  // Single-axis chordal identity: theta = phi.
  for (double phi_deg : {1.0, 10.0, 45.0, 90.0, 179.0, 180.0}) {
    const Mat3 r = rotation_rpy(0, 0, phi_deg * M_PI / 180.0);
    CHECK(angular_error_deg(r, Mat3::Identity()) == doctest::Approx(phi_deg).epsilon(1e-11));
  }

  for (int trial = 0; trial < 50; ++trial) {
    const Mat3 a = random_rotation(rng);
    const Mat3 b = random_rotation(rng);
    const double ab = angular_error_deg(a, b);
    const double ba = angular_error_deg(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(angular_error_deg(a, a) == 0.0);
    // Axis-angle oracle through the trace of the relative rotation.
    const Mat3 rel = a * b.transpose();
    const double cos_theta = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
    const double oracle = std::acos(cos_theta) * 180.0 / M_PI;
    CHECK(ab == doctest::Approx(oracle).epsilon(1e-7));
  }
}

TEST_CASE("translational error") {
  CHECK(translational_error_m(Vec3(1, 2, 3), Vec3(1, 2, 3)) == 0.0);
  CHECK(translational_error_m(Vec3(1, 0, 0), Vec3::Zero()) == doctest::Approx(1.0));
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Vec3 a(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    const Vec3 b(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    const double oracle = std::sqrt((a.x() - b.x()) * (a.x() - b.x()) +
                                    (a.y() - b.y()) * (a.y() - b.y()) +
                                    (a.z() - b.z()) * (a.z() - b.z()));
    CHECK(translational_error_m(a, b) == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("rigid_align recovers a known transform") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    RigidTransform truth;
    truth.rotation = random_rotation(rng);
    truth.translation = Vec3(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4));
    std::vector<Vec3> x, y;
    std::vector<double> w;
    const int n = 3 + static_cast<int>(rng.uniform_index(30));
    for (int i = 0; i < n; ++i) {
      const Vec3 p(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
      x.push_back(p);
      y.push_back(truth.apply(p));
      w.push_back(rng.uniform(0.1, 2.0));
    }
    const RigidTransform got = rigid_align(x, y, w);
    CHECK(angular_error_deg(got.rotation, truth.rotation) < 1e-7);
    CHECK(translational_error_m(got.translation, truth.translation) < 1e-9);
  }
}

TEST_CASE("transform validity checks") {
  RigidTransform t;
  CHECK(t.is_valid());
  t.rotation(0, 0) = 2.0;
  CHECK_FALSE(t.is_valid());
}
