#include <algorithm>
#include <cmath>

#include "deepicp/bench.hpp"

namespace deepicp::bench {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Shape {
  enum Kind { kGround, kPole, kBox, kTree } kind;
  Vec3 anchor;       // base position
  Vec3 size;         // kind-specific dimensions
  double intensity;  // base reflectance
};

// Deterministic sample positions per shape; jitter is added per frame.
std::vector<Point> sample_shape(const Shape& shape, int count, Rng& rng) {
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Vec3 p = shape.anchor;
    switch (shape.kind) {
      case Shape::kGround:
        break;  // handled separately
      case Shape::kPole:
        p.z() += rng.uniform(0.0, shape.size.z());
        p.x() += rng.uniform(-0.05, 0.05);
        p.y() += rng.uniform(-0.05, 0.05);
        break;
      case Shape::kBox: {
        // One of the four side faces or the top.
        const int face = static_cast<int>(rng.uniform_index(5));
        const Vec3 half = shape.size * 0.5;
        const double u = rng.uniform(-1.0, 1.0), v = rng.uniform(-1.0, 1.0);
        switch (face) {
          case 0: p += Vec3(half.x(), u * half.y(), (v + 1.0) * half.z()); break;
          case 1: p += Vec3(-half.x(), u * half.y(), (v + 1.0) * half.z()); break;
          case 2: p += Vec3(u * half.x(), half.y(), (v + 1.0) * half.z()); break;
          case 3: p += Vec3(u * half.x(), -half.y(), (v + 1.0) * half.z()); break;
          default: p += Vec3(u * half.x(), v * half.y(), shape.size.z()); break;
        }
        break;
      }
      case Shape::kTree: {
        // Trunk below, spherical canopy above.
        if (rng.uniform() < 0.35) {
          p.z() += rng.uniform(0.0, shape.size.z() * 0.6);
          p.x() += rng.uniform(-0.08, 0.08);
          p.y() += rng.uniform(-0.08, 0.08);
        } else {
          const double r = shape.size.x() * std::cbrt(rng.uniform());
          const double theta = rng.uniform(0.0, 2.0 * kPi);
          const double cu = rng.uniform(-1.0, 1.0);
          const double su = std::sqrt(1.0 - cu * cu);
          p += Vec3(r * su * std::cos(theta), r * su * std::sin(theta),
                    shape.size.z() * 0.8 + r * cu);
        }
        break;
      }
    }
    const double intensity =
        std::clamp(shape.intensity + rng.uniform(-0.05, 0.05), 0.0, 1.0);
    out.push_back({p.x(), p.y(), p.z(), intensity});
  }
  return out;
}

void add_jittered(PointCloud& cloud, const std::vector<Point>& base, double jitter,
                  Rng& rng) {
  for (const Point& p : base) {
    cloud.points.push_back({p.x + rng.normal(0.0, jitter), p.y + rng.normal(0.0, jitter),
                            p.z + rng.normal(0.0, jitter), p.intensity});
  }
}

}  // namespace

void SceneConfig::validate() const {
  if (!(extent > 0.0)) throw std::invalid_argument("SceneConfig: extent must be > 0");
  if (ground_points < 0 || poles < 0 || boxes < 0 || trees < 0 || dynamic_clusters < 0) {
    throw std::invalid_argument("SceneConfig: counts must be >= 0");
  }
  if (jitter < 0.0) throw std::invalid_argument("SceneConfig: jitter must be >= 0");
  if (dynamic_displacement < 0.0) {
    throw std::invalid_argument("SceneConfig: displacement must be >= 0");
  }
  if (ground_points == 0 && poles == 0 && boxes == 0 && trees == 0) {
    throw std::invalid_argument("SceneConfig: scene has no static content");
  }
}

ScenePair synth_scene(const SceneConfig& config) {
  config.validate();
  Rng rng(config.seed);
  Rng shape_rng = rng.fork();
  Rng gt_rng = rng.fork();
  Rng source_jitter_rng = rng.fork();
  Rng target_jitter_rng = rng.fork();
  Rng dynamic_rng = rng.fork();

  const double half = config.extent / 2.0;

  // Static base points, deterministic from the seed.
  std::vector<Point> base;
  for (int i = 0; i < config.ground_points; ++i) {
    base.push_back({shape_rng.uniform(-half, half), shape_rng.uniform(-half, half), 0.0,
                    std::clamp(0.2 + shape_rng.uniform(-0.05, 0.05), 0.0, 1.0)});
  }
  auto random_anchor = [&](double margin) {
    return Vec3(shape_rng.uniform(-half + margin, half - margin),
                shape_rng.uniform(-half + margin, half - margin), 0.0);
  };
  for (int i = 0; i < config.poles; ++i) {
    Shape s{Shape::kPole, random_anchor(0.5),
            Vec3(0.0, 0.0, shape_rng.uniform(2.5, 5.0)), 0.8};
    auto pts = sample_shape(s, config.points_per_pole, shape_rng);
    base.insert(base.end(), pts.begin(), pts.end());
  }
  for (int i = 0; i < config.boxes; ++i) {
    Shape s{Shape::kBox, random_anchor(1.5),
            Vec3(shape_rng.uniform(0.8, 2.5), shape_rng.uniform(0.8, 2.5),
                 shape_rng.uniform(0.8, 2.0)),
            0.5};
    auto pts = sample_shape(s, config.points_per_box, shape_rng);
    base.insert(base.end(), pts.begin(), pts.end());
  }
  for (int i = 0; i < config.trees; ++i) {
    Shape s{Shape::kTree, random_anchor(1.0),
            Vec3(shape_rng.uniform(0.8, 1.6), 0.0, shape_rng.uniform(2.0, 4.0)), 0.6};
    auto pts = sample_shape(s, config.points_per_tree, shape_rng);
    base.insert(base.end(), pts.begin(), pts.end());
  }

  // Ground truth: y = R x + T applied to static geometry.
  RigidTransform gt;
  gt.translation = Vec3(gt_rng.uniform(-config.gt_xy, config.gt_xy),
                        gt_rng.uniform(-config.gt_xy, config.gt_xy),
                        gt_rng.uniform(-config.gt_z, config.gt_z));
  const double deg = kPi / 180.0;
  gt.rotation = rotation_rpy(gt_rng.uniform(-config.gt_tilt_deg, config.gt_tilt_deg) * deg,
                             gt_rng.uniform(-config.gt_tilt_deg, config.gt_tilt_deg) * deg,
                             gt_rng.uniform(-config.gt_yaw_deg, config.gt_yaw_deg) * deg);

  ScenePair pair;
  pair.ground_truth = gt;

  // Source: static base with frame-A jitter.
  add_jittered(pair.source, base, config.jitter, source_jitter_rng);

  // Target: static base with frame-B jitter, then transformed by the truth.
  PointCloud target_static;
  add_jittered(target_static, base, config.jitter, target_jitter_rng);
  pair.target = apply_transform(gt, target_static);

  // Dynamic clusters: present in both frames but independently displaced, so
  // no rigid transform explains them.
  for (int i = 0; i < config.dynamic_clusters; ++i) {
    Shape car{Shape::kBox,
              Vec3(dynamic_rng.uniform(-half + 2.0, half - 2.0),
                   dynamic_rng.uniform(-half + 2.0, half - 2.0), 0.0),
              Vec3(1.8, 4.2, 1.5), 0.45};
    auto pts = sample_shape(car, config.points_per_dynamic, dynamic_rng);
    const Vec3 shift(dynamic_rng.uniform(-config.dynamic_displacement,
                                         config.dynamic_displacement),
                     dynamic_rng.uniform(-config.dynamic_displacement,
                                         config.dynamic_displacement),
                     0.0);
    for (const Point& p : pts) {
      pair.source.points.push_back({p.x + source_jitter_rng.normal(0.0, config.jitter),
                                    p.y + source_jitter_rng.normal(0.0, config.jitter),
                                    p.z + source_jitter_rng.normal(0.0, config.jitter),
                                    p.intensity});
    }
    PointCloud moved;
    for (const Point& p : pts) {
      moved.points.push_back({p.x + shift.x() + target_jitter_rng.normal(0.0, config.jitter),
                              p.y + shift.y() + target_jitter_rng.normal(0.0, config.jitter),
                              p.z + target_jitter_rng.normal(0.0, config.jitter),
                              p.intensity});
    }
    PointCloud moved_in_target = apply_transform(gt, moved);
    pair.target.points.insert(pair.target.points.end(), moved_in_target.points.begin(),
                              moved_in_target.points.end());
  }

  // Optional partial-overlap emulation: each frame keeps points near its
  // viewpoint (source at the origin, target shifted).
  if (config.viewpoint_offset > 0.0) {
    const double keep_radius = config.extent * 0.75;
    auto trim = [&](PointCloud& cloud, const Vec3& viewpoint) {
      PointCloud kept;
      for (const Point& p : cloud.points) {
        if ((p.position() - viewpoint).norm() <= keep_radius) kept.points.push_back(p);
      }
      cloud = std::move(kept);
    };
    trim(pair.source, Vec3::Zero());
    trim(pair.target, Vec3(config.viewpoint_offset, 0.0, 0.0));
  }

  return pair;
}

RigidTransform perturb(const RigidTransform& ground_truth, double translation_range,
                       double rotation_range_deg, Rng& rng) {
  if (translation_range < 0.0 || rotation_range_deg < 0.0) {
    throw std::invalid_argument("perturb: ranges must be >= 0");
  }
  const double tx = rng.uniform(0.0, translation_range);
  const double ty = rng.uniform(0.0, translation_range);
  const double tz = rng.uniform(0.0, translation_range);
  const double deg = kPi / 180.0;
  const double roll = rng.uniform(0.0, rotation_range_deg) * deg;
  const double pitch = rng.uniform(0.0, rotation_range_deg) * deg;
  const double yaw = rng.uniform(0.0, rotation_range_deg) * deg;

  RigidTransform prior;
  prior.rotation = rotation_rpy(roll, pitch, yaw) * ground_truth.rotation;
  prior.translation = ground_truth.translation + Vec3(tx, ty, tz);
  return prior;
}

}  // namespace deepicp::bench
