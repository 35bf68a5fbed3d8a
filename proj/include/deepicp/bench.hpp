#pragma once

#include <functional>
#include <string>
#include <vector>

#include "deepicp/core.hpp"
#include "deepicp/rng.hpp"

namespace deepicp::bench {

// Desk-scale LiDAR-like scene: ground plane plus poles, boxes and tree-like
// clusters, with a few clusters displaced between the two frames to emulate
// dynamic objects.
struct SceneConfig {
  std::uint64_t seed = 1;
  double extent = 20.0;  // square side, meters
  int ground_points = 1100;
  int poles = 10;
  int boxes = 7;
  int trees = 6;
  int dynamic_clusters = 2;
  double dynamic_displacement = 2.0;  // per-frame cluster motion bound
  int points_per_pole = 45;
  int points_per_box = 70;
  int points_per_tree = 60;
  int points_per_dynamic = 60;
  double jitter = 0.02;            // per-point sigma, meters
  double viewpoint_offset = 0.0;   // target keeps points near a shifted viewpoint
  // Ground-truth transform ranges.
  double gt_xy = 1.5;
  double gt_z = 0.3;
  double gt_yaw_deg = 5.0;
  double gt_tilt_deg = 1.0;

  void validate() const;
};

struct ScenePair {
  PointCloud source;
  PointCloud target;
  RigidTransform ground_truth;
};

// Deterministic under seed: identical seeds yield bitwise-identical clouds.
ScenePair synth_scene(const SceneConfig& config);

// Prior construction: per-axis uniform noise in [0, range] composed onto the
// ground truth; rotation noise applied as roll-pitch-yaw in that order.
// Draw order: tx, ty, tz, roll, pitch, yaw.
RigidTransform perturb(const RigidTransform& ground_truth, double translation_range,
                       double rotation_range_deg, Rng& rng);

struct IcpParams {
  int max_iter = 50;
  double tol = 1e-6;
  double max_pair_dist = 2.0;
};

struct NoOverlap : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IcpResult {
  RigidTransform transform;
  int iterations = 0;
  bool converged = false;
  // Mean squared pair distance before/after each inner solve (same pairing);
  // after <= before is guaranteed by the exact solve.
  std::vector<double> objective_before;
  std::vector<double> objective_after;
};

// Classic point-to-point ICP: nearest-neighbor pairing under the current
// transform (pairs beyond max_pair_dist rejected), unweighted closed-form
// solve, until the parameter change drops below tol or max_iter.
IcpResult icp_point2point(const PointCloud& source, const PointCloud& target,
                          const RigidTransform& prior, const IcpParams& params = {});

struct EvalPair {
  std::string id;
  PointCloud source;
  PointCloud target;
  RigidTransform prior;
  RigidTransform ground_truth;
};

struct EvalReport {
  std::string method;
  std::vector<std::string> pair_ids;
  std::vector<RegistrationError> errors;
  double mean_angular_deg = 0.0;
  double max_angular_deg = 0.0;
  double mean_translational_m = 0.0;
  double max_translational_m = 0.0;
};

using RegistrationMethod = std::function<RigidTransform(
    const PointCloud& source, const PointCloud& target, const RigidTransform& prior)>;

EvalReport evaluate(const std::vector<EvalPair>& pairs, const std::string& method_name,
                    const RegistrationMethod& method);

std::string render_table(const std::vector<EvalReport>& reports);
std::string render_csv(const std::vector<EvalReport>& reports);

}  // namespace deepicp::bench
