#include <cmath>

#include "deepicp/bench.hpp"

namespace deepicp::bench {

IcpResult icp_point2point(const PointCloud& source, const PointCloud& target,
                          const RigidTransform& prior, const IcpParams& params) {
  validate_cloud(source, "icp_point2point source");
  validate_cloud(target, "icp_point2point target");
  if (params.max_iter < 1) throw std::invalid_argument("icp: max_iter must be >= 1");
  if (!(params.max_pair_dist > 0.0)) {
    throw std::invalid_argument("icp: max_pair_dist must be > 0");
  }

  const SpatialIndex target_index(target);
  std::vector<Vec3> src;
  src.reserve(source.size());
  for (const Point& p : source.points) src.push_back(p.position());

  IcpResult result;
  result.transform = prior;

  for (int iter = 0; iter < params.max_iter; ++iter) {
    // Pairing under the current transform.
    std::vector<Vec3> paired_src, paired_tgt;
    double obj_before = 0.0;
    for (const Vec3& x : src) {
      const Vec3 moved = result.transform.apply(x);
      const std::vector<Neighbor> nn = target_index.knn_search(moved, 1);
      if (nn.empty() || nn[0].distance > params.max_pair_dist) continue;
      paired_src.push_back(x);
      paired_tgt.push_back(target.points[static_cast<std::size_t>(nn[0].index)].position());
      obj_before += nn[0].distance * nn[0].distance;
    }
    if (paired_src.size() < 3) {
      throw NoOverlap("icp: only " + std::to_string(paired_src.size()) +
                      " pairs within " + std::to_string(params.max_pair_dist) +
                      " m at iteration " + std::to_string(iter));
    }
    obj_before /= static_cast<double>(paired_src.size());

    const std::vector<double> w(paired_src.size(), 1.0);
    const RigidTransform updated = rigid_align(paired_src, paired_tgt, w);

    double obj_after = 0.0;
    for (std::size_t i = 0; i < paired_src.size(); ++i) {
      obj_after += (paired_tgt[i] - updated.apply(paired_src[i])).squaredNorm();
    }
    obj_after /= static_cast<double>(paired_src.size());

    result.objective_before.push_back(obj_before);
    result.objective_after.push_back(obj_after);

    const double delta = (updated.rotation - result.transform.rotation).norm() +
                         (updated.translation - result.transform.translation).norm();
    result.transform = updated;
    result.iterations = iter + 1;
    if (delta < params.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace deepicp::bench
