#pragma once

#include <cmath>
#include <vector>

#include "deepicp/core.hpp"
#include "deepicp/layers.hpp"

namespace deepicp::net {

struct GridConfig {
  double r_xy = 2.0;
  double s_xy = 0.4;
  double r_z = 2.0;
  double s_z = 0.25;

  // 2r/s must divide evenly so a center voxel exists; validated on use.
  int extent_xy() const;
  int extent_z() const;
  int candidate_count() const { return extent_xy() * extent_xy() * extent_z(); }
  void validate() const;
};

// Voxel-center candidates around a transformed keypoint, z-fastest
// row-major: index = ((ax * EY) + ay) * EZ + az.
struct CandidateGrid {
  Vec3 center;                   // x' = R x + T
  std::vector<Vec3> candidates;  // C entries
  int extent_xy = 0;
  int extent_z = 0;
};

CandidateGrid make_grid(const Vec3& keypoint, const RigidTransform& prior,
                        const GridConfig& config);

// The z-only column through x' used by the back network.
CandidateGrid make_column(const Vec3& keypoint, const RigidTransform& prior,
                          const GridConfig& config);

// Three-stage volumetric cost regularizer: Conv(16,3,1)-Conv(4,3,1)-Conv(1,3,1),
// ReLU after the first two stages, linear final.
class CostVolume3d {
 public:
  CostVolume3d(const std::string& prefix, ParameterStore& store, Rng& init_rng,
               int in_channels);

  // source_desc [32] or [1,32]; candidate_descs [C,32] laid out on the grid.
  // Returns C logits (z-fastest order).
  Tensor forward(Tape* tape, ParameterStore& store, const Tensor& source_desc,
                 const Tensor& candidate_descs, const CandidateGrid& grid) const;

 private:
  std::string prefix_;
  int in_channels_;
};

// 1D z-column analog with kernel width 3.
class CostVolume1d {
 public:
  CostVolume1d(const std::string& prefix, ParameterStore& store, Rng& init_rng,
               int in_channels);

  Tensor forward(Tape* tape, ParameterStore& store, const Tensor& source_desc,
                 const Tensor& candidate_descs, const CandidateGrid& column) const;

 private:
  std::string prefix_;
  int in_channels_;
};

// Eq.-style weighted candidate sum: probs [C] x candidates -> [1,3].
Tensor generate_point(Tape* tape, const CandidateGrid& grid, const Tensor& probs);

// 1D variant: x,y copied exactly from the column center, z from the
// weighted sum over the column.
Tensor generate_point_1d(Tape* tape, const CandidateGrid& column, const Tensor& probs);

}  // namespace deepicp::net
