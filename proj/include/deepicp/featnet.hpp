#pragma once

#include <array>
#include <memory>
#include <vector>

#include "deepicp/core.hpp"
#include "deepicp/layers.hpp"

namespace deepicp::net {

struct FEConfig {
  // Hierarchy sizes before scaling; strictly decreasing.
  std::array<int, 3> level_sizes{4096, 1024, 256};
  // Grouping radii per set-abstraction level (meters) and per-level caps.
  std::array<double, 3> radii{0.5, 1.0, 2.0};
  std::array<int, 3> caps{32, 32, 32};
  double dropout_keep = 0.7;
  // Level sizes divide by this for toy scenes; widths are unchanged so the
  // 32-d output interface is stable.
  int scale = 1;

  std::array<int, 3> scaled_levels() const;
  void validate() const;
};

// Per-point 32-d semantic descriptors plus the geometry they describe.
struct FeatureCloud {
  std::vector<Vec3> coords;
  std::vector<double> intensities;
  Tensor descriptors;  // [N, 32]
  std::shared_ptr<SpatialIndex> index;
};

// Greedy max-min subset selection. First seed is index 0; distance ties
// break toward the lowest index.
std::vector<int> farthest_point_sample(const std::vector<Vec3>& points, int m);

// Per-center neighborhood aggregation: gather <= cap neighbors within
// radius (cyclic duplication padding), express coordinates relative to the
// center, run the shared row MLP, max-pool per center. Centers with an
// empty neighborhood keep a zero feature and are flagged.
Tensor set_abstraction(Tape* tape, ParameterStore& store, const Mlp& mlp,
                       const std::vector<Vec3>& points, const Tensor& features,
                       const SpatialIndex& index, const std::vector<Vec3>& centers,
                       double radius, int cap, std::vector<bool>* empty_flags);

// Inverse-distance interpolation over the 3 nearest coarse points
// (weights 1/max(d, 1e-10), normalized), concatenated with skip features,
// passed through the shared MLP.
Tensor feature_propagation(Tape* tape, ParameterStore& store, const Mlp& mlp,
                           const std::vector<Vec3>& coarse_points,
                           const Tensor& coarse_features,
                           const std::vector<Vec3>& fine_points,
                           const Tensor& skip_features);

// Interpolation half of feature_propagation, exposed for the DFE-bypass
// ablation and for tests. Returns [n_fine, c] features.
Tensor interpolate_features(Tape* tape, const std::vector<Vec3>& coarse_points,
                            const Tensor& coarse_features,
                            const std::vector<Vec3>& fine_points);

enum class RunMode { kTrain, kInfer };

// Simplified hierarchical set-abstraction network: three down levels, three
// up levels, then a final 32-wide fully connected layer and dropout.
class FeatureExtractor {
 public:
  FeatureExtractor(const FEConfig& config, ParameterStore& store, Rng& init_rng);

  static constexpr int kDescriptorWidth = 32;

  // rng is consumed only in train mode (dropout mask).
  FeatureCloud forward(Tape* tape, ParameterStore& store, const PointCloud& cloud,
                       RunMode mode, Rng* rng) const;

  const FEConfig& config() const { return config_; }
  int min_point_count() const { return config_.scaled_levels()[0]; }

 private:
  FEConfig config_;
  Mlp down1_, down2_, down3_;
  Mlp up1_, up2_, up3_;
  Dense final_;
};

}  // namespace deepicp::net
