#pragma once

#include <vector>

#include "deepicp/featnet.hpp"

namespace deepicp::net {

// Input assemblies for the embedding rows (the last three are the ablation
// switches).
enum class DfeVariant {
  kFull,         // local coords + intensity + FE descriptor, width 36
  kLocalOnly,    // local coords + intensity, width 4
  kFeatureOnly,  // FE descriptor, width 32
  kBypass,       // no embedding net; FE features interpolated at the centers
};

struct DFEConfig {
  double radius = 1.0;  // searching range d
  int k = 32;           // neighbor cap K
  DfeVariant variant = DfeVariant::kFull;

  int row_width() const;
  void validate() const {
    if (!(radius > 0.0)) throw std::invalid_argument("DFEConfig: radius must be > 0");
    if (k < 1) throw std::invalid_argument("DFEConfig: k must be >= 1");
  }
};

// K-row neighborhood blocks for a batch of centers. Local coordinates are
// normalized by the searching radius; blocks of empty windows are all-zero
// and flagged.
struct NeighborhoodBatch {
  Tensor rows;              // [centers * K, row_width]
  std::vector<bool> empty;  // per center
  int k = 0;
};

NeighborhoodBatch gather_neighborhoods(Tape* tape, const FeatureCloud& cloud,
                                       const std::vector<Vec3>& centers,
                                       const DFEConfig& config);

// Mini-PointNet: shared 32x32x32 row MLP followed by a per-channel max over
// each K-row block. Zero-flagged blocks yield the MLP-of-zero-row response.
class DfeLayer {
 public:
  DfeLayer(const std::string& prefix, ParameterStore& store, Rng& init_rng,
           const DFEConfig& config);

  static constexpr int kOutputWidth = 32;

  // -> [centers, 32]
  Tensor forward(Tape* tape, ParameterStore& store, const NeighborhoodBatch& batch) const;

  // Full descriptor path for a batch of centers, honoring the configured
  // variant (including the bypass interpolation).
  Tensor describe(Tape* tape, ParameterStore& store, const FeatureCloud& cloud,
                  const std::vector<Vec3>& centers, int* empty_count) const;

  const DFEConfig& config() const { return config_; }

 private:
  DFEConfig config_;
  Mlp mlp_;
};

}  // namespace deepicp::net
