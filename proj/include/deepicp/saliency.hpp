#pragma once

#include <vector>

#include "deepicp/core.hpp"
#include "deepicp/layers.hpp"

namespace deepicp::net {

struct WeightingConfig {
  int keypoints = 64;  // N

  void validate() const {
    if (keypoints < 3) {
      throw std::invalid_argument("WeightingConfig: need at least 3 keypoints");
    }
  }
};

// The N selected source points with their positive saliency weights,
// descending. Selection indices carry no gradient; the weight values stay
// differentiable.
struct KeypointSet {
  std::vector<int> indices;
  std::vector<Vec3> coords;
  Tensor weights;  // [N]
};

// 16 x 8 x 1 scoring MLP: two FC+BN+ReLU stages, then FC+softplus.
class WeightingLayer {
 public:
  WeightingLayer(const std::string& prefix, ParameterStore& store, Rng& init_rng);

  // descriptors [N1, 32] -> positive scores [N1, 1]. Train mode requires
  // N1 >= 2 (batch statistics over the point axis).
  Tensor forward(Tape* tape, ParameterStore& store, const Tensor& descriptors,
                 ad::BnMode mode, bool update_running) const;

 private:
  Dense fc1_, fc2_, fc3_;
  BatchNorm bn1_, bn2_;
};

// Indices of the n largest scores, descending, ties by lower index.
KeypointSet select_topk(const Tensor& scores, const std::vector<Vec3>& coords, int n);

}  // namespace deepicp::net
