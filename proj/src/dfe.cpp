#include <algorithm>

#include "deepicp/dfe.hpp"

namespace deepicp::net {

int DFEConfig::row_width() const {
  switch (variant) {
    case DfeVariant::kFull:
      return 3 + 1 + FeatureExtractor::kDescriptorWidth;
    case DfeVariant::kLocalOnly:
      return 4;
    case DfeVariant::kFeatureOnly:
      return FeatureExtractor::kDescriptorWidth;
    case DfeVariant::kBypass:
      return FeatureExtractor::kDescriptorWidth;
  }
  throw std::logic_error("DFEConfig: unknown variant");
}

NeighborhoodBatch gather_neighborhoods(Tape* tape, const FeatureCloud& cloud,
                                       const std::vector<Vec3>& centers,
                                       const DFEConfig& config) {
  (void)tape;
  config.validate();
  if (config.variant == DfeVariant::kBypass) {
    throw std::invalid_argument("gather_neighborhoods: bypass variant has no blocks");
  }
  if (!cloud.index) throw std::invalid_argument("gather_neighborhoods: cloud has no index");
  if (centers.empty()) throw std::invalid_argument("gather_neighborhoods: no centers");
  const int nc = static_cast<int>(centers.size());
  const int k = config.k;
  const bool with_local = config.variant != DfeVariant::kFeatureOnly;
  const bool with_feat = config.variant != DfeVariant::kLocalOnly;
  const int local_width = with_local ? 4 : 0;

  NeighborhoodBatch batch;
  batch.k = k;
  batch.empty.assign(static_cast<std::size_t>(nc), false);

  Tensor local({nc * k, std::max(local_width, 1)});
  std::vector<int> gather_idx(static_cast<std::size_t>(nc) * k, 0);
  std::vector<double> keep_rows(static_cast<std::size_t>(nc) * k, 1.0);
  bool any_empty = false;

  for (int c = 0; c < nc; ++c) {
    const Vec3& center = centers[static_cast<std::size_t>(c)];
    std::vector<Neighbor> nbrs;
    try {
      nbrs = radius_neighbors(*cloud.index, center, config.radius, k);
    } catch (const EmptyNeighborhood&) {
      batch.empty[static_cast<std::size_t>(c)] = true;
      any_empty = true;
      for (int r = 0; r < k; ++r) keep_rows[static_cast<std::size_t>(c) * k + r] = 0.0;
      continue;
    }
    for (int r = 0; r < k; ++r) {
      const Neighbor& nb = nbrs[static_cast<std::size_t>(r)];
      gather_idx[static_cast<std::size_t>(c) * k + r] = nb.index;
      if (with_local) {
        const Vec3 d =
            (cloud.coords[static_cast<std::size_t>(nb.index)] - center) / config.radius;
        double* row = local.data() + (static_cast<std::ptrdiff_t>(c) * k + r) * 4;
        row[0] = d.x();
        row[1] = d.y();
        row[2] = d.z();
        row[3] = cloud.intensities[static_cast<std::size_t>(nb.index)];
      }
    }
  }

  Tensor rows;
  if (with_feat) {
    Tensor gathered = ad::gather_rows(cloud.descriptors, gather_idx);
    rows = with_local ? ad::concat_cols(local, gathered) : gathered;
  } else {
    rows = local;
  }
  if (any_empty) {
    rows = ad::scale_rows(rows, Tensor({nc * k}, std::move(keep_rows)));
  }
  batch.rows = rows;
  return batch;
}

DfeLayer::DfeLayer(const std::string& prefix, ParameterStore& store, Rng& init_rng,
                   const DFEConfig& config)
    : config_(config) {
  config_.validate();
  if (config_.variant != DfeVariant::kBypass) {
    mlp_ = Mlp::create(store, init_rng, prefix + ".mlp", config_.row_width(),
                       {32, 32, kOutputWidth}, Mlp::FinalAct::kLinear);
  }
}

Tensor DfeLayer::forward(Tape* tape, ParameterStore& store,
                         const NeighborhoodBatch& batch) const {
  if (config_.variant == DfeVariant::kBypass) {
    throw std::invalid_argument("dfe_forward: bypass variant has no embedding net");
  }
  if (batch.rows.rank() != 2 || batch.rows.dim(1) != config_.row_width()) {
    throw std::invalid_argument("dfe_forward: block width != configured row width");
  }
  Tensor activated = mlp_.forward(tape, store, batch.rows);
  return ad::max_pool_blocks(activated, batch.k);
}

Tensor DfeLayer::describe(Tape* tape, ParameterStore& store, const FeatureCloud& cloud,
                          const std::vector<Vec3>& centers, int* empty_count) const {
  if (config_.variant == DfeVariant::kBypass) {
    if (empty_count) *empty_count = 0;
    return interpolate_features(tape, cloud.coords, cloud.descriptors, centers);
  }
  NeighborhoodBatch batch = gather_neighborhoods(tape, cloud, centers, config_);
  if (empty_count) {
    *empty_count = static_cast<int>(
        std::count(batch.empty.begin(), batch.empty.end(), true));
  }
  return forward(tape, store, batch);
}

}  // namespace deepicp::net
