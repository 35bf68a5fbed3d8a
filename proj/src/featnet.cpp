#include <cmath>
#include <limits>

#include "deepicp/featnet.hpp"

namespace deepicp::net {

// ---- layers ---------------------------------------------------------------

Dense Dense::create(ParameterStore& store, Rng& rng, const std::string& prefix, int in,
                    int out) {
  Dense d{prefix, in, out};
  store.create(prefix + ".w", {in, out}, in, out, rng);
  store.create_const(prefix + ".b", {out}, 0.0, true);
  return d;
}

Tensor Dense::forward(Tape* tape, ParameterStore& store, const Tensor& x) const {
  return ad::fully_connected(x, store.use(tape, prefix + ".w"),
                             store.use(tape, prefix + ".b"));
}

Mlp Mlp::create(ParameterStore& store, Rng& rng, const std::string& prefix, int in,
                const std::vector<int>& widths, FinalAct final_act) {
  if (widths.empty()) throw std::invalid_argument("Mlp: empty width list");
  Mlp mlp;
  mlp.final_act = final_act;
  int cur = in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    mlp.layers.push_back(
        Dense::create(store, rng, prefix + ".fc" + std::to_string(i), cur, widths[i]));
    cur = widths[i];
  }
  return mlp;
}

Tensor Mlp::forward(Tape* tape, ParameterStore& store, const Tensor& rows) const {
  Tensor h = rows;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(tape, store, h);
    const bool last = i + 1 == layers.size();
    if (!last || final_act == FinalAct::kRelu) h = ad::relu(h);
  }
  return h;
}

BatchNorm BatchNorm::create(ParameterStore& store, const std::string& prefix,
                            int channels) {
  BatchNorm bn{prefix, channels};
  store.create_const(prefix + ".gamma", {channels}, 1.0, true);
  store.create_const(prefix + ".beta", {channels}, 0.0, true);
  store.create_const(prefix + ".rmean", {channels}, 0.0, false);
  store.create_const(prefix + ".rvar", {channels}, 1.0, false);
  return bn;
}

Tensor BatchNorm::forward(Tape* tape, ParameterStore& store, const Tensor& x,
                          ad::BnMode mode, bool update_running) const {
  std::vector<double>& rmean = store.entry(prefix + ".rmean").tensor.values();
  std::vector<double>& rvar = store.entry(prefix + ".rvar").tensor.values();
  return ad::batch_norm(x, store.use(tape, prefix + ".gamma"),
                        store.use(tape, prefix + ".beta"), mode, &rmean, &rvar,
                        update_running && tape != nullptr);
}

// ---- geometry helpers -------------------------------------------------------

std::array<int, 3> FEConfig::scaled_levels() const {
  std::array<int, 3> out{};
  for (int i = 0; i < 3; ++i) {
    out[static_cast<std::size_t>(i)] =
        std::max(4, level_sizes[static_cast<std::size_t>(i)] / std::max(1, scale));
  }
  return out;
}

void FEConfig::validate() const {
  if (!(level_sizes[0] > level_sizes[1] && level_sizes[1] > level_sizes[2])) {
    throw std::invalid_argument("FEConfig: level sizes must be strictly decreasing");
  }
  for (double r : radii) {
    if (!(r > 0.0)) throw std::invalid_argument("FEConfig: radii must be positive");
  }
  for (int c : caps) {
    if (c < 1) throw std::invalid_argument("FEConfig: caps must be >= 1");
  }
  if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) {
    throw std::invalid_argument("FEConfig: dropout keep probability must be in (0, 1]");
  }
  if (scale < 1) throw std::invalid_argument("FEConfig: scale must be >= 1");
}

std::vector<int> farthest_point_sample(const std::vector<Vec3>& points, int m) {
  const int n = static_cast<int>(points.size());
  if (m > n) {
    throw std::invalid_argument("farthest_point_sample: m = " + std::to_string(m) +
                                " exceeds point count " + std::to_string(n));
  }
  if (m < 1) throw std::invalid_argument("farthest_point_sample: m must be >= 1");
  std::vector<int> selected;
  selected.reserve(static_cast<std::size_t>(m));
  std::vector<double> dist(static_cast<std::size_t>(n),
                           std::numeric_limits<double>::infinity());
  int cur = 0;
  selected.push_back(cur);
  for (int k = 1; k < m; ++k) {
    int best = -1;
    double best_dist = -1.0;
    for (int i = 0; i < n; ++i) {
      const double d = (points[static_cast<std::size_t>(i)] -
                        points[static_cast<std::size_t>(cur)])
                           .squaredNorm();
      if (d < dist[static_cast<std::size_t>(i)]) dist[static_cast<std::size_t>(i)] = d;
      if (dist[static_cast<std::size_t>(i)] > best_dist) {
        best_dist = dist[static_cast<std::size_t>(i)];
        best = i;
      }
    }
    cur = best;
    selected.push_back(cur);
  }
  return selected;
}

Tensor set_abstraction(Tape* tape, ParameterStore& store, const Mlp& mlp,
                       const std::vector<Vec3>& points, const Tensor& features,
                       const SpatialIndex& index, const std::vector<Vec3>& centers,
                       double radius, int cap, std::vector<bool>* empty_flags) {
  const int nc = static_cast<int>(centers.size());
  const int feat_width = features.dim(1);
  if (features.dim(0) != static_cast<int>(points.size())) {
    throw std::invalid_argument("set_abstraction: feature row count != point count");
  }

  std::vector<int> gather_idx(static_cast<std::size_t>(nc) * cap, 0);
  Tensor rel({nc * cap, 3});
  std::vector<double> keep(static_cast<std::size_t>(nc), 1.0);
  bool any_empty = false;

  for (int c = 0; c < nc; ++c) {
    const Vec3& center = centers[static_cast<std::size_t>(c)];
    std::vector<Neighbor> nbrs;
    try {
      nbrs = radius_neighbors(index, center, radius, cap);
    } catch (const EmptyNeighborhood&) {
      keep[static_cast<std::size_t>(c)] = 0.0;
      any_empty = true;
      if (empty_flags) (*empty_flags)[static_cast<std::size_t>(c)] = true;
      continue;  // rows stay zero, gather index 0 (masked out below)
    }
    for (int r = 0; r < cap; ++r) {
      const Neighbor& nb = nbrs[static_cast<std::size_t>(r)];
      gather_idx[static_cast<std::size_t>(c) * cap + r] = nb.index;
      const Vec3 d = points[static_cast<std::size_t>(nb.index)] - center;
      double* row = rel.data() + (static_cast<std::ptrdiff_t>(c) * cap + r) * 3;
      row[0] = d.x();
      row[1] = d.y();
      row[2] = d.z();
    }
  }

  Tensor gathered = ad::gather_rows(features, gather_idx);
  Tensor rows = ad::concat_cols(rel, gathered);
  if (any_empty) {
    // Zero the rows of empty centers so they pool to the bias response, then
    // zero the pooled feature itself.
    std::vector<double> row_keep(static_cast<std::size_t>(nc) * cap);
    for (int c = 0; c < nc; ++c)
      for (int r = 0; r < cap; ++r)
        row_keep[static_cast<std::size_t>(c) * cap + r] = keep[static_cast<std::size_t>(c)];
    rows = ad::scale_rows(rows, Tensor({nc * cap}, std::move(row_keep)));
  }
  Tensor activated = mlp.forward(tape, store, rows);
  Tensor pooled = ad::max_pool_blocks(activated, cap);
  if (any_empty) {
    pooled = ad::scale_rows(pooled, Tensor({nc}, std::move(keep)));
  }
  return pooled;
}

Tensor interpolate_features(Tape* tape, const std::vector<Vec3>& coarse_points,
                            const Tensor& coarse_features,
                            const std::vector<Vec3>& fine_points) {
  (void)tape;  // graph structure comes from the gathered tensor itself
  if (coarse_features.dim(0) != static_cast<int>(coarse_points.size())) {
    throw std::invalid_argument("interpolate_features: row count != coarse point count");
  }
  const int nf = static_cast<int>(fine_points.size());
  const int k = std::min<int>(3, static_cast<int>(coarse_points.size()));

  PointCloud coarse_cloud;
  coarse_cloud.points.reserve(coarse_points.size());
  for (const Vec3& p : coarse_points) coarse_cloud.points.push_back({p.x(), p.y(), p.z(), 0.0});
  SpatialIndex coarse_index(coarse_cloud);

  std::vector<int> idx(static_cast<std::size_t>(nf) * k);
  std::vector<double> weights(static_cast<std::size_t>(nf) * k);
  for (int i = 0; i < nf; ++i) {
    const std::vector<Neighbor> nn =
        coarse_index.knn_search(fine_points[static_cast<std::size_t>(i)], k);
    double wsum = 0.0;
    for (int j = 0; j < k; ++j) {
      const double w = 1.0 / std::max(nn[static_cast<std::size_t>(j)].distance, 1e-10);
      weights[static_cast<std::size_t>(i) * k + j] = w;
      idx[static_cast<std::size_t>(i) * k + j] = nn[static_cast<std::size_t>(j)].index;
      wsum += w;
    }
    for (int j = 0; j < k; ++j) weights[static_cast<std::size_t>(i) * k + j] /= wsum;
  }

  Tensor gathered = ad::gather_rows(coarse_features, idx);
  Tensor scaled = ad::scale_rows(gathered, Tensor({nf * k}, std::move(weights)));
  return ad::sum_blocks(scaled, k);
}

Tensor feature_propagation(Tape* tape, ParameterStore& store, const Mlp& mlp,
                           const std::vector<Vec3>& coarse_points,
                           const Tensor& coarse_features,
                           const std::vector<Vec3>& fine_points,
                           const Tensor& skip_features) {
  if (skip_features.dim(0) != static_cast<int>(fine_points.size())) {
    throw std::invalid_argument("feature_propagation: skip row count != fine point count");
  }
  Tensor interp = interpolate_features(tape, coarse_points, coarse_features, fine_points);
  Tensor rows = ad::concat_cols(interp, skip_features);
  return mlp.forward(tape, store, rows);
}

// ---- feature extractor -----------------------------------------------------

FeatureExtractor::FeatureExtractor(const FEConfig& config, ParameterStore& store,
                                   Rng& init_rng)
    : config_(config) {
  config_.validate();
  // Rel-coords (3) + intensity (1) feed the first level.
  down1_ = Mlp::create(store, init_rng, "fe.sa1", 4, {32, 32}, Mlp::FinalAct::kRelu);
  down2_ = Mlp::create(store, init_rng, "fe.sa2", 3 + 32, {32, 64}, Mlp::FinalAct::kRelu);
  down3_ = Mlp::create(store, init_rng, "fe.sa3", 3 + 64, {64, 64}, Mlp::FinalAct::kRelu);
  up1_ = Mlp::create(store, init_rng, "fe.fp1", 64 + 64, {64, 64}, Mlp::FinalAct::kRelu);
  up2_ = Mlp::create(store, init_rng, "fe.fp2", 64 + 32, {32, 32}, Mlp::FinalAct::kRelu);
  up3_ = Mlp::create(store, init_rng, "fe.fp3", 32 + 1, {32, 32, 32}, Mlp::FinalAct::kRelu);
  final_ = Dense::create(store, init_rng, "fe.final", 32, kDescriptorWidth);
}

FeatureCloud FeatureExtractor::forward(Tape* tape, ParameterStore& store,
                                       const PointCloud& cloud, RunMode mode,
                                       Rng* rng) const {
  validate_cloud(cloud, "fe_forward");
  const std::array<int, 3> levels = config_.scaled_levels();
  const int n = static_cast<int>(cloud.size());
  if (n < levels[0]) {
    throw std::invalid_argument("fe_forward: cloud has " + std::to_string(n) +
                                " points, needs at least " + std::to_string(levels[0]));
  }

  FeatureCloud fc;
  fc.coords.reserve(cloud.size());
  fc.intensities.reserve(cloud.size());
  for (const Point& p : cloud.points) {
    fc.coords.push_back(p.position());
    fc.intensities.push_back(p.intensity);
  }
  fc.index = std::make_shared<SpatialIndex>(cloud);

  Tensor f0({n, 1});
  for (int i = 0; i < n; ++i) f0.data()[i] = fc.intensities[static_cast<std::size_t>(i)];

  // Down path.
  const std::vector<int> idx1 = farthest_point_sample(fc.coords, levels[0]);
  std::vector<Vec3> p1;
  p1.reserve(idx1.size());
  for (int i : idx1) p1.push_back(fc.coords[static_cast<std::size_t>(i)]);
  Tensor f1 = set_abstraction(tape, store, down1_, fc.coords, f0, *fc.index, p1,
                              config_.radii[0], config_.caps[0], nullptr);

  PointCloud c1;
  for (const Vec3& p : p1) c1.points.push_back({p.x(), p.y(), p.z(), 0.0});
  SpatialIndex i1(c1);
  const std::vector<int> idx2 = farthest_point_sample(p1, levels[1]);
  std::vector<Vec3> p2;
  p2.reserve(idx2.size());
  for (int i : idx2) p2.push_back(p1[static_cast<std::size_t>(i)]);
  Tensor f2 = set_abstraction(tape, store, down2_, p1, f1, i1, p2, config_.radii[1],
                              config_.caps[1], nullptr);

  PointCloud c2;
  for (const Vec3& p : p2) c2.points.push_back({p.x(), p.y(), p.z(), 0.0});
  SpatialIndex i2(c2);
  const std::vector<int> idx3 = farthest_point_sample(p2, levels[2]);
  std::vector<Vec3> p3;
  p3.reserve(idx3.size());
  for (int i : idx3) p3.push_back(p2[static_cast<std::size_t>(i)]);
  Tensor f3 = set_abstraction(tape, store, down3_, p2, f2, i2, p3, config_.radii[2],
                              config_.caps[2], nullptr);

  // Up path with skip connections.
  Tensor u2 = feature_propagation(tape, store, up1_, p3, f3, p2, f2);
  Tensor u1 = feature_propagation(tape, store, up2_, p2, u2, p1, f1);
  Tensor u0 = feature_propagation(tape, store, up3_, p1, u1, fc.coords, f0);

  Tensor desc = final_.forward(tape, store, u0);
  if (mode == RunMode::kTrain) {
    if (rng == nullptr) {
      throw std::invalid_argument("fe_forward: train mode requires an rng for dropout");
    }
    desc = ad::dropout(desc, config_.dropout_keep, true, *rng);
  }
  fc.descriptors = desc;
  return fc;
}

}  // namespace deepicp::net
