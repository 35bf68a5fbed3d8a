#include "deepicp/cpg.hpp"

namespace deepicp::net {

namespace {

// 2r/s + 1 when 2r/s is an integer (within rounding), else -1.
int grid_extent(double r, double s) {
  if (!(r > 0.0) || !(s > 0.0)) return -1;
  const double steps = 2.0 * r / s;
  const double rounded = std::round(steps);
  if (std::abs(steps - rounded) > 1e-9) return -1;
  return static_cast<int>(rounded) + 1;
}

}  // namespace

int GridConfig::extent_xy() const {
  const int e = grid_extent(r_xy, s_xy);
  if (e < 0) {
    throw std::invalid_argument("GridConfig: 2*r_xy/s_xy is not an integer");
  }
  return e;
}

int GridConfig::extent_z() const {
  const int e = grid_extent(r_z, s_z);
  if (e < 0) {
    throw std::invalid_argument("GridConfig: 2*r_z/s_z is not an integer");
  }
  return e;
}

void GridConfig::validate() const {
  extent_xy();
  extent_z();
}

CandidateGrid make_grid(const Vec3& keypoint, const RigidTransform& prior,
                        const GridConfig& config) {
  config.validate();
  CandidateGrid grid;
  grid.extent_xy = config.extent_xy();
  grid.extent_z = config.extent_z();
  grid.center = prior.apply(keypoint);
  const int half_xy = (grid.extent_xy - 1) / 2;
  const int half_z = (grid.extent_z - 1) / 2;
  grid.candidates.reserve(static_cast<std::size_t>(config.candidate_count()));
  for (int ax = -half_xy; ax <= half_xy; ++ax) {
    for (int ay = -half_xy; ay <= half_xy; ++ay) {
      for (int az = -half_z; az <= half_z; ++az) {
        grid.candidates.push_back(grid.center +
                                  Vec3(ax * config.s_xy, ay * config.s_xy, az * config.s_z));
      }
    }
  }
  return grid;
}

CandidateGrid make_column(const Vec3& keypoint, const RigidTransform& prior,
                          const GridConfig& config) {
  config.validate();
  CandidateGrid column;
  column.extent_xy = 1;
  column.extent_z = config.extent_z();
  column.center = prior.apply(keypoint);
  const int half_z = (column.extent_z - 1) / 2;
  column.candidates.reserve(static_cast<std::size_t>(column.extent_z));
  for (int az = -half_z; az <= half_z; ++az) {
    column.candidates.push_back(column.center + Vec3(0.0, 0.0, az * config.s_z));
  }
  return column;
}

namespace {

Tensor difference_rows(const Tensor& source_desc, const Tensor& candidate_descs,
                       int expected_rows, int channels) {
  if (candidate_descs.rank() != 2 || candidate_descs.dim(1) != channels) {
    throw std::invalid_argument("cost_volume: candidate descriptors must be [C," +
                                std::to_string(channels) + "]");
  }
  if (candidate_descs.dim(0) != expected_rows) {
    throw std::invalid_argument(
        "cost_volume: candidate count " + std::to_string(candidate_descs.dim(0)) +
        " does not match grid extents (" + std::to_string(expected_rows) + ")");
  }
  if (source_desc.size() != channels) {
    throw std::invalid_argument("cost_volume: source descriptor width mismatch");
  }
  Tensor src_row = source_desc.rank() == 2 ? source_desc
                                           : ad::reshape(source_desc, {1, channels});
  // Source minus candidate, per channel.
  return ad::sub(ad::repeat_rows(src_row, expected_rows), candidate_descs);
}

}  // namespace

CostVolume3d::CostVolume3d(const std::string& prefix, ParameterStore& store,
                           Rng& init_rng, int in_channels)
    : prefix_(prefix), in_channels_(in_channels) {
  const int widths[3] = {16, 4, 1};
  int cur = in_channels;
  for (int stage = 0; stage < 3; ++stage) {
    const std::string name = prefix_ + ".conv" + std::to_string(stage);
    const int fan = 27 * cur;
    store.create(name + ".k", {widths[stage], 3, 3, 3, cur}, fan, 27 * widths[stage],
                 init_rng);
    store.create_const(name + ".b", {widths[stage]}, 0.0, true);
    cur = widths[stage];
  }
}

Tensor CostVolume3d::forward(Tape* tape, ParameterStore& store, const Tensor& source_desc,
                             const Tensor& candidate_descs,
                             const CandidateGrid& grid) const {
  const int ex = grid.extent_xy, ez = grid.extent_z;
  const int c = ex * ex * ez;
  Tensor diff = difference_rows(source_desc, candidate_descs, c, in_channels_);
  Tensor volume = ad::reshape(diff, {ex, ex, ez, in_channels_});
  Tensor h = ad::conv3d(volume, store.use(tape, prefix_ + ".conv0.k"),
                        store.use(tape, prefix_ + ".conv0.b"));
  h = ad::relu(h);
  h = ad::conv3d(h, store.use(tape, prefix_ + ".conv1.k"),
                 store.use(tape, prefix_ + ".conv1.b"));
  h = ad::relu(h);
  h = ad::conv3d(h, store.use(tape, prefix_ + ".conv2.k"),
                 store.use(tape, prefix_ + ".conv2.b"));
  return ad::reshape(h, {c});
}

CostVolume1d::CostVolume1d(const std::string& prefix, ParameterStore& store,
                           Rng& init_rng, int in_channels)
    : prefix_(prefix), in_channels_(in_channels) {
  const int widths[3] = {16, 4, 1};
  int cur = in_channels;
  for (int stage = 0; stage < 3; ++stage) {
    const std::string name = prefix_ + ".conv" + std::to_string(stage);
    store.create(name + ".k", {widths[stage], 3, cur}, 3 * cur, 3 * widths[stage],
                 init_rng);
    store.create_const(name + ".b", {widths[stage]}, 0.0, true);
    cur = widths[stage];
  }
}

Tensor CostVolume1d::forward(Tape* tape, ParameterStore& store, const Tensor& source_desc,
                             const Tensor& candidate_descs,
                             const CandidateGrid& column) const {
  const int l = column.extent_z;
  Tensor diff = difference_rows(source_desc, candidate_descs, l, in_channels_);
  Tensor h = ad::conv1d(diff, store.use(tape, prefix_ + ".conv0.k"),
                        store.use(tape, prefix_ + ".conv0.b"));
  h = ad::relu(h);
  h = ad::conv1d(h, store.use(tape, prefix_ + ".conv1.k"),
                 store.use(tape, prefix_ + ".conv1.b"));
  h = ad::relu(h);
  h = ad::conv1d(h, store.use(tape, prefix_ + ".conv2.k"),
                 store.use(tape, prefix_ + ".conv2.b"));
  return ad::reshape(h, {l});
}

Tensor generate_point(Tape* tape, const CandidateGrid& grid, const Tensor& probs) {
  (void)tape;
  const int c = static_cast<int>(grid.candidates.size());
  if (probs.size() != c) {
    throw std::invalid_argument("generate_point: probability count != candidate count");
  }
  Tensor cands({c, 3});
  for (int j = 0; j < c; ++j) {
    const Vec3& y = grid.candidates[static_cast<std::size_t>(j)];
    cands.data()[j * 3 + 0] = y.x();
    cands.data()[j * 3 + 1] = y.y();
    cands.data()[j * 3 + 2] = y.z();
  }
  Tensor row = probs.rank() == 2 ? probs : ad::reshape(probs, {1, c});
  return ad::matmul(row, cands);  // [1,3]
}

Tensor generate_point_1d(Tape* tape, const CandidateGrid& column, const Tensor& probs) {
  (void)tape;
  const int l = static_cast<int>(column.candidates.size());
  if (probs.size() != l) {
    throw std::invalid_argument("generate_point_1d: probability count != column length");
  }
  Tensor zs({l, 1});
  for (int j = 0; j < l; ++j) zs.data()[j] = column.candidates[static_cast<std::size_t>(j)].z();
  Tensor row = probs.rank() == 2 ? probs : ad::reshape(probs, {1, l});
  Tensor z = ad::matmul(row, zs);  // [1,1]
  // x and y are copied from the column center exactly, by construction.
  Tensor xy({1, 2});
  xy.data()[0] = column.center.x();
  xy.data()[1] = column.center.y();
  return ad::concat_cols(xy, z);  // [1,3]
}

}  // namespace deepicp::net
