#include <chrono>

#include "deepicp/pipeline.hpp"

namespace deepicp::pipeline {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Vec3> tensor_rows_to_vec3(const Tensor& t) {
  std::vector<Vec3> out;
  const int n = t.dim(0);
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out.emplace_back(t.data()[i * 3], t.data()[i * 3 + 1], t.data()[i * 3 + 2]);
  return out;
}

}  // namespace

RegistrationModel::RegistrationModel(const ModelConfig& config, ParameterStore& store,
                                     Rng& init_rng)
    : config_(config),
      fe_(config.fe, store, init_rng),
      front_weighting_("front.weight", store, init_rng),
      back_weighting_("back.weight", store, init_rng),
      front_dfe_("front.dfe", store, init_rng, config.dfe),
      back_dfe_("back.dfe", store, init_rng, config.dfe),
      front_cost_("front.cpg", store, init_rng, net::DfeLayer::kOutputWidth),
      back_cost_("back.cpg", store, init_rng, net::DfeLayer::kOutputWidth) {
  config_.validate();
}

net::FeatureCloud RegistrationModel::extract(Tape* tape, ParameterStore& store,
                                             const PointCloud& cloud, net::RunMode mode,
                                             Rng* rng) const {
  return fe_.forward(tape, store, cloud, mode, rng);
}

StageResult RegistrationModel::stage_forward(Tape* tape, ParameterStore& store,
                                             const net::FeatureCloud& source,
                                             const net::FeatureCloud& target,
                                             const RigidTransform& prior, Stage stage,
                                             net::RunMode mode) const {
  if (!prior.is_valid(1e-6)) {
    throw std::invalid_argument("stage_forward: prior transform is not a rotation");
  }
  const bool front = stage == Stage::kFront;
  const net::WeightingLayer& weighting = front ? front_weighting_ : back_weighting_;
  const net::DfeLayer& dfe = front ? front_dfe_ : back_dfe_;
  const ad::BnMode bn_mode =
      mode == net::RunMode::kTrain ? ad::BnMode::kTrain : ad::BnMode::kInfer;

  StageResult result;

  // Saliency scoring and selection.
  Tensor scores = weighting.forward(tape, store, source.descriptors, bn_mode,
                                    mode == net::RunMode::kTrain);
  net::KeypointSet keypoints =
      net::select_topk(scores, source.coords, config_.weighting.keypoints);
  result.keypoint_indices = keypoints.indices;
  const int n = static_cast<int>(keypoints.coords.size());

  // Source keypoint embeddings.
  int empty_src = 0;
  Tensor source_desc =
      dfe.describe(tape, store, source, keypoints.coords, &empty_src);

  // Candidate grids and their embeddings, batched across keypoints.
  std::vector<net::CandidateGrid> grids;
  grids.reserve(static_cast<std::size_t>(n));
  std::vector<Vec3> all_centers;
  for (int i = 0; i < n; ++i) {
    net::CandidateGrid grid =
        front ? net::make_grid(keypoints.coords[static_cast<std::size_t>(i)], prior,
                               config_.grid)
              : net::make_column(keypoints.coords[static_cast<std::size_t>(i)], prior,
                                 config_.grid);
    all_centers.insert(all_centers.end(), grid.candidates.begin(), grid.candidates.end());
    grids.push_back(std::move(grid));
  }
  const int c = static_cast<int>(grids.front().candidates.size());

  int empty_candidates = 0;
  Tensor candidate_desc = dfe.describe(tape, store, target, all_centers, &empty_candidates);
  result.empty_candidates = empty_candidates;

  // Per-keypoint cost volumes, probabilities and generated points.
  std::vector<Tensor> generated;
  std::vector<Tensor> prob_rows;
  generated.reserve(static_cast<std::size_t>(n));
  prob_rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor cand_i = ad::slice_rows(candidate_desc, i * c, c);
    Tensor src_i = ad::slice_rows(source_desc, i, 1);
    Tensor logits =
        front ? front_cost_.forward(tape, store, src_i, cand_i, grids[static_cast<std::size_t>(i)])
              : back_cost_.forward(tape, store, src_i, cand_i, grids[static_cast<std::size_t>(i)]);
    Tensor probs = ad::softmax(logits);
    prob_rows.push_back(ad::reshape(probs, {1, c}));
    generated.push_back(front
                            ? net::generate_point(tape, grids[static_cast<std::size_t>(i)], probs)
                            : net::generate_point_1d(tape, grids[static_cast<std::size_t>(i)], probs));
  }

  result.probabilities = ad::concat_rows(prob_rows);
  result.correspondences.x = keypoints.coords;
  result.correspondences.y = ad::concat_rows(generated);
  result.correspondences.weights = keypoints.weights;
  result.pose = weighted_kabsch(tape, result.correspondences);
  return result;
}

StageResult RegistrationModel::forward(Tape* tape, ParameterStore& store,
                                       const PointCloud& source, const PointCloud& target,
                                       const RigidTransform& prior, Stage stage,
                                       net::RunMode mode, Rng* rng) const {
  net::FeatureCloud fc_source = extract(tape, store, source, mode, rng);
  net::FeatureCloud fc_target = extract(tape, store, target, mode, rng);
  return stage_forward(tape, store, fc_source, fc_target, prior, stage, mode);
}

RegistrationResult RegistrationModel::cascade_infer(ParameterStore& store,
                                                    const PointCloud& source,
                                                    const PointCloud& target,
                                                    const RigidTransform& prior,
                                                    bool bidirectional,
                                                    bool cascade) const {
  const auto t0 = std::chrono::steady_clock::now();
  net::FeatureCloud fc_source =
      extract(nullptr, store, source, net::RunMode::kInfer, nullptr);
  net::FeatureCloud fc_target =
      extract(nullptr, store, target, net::RunMode::kInfer, nullptr);

  RegistrationResult result;
  result.diagnostics.seconds_fe = seconds_since(t0);

  const auto t1 = std::chrono::steady_clock::now();
  StageResult front = stage_forward(nullptr, store, fc_source, fc_target, prior,
                                    Stage::kFront, net::RunMode::kInfer);
  result.diagnostics.front_transform = to_transform(front.pose);
  result.diagnostics.empty_candidates += front.empty_candidates;

  StageResult final_stage = std::move(front);
  if (cascade) {
    StageResult back =
        stage_forward(nullptr, store, fc_source, fc_target,
                      result.diagnostics.front_transform, Stage::kBack,
                      net::RunMode::kInfer);
    result.diagnostics.back_transform = to_transform(back.pose);
    result.diagnostics.empty_candidates += back.empty_candidates;
    final_stage = std::move(back);
  } else {
    result.diagnostics.back_transform = result.diagnostics.front_transform;
  }

  result.keypoints = final_stage.correspondences.x;
  result.generated_points = tensor_rows_to_vec3(final_stage.correspondences.y);
  result.weights = final_stage.correspondences.weights.values();
  result.transform = to_transform(final_stage.pose);

  if (bidirectional) {
    // Same two-stage pass with the roles swapped, pairs inverted into the
    // forward frame, then one pooled solve.
    const RigidTransform prior_rev = prior.inverse();
    StageResult rev_front = stage_forward(nullptr, store, fc_target, fc_source, prior_rev,
                                          Stage::kFront, net::RunMode::kInfer);
    StageResult rev_final = std::move(rev_front);
    if (cascade) {
      rev_final = stage_forward(nullptr, store, fc_target, fc_source,
                                to_transform(rev_final.pose), Stage::kBack,
                                net::RunMode::kInfer);
    }
    result.diagnostics.reverse_transform = to_transform(rev_final.pose);
    result.diagnostics.empty_candidates += rev_final.empty_candidates;

    const std::vector<Vec3> rev_generated = tensor_rows_to_vec3(rev_final.correspondences.y);

    CorrespondenceSet pooled;
    pooled.x = final_stage.correspondences.x;
    pooled.x.insert(pooled.x.end(), rev_generated.begin(), rev_generated.end());

    const int n_fwd = final_stage.correspondences.y.dim(0);
    const int n_rev = static_cast<int>(rev_final.correspondences.x.size());
    Tensor y_pool({n_fwd + n_rev, 3});
    for (int i = 0; i < n_fwd * 3; ++i)
      y_pool.data()[i] = final_stage.correspondences.y.data()[i];
    for (int i = 0; i < n_rev; ++i)
      for (int a = 0; a < 3; ++a)
        y_pool.data()[(n_fwd + i) * 3 + a] =
            rev_final.correspondences.x[static_cast<std::size_t>(i)](a);

    Tensor w_pool({n_fwd + n_rev});
    for (int i = 0; i < n_fwd; ++i)
      w_pool.data()[i] = final_stage.correspondences.weights[i];
    for (int i = 0; i < n_rev; ++i)
      w_pool.data()[n_fwd + i] = rev_final.correspondences.weights[i];
    pooled.y = y_pool;
    pooled.weights = w_pool;

    result.transform = to_transform(weighted_kabsch(nullptr, pooled));
  }

  result.diagnostics.seconds_stages = seconds_since(t1);
  return result;
}

}  // namespace deepicp::pipeline
