#pragma once

#include <functional>
#include <optional>
#include <ostream>

#include "deepicp/cpg.hpp"
#include "deepicp/dfe.hpp"
#include "deepicp/featnet.hpp"
#include "deepicp/saliency.hpp"

namespace deepicp::pipeline {

using ad::ParameterStore;
using ad::Tape;
using ad::Tensor;

// Source keypoints with their generated targets and positive weights
// (renormalized to sum 1 inside weighted_kabsch).
struct CorrespondenceSet {
  std::vector<Vec3> x;  // N source keypoints
  Tensor y;             // [N, 3] generated points
  Tensor weights;       // [N] positive
};

struct KabschResult {
  Tensor rotation;     // [3, 3]
  Tensor translation;  // [1, 3]
  bool degenerate = false;  // near-coinciding spectrum / reflection ambiguity
};

// Weighted least-squares rigid solve through the differentiable SVD:
// H = sum_i w_i (x_i - xbar)(y_i - ybar)^T, R = V diag(1,1,det(VU^T)) U^T,
// T = ybar - R xbar. Fully differentiable in y and the weights.
KabschResult weighted_kabsch(Tape* tape, const CorrespondenceSet& corr);

RigidTransform to_transform(const KabschResult& result);

// Mean over keypoints of the componentwise absolute residual sum.
Tensor loss1(Tape* tape, const Tensor& generated, const std::vector<Vec3>& ground_truth);

// Same L1 convention against (R x_i + T) with the pose solved in-graph.
Tensor loss2(Tape* tape, const CorrespondenceSet& corr,
             const std::vector<Vec3>& ground_truth);

struct LossConfig {
  double alpha = 0.6;
  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw std::invalid_argument("LossConfig: alpha must be in [0, 1]");
    }
  }
};

Tensor combined_loss(const Tensor& l1, const Tensor& l2, const LossConfig& config);

// ---- network assembly -------------------------------------------------------

enum class Stage { kFront, kBack };

struct ModelConfig {
  net::FEConfig fe;
  net::WeightingConfig weighting;
  net::DFEConfig dfe;
  net::GridConfig grid;  // xy extents feed the front stage; z also the back
  LossConfig loss;

  void validate() const {
    fe.validate();
    weighting.validate();
    dfe.validate();
    grid.validate();
    loss.validate();
  }
};

struct StageResult {
  std::vector<int> keypoint_indices;
  CorrespondenceSet correspondences;
  Tensor probabilities;  // [N, C] candidate probabilities
  KabschResult pose;
  int empty_candidates = 0;  // candidate windows with no target points
};

struct RegistrationDiagnostics {
  RigidTransform front_transform;
  RigidTransform back_transform;
  std::optional<RigidTransform> reverse_transform;  // bidirectional only
  double seconds_fe = 0.0;
  double seconds_stages = 0.0;
  int empty_candidates = 0;
};

struct RegistrationResult {
  RigidTransform transform;
  std::vector<Vec3> keypoints;         // final-stage source keypoints
  std::vector<Vec3> generated_points;  // their generated correspondences
  std::vector<double> weights;
  RegistrationDiagnostics diagnostics;
};

// The end-to-end network: shared FE, plus per-stage weighting / embedding /
// cost-volume parameters ("front.*" 3D, "back.*" 1D z-only).
class RegistrationModel {
 public:
  RegistrationModel(const ModelConfig& config, ParameterStore& store, Rng& init_rng);

  const ModelConfig& config() const { return config_; }
  const net::FeatureExtractor& feature_extractor() const { return fe_; }

  net::FeatureCloud extract(Tape* tape, ParameterStore& store, const PointCloud& cloud,
                            net::RunMode mode, Rng* rng) const;

  // One stage on precomputed feature clouds.
  StageResult stage_forward(Tape* tape, ParameterStore& store,
                            const net::FeatureCloud& source,
                            const net::FeatureCloud& target,
                            const RigidTransform& prior, Stage stage,
                            net::RunMode mode) const;

  // FE on both clouds followed by one stage (the spec-level forward op).
  StageResult forward(Tape* tape, ParameterStore& store, const PointCloud& source,
                      const PointCloud& target, const RigidTransform& prior, Stage stage,
                      net::RunMode mode, Rng* rng) const;

  // Front 3D pass from the prior, back 1D pass from the front estimate;
  // optionally the same two-stage pass with the clouds swapped, pooled into
  // a single weighted solve.
  RegistrationResult cascade_infer(ParameterStore& store, const PointCloud& source,
                                   const PointCloud& target, const RigidTransform& prior,
                                   bool bidirectional, bool cascade = true) const;

 private:
  ModelConfig config_;
  net::FeatureExtractor fe_;
  net::WeightingLayer front_weighting_, back_weighting_;
  net::DfeLayer front_dfe_, back_dfe_;
  net::CostVolume3d front_cost_;
  net::CostVolume1d back_cost_;
};

// ---- training ----------------------------------------------------------------

struct TrainConfig {
  std::uint64_t seed = 7;
  int steps_front = 1600;
  int steps_back = 400;
  double learning_rate = 0.01;
  double decay_rate = 0.7;
  int decay_steps = 10000;
  int max_epochs = 200;
  double noise_translation = 1.0;   // uniform [0, range] per axis, meters
  double noise_rotation_deg = 1.0;  // uniform [0, range] per axis, degrees
  double train_fraction = 0.8;      // 4:1 split
  LossConfig loss;

  void validate() const;
};

struct TrainSample {
  PointCloud source;
  PointCloud target;
  RigidTransform ground_truth;
};

struct LossRecord {
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double loss1 = 0.0;
  double loss2 = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> history;
  std::vector<int> validation_indices;
};

struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Adaptive moment estimation with the exponential step decay
// lr * decay_rate^(step / decay_steps).
class AdamOptimizer {
 public:
  AdamOptimizer(double lr_base, double decay_rate, int decay_steps);

  double current_lr() const;
  void step(ParameterStore& store,
            const std::function<bool(const std::string&)>& include);

 private:
  double lr_base_, decay_rate_;
  int decay_steps_;
  int t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// Front phase first; the back network is trained subsequently with the
// front (and shared FE) frozen, its prior taken from the front's estimate.
TrainResult train(const std::vector<TrainSample>& dataset, const ModelConfig& model_config,
                  const TrainConfig& config, RegistrationModel& model,
                  ParameterStore& store, std::ostream* log);

}  // namespace deepicp::pipeline
