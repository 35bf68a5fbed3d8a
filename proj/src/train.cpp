#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepicp/bench.hpp"
#include "deepicp/pipeline.hpp"

namespace deepicp::pipeline {

void TrainConfig::validate() const {
  if (steps_front < 0 || steps_back < 0) {
    throw std::invalid_argument("TrainConfig: step counts must be >= 0");
  }
  if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (!(decay_rate > 0.0 && decay_rate <= 1.0)) {
    throw std::invalid_argument("TrainConfig: decay rate must be in (0, 1]");
  }
  if (decay_steps < 1) throw std::invalid_argument("TrainConfig: decay steps must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max epochs must be >= 1");
  if (noise_translation < 0.0 || noise_rotation_deg < 0.0) {
    throw std::invalid_argument("TrainConfig: noise ranges must be >= 0");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("TrainConfig: train fraction must be in (0, 1)");
  }
  loss.validate();
}

AdamOptimizer::AdamOptimizer(double lr_base, double decay_rate, int decay_steps)
    : lr_base_(lr_base), decay_rate_(decay_rate), decay_steps_(decay_steps) {}

double AdamOptimizer::current_lr() const {
  return lr_base_ * std::pow(decay_rate_, static_cast<double>(t_) /
                                              static_cast<double>(decay_steps_));
}

void AdamOptimizer::step(ParameterStore& store,
                         const std::function<bool(const std::string&)>& include) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  const double lr = current_lr();
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, t_);
  const double bc2 = 1.0 - std::pow(kBeta2, t_);
  for (auto& [name, entry] : store.entries()) {
    if (!entry.trainable || !include(name)) continue;
    const std::vector<double>& g = store.grad(name);
    std::vector<double>& m = m_[name];
    std::vector<double>& v = v_[name];
    if (m.empty()) {
      m.assign(g.size(), 0.0);
      v.assign(g.size(), 0.0);
    }
    std::vector<double>& p = entry.tensor.values();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

namespace {

struct PhaseSampler {
  // Epochs over a seeded shuffle of the training indices; batch size 1.
  std::vector<int> indices;
  std::size_t cursor = 0;
  Rng rng;

  PhaseSampler(std::vector<int> idx, Rng r) : indices(std::move(idx)), rng(r) {
    shuffle();
  }

  void shuffle() {
    for (std::size_t i = indices.size(); i > 1; --i) {
      const std::size_t j = rng.uniform_index(i);
      std::swap(indices[i - 1], indices[j]);
    }
    cursor = 0;
  }

  int next() {
    if (cursor >= indices.size()) shuffle();
    return indices[cursor++];
  }

  int epochs_done(int steps) const {
    return steps / std::max<int>(1, static_cast<int>(indices.size()));
  }
};

void write_record(std::ostream* log, const LossRecord& rec) {
  if (log == nullptr) return;
  (*log) << rec.step << " " << rec.lr << " " << rec.loss << " " << rec.loss1 << " "
         << rec.loss2 << "\n";
  log->flush();
}

}  // namespace

TrainResult train(const std::vector<TrainSample>& dataset, const ModelConfig& model_config,
                  const TrainConfig& config, RegistrationModel& model,
                  ParameterStore& store, std::ostream* log) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");

  Rng root(config.seed);
  Rng split_rng = root.fork();
  Rng sampler_seed = root.fork();
  Rng noise_rng = root.fork();
  Rng dropout_rng = root.fork();

  // Seeded split, train : validation = train_fraction : rest.
  std::vector<int> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = split_rng.uniform_index(i);
    std::swap(order[i - 1], order[j]);
  }
  const int n_train = std::max<int>(
      1, static_cast<int>(std::round(config.train_fraction * dataset.size())));
  std::vector<int> train_idx(order.begin(), order.begin() + n_train);
  TrainResult result;
  result.validation_indices.assign(order.begin() + n_train, order.end());

  AdamOptimizer optimizer(config.learning_rate, config.decay_rate, config.decay_steps);
  const auto front_params = [](const std::string& name) {
    return name.rfind("fe.", 0) == 0 || name.rfind("front.", 0) == 0;
  };
  const auto back_params = [](const std::string& name) {
    return name.rfind("back.", 0) == 0;
  };

  int step = 0;
  const int max_steps_per_phase_epochbound =
      config.max_epochs * std::max<int>(1, n_train);

  auto run_phase = [&](Stage stage, int phase_steps) {
    PhaseSampler sampler(train_idx, sampler_seed.fork());
    const int steps_this_phase = std::min(phase_steps, max_steps_per_phase_epochbound);
    for (int s = 0; s < steps_this_phase; ++s) {
      const TrainSample& sample = dataset[static_cast<std::size_t>(sampler.next())];
      const RigidTransform prior_aug =
          bench::perturb(sample.ground_truth, config.noise_translation,
                         config.noise_rotation_deg, noise_rng);

      Tape tape;
      StageResult stage_out;
      if (stage == Stage::kFront) {
        stage_out = model.forward(&tape, store, sample.source, sample.target, prior_aug,
                                  Stage::kFront, net::RunMode::kTrain, &dropout_rng);
      } else {
        // Back phase: shared FE and the front network are frozen; the prior
        // is the front estimate, computed without gradients.
        net::FeatureCloud fc_src = model.extract(nullptr, store, sample.source,
                                                 net::RunMode::kInfer, nullptr);
        net::FeatureCloud fc_tgt = model.extract(nullptr, store, sample.target,
                                                 net::RunMode::kInfer, nullptr);
        StageResult front_out = model.stage_forward(
            nullptr, store, fc_src, fc_tgt, prior_aug, Stage::kFront, net::RunMode::kInfer);
        stage_out =
            model.stage_forward(&tape, store, fc_src, fc_tgt, to_transform(front_out.pose),
                                Stage::kBack, net::RunMode::kTrain);
      }

      // Ground-truth correspondences for the selected keypoints.
      std::vector<Vec3> gt_points;
      gt_points.reserve(stage_out.correspondences.x.size());
      for (const Vec3& x : stage_out.correspondences.x) {
        gt_points.push_back(sample.ground_truth.apply(x));
      }

      Tensor l1 = loss1(&tape, stage_out.correspondences.y, gt_points);
      Tensor l2 = loss2(&tape, stage_out.correspondences, gt_points);
      Tensor total = combined_loss(l1, l2, config.loss);

      LossRecord rec;
      rec.step = step;
      rec.lr = optimizer.current_lr();
      rec.loss = total.value();
      rec.loss1 = l1.value();
      rec.loss2 = l2.value();
      if (!std::isfinite(rec.loss)) {
        write_record(log, rec);
        throw TrainingDiverged("train: non-finite loss at step " + std::to_string(step) +
                               " (loss1 = " + std::to_string(rec.loss1) +
                               ", loss2 = " + std::to_string(rec.loss2) + ")");
      }

      store.zero_grads();
      ad::backward(tape, total, store);
      optimizer.step(store, stage == Stage::kFront ? front_params : back_params);

      result.history.push_back(rec);
      write_record(log, rec);
      ++step;
    }
  };

  run_phase(Stage::kFront, config.steps_front);
  run_phase(Stage::kBack, config.steps_back);
  return result;
}

}  // namespace deepicp::pipeline
