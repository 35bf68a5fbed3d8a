#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "deepicp/io.hpp"

namespace {

using namespace deepicp;

constexpr double kPi = 3.14159265358979323846;

// "tx ty tz roll pitch yaw" -> transform (meters, degrees, rpy order).
RigidTransform parse_pose6(const std::string& text, const char* what) {
  std::istringstream iss(text);
  std::vector<double> v;
  double x;
  while (iss >> x) v.push_back(x);
  if (v.size() != 6) {
    throw std::runtime_error(std::string(what) +
                             ": expected 6 numbers \"tx ty tz roll pitch yaw\", got " +
                             std::to_string(v.size()));
  }
  RigidTransform t;
  t.translation = Vec3(v[0], v[1], v[2]);
  const double deg = kPi / 180.0;
  t.rotation = rotation_rpy(v[3] * deg, v[4] * deg, v[5] * deg);
  return t;
}

io::Config load_config(const std::string& path) {
  if (path.empty()) return io::Config();
  return io::Config::load(path);
}

void print_transform(const RigidTransform& t) {
  std::cout << "rotation:\n";
  for (int r = 0; r < 3; ++r) {
    std::cout << "  " << t.rotation(r, 0) << " " << t.rotation(r, 1) << " "
              << t.rotation(r, 2) << "\n";
  }
  std::cout << "translation: " << t.translation.x() << " " << t.translation.y() << " "
            << t.translation.z() << "\n";
  std::cout << "pose_line: " << io::format_pose_line(t) << "\n";
}

struct LoadedModel {
  pipeline::ModelConfig config;
  ad::ParameterStore store;
  std::unique_ptr<pipeline::RegistrationModel> model;
};

LoadedModel load_model(const io::Config& config, const std::string& ckpt,
                       std::uint64_t init_seed) {
  LoadedModel lm;
  lm.config = io::model_config_from(config);
  Rng init(init_seed);
  lm.model = std::make_unique<pipeline::RegistrationModel>(lm.config, lm.store, init);
  if (!ckpt.empty()) ad::load_checkpoint(lm.store, ckpt);
  return lm;
}

std::vector<bench::EvalPair> dataset_eval_pairs(const std::string& data_dir,
                                                const io::Config& config) {
  const std::vector<pipeline::TrainSample> samples = io::read_dataset(data_dir);
  Rng prior_rng(config.get_u64("eval.seed"));
  const double noise_t = config.get_double("train.noise_t");
  const double noise_r = config.get_double("train.noise_r_deg");
  std::vector<bench::EvalPair> pairs;
  pairs.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    bench::EvalPair pair;
    pair.id = std::to_string(i);
    pair.source = samples[i].source;
    pair.target = samples[i].target;
    pair.ground_truth = samples[i].ground_truth;
    pair.prior = bench::perturb(samples[i].ground_truth, noise_t, noise_r, prior_rng);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

int run(int argc, char** argv) {
  CLI::App app{"DeepICP-style point cloud registration toolkit"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate synthetic scene pairs");
  std::string synth_config, synth_out;
  synth->add_option("--config", synth_config, "key=value config file");
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->callback([&] {
    const io::Config config = load_config(synth_config);
    bench::SceneConfig scene = io::scene_config_from(config);
    const int n = config.get_int("synth.pairs");
    std::vector<bench::ScenePair> pairs;
    pairs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      scene.seed = config.get_u64("synth.seed") + static_cast<std::uint64_t>(i);
      pairs.push_back(bench::synth_scene(scene));
    }
    io::write_dataset(pairs, synth_out);
    std::cout << "wrote " << n << " pairs to " << synth_out << "\n";
  });

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Train the registration network");
  std::string train_data, train_config, train_out, train_log;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--config", train_config, "key=value config file");
  train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
  train_cmd->add_option("--log", train_log, "loss log path (default <out>.log)");
  train_cmd->callback([&] {
    const io::Config config = load_config(train_config);
    const std::vector<pipeline::TrainSample> samples = io::read_dataset(train_data);
    LoadedModel lm = load_model(config, "", config.get_u64("train.seed"));
    const pipeline::TrainConfig tc = io::train_config_from(config);
    const std::string log_path = train_log.empty() ? train_out + ".log" : train_log;
    std::ofstream log(log_path);
    if (!log) throw std::runtime_error("train: cannot open log '" + log_path + "'");
    const pipeline::TrainResult result =
        pipeline::train(samples, lm.config, tc, *lm.model, lm.store, &log);
    ad::save_checkpoint(lm.store, train_out);
    std::cout << "trained " << result.history.size() << " steps; checkpoint " << train_out
              << ", log " << log_path << "\n";
    if (!result.history.empty()) {
      std::cout << "final loss " << result.history.back().loss << "\n";
    }
  });

  // ---- register ----
  auto* reg = app.add_subcommand("register", "Register a source cloud to a target cloud");
  std::string reg_ckpt, reg_config, reg_source, reg_target, reg_prior, reg_gt;
  bool reg_bidir = false, reg_no_cascade = false;
  reg->add_option("--ckpt", reg_ckpt, "checkpoint path")->required();
  reg->add_option("--config", reg_config, "key=value config file");
  reg->add_option("--source", reg_source, "source frame .bin")->required();
  reg->add_option("--target", reg_target, "target frame .bin")->required();
  reg->add_option("--prior", reg_prior, "\"tx ty tz roll pitch yaw\" (m, deg)")->required();
  reg->add_option("--gt", reg_gt, "optional ground truth, same format");
  reg->add_flag("--bidirectional", reg_bidir, "bidirectional matching");
  reg->add_flag("--no-cascade", reg_no_cascade, "front stage only");
  reg->callback([&] {
    if (!std::filesystem::exists(reg_ckpt)) {
      throw std::runtime_error("register: checkpoint '" + reg_ckpt + "' does not exist");
    }
    const io::Config config = load_config(reg_config);
    LoadedModel lm = load_model(config, reg_ckpt, 0);
    const PointCloud source = io::read_frame_bin(reg_source);
    const PointCloud target = io::read_frame_bin(reg_target);
    const RigidTransform prior = parse_pose6(reg_prior, "--prior");
    const pipeline::RegistrationResult result = lm.model->cascade_infer(
        lm.store, source, target, prior, reg_bidir, !reg_no_cascade);
    print_transform(result.transform);
    std::cout << "timings_s: fe=" << result.diagnostics.seconds_fe
              << " stages=" << result.diagnostics.seconds_stages << "\n";
    if (!reg_gt.empty()) {
      const RigidTransform gt = parse_pose6(reg_gt, "--gt");
      const RegistrationError err = registration_error(result.transform, gt);
      std::cout << "angular_error_deg: " << err.angular_deg << "\n";
      std::cout << "translational_error_m: " << err.translational_m << "\n";
    }
  });

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a method over a dataset");
  std::string eval_ckpt, eval_config, eval_data, eval_method = "deepicp", eval_csv;
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint (required for deepicp)");
  eval_cmd->add_option("--config", eval_config, "key=value config file");
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--method", eval_method, "deepicp | icp");
  eval_cmd->add_option("--csv", eval_csv, "write per-pair errors to this file");
  eval_cmd->callback([&] {
    const io::Config config = load_config(eval_config);
    const std::vector<bench::EvalPair> pairs = dataset_eval_pairs(eval_data, config);
    bench::EvalReport report;
    if (eval_method == "icp") {
      const bench::IcpParams params = io::icp_params_from(config);
      report = bench::evaluate(pairs, "ICP-Po2Po",
                               [&](const PointCloud& s, const PointCloud& t,
                                   const RigidTransform& prior) {
                                 return bench::icp_point2point(s, t, prior, params).transform;
                               });
    } else if (eval_method == "deepicp") {
      if (eval_ckpt.empty()) {
        throw std::runtime_error("eval: --ckpt is required for method deepicp");
      }
      LoadedModel lm = load_model(config, eval_ckpt, 0);
      const bool bidir = config.get_bool("eval.bidirectional");
      const bool cascade = config.get_bool("eval.cascade");
      report = bench::evaluate(pairs, bidir ? "DeepICP-Bi" : "DeepICP",
                               [&](const PointCloud& s, const PointCloud& t,
                                   const RigidTransform& prior) {
                                 return lm.model
                                     ->cascade_infer(lm.store, s, t, prior, bidir, cascade)
                                     .transform;
                               });
    } else {
      throw std::runtime_error("eval: unknown method '" + eval_method + "'");
    }
    std::cout << bench::render_table({report});
    const std::string csv = bench::render_csv({report});
    if (!eval_csv.empty()) {
      std::ofstream os(eval_csv);
      if (!os) throw std::runtime_error("eval: cannot open '" + eval_csv + "'");
      os << csv;
      std::cout << "csv written to " << eval_csv << "\n";
    } else {
      std::cout << csv;
    }
  });

  // ---- icp ----
  auto* icp_cmd = app.add_subcommand("icp", "Classical point-to-point ICP baseline");
  std::string icp_source, icp_target, icp_prior, icp_config;
  icp_cmd->add_option("--source", icp_source, "source frame .bin")->required();
  icp_cmd->add_option("--target", icp_target, "target frame .bin")->required();
  icp_cmd->add_option("--prior", icp_prior, "\"tx ty tz roll pitch yaw\"")->required();
  icp_cmd->add_option("--config", icp_config, "key=value config file");
  icp_cmd->callback([&] {
    const io::Config config = load_config(icp_config);
    const PointCloud source = io::read_frame_bin(icp_source);
    const PointCloud target = io::read_frame_bin(icp_target);
    const RigidTransform prior = parse_pose6(icp_prior, "--prior");
    const bench::IcpResult result =
        bench::icp_point2point(source, target, prior, io::icp_params_from(config));
    print_transform(result.transform);
    std::cout << "iterations: " << result.iterations
              << (result.converged ? " (converged)" : " (iteration cap)") << "\n";
  });

  // ---- export ----
  auto* exp = app.add_subcommand("export", "Export diagnostics");
  std::string exp_what, exp_ckpt, exp_config, exp_cloud, exp_source, exp_target,
      exp_prior, exp_out, exp_stage = "front";
  exp->add_option("--what", exp_what, "keypoints | probs")->required();
  exp->add_option("--ckpt", exp_ckpt, "checkpoint path")->required();
  exp->add_option("--config", exp_config, "key=value config file");
  exp->add_option("--cloud", exp_cloud, "cloud .bin (keypoints)");
  exp->add_option("--source", exp_source, "source .bin (probs)");
  exp->add_option("--target", exp_target, "target .bin (probs)");
  exp->add_option("--prior", exp_prior, "prior pose (probs)");
  exp->add_option("--stage", exp_stage, "front | back");
  exp->add_option("--out", exp_out, "output file (keypoints) or directory (probs)")
      ->required();
  exp->callback([&] {
    const io::Config config = load_config(exp_config);
    LoadedModel lm = load_model(config, exp_ckpt, 0);
    const pipeline::Stage stage =
        exp_stage == "back" ? pipeline::Stage::kBack : pipeline::Stage::kFront;
    if (exp_what == "keypoints") {
      if (exp_cloud.empty()) throw std::runtime_error("export keypoints: --cloud required");
      const PointCloud cloud = io::read_frame_bin(exp_cloud);
      const pipeline::StageResult out =
          lm.model->forward(nullptr, lm.store, cloud, cloud, RigidTransform::identity(),
                            stage, net::RunMode::kInfer, nullptr);
      PointCloud keypoints;
      for (std::size_t i = 0; i < out.correspondences.x.size(); ++i) {
        const Vec3& p = out.correspondences.x[i];
        keypoints.points.push_back({p.x(), p.y(), p.z(), 0.0});
      }
      const std::vector<double> weights = out.correspondences.weights.values();
      io::write_ply(keypoints, exp_out, &weights, nullptr);
      std::cout << "wrote " << keypoints.size() << " keypoints to " << exp_out << "\n";
    } else if (exp_what == "probs") {
      if (exp_source.empty() || exp_target.empty() || exp_prior.empty()) {
        throw std::runtime_error("export probs: --source, --target and --prior required");
      }
      const PointCloud source = io::read_frame_bin(exp_source);
      const PointCloud target = io::read_frame_bin(exp_target);
      const RigidTransform prior = parse_pose6(exp_prior, "--prior");
      const pipeline::StageResult out = lm.model->forward(
          nullptr, lm.store, source, target, prior, stage, net::RunMode::kInfer, nullptr);
      std::filesystem::create_directories(exp_out);
      const int n = out.probabilities.dim(0);
      const int c = out.probabilities.dim(1);
      const int ez = lm.config.grid.extent_z();
      const int exy = stage == pipeline::Stage::kFront ? lm.config.grid.extent_xy() : 1;
      for (int i = 0; i < n; ++i) {
        std::vector<double> probs(out.probabilities.data() + static_cast<std::ptrdiff_t>(i) * c,
                                  out.probabilities.data() + static_cast<std::ptrdiff_t>(i + 1) * c);
        std::ostringstream name;
        name << exp_out << "/probs_" << std::setw(3) << std::setfill('0') << i << ".bin";
        io::write_prob_volume(name.str(), exy, ez, out.correspondences.x[static_cast<std::size_t>(i)],
                              probs);
      }
      std::cout << "wrote " << n << " probability volumes to " << exp_out << "\n";
    } else {
      throw std::runtime_error("export: unknown --what '" + exp_what + "'");
    }
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
