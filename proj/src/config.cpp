#include <algorithm>
#include <fstream>
#include <sstream>

#include "deepicp/io.hpp"

namespace deepicp::io {

const std::vector<Config::KeyDoc>& Config::known_keys() {
  static const std::vector<KeyDoc> keys = {
      {"synth.pairs", "8", "number of scene pairs to generate"},
      {"synth.seed", "1", "base seed; pair i uses seed + i"},
      {"scene.extent", "20.0", "square scene side, meters"},
      {"scene.ground_points", "1100", "ground-plane point count"},
      {"scene.poles", "10", "pole count"},
      {"scene.boxes", "7", "box count"},
      {"scene.trees", "6", "tree-like cluster count"},
      {"scene.dynamic_clusters", "2", "clusters displaced between frames"},
      {"scene.dynamic_disp", "2.0", "dynamic cluster displacement bound, meters"},
      {"scene.points_per_pole", "45", "points sampled per pole"},
      {"scene.points_per_box", "70", "points sampled per box"},
      {"scene.points_per_tree", "60", "points sampled per tree"},
      {"scene.points_per_dynamic", "60", "points sampled per dynamic cluster"},
      {"scene.jitter", "0.02", "per-point noise sigma, meters"},
      {"scene.viewpoint_offset", "0.0", "target viewpoint shift, meters"},
      {"scene.gt_xy", "1.5", "ground-truth planar translation bound, meters"},
      {"scene.gt_z", "0.3", "ground-truth z translation bound, meters"},
      {"scene.gt_yaw_deg", "5.0", "ground-truth yaw bound, degrees"},
      {"scene.gt_tilt_deg", "1.0", "ground-truth roll/pitch bound, degrees"},
      {"fe.scale", "1", "divides the 4096/1024/256 level sizes"},
      {"fe.radius1", "0.5", "grouping radius, level 1, meters"},
      {"fe.radius2", "1.0", "grouping radius, level 2, meters"},
      {"fe.radius3", "2.0", "grouping radius, level 3, meters"},
      {"fe.cap1", "32", "group cap, level 1"},
      {"fe.cap2", "32", "group cap, level 2"},
      {"fe.cap3", "32", "group cap, level 3"},
      {"fe.dropout_keep", "0.7", "dropout keeping probability"},
      {"weighting.keypoints", "64", "top-N keypoints"},
      {"dfe.radius", "1.0", "embedding search radius d, meters"},
      {"dfe.k", "32", "embedding neighbor cap K"},
      {"dfe.variant", "full", "full | llf | fef | bypass"},
      {"grid.r_xy", "2.0", "candidate grid radius in x/y, meters"},
      {"grid.s_xy", "0.4", "candidate voxel size in x/y, meters"},
      {"grid.r_z", "2.0", "candidate grid radius in z, meters"},
      {"grid.s_z", "0.25", "candidate voxel size in z, meters"},
      {"loss.alpha", "0.6", "balancing factor between the two losses"},
      {"train.seed", "7", "training seed"},
      {"train.steps_front", "1600", "front-stage optimization steps"},
      {"train.steps_back", "400", "back-stage optimization steps"},
      {"train.lr", "0.01", "base learning rate"},
      {"train.decay_rate", "0.7", "exponential decay rate"},
      {"train.decay_steps", "10000", "decay step constant"},
      {"train.max_epochs", "200", "epoch cap per phase"},
      {"train.noise_t", "1.0", "prior translation noise bound, meters"},
      {"train.noise_r_deg", "1.0", "prior rotation noise bound, degrees"},
      {"train.split", "0.8", "training fraction of the dataset (4:1)"},
      {"icp.max_iter", "50", "ICP iteration cap"},
      {"icp.tol", "1e-6", "ICP parameter-change tolerance"},
      {"icp.max_pair_dist", "2.0", "ICP pairing cutoff, meters"},
      {"eval.seed", "99", "prior-perturbation seed for evaluation"},
      {"eval.bidirectional", "0", "run bidirectional matching at inference"},
      {"eval.cascade", "1", "run the 1D back stage after the front stage"},
  };
  return keys;
}

namespace {

const Config::KeyDoc& find_key(const std::string& key) {
  for (const Config::KeyDoc& doc : Config::known_keys()) {
    if (doc.name == key) return doc;
  }
  throw std::logic_error("config: key '" + key + "' is not registered");
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open '" + path + "'");
  Config config;
  std::string line;
  int line_number = 0;
  while (std::getline(is, line)) {
    ++line_number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: line " + std::to_string(line_number) +
                               " of '" + path + "' is not key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const KeyDoc& doc : known_keys()) {
      if (doc.name == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw std::runtime_error("config: unknown key '" + key + "' at line " +
                               std::to_string(line_number) + " of '" + path + "'");
    }
    config.values_[key] = value;
  }
  return config;
}

Config Config::from_pairs(const std::map<std::string, std::string>& pairs) {
  Config config;
  for (const auto& [key, value] : pairs) {
    find_key(key);  // throws on unknown keys
    config.values_[key] = value;
  }
  return config;
}

std::string Config::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  return find_key(key).default_value;
}

double Config::get_double(const std::string& key) const {
  const std::string v = raw(key);
  std::size_t consumed = 0;
  const double out = std::stod(v, &consumed);
  if (consumed != v.size()) {
    throw std::runtime_error("config: value of '" + key + "' is not a number: " + v);
  }
  return out;
}

int Config::get_int(const std::string& key) const {
  const std::string v = raw(key);
  std::size_t consumed = 0;
  const int out = std::stoi(v, &consumed);
  if (consumed != v.size()) {
    throw std::runtime_error("config: value of '" + key + "' is not an integer: " + v);
  }
  return out;
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string v = raw(key);
  std::size_t consumed = 0;
  const unsigned long long out = std::stoull(v, &consumed);
  if (consumed != v.size()) {
    throw std::runtime_error("config: value of '" + key + "' is not an integer: " + v);
  }
  return static_cast<std::uint64_t>(out);
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = raw(key);
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw std::runtime_error("config: value of '" + key + "' is not a boolean: " + v);
}

std::string Config::get_string(const std::string& key) const { return raw(key); }

pipeline::ModelConfig model_config_from(const Config& config) {
  pipeline::ModelConfig mc;
  mc.fe.scale = config.get_int("fe.scale");
  mc.fe.radii = {config.get_double("fe.radius1"), config.get_double("fe.radius2"),
                 config.get_double("fe.radius3")};
  mc.fe.caps = {config.get_int("fe.cap1"), config.get_int("fe.cap2"),
                config.get_int("fe.cap3")};
  mc.fe.dropout_keep = config.get_double("fe.dropout_keep");
  mc.weighting.keypoints = config.get_int("weighting.keypoints");
  mc.dfe.radius = config.get_double("dfe.radius");
  mc.dfe.k = config.get_int("dfe.k");
  const std::string variant = config.get_string("dfe.variant");
  if (variant == "full") {
    mc.dfe.variant = net::DfeVariant::kFull;
  } else if (variant == "llf") {
    mc.dfe.variant = net::DfeVariant::kLocalOnly;
  } else if (variant == "fef") {
    mc.dfe.variant = net::DfeVariant::kFeatureOnly;
  } else if (variant == "bypass") {
    mc.dfe.variant = net::DfeVariant::kBypass;
  } else {
    throw std::runtime_error("config: dfe.variant must be full|llf|fef|bypass, got " +
                             variant);
  }
  mc.grid.r_xy = config.get_double("grid.r_xy");
  mc.grid.s_xy = config.get_double("grid.s_xy");
  mc.grid.r_z = config.get_double("grid.r_z");
  mc.grid.s_z = config.get_double("grid.s_z");
  mc.loss.alpha = config.get_double("loss.alpha");
  mc.validate();
  return mc;
}

pipeline::TrainConfig train_config_from(const Config& config) {
  pipeline::TrainConfig tc;
  tc.seed = config.get_u64("train.seed");
  tc.steps_front = config.get_int("train.steps_front");
  tc.steps_back = config.get_int("train.steps_back");
  tc.learning_rate = config.get_double("train.lr");
  tc.decay_rate = config.get_double("train.decay_rate");
  tc.decay_steps = config.get_int("train.decay_steps");
  tc.max_epochs = config.get_int("train.max_epochs");
  tc.noise_translation = config.get_double("train.noise_t");
  tc.noise_rotation_deg = config.get_double("train.noise_r_deg");
  tc.train_fraction = config.get_double("train.split");
  tc.loss.alpha = config.get_double("loss.alpha");
  tc.validate();
  return tc;
}

bench::SceneConfig scene_config_from(const Config& config) {
  bench::SceneConfig sc;
  sc.seed = config.get_u64("synth.seed");
  sc.extent = config.get_double("scene.extent");
  sc.ground_points = config.get_int("scene.ground_points");
  sc.poles = config.get_int("scene.poles");
  sc.boxes = config.get_int("scene.boxes");
  sc.trees = config.get_int("scene.trees");
  sc.dynamic_clusters = config.get_int("scene.dynamic_clusters");
  sc.dynamic_displacement = config.get_double("scene.dynamic_disp");
  sc.points_per_pole = config.get_int("scene.points_per_pole");
  sc.points_per_box = config.get_int("scene.points_per_box");
  sc.points_per_tree = config.get_int("scene.points_per_tree");
  sc.points_per_dynamic = config.get_int("scene.points_per_dynamic");
  sc.jitter = config.get_double("scene.jitter");
  sc.viewpoint_offset = config.get_double("scene.viewpoint_offset");
  sc.gt_xy = config.get_double("scene.gt_xy");
  sc.gt_z = config.get_double("scene.gt_z");
  sc.gt_yaw_deg = config.get_double("scene.gt_yaw_deg");
  sc.gt_tilt_deg = config.get_double("scene.gt_tilt_deg");
  sc.validate();
  return sc;
}

bench::IcpParams icp_params_from(const Config& config) {
  bench::IcpParams params;
  params.max_iter = config.get_int("icp.max_iter");
  params.tol = config.get_double("icp.tol");
  params.max_pair_dist = config.get_double("icp.max_pair_dist");
  return params;
}

}  // namespace deepicp::io
