#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deepicp/bench.hpp"
#include "deepicp/core.hpp"
#include "deepicp/pipeline.hpp"

namespace deepicp::io {

// Flat key=value configuration with '#' comments. Every key has a documented
// default; unknown keys are hard errors.
class Config {
 public:
  static Config load(const std::string& path);
  static Config from_pairs(const std::map<std::string, std::string>& pairs);
  Config() = default;

  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::string get_string(const std::string& key) const;

  bool is_set(const std::string& key) const { return values_.count(key) > 0; }

  // The full key registry: name -> (default, doc).
  struct KeyDoc {
    std::string name;
    std::string default_value;
    std::string doc;
  };
  static const std::vector<KeyDoc>& known_keys();

 private:
  std::string raw(const std::string& key) const;
  std::map<std::string, std::string> values_;
};

pipeline::ModelConfig model_config_from(const Config& config);
pipeline::TrainConfig train_config_from(const Config& config);
bench::SceneConfig scene_config_from(const Config& config);
bench::IcpParams icp_params_from(const Config& config);

// ---- frame binaries (x, y, z, intensity as little-endian float32) ----------

struct MalformedInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

PointCloud read_frame_bin(const std::string& path);
void write_frame_bin(const PointCloud& cloud, const std::string& path);

// ---- pose files (12 numbers per line, row-major 3x4 [R | t]) ---------------

struct PoseReadResult {
  std::vector<RigidTransform> poses;
  std::vector<int> reorthonormalized;  // line numbers with rotation drift > 1e-6
};

PoseReadResult read_poses(const std::string& path);
void write_poses(const std::vector<RigidTransform>& poses, const std::string& path);
std::string format_pose_line(const RigidTransform& t);
RigidTransform parse_pose_line(const std::string& line, int line_number);

// ---- pair enumeration -------------------------------------------------------

struct PairSpec {
  int source_frame = 0;
  int target_frame = 0;
  RigidTransform prior;         // initialized to the ground truth; perturb downstream
  RigidTransform ground_truth;  // target_pose^-1 * source_pose
};

std::vector<PairSpec> enumerate_pairs(const std::vector<RigidTransform>& poses,
                                      int frame_interval, double max_distance);

// ---- polygon-format export --------------------------------------------------

void write_ply(const PointCloud& cloud, const std::string& path,
               const std::vector<double>* weights = nullptr,
               const std::vector<int>* labels = nullptr);

// ---- synthetic dataset directory ---------------------------------------------

// Layout: <dir>/manifest.txt holding the pair count, then per pair
// pair_NNNN_source.bin / pair_NNNN_target.bin / pair_NNNN_gt.txt.
void write_dataset(const std::vector<bench::ScenePair>& pairs, const std::string& dir);
std::vector<pipeline::TrainSample> read_dataset(const std::string& dir);

// Probability-volume dump: u32 extents (x, y, z), f64 keypoint coordinates,
// then C float32 probabilities in z-fastest row-major order.
void write_prob_volume(const std::string& path, int extent_xy, int extent_z,
                       const Vec3& keypoint, const std::vector<double>& probs);

}  // namespace deepicp::io
