#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "deepicp/io.hpp"

namespace deepicp::io {

namespace {

std::string pair_stem(int i) {
  std::ostringstream os;
  os << "pair_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

}  // namespace

void write_dataset(const std::vector<bench::ScenePair>& pairs, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path root(dir);
  {
    std::ofstream manifest(root / "manifest.txt");
    if (!manifest) throw std::runtime_error("dataset: cannot write manifest in '" + dir + "'");
    manifest << pairs.size() << "\n";
  }
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string stem = pair_stem(static_cast<int>(i));
    write_frame_bin(pairs[i].source, (root / (stem + "_source.bin")).string());
    write_frame_bin(pairs[i].target, (root / (stem + "_target.bin")).string());
    std::ofstream gt(root / (stem + "_gt.txt"));
    if (!gt) throw std::runtime_error("dataset: cannot write ground truth in '" + dir + "'");
    gt << format_pose_line(pairs[i].ground_truth) << "\n";
  }
}

std::vector<pipeline::TrainSample> read_dataset(const std::string& dir) {
  const std::filesystem::path root(dir);
  std::ifstream manifest(root / "manifest.txt");
  if (!manifest) {
    throw std::runtime_error("dataset: cannot open manifest in '" + dir + "'");
  }
  std::size_t count = 0;
  manifest >> count;
  if (!manifest || count == 0) {
    throw std::runtime_error("dataset: manifest in '" + dir + "' holds no pairs");
  }
  std::vector<pipeline::TrainSample> samples;
  samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string stem = pair_stem(static_cast<int>(i));
    pipeline::TrainSample sample;
    sample.source = read_frame_bin((root / (stem + "_source.bin")).string());
    sample.target = read_frame_bin((root / (stem + "_target.bin")).string());
    std::ifstream gt(root / (stem + "_gt.txt"));
    std::string line;
    if (!gt || !std::getline(gt, line)) {
      throw std::runtime_error("dataset: missing ground truth for " + stem);
    }
    sample.ground_truth = parse_pose_line(line, 1);
    samples.push_back(std::move(sample));
  }
  return samples;
}

void write_prob_volume(const std::string& path, int extent_xy, int extent_z,
                       const Vec3& keypoint, const std::vector<double>& probs) {
  if (static_cast<int>(probs.size()) != extent_xy * extent_xy * extent_z) {
    throw std::invalid_argument("prob volume: count != extents product");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("prob volume: cannot open '" + path + "'");
  auto write_u32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  auto write_f64 = [&](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
  };
  auto write_f32 = [&](float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    unsigned char b[4] = {static_cast<unsigned char>(bits),
                          static_cast<unsigned char>(bits >> 8),
                          static_cast<unsigned char>(bits >> 16),
                          static_cast<unsigned char>(bits >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
  };
  write_u32(static_cast<std::uint32_t>(extent_xy));
  write_u32(static_cast<std::uint32_t>(extent_xy));
  write_u32(static_cast<std::uint32_t>(extent_z));
  write_f64(keypoint.x());
  write_f64(keypoint.y());
  write_f64(keypoint.z());
  for (double p : probs) write_f32(static_cast<float>(p));
  if (!os) throw std::runtime_error("prob volume: write failed for '" + path + "'");
}

}  // namespace deepicp::io
