#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "deepicp/io.hpp"

namespace deepicp::io {

namespace {

float read_f32_le(const unsigned char* b) {
  std::uint32_t bits = static_cast<std::uint32_t>(b[0]) |
                       (static_cast<std::uint32_t>(b[1]) << 8) |
                       (static_cast<std::uint32_t>(b[2]) << 16) |
                       (static_cast<std::uint32_t>(b[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

void write_f32_le(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  unsigned char b[4] = {static_cast<unsigned char>(bits),
                        static_cast<unsigned char>(bits >> 8),
                        static_cast<unsigned char>(bits >> 16),
                        static_cast<unsigned char>(bits >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

PointCloud read_frame_bin(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw MalformedInput("frame: cannot open '" + path + "'");
  const std::streamoff size = is.tellg();
  if (size == 0) throw MalformedInput("frame: '" + path + "' is empty");
  if (size % 16 != 0) {
    throw MalformedInput("frame: '" + path + "' has " + std::to_string(size) +
                         " bytes, not a multiple of 16 (truncation at offset " +
                         std::to_string((size / 16) * 16) + ")");
  }
  is.seekg(0);
  const std::size_t n = static_cast<std::size_t>(size) / 16;
  std::vector<unsigned char> buffer(static_cast<std::size_t>(size));
  is.read(reinterpret_cast<char*>(buffer.data()), size);
  if (!is) throw MalformedInput("frame: short read on '" + path + "'");

  PointCloud cloud;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = buffer.data() + i * 16;
    Point p;
    p.x = read_f32_le(rec);
    p.y = read_f32_le(rec + 4);
    p.z = read_f32_le(rec + 8);
    p.intensity = std::clamp<double>(read_f32_le(rec + 12), 0.0, 1.0);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw MalformedInput("frame: non-finite coordinate in record " + std::to_string(i) +
                           " (offset " + std::to_string(i * 16) + ") of '" + path + "'");
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

void write_frame_bin(const PointCloud& cloud, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("frame: cannot open '" + path + "' for writing");
  for (const Point& p : cloud.points) {
    write_f32_le(os, static_cast<float>(p.x));
    write_f32_le(os, static_cast<float>(p.y));
    write_f32_le(os, static_cast<float>(p.z));
    write_f32_le(os, static_cast<float>(p.intensity));
  }
  if (!os) throw std::runtime_error("frame: write failed for '" + path + "'");
}

RigidTransform parse_pose_line(const std::string& line, int line_number) {
  std::istringstream iss(line);
  std::vector<double> fields;
  double v;
  while (iss >> v) fields.push_back(v);
  if (fields.size() != 12) {
    throw MalformedInput("poses: line " + std::to_string(line_number) + " has " +
                         std::to_string(fields.size()) + " fields, expected 12");
  }
  RigidTransform t;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) t.rotation(r, c) = fields[static_cast<std::size_t>(r * 4 + c)];
    t.translation(r) = fields[static_cast<std::size_t>(r * 4 + 3)];
  }
  return t;
}

PoseReadResult read_poses(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw MalformedInput("poses: cannot open '" + path + "'");
  PoseReadResult result;
  std::string line;
  int line_number = 0;
  while (std::getline(is, line)) {
    ++line_number;
    bool blank = true;
    for (char ch : line) {
      if (!std::isspace(static_cast<unsigned char>(ch))) {
        blank = false;
        break;
      }
    }
    if (blank) continue;
    RigidTransform t = parse_pose_line(line, line_number);
    if (t.rotation_drift() > 1e-6) {
      // Project back onto the rotation group and flag the line.
      Eigen::JacobiSVD<Mat3> svd(t.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
      Mat3 r = svd.matrixU() * svd.matrixV().transpose();
      if (r.determinant() < 0.0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
      }
      t.rotation = r;
      result.reorthonormalized.push_back(line_number);
    }
    result.poses.push_back(t);
  }
  return result;
}

std::string format_pose_line(const RigidTransform& t) {
  std::ostringstream os;
  os.precision(17);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (r != 0 || c != 0) os << " ";
      os << t.rotation(r, c);
    }
    os << " " << t.translation(r);
  }
  return os.str();
}

void write_poses(const std::vector<RigidTransform>& poses, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("poses: cannot open '" + path + "' for writing");
  for (const RigidTransform& t : poses) os << format_pose_line(t) << "\n";
}

std::vector<PairSpec> enumerate_pairs(const std::vector<RigidTransform>& poses,
                                      int frame_interval, double max_distance) {
  if (frame_interval < 1) {
    throw std::invalid_argument("enumerate_pairs: frame interval must be >= 1");
  }
  if (max_distance < 0.0) {
    throw std::invalid_argument("enumerate_pairs: max distance must be >= 0");
  }
  std::vector<PairSpec> out;
  const int n = static_cast<int>(poses.size());
  for (int s = 0; s < n; s += frame_interval) {
    for (int t = 0; t < n; ++t) {
      if (t == s) continue;
      const double d = (poses[static_cast<std::size_t>(t)].translation -
                        poses[static_cast<std::size_t>(s)].translation)
                           .norm();
      if (d > max_distance) continue;
      PairSpec pair;
      pair.source_frame = s;
      pair.target_frame = t;
      pair.ground_truth =
          poses[static_cast<std::size_t>(t)].inverse().compose(poses[static_cast<std::size_t>(s)]);
      pair.prior = pair.ground_truth;
      out.push_back(pair);
    }
  }
  return out;
}

}  // namespace deepicp::io
