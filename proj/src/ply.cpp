#include <fstream>

#include "deepicp/io.hpp"

namespace deepicp::io {

void write_ply(const PointCloud& cloud, const std::string& path,
               const std::vector<double>* weights, const std::vector<int>* labels) {
  if (weights && weights->size() != cloud.size()) {
    throw std::invalid_argument("write_ply: weight count != point count");
  }
  if (labels && labels->size() != cloud.size()) {
    throw std::invalid_argument("write_ply: label count != point count");
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("ply: cannot open '" + path + "' for writing");
  os << "ply\nformat ascii 1.0\n";
  os << "element vertex " << cloud.size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  os << "property float intensity\n";
  if (weights) os << "property float weight\n";
  if (labels) os << "property int label\n";
  os << "end_header\n";
  os.precision(9);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud[i];
    os << p.x << " " << p.y << " " << p.z << " " << p.intensity;
    if (weights) os << " " << (*weights)[i];
    if (labels) os << " " << (*labels)[i];
    os << "\n";
  }
  if (!os) throw std::runtime_error("ply: write failed for '" + path + "'");
}

}  // namespace deepicp::io
