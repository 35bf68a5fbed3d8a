#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "deepicp/core.hpp"

namespace deepicp {

namespace {

struct KdNode {
  int axis = -1;          // -1 marks a leaf
  double split = 0.0;
  int left = -1;
  int right = -1;
  int begin = 0;          // leaf range into the ordering array
  int end = 0;
};

constexpr int kLeafSize = 16;

}  // namespace

struct SpatialIndex::Impl {
  std::vector<Vec3> pts;
  std::vector<int> order;       // permutation of point indices
  std::vector<KdNode> nodes;
  int root = -1;

  int build(int begin, int end) {
    KdNode node;
    node.begin = begin;
    node.end = end;
    if (end - begin <= kLeafSize) {
      nodes.push_back(node);
      return static_cast<int>(nodes.size()) - 1;
    }
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (int i = begin; i < end; ++i) {
      lo = lo.cwiseMin(pts[order[i]]);
      hi = hi.cwiseMax(pts[order[i]]);
    }
    const Vec3 extent = hi - lo;
    int axis = 0;
    if (extent(1) > extent(axis)) axis = 1;
    if (extent(2) > extent(axis)) axis = 2;

    const int mid = (begin + end) / 2;
    std::nth_element(order.begin() + begin, order.begin() + mid, order.begin() + end,
                     [&](int a, int b) {
                       const double ca = pts[a](axis), cb = pts[b](axis);
                       return ca < cb || (ca == cb && a < b);
                     });
    node.axis = axis;
    node.split = pts[order[mid]](axis);
    const int self = static_cast<int>(nodes.size());
    nodes.push_back(node);
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes[self].left = l;
    nodes[self].right = r;
    return self;
  }

  void radius_collect(int ni, const Vec3& c, double radius, double r2,
                      std::vector<Neighbor>& out) const {
    const KdNode& node = nodes[ni];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = order[i];
        const double d2 = (pts[idx] - c).squaredNorm();
        if (d2 <= r2) out.push_back({idx, std::sqrt(d2)});
      }
      return;
    }
    const double delta = c(node.axis) - node.split;
    if (delta <= radius) radius_collect(node.left, c, radius, r2, out);
    if (delta >= -radius) radius_collect(node.right, c, radius, r2, out);
  }

  void knn_collect(int ni, const Vec3& c, int k,
                   std::vector<Neighbor>& heap) const {
    const KdNode& node = nodes[ni];
    auto cmp = [](const Neighbor& a, const Neighbor& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
    };
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int idx = order[i];
        const Neighbor cand{idx, (pts[idx] - c).norm()};
        if (static_cast<int>(heap.size()) < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end(), cmp);
        } else if (cmp(cand, heap.front())) {
          std::pop_heap(heap.begin(), heap.end(), cmp);
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end(), cmp);
        }
      }
      return;
    }
    const double delta = c(node.axis) - node.split;
    const int near = delta <= 0.0 ? node.left : node.right;
    const int far = delta <= 0.0 ? node.right : node.left;
    knn_collect(near, c, k, heap);
    const double worst = static_cast<int>(heap.size()) < k
                             ? std::numeric_limits<double>::infinity()
                             : heap.front().distance;
    if (std::abs(delta) <= worst) knn_collect(far, c, k, heap);
  }
};

SpatialIndex::SpatialIndex(const PointCloud& cloud) : impl_(std::make_unique<Impl>()) {
  validate_cloud(cloud, "build_index");
  impl_->pts.reserve(cloud.size());
  for (const Point& p : cloud.points) impl_->pts.push_back(p.position());
  impl_->order.resize(cloud.size());
  std::iota(impl_->order.begin(), impl_->order.end(), 0);
  impl_->root = impl_->build(0, static_cast<int>(cloud.size()));
}

SpatialIndex::~SpatialIndex() = default;
SpatialIndex::SpatialIndex(SpatialIndex&&) noexcept = default;
SpatialIndex& SpatialIndex::operator=(SpatialIndex&&) noexcept = default;

std::size_t SpatialIndex::size() const { return impl_->pts.size(); }

std::vector<Neighbor> SpatialIndex::radius_search(const Vec3& center,
                                                  double radius) const {
  if (!(radius > 0.0)) throw std::invalid_argument("radius_search: radius must be > 0");
  std::vector<Neighbor> out;
  impl_->radius_collect(impl_->root, center, radius, radius * radius, out);
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  });
  return out;
}

std::vector<Neighbor> SpatialIndex::knn_search(const Vec3& center, int k) const {
  if (k < 1) throw std::invalid_argument("knn_search: k must be >= 1");
  std::vector<Neighbor> heap;
  heap.reserve(static_cast<std::size_t>(k) + 1);
  impl_->knn_collect(impl_->root, center, k, heap);
  std::sort(heap.begin(), heap.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
  });
  return heap;
}

SpatialIndex build_index(const PointCloud& cloud) { return SpatialIndex(cloud); }

std::vector<Neighbor> radius_neighbors(const SpatialIndex& index, const Vec3& center,
                                       double radius, int cap) {
  if (cap < 1) throw std::invalid_argument("radius_neighbors: cap must be >= 1");
  std::vector<Neighbor> found = index.radius_search(center, radius);
  if (found.empty()) {
    throw EmptyNeighborhood("radius_neighbors: no points within radius");
  }
  if (static_cast<int>(found.size()) > cap) {
    found.resize(cap);
    return found;
  }
  // Pad to exactly cap entries by cycling through the found points.
  const std::size_t n = found.size();
  found.reserve(cap);
  for (std::size_t i = n; i < static_cast<std::size_t>(cap); ++i) {
    found.push_back(found[i % n]);
  }
  return found;
}

}  // namespace deepicp
