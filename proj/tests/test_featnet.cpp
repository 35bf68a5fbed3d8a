#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "deepicp/featnet.hpp"
#include "grad_check.hpp"

using namespace deepicp;
using namespace deepicp::net;
using ad::Tape;
using ad::Tensor;

namespace {

// Dyadic coordinates (multiples of 2^-10) keep float arithmetic exact under
// the dyadic translations used by the invariance tests.
PointCloud dyadic_cloud(int n, Rng& rng, double extent = 8.0) {
  PointCloud cloud;
  for (int i = 0; i < n; ++i) {
    auto snap = [&](double v) { return std::round(v * 1024.0) / 1024.0; };
    cloud.points.push_back({snap(rng.uniform(-extent, extent)),
                            snap(rng.uniform(-extent, extent)),
                            snap(rng.uniform(-extent, extent / 4)),
                            rng.uniform()});
  }
  return cloud;
}

// Brute-force max-min selection oracle.
std::vector<int> fps_oracle(const std::vector<Vec3>& pts, int m) {
  std::vector<int> sel{0};
  std::vector<double> dist(pts.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(sel.size()) < m) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      dist[i] = std::min(dist[i],
                         (pts[i] - pts[static_cast<std::size_t>(sel.back())]).squaredNorm());
    }
    int best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
      if (dist[i] > dist[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    sel.push_back(best);
  }
  return sel;
}

FEConfig tiny_config() {
  FEConfig config;
  config.scale = 128;  // levels 32 / 8 / 2
  config.radii = {2.0, 4.0, 8.0};
  config.caps = {6, 6, 4};
  config.dropout_keep = 0.7;
  return config;
}

}  // namespace

TEST_CASE("farthest_point_sample: fixtures") {
  SUBCASE("m equals the point count selects everything") {
    std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    const auto idx = farthest_point_sample(pts, 3);
    CHECK(idx.size() == 3);
    std::vector<int> sorted(idx);
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2});
  }
  SUBCASE("square corners beat the center") {
    std::vector<Vec3> pts{{0, 0, 0}, {2, 0, 0}, {2, 2, 0}, {0, 2, 0}, {1, 1, 0}};
    const auto idx = farthest_point_sample(pts, 4);
    std::vector<int> sorted(idx);
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3});
  }
  SUBCASE("line endpoints") {
    std::vector<Vec3> pts;
    for (int i = 0; i < 9; ++i) pts.emplace_back(i * 0.5, 0, 0);
    const auto idx = farthest_point_sample(pts, 2);
    CHECK(idx[0] == 0);
    CHECK(idx[1] == 8);
  }
  SUBCASE("matches the brute-force oracle on random clouds") {
    Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Vec3> pts;
      for (int i = 0; i < 60; ++i) {
        pts.emplace_back(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
      }
      CHECK(farthest_point_sample(pts, 12) == fps_oracle(pts, 12));
    }
  }
  SUBCASE("m beyond the point count is rejected") {
    std::vector<Vec3> pts{{0, 0, 0}};
    CHECK_THROWS_AS(farthest_point_sample(pts, 2), std::invalid_argument);
  }
}

TEST_CASE("set_abstraction: pooling identity and permutation invariance") {
  ad::ParameterStore store;
  Rng rng(22);
  const Mlp mlp = Mlp::create(store, rng, "t.sa", 4, {8, 8}, Mlp::FinalAct::kRelu);

  PointCloud cloud;
  cloud.points.push_back({1.0, 0.0, 0.0, 0.4});
  SpatialIndex index(cloud);
  std::vector<Vec3> pts{{1.0, 0.0, 0.0}};
  Tensor feats({1, 1}, {0.4});
  std::vector<Vec3> centers{{0.5, 0.0, 0.0}};

  // Single in-radius neighbor: output is the MLP of that relative row.
  Tensor out =
      set_abstraction(nullptr, store, mlp, pts, feats, index, centers, 1.0, 3, nullptr);
  Tensor row({1, 4}, {0.5, 0.0, 0.0, 0.4});
  Tensor direct = mlp.forward(nullptr, store, row);
  REQUIRE(out.size() == direct.size());
  for (int i = 0; i < out.size(); ++i) CHECK(out[i] == direct[i]);

  // Permuting the neighborhood leaves the pooled feature unchanged.
  PointCloud three;
  three.points.push_back({0.2, 0.0, 0.0, 0.1});
  three.points.push_back({0.0, 0.3, 0.0, 0.2});
  three.points.push_back({0.0, 0.0, 0.4, 0.3});
  PointCloud swapped;
  swapped.points.push_back({0.0, 0.0, 0.4, 0.3});
  swapped.points.push_back({0.0, 0.3, 0.0, 0.2});
  swapped.points.push_back({0.2, 0.0, 0.0, 0.1});
  auto run = [&](const PointCloud& c) {
    SpatialIndex idx(c);
    std::vector<Vec3> p;
    Tensor f({3, 1});
    for (int i = 0; i < 3; ++i) {
      p.push_back(c[static_cast<std::size_t>(i)].position());
      f.data()[i] = c[static_cast<std::size_t>(i)].intensity;
    }
    return set_abstraction(nullptr, store, mlp, p, f, idx,
                           std::vector<Vec3>{{0.0, 0.0, 0.0}}, 1.0, 3, nullptr);
  };
  Tensor oa = run(three);
  Tensor ob = run(swapped);
  for (int i = 0; i < oa.size(); ++i) CHECK(oa[i] == ob[i]);
}

TEST_CASE("set_abstraction: hand-unrolled two-center oracle") {
  ad::ParameterStore store;
  Rng rng(23);
  const Mlp mlp = Mlp::create(store, rng, "t.sa2", 4, {5}, Mlp::FinalAct::kRelu);

  PointCloud cloud;
  cloud.points.push_back({0.0, 0.0, 0.0, 0.5});
  cloud.points.push_back({0.4, 0.0, 0.0, 0.25});
  cloud.points.push_back({3.0, 3.0, 3.0, 0.75});
  SpatialIndex index(cloud);
  std::vector<Vec3> pts;
  Tensor feats({3, 1});
  for (int i = 0; i < 3; ++i) {
    pts.push_back(cloud[static_cast<std::size_t>(i)].position());
    feats.data()[i] = cloud[static_cast<std::size_t>(i)].intensity;
  }
  std::vector<Vec3> centers{{0.0, 0.0, 0.0}, {3.0, 3.0, 3.0}};
  Tensor out =
      set_abstraction(nullptr, store, mlp, pts, feats, index, centers, 1.0, 2, nullptr);
  REQUIRE(out.shape() == ad::Shape{2, 5});

  // Center 0 gathers points 0 and 1; center 1 gathers point 2 twice.
  Tensor rows({4, 4}, {0.0, 0.0, 0.0, 0.5, 0.4, 0.0, 0.0, 0.25,
                       0.0, 0.0, 0.0, 0.75, 0.0, 0.0, 0.0, 0.75});
  Tensor activated = mlp.forward(nullptr, store, rows);
  for (int j = 0; j < 5; ++j) {
    const double m0 = std::max(activated.data()[0 * 5 + j], activated.data()[1 * 5 + j]);
    const double m1 = std::max(activated.data()[2 * 5 + j], activated.data()[3 * 5 + j]);
    CHECK(out.data()[0 * 5 + j] == m0);
    CHECK(out.data()[1 * 5 + j] == m1);
  }
}

TEST_CASE("set_abstraction: empty center keeps a zero feature and is flagged") {
  ad::ParameterStore store;
  Rng rng(34);
  const Mlp mlp = Mlp::create(store, rng, "t.sa3", 4, {5}, Mlp::FinalAct::kRelu);
  PointCloud cloud;
  cloud.points.push_back({0.0, 0.0, 0.0, 0.5});
  SpatialIndex index(cloud);
  std::vector<Vec3> pts{{0.0, 0.0, 0.0}};
  Tensor feats({1, 1}, {0.5});
  std::vector<Vec3> centers{{0.0, 0.0, 0.0}, {50.0, 0.0, 0.0}};
  std::vector<bool> flags(2, false);
  Tensor out =
      set_abstraction(nullptr, store, mlp, pts, feats, index, centers, 1.0, 2, &flags);
  CHECK_FALSE(flags[0]);
  CHECK(flags[1]);
  for (int j = 0; j < 5; ++j) CHECK(out.data()[1 * 5 + j] == 0.0);
}

TEST_CASE("feature_propagation: interpolation fixtures") {
  std::vector<Vec3> coarse{{0, 0, 0}, {2, 0, 0}, {0, 2, 0}};
  Tensor cf({3, 2}, {1.0, 10.0, 2.0, 20.0, 3.0, 30.0});

  SUBCASE("coincident fine point reproduces the coarse feature") {
    Tensor interp = interpolate_features(nullptr, coarse, cf, {{2, 0, 0}});
    CHECK(interp.data()[0] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(interp.data()[1] == doctest::Approx(20.0).epsilon(1e-8));
  }
  SUBCASE("equidistant fine point takes the unweighted mean") {
    Tensor interp = interpolate_features(nullptr, coarse, cf, {{1.0, 1.0, 0.0}});
    CHECK(interp.data()[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(interp.data()[1] == doctest::Approx(20.0).epsilon(1e-12));
  }
  SUBCASE("random instance matches direct computation") {
    Rng rng(24);
    for (int trial = 0; trial < 10; ++trial) {
      const Vec3 q(rng.uniform(-1, 3), rng.uniform(-1, 3), rng.uniform(-1, 1));
      Tensor interp = interpolate_features(nullptr, coarse, cf, {q});
      double w[3], wsum = 0.0;
      for (int i = 0; i < 3; ++i) {
        w[i] = 1.0 / std::max((coarse[static_cast<std::size_t>(i)] - q).norm(), 1e-10);
        wsum += w[i];
      }
      double expected0 = 0.0;
      for (int i = 0; i < 3; ++i) expected0 += w[i] / wsum * cf.data()[i * 2];
      CHECK(interp.data()[0] == doctest::Approx(expected0).epsilon(1e-12));
    }
  }
}

TEST_CASE("fe_forward: shape contract and minimum size") {
  ad::ParameterStore store;
  Rng init(25);
  const FEConfig config = tiny_config();
  FeatureExtractor fe(config, store, init);

  Rng rng(26);
  PointCloud cloud = dyadic_cloud(80, rng);
  FeatureCloud fc = fe.forward(nullptr, store, cloud, RunMode::kInfer, nullptr);
  CHECK(fc.descriptors.shape() == ad::Shape{80, 32});
  CHECK(fc.descriptors.all_finite());

  // Descriptors vary across a structured scene.
  double mn = fc.descriptors[0], mx = fc.descriptors[0];
  for (int i = 0; i < fc.descriptors.size(); ++i) {
    mn = std::min(mn, fc.descriptors[i]);
    mx = std::max(mx, fc.descriptors[i]);
  }
  CHECK(mx - mn > 1e-6);

  PointCloud too_small = dyadic_cloud(20, rng);
  CHECK_THROWS_WITH_AS(fe.forward(nullptr, store, too_small, RunMode::kInfer, nullptr),
                       doctest::Contains("needs at least"), std::invalid_argument);
}

TEST_CASE("fe_forward: bitwise translation invariance") {
  ad::ParameterStore store;
  Rng init(27);
  FeatureExtractor fe(tiny_config(), store, init);

  Rng rng(28);
  PointCloud cloud = dyadic_cloud(64, rng);
  // Dyadic translation: exact in double arithmetic at these magnitudes.
  const Vec3 t(6.5, -3.25, 2.125);
  PointCloud moved = cloud;
  for (Point& p : moved.points) {
    p.x += t.x();
    p.y += t.y();
    p.z += t.z();
  }
  FeatureCloud fa = fe.forward(nullptr, store, cloud, RunMode::kInfer, nullptr);
  FeatureCloud fb = fe.forward(nullptr, store, moved, RunMode::kInfer, nullptr);
  for (int i = 0; i < fa.descriptors.size(); ++i) {
    CHECK(fa.descriptors[i] == fb.descriptors[i]);
  }
}

TEST_CASE("fe_forward: permutation equivariance (sampling seed fixed)") {
  ad::ParameterStore store;
  Rng init(29);
  FeatureExtractor fe(tiny_config(), store, init);

  Rng rng(30);
  PointCloud cloud = dyadic_cloud(64, rng);
  // Random permutation fixing index 0: the max-min sampling is seeded there,
  // so equivariance holds exactly for seed-preserving permutations.
  std::vector<int> perm(cloud.size());
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = perm.size(); i > 2; --i) {
    const std::size_t j = 1 + rng.uniform_index(i - 1);
    std::swap(perm[i - 1], perm[j]);
  }
  PointCloud shuffled;
  shuffled.points.resize(cloud.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.points[i] = cloud.points[static_cast<std::size_t>(perm[i])];
  }
  FeatureCloud fa = fe.forward(nullptr, store, cloud, RunMode::kInfer, nullptr);
  FeatureCloud fb = fe.forward(nullptr, store, shuffled, RunMode::kInfer, nullptr);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (int c = 0; c < 32; ++c) {
      CHECK(fb.descriptors.data()[i * 32 + c] ==
            fa.descriptors.data()[static_cast<std::size_t>(perm[i]) * 32 + c]);
    }
  }
}

TEST_CASE("fe stack: gradient against finite differences on a toy cloud") {
  ad::ParameterStore store;
  Rng init(31);
  FEConfig config = tiny_config();
  config.scale = 256;  // levels 16 / 4 / 2
  FeatureExtractor fe(config, store, init);

  Rng rng(32);
  PointCloud cloud = dyadic_cloud(24, rng, 4.0);

  Rng head_rng(33);
  Tensor head({24, 32});
  for (double& v : head.values()) v = head_rng.uniform(-1, 1);

  auto value_of = [&]() {
    FeatureCloud fc = fe.forward(nullptr, store, cloud, RunMode::kInfer, nullptr);
    return ad::sum_all(ad::mul(fc.descriptors, head)).value();
  };

  Tape tape;
  FeatureCloud fc = fe.forward(&tape, store, cloud, RunMode::kInfer, nullptr);
  ad::Tensor loss = ad::sum_all(ad::mul(fc.descriptors, head));
  store.zero_grads();
  ad::backward(tape, loss, store);

  const double h = 1e-5;
  int checked = 0;
  for (const std::string name :
       {"fe.sa1.fc0.w", "fe.fp3.fc1.w", "fe.final.w", "fe.sa3.fc1.b"}) {
    std::vector<double>& params = store.entry(name).tensor.values();
    const std::vector<double>& grad = store.grad(name);
    for (std::size_t i = 0; i < params.size();
         i += std::max<std::size_t>(1, params.size() / 5)) {
      const double saved = params[i];
      params[i] = saved + h;
      const double fp = value_of();
      params[i] = saved - h;
      const double fm = value_of();
      params[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double denom = std::max(std::abs(grad[i]), 1e-6);
      CHECK(std::abs(grad[i] - numeric) / denom < 1e-3);
      ++checked;
    }
  }
  CHECK(checked >= 15);
}
