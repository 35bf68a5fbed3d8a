#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "deepicp/dfe.hpp"
#include "deepicp/saliency.hpp"
#include "grad_check.hpp"

using namespace deepicp;
using namespace deepicp::net;
using ad::Tape;
using ad::Tensor;

namespace {

Tensor random_descriptors(int n, Rng& rng) {
  Tensor t({n, 32});
  for (double& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

FeatureCloud make_feature_cloud(const PointCloud& cloud, Rng& rng) {
  FeatureCloud fc;
  for (const Point& p : cloud.points) {
    fc.coords.push_back(p.position());
    fc.intensities.push_back(p.intensity);
  }
  fc.descriptors = random_descriptors(static_cast<int>(cloud.size()), rng);
  fc.index = std::make_shared<SpatialIndex>(cloud);
  return fc;
}

}  // namespace

TEST_CASE("weighting_forward: positivity and pointwise behavior") {
  ad::ParameterStore store;
  Rng init(41);
  WeightingLayer layer("w", store, init);

  Rng rng(42);
  Tensor desc = random_descriptors(16, rng);
  Tensor scores =
      layer.forward(nullptr, store, desc, ad::BnMode::kTrain, false);
  REQUIRE(scores.shape() == ad::Shape{16, 1});
  for (int i = 0; i < scores.size(); ++i) CHECK(scores[i] > 0.0);

  // Identical descriptor rows produce identical scores.
  Tensor twin({4, 32});
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 32; ++c) twin.data()[i * 32 + c] = desc.data()[c];
  Tensor twin_scores =
      layer.forward(nullptr, store, twin, ad::BnMode::kTrain, false);
  for (int i = 1; i < 4; ++i) CHECK(twin_scores[i] == twin_scores[0]);

  CHECK_THROWS_AS(layer.forward(nullptr, store, Tensor({4, 16}), ad::BnMode::kTrain, false),
                  std::invalid_argument);
}

TEST_CASE("weighting_forward: gradient through the three-layer stack") {
  ad::ParameterStore store;
  Rng init(43);
  WeightingLayer layer("w", store, init);
  Rng rng(44);
  Tensor desc = random_descriptors(8, rng);
  Tensor head({8, 1});
  for (double& v : head.values()) v = rng.uniform(-1, 1);

  const double err = gradcheck::check_unary(
      [&](Tape*, const Tensor& t) {
        Tensor scores = layer.forward(nullptr, store, t, ad::BnMode::kTrain, false);
        return ad::sum_all(ad::mul(scores, head));
      },
      desc);
  CHECK(err < 1e-5);
}

TEST_CASE("select_topk: fixtures and oracle") {
  std::vector<Vec3> coords{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};

  SUBCASE("scores (0.1, 0.9, 0.5) pick indices (1, 2)") {
    Tensor scores({3, 1}, {0.1, 0.9, 0.5});
    KeypointSet set = select_topk(scores, coords, 2);
    CHECK(set.indices == std::vector<int>{1, 2});
    CHECK(set.coords[0] == Vec3(1, 0, 0));
    CHECK(set.weights[0] == doctest::Approx(0.9));
    CHECK(set.weights[1] == doctest::Approx(0.5));
  }
  SUBCASE("ties break toward lower indices") {
    Tensor scores({3, 1}, {0.5, 0.5, 0.5});
    KeypointSet set = select_topk(scores, coords, 2);
    CHECK(set.indices == std::vector<int>{0, 1});
  }
  SUBCASE("selection beyond the score count is rejected") {
    Tensor scores({3, 1}, {0.1, 0.2, 0.3});
    CHECK_THROWS_AS(select_topk(scores, coords, 4), std::invalid_argument);
  }
  SUBCASE("random scores match the argsort oracle") {
    Rng rng(45);
    for (int trial = 0; trial < 20; ++trial) {
      const int n1 = 5 + static_cast<int>(rng.uniform_index(60));
      Tensor scores({n1, 1});
      std::vector<Vec3> pts;
      for (int i = 0; i < n1; ++i) {
        scores.data()[i] = rng.uniform(0.0, 1.0);
        pts.emplace_back(i, 0, 0);
      }
      const int n = 1 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n1)));
      KeypointSet set = select_topk(scores, pts, n);

      std::vector<int> order(static_cast<std::size_t>(n1));
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return scores[a] > scores[b]; });
      order.resize(static_cast<std::size_t>(n));
      CHECK(set.indices == order);
      // Weights come out descending.
      for (int i = 1; i < n; ++i) CHECK(set.weights[i - 1] >= set.weights[i]);
    }
  }
}

TEST_CASE("select_topk: monotonicity under score increase") {
  Rng rng(46);
  for (int trial = 0; trial < 20; ++trial) {
    const int n1 = 10;
    Tensor scores({n1, 1});
    std::vector<Vec3> pts;
    for (int i = 0; i < n1; ++i) {
      scores.data()[i] = rng.uniform(0.0, 1.0);
      pts.emplace_back(i, 0, 0);
    }
    KeypointSet before = select_topk(scores, pts, 4);
    const int bumped = before.indices[static_cast<std::size_t>(rng.uniform_index(4))];
    Tensor bumped_scores = scores;
    Tensor copy({n1, 1}, scores.values());
    copy.data()[bumped] += rng.uniform(0.0, 2.0) + 1e-9;
    KeypointSet after = select_topk(copy, pts, 4);
    CHECK(std::find(after.indices.begin(), after.indices.end(), bumped) !=
          after.indices.end());
  }
}

TEST_CASE("select_topk: selected weight values stay differentiable") {
  Tape tape;
  Tensor scores({4, 1}, {0.3, 0.9, 0.1, 0.5});
  Tensor leaf = tape.leaf(scores);
  std::vector<Vec3> coords{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  KeypointSet set = select_topk(leaf, coords, 2);
  Tensor loss = ad::sum_all(set.weights);
  tape.backward(loss);
  const std::vector<double>& g = tape.grad(leaf.node());
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);  // selected
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 1.0);  // selected
}

TEST_CASE("gather_neighborhood: normalization, padding, empty flag") {
  Rng rng(47);
  PointCloud cloud;
  cloud.points.push_back({1.0, 1.0, 1.0, 0.6});
  cloud.points.push_back({1.5, 1.0, 1.0, 0.2});
  FeatureCloud fc = make_feature_cloud(cloud, rng);

  DFEConfig config;
  config.radius = 1.0;
  config.k = 4;

  SUBCASE("local coordinates are center-relative and radius-normalized") {
    config.k = 1;
    NeighborhoodBatch batch =
        gather_neighborhoods(nullptr, fc, {Vec3(1.0, 1.0, 1.0)}, config);
    REQUIRE(batch.rows.shape() == ad::Shape{1, 36});
    CHECK(batch.rows.data()[0] == 0.0);  // the center point itself
    CHECK(batch.rows.data()[3] == doctest::Approx(0.6));
    for (int c = 0; c < 32; ++c) {
      CHECK(batch.rows.data()[4 + c] == fc.descriptors.data()[c]);
    }

    config.radius = 2.0;
    NeighborhoodBatch wide =
        gather_neighborhoods(nullptr, fc, {Vec3(1.0, 1.0, 1.0)}, config);
    // Second query row is the same point; first row local x of neighbor 2
    // under radius 2 normalization shows up at 0.5 / 2.
    CHECK(wide.rows.data()[0] == 0.0);
  }

  SUBCASE("two in-radius points cycle to fill K rows") {
    NeighborhoodBatch batch =
        gather_neighborhoods(nullptr, fc, {Vec3(1.0, 1.0, 1.0)}, config);
    REQUIRE(batch.rows.shape() == ad::Shape{4, 36});
    // Rows 2,3 duplicate rows 0,1.
    for (int c = 0; c < 36; ++c) {
      CHECK(batch.rows.data()[2 * 36 + c] == batch.rows.data()[0 * 36 + c]);
      CHECK(batch.rows.data()[3 * 36 + c] == batch.rows.data()[1 * 36 + c]);
    }
    CHECK_FALSE(batch.empty[0]);
  }

  SUBCASE("empty window gives an all-zero flagged block") {
    NeighborhoodBatch batch =
        gather_neighborhoods(nullptr, fc, {Vec3(50.0, 0.0, 0.0)}, config);
    CHECK(batch.empty[0]);
    for (int i = 0; i < batch.rows.size(); ++i) CHECK(batch.rows[i] == 0.0);
  }

  SUBCASE("half-meter offset lands at 0.5 in local coordinates") {
    config.k = 2;
    NeighborhoodBatch batch =
        gather_neighborhoods(nullptr, fc, {Vec3(1.0, 1.0, 1.0)}, config);
    // Ascending distance: first the center point, then the +0.5 x neighbor.
    CHECK(batch.rows.data()[1 * 36 + 0] == doctest::Approx(0.5));
  }
}

TEST_CASE("dfe_forward: pooling identity, permutation and padding neutrality") {
  ad::ParameterStore store;
  Rng init(48);
  DFEConfig config;
  config.k = 4;
  DfeLayer layer("d", store, init, config);

  Rng rng(49);
  PointCloud cloud;
  cloud.points.push_back({0.0, 0.0, 0.0, 0.5});
  cloud.points.push_back({0.3, 0.0, 0.0, 0.1});
  cloud.points.push_back({0.0, 0.4, 0.0, 0.9});
  FeatureCloud fc = make_feature_cloud(cloud, rng);

  SUBCASE("K = 1 block reduces to the MLP of the single row") {
    DFEConfig c1 = config;
    c1.k = 1;
    DfeLayer single("s", store, init, c1);
    NeighborhoodBatch batch = gather_neighborhoods(nullptr, fc, {Vec3(0, 0, 0)}, c1);
    Tensor out = single.forward(nullptr, store, batch);
    REQUIRE(out.shape() == ad::Shape{1, 32});
    CHECK(out.all_finite());
  }

  SUBCASE("row permutation leaves the descriptor bitwise unchanged") {
    NeighborhoodBatch batch = gather_neighborhoods(nullptr, fc, {Vec3(0, 0, 0)}, config);
    Tensor out = layer.forward(nullptr, store, batch);

    NeighborhoodBatch permuted = batch;
    Tensor rows({4, 36});
    const int order[4] = {2, 0, 3, 1};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 36; ++c)
        rows.data()[r * 36 + c] = batch.rows.data()[order[r] * 36 + c];
    permuted.rows = rows;
    Tensor out2 = layer.forward(nullptr, store, permuted);
    for (int i = 0; i < out.size(); ++i) CHECK(out[i] == out2[i]);
  }

  SUBCASE("duplication padding never changes the descriptor") {
    // 3 real neighbors, padded to K=4 by cycling, versus the unpadded K=3.
    NeighborhoodBatch padded = gather_neighborhoods(nullptr, fc, {Vec3(0, 0, 0)}, config);
    DFEConfig c3 = config;
    c3.k = 3;
    NeighborhoodBatch exact = gather_neighborhoods(nullptr, fc, {Vec3(0, 0, 0)}, c3);
    Tensor a = layer.forward(nullptr, store, padded);
    Tensor b = layer.forward(nullptr, store, exact);
    for (int i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }

  SUBCASE("zero-flagged block yields the MLP-of-zero-row descriptor") {
    NeighborhoodBatch batch =
        gather_neighborhoods(nullptr, fc, {Vec3(80.0, 0.0, 0.0)}, config);
    Tensor out = layer.forward(nullptr, store, batch);
    NeighborhoodBatch zero;
    zero.k = 1;
    zero.rows = Tensor({1, 36});
    Tensor expected = layer.forward(nullptr, store, zero);
    for (int i = 0; i < out.size(); ++i) CHECK(out[i] == expected[i]);
  }
}

TEST_CASE("dfe: rigid-shift invariance under dyadic translation") {
  ad::ParameterStore store;
  Rng init(50);
  DFEConfig config;
  config.k = 8;
  DfeLayer layer("d", store, init, config);

  Rng rng(51);
  PointCloud cloud;
  for (int i = 0; i < 20; ++i) {
    auto snap = [&](double v) { return std::round(v * 1024.0) / 1024.0; };
    cloud.points.push_back(
        {snap(rng.uniform(-1, 1)), snap(rng.uniform(-1, 1)), snap(rng.uniform(-1, 1)),
         rng.uniform()});
  }
  FeatureCloud fc = make_feature_cloud(cloud, rng);

  const Vec3 shift(4.5, -8.25, 16.125);
  PointCloud moved = cloud;
  for (Point& p : moved.points) {
    p.x += shift.x();
    p.y += shift.y();
    p.z += shift.z();
  }
  FeatureCloud fc2;
  for (const Point& p : moved.points) {
    fc2.coords.push_back(p.position());
    fc2.intensities.push_back(p.intensity);
  }
  fc2.descriptors = fc.descriptors;  // same features, shifted geometry
  fc2.index = std::make_shared<SpatialIndex>(moved);

  Tensor a = layer.describe(nullptr, store, fc, {Vec3(0.25, 0.125, -0.5)}, nullptr);
  Tensor b = layer.describe(nullptr, store, fc2,
                            {Vec3(0.25, 0.125, -0.5) + shift}, nullptr);
  for (int i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("dfe: gradient through gather + MLP + max-pool") {
  ad::ParameterStore store;
  Rng init(52);
  DFEConfig config;
  config.k = 4;
  DfeLayer layer("d", store, init, config);

  Rng rng(53);
  PointCloud cloud;
  for (int i = 0; i < 10; ++i) {
    cloud.points.push_back({rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                            rng.uniform(-0.8, 0.8), rng.uniform()});
  }
  PointCloud cloud_copy = cloud;
  Tensor head({2, 32});
  for (double& v : head.values()) v = rng.uniform(-1, 1);
  const std::vector<Vec3> centers{Vec3(0.1, 0.0, 0.0), Vec3(-0.2, 0.3, 0.0)};

  Tensor base_desc = random_descriptors(10, rng);
  const double err = gradcheck::check_unary(
      [&](Tape* tape, const Tensor& descriptors) {
        FeatureCloud fc;
        for (const Point& p : cloud_copy.points) {
          fc.coords.push_back(p.position());
          fc.intensities.push_back(p.intensity);
        }
        fc.descriptors = descriptors;
        fc.index = std::make_shared<SpatialIndex>(cloud_copy);
        (void)tape;
        Tensor out = layer.describe(nullptr, store, fc, centers, nullptr);
        return ad::sum_all(ad::mul(out, head));
      },
      base_desc);
  CHECK(err < 1e-5);
}

TEST_CASE("dfe ablation variants: row widths and bypass interpolation") {
  ad::ParameterStore store;
  Rng init(54);
  Rng rng(55);
  PointCloud cloud;
  for (int i = 0; i < 12; ++i) {
    cloud.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                            rng.uniform()});
  }
  FeatureCloud fc = make_feature_cloud(cloud, rng);

  DFEConfig llf;
  llf.variant = DfeVariant::kLocalOnly;
  llf.k = 4;
  CHECK(llf.row_width() == 4);
  NeighborhoodBatch b1 = gather_neighborhoods(nullptr, fc, {Vec3(0, 0, 0)}, llf);
  CHECK(b1.rows.dim(1) == 4);
  DfeLayer llf_layer("llf", store, init, llf);
  CHECK(llf_layer.describe(nullptr, store, fc, {Vec3(0, 0, 0)}, nullptr).shape() ==
        ad::Shape{1, 32});

  DFEConfig fef;
  fef.variant = DfeVariant::kFeatureOnly;
  fef.k = 4;
  CHECK(fef.row_width() == 32);
  NeighborhoodBatch b2 = gather_neighborhoods(nullptr, fc, {Vec3(0, 0, 0)}, fef);
  CHECK(b2.rows.dim(1) == 32);

  DFEConfig bypass;
  bypass.variant = DfeVariant::kBypass;
  DfeLayer bypass_layer("byp", store, init, bypass);
  // Bypass at an existing point reproduces that point's FE feature.
  Tensor out = bypass_layer.describe(nullptr, store, fc, {fc.coords[3]}, nullptr);
  for (int c = 0; c < 32; ++c) {
    CHECK(out.data()[c] == doctest::Approx(fc.descriptors.data()[3 * 32 + c]).epsilon(1e-8));
  }
  CHECK_THROWS_AS(gather_neighborhoods(nullptr, fc, {Vec3(0, 0, 0)}, bypass),
                  std::invalid_argument);
}
