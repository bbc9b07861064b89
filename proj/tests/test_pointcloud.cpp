#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "sgiformer/pointcloud.hpp"
#include "test_support.hpp"

using namespace sgiformer;
using sgiformer::testing::random_const;

namespace {

PointCloud cloud_of(std::vector<Vec3> coords) {
  PointCloud pc;
  pc.colors.assign(coords.size(), Vec3{0.5, 0.5, 0.5});
  pc.coords = std::move(coords);
  return pc;
}

// Voxels placed directly on grid centers with chosen colors.
VoxelGrid grid_of(const std::vector<std::array<std::int64_t, 3>>& keys, const std::vector<Vec3>& colors,
                  double vs = 0.02) {
  PointCloud pc;
  for (const auto& k : keys) pc.coords.push_back({(k[0] + 0.5) * vs, (k[1] + 0.5) * vs, (k[2] + 0.5) * vs});
  pc.colors = colors;
  return voxelize(pc, vs);
}

double dist(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

// Brute-force kNN graph + label-array merge loop, written independently of the library.
std::vector<std::size_t> reference_segmentation(const VoxelGrid& g, std::size_t k, double threshold) {
  const std::size_t m = g.size();
  std::vector<std::tuple<double, std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<std::pair<double, std::size_t>> c;
    for (std::size_t j = 0; j < m; ++j)
      if (j != i) c.emplace_back(dist(g.coords[i], g.coords[j]), j);
    std::sort(c.begin(), c.end());
    for (std::size_t t = 0; t < std::min(k, c.size()); ++t) {
      std::size_t a = std::min(i, c[t].second), b = std::max(i, c[t].second);
      double w = dist(g.coords[a], g.coords[b]) / g.voxel_size + dist(g.colors[a], g.colors[b]);
      edges.emplace_back(w, a, b);
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  std::vector<std::size_t> label(m);
  std::iota(label.begin(), label.end(), 0);
  std::vector<double> internal(m, 0.0);
  for (const auto& [w, a, b] : edges) {
    const std::size_t la = label[a], lb = label[b];
    if (la == lb) continue;
    const auto sa = static_cast<double>(std::count(label.begin(), label.end(), la));
    const auto sb = static_cast<double>(std::count(label.begin(), label.end(), lb));
    if (w <= internal[la] + threshold / sa && w <= internal[lb] + threshold / sb) {
      for (auto& l : label)
        if (l == lb) l = la;
      internal[la] = w;
    }
  }
  // Canonical numbering by first occurrence.
  std::vector<std::size_t> out(m);
  std::vector<std::size_t> seen;
  for (std::size_t v = 0; v < m; ++v) {
    auto it = std::find(seen.begin(), seen.end(), label[v]);
    if (it == seen.end()) {
      out[v] = seen.size();
      seen.push_back(label[v]);
    } else {
      out[v] = static_cast<std::size_t>(it - seen.begin());
    }
  }
  return out;
}

void check_partition(const SuperpointPartition& part, std::size_t m) {
  REQUIRE(part.voxel_to_superpoint.size() == m);
  std::vector<int> hits(m, 0);
  for (std::size_t s = 0; s < part.size(); ++s) {
    CHECK_FALSE(part.superpoint_to_voxels[s].empty());
    for (auto v : part.superpoint_to_voxels[s]) {
      ++hits[v];
      CHECK(part.voxel_to_superpoint[v] == s);
    }
  }
  for (int h : hits) CHECK(h == 1);
}

}  // namespace

TEST_CASE("voxelize examples") {
  auto g1 = voxelize(cloud_of({{0.005, 0, 0}}), 0.02);
  REQUIRE(g1.size() == 1);
  CHECK(g1.coords[0] == Vec3{0.005, 0, 0});

  auto g2 = voxelize(cloud_of({{0, 0, 0}, {0.01, 0, 0}}), 0.02);
  REQUIRE(g2.size() == 1);
  CHECK(g2.coords[0][0] == doctest::Approx(0.005));
  CHECK(g2.coords[0][1] == 0.0);

  auto g3 = voxelize(cloud_of({{0, 0, 0}, {0.03, 0, 0}}), 0.02);
  CHECK(g3.size() == 2);
  CHECK(g3.keys[0] != g3.keys[1]);

  CHECK_THROWS_AS(voxelize(PointCloud{}, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(voxelize(cloud_of({{0, 0, 0}}), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(voxelize(cloud_of({{0, 0, 0}}), -1.0), std::invalid_argument);
}

TEST_CASE("voxelize mapping is a bijective partition and means are exact") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.1, 0.1), c(0, 1);
  PointCloud pc;
  for (int i = 0; i < 500; ++i) {
    pc.coords.push_back({u(rng), u(rng), u(rng) * 0.2});
    pc.colors.push_back({c(rng), c(rng), c(rng)});
  }
  auto g = voxelize(pc, 0.02);
  std::vector<int> hits(pc.size(), 0);
  for (std::size_t v = 0; v < g.size(); ++v) {
    Vec3 mean{0, 0, 0};
    for (auto p : g.voxel_to_points[v]) {
      ++hits[p];
      CHECK(g.point_to_voxel[p] == v);
      for (int a = 0; a < 3; ++a) mean[a] += pc.coords[p][a] / g.voxel_to_points[v].size();
    }
    for (int a = 0; a < 3; ++a) CHECK(g.coords[v][a] == doctest::Approx(mean[a]).epsilon(1e-12));
  }
  for (int h : hits) CHECK(h == 1);
  for (std::size_t v = 1; v < g.size(); ++v) CHECK(g.keys[v - 1] < g.keys[v]);
}

TEST_CASE("voxelize is invariant to point order") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0, 0.1);
  PointCloud pc;
  for (int i = 0; i < 200; ++i) {
    pc.coords.push_back({u(rng), u(rng), u(rng)});
    pc.colors.push_back({0.1, 0.2, 0.3});
  }
  auto shuffled = pc;
  std::shuffle(shuffled.coords.begin(), shuffled.coords.end(), rng);
  auto a = voxelize(pc, 0.02);
  auto b = voxelize(shuffled, 0.02);
  REQUIRE(a.size() == b.size());
  for (std::size_t v = 0; v < a.size(); ++v) {
    CHECK(a.keys[v] == b.keys[v]);
    CHECK(a.voxel_to_points[v].size() == b.voxel_to_points[v].size());
    for (int ax = 0; ax < 3; ++ax) CHECK(a.coords[v][ax] == doctest::Approx(b.coords[v][ax]).epsilon(1e-12));
  }
}

TEST_CASE("voxel labels: majority with low-id tie break, centers over whole instance") {
  PointCloud pc = cloud_of({{0.001, 0, 0}, {0.002, 0, 0}, {0.003, 0, 0}, {0.004, 0, 0}, {0.05, 0, 0}, {0.09, 0, 0}});
  pc.semantic = {3, 2, 2, 3, 2, 5};
  pc.instance = {7, 4, 4, 7, 4, 0};
  auto g = voxelize(pc, 0.02);
  REQUIRE(g.size() == 3);
  CHECK(g.semantic[0] == 2);
  CHECK(g.instance[0] == 4);
  CHECK(g.center_valid[0] == 1);
  // instance 4 has points at 0.002, 0.003, 0.05
  CHECK(g.centers[0][0] == doctest::Approx((0.002 + 0.003 + 0.05) / 3.0));
  CHECK(g.instance[2] == 0);
  CHECK(g.center_valid[2] == 0);
}

TEST_CASE("point cloud validation") {
  auto pc = cloud_of({{0, 0, 0}, {1, 1, 1}});
  CHECK_NOTHROW(pc.validate(3));
  pc.semantic = {1, 1};
  pc.instance = {1, 1};
  CHECK_NOTHROW(pc.validate(3));
  pc.semantic = {1, 2};
  CHECK_THROWS_AS(pc.validate(3), std::invalid_argument);
  pc.semantic = {1, 5};
  pc.instance = {0, 0};
  CHECK_THROWS_AS(pc.validate(3), std::invalid_argument);
  pc.semantic = {1, 1};
  pc.colors[0][1] = 1.5;
  CHECK_THROWS_AS(pc.validate(3), std::invalid_argument);
  pc.colors[0][1] = 0.5;
  pc.coords[1][2] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(pc.validate(3), std::invalid_argument);
}

TEST_CASE("superpoints: hand-traced four-voxel line") {
  // Unit voxels keep every weight exact: (0,1)=1, (2,3)=1, (1,2)=1+0.75 from the color step.
  auto g = grid_of({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}},
                   {{0.125, 0.5, 0.5}, {0.125, 0.5, 0.5}, {0.875, 0.5, 0.5}, {0.875, 0.5, 0.5}}, 1.0);
  auto edges = knn_voxel_graph(g, 1);
  REQUIRE(edges.size() == 3);
  CHECK(edges[0].a == 0);
  CHECK(edges[0].weight == 1.0);
  CHECK(edges[1].a == 2);
  CHECK(edges[2].weight == 1.75);

  // t=1: both pairs merge (1 <= 0 + 1/1); the bridge needs 1.75 <= 1 + 1/2: no.
  auto p1 = segment_superpoints(g, 1, 1.0);
  CHECK(p1.size() == 2);
  CHECK(p1.voxel_to_superpoint == std::vector<std::size_t>{0, 0, 1, 1});
  // t=0.9: nothing merges.
  CHECK(segment_superpoints(g, 1, 0.9).size() == 4);
  // t=1.5: bridge threshold 1 + 1.5/2 = 1.75, merges.
  CHECK(segment_superpoints(g, 1, 1.5).size() == 1);
}

TEST_CASE("superpoints: two far clusters and infinite threshold") {
  std::vector<std::array<std::int64_t, 3>> keys;
  for (std::int64_t x = 0; x < 3; ++x)
    for (std::int64_t y = 0; y < 3; ++y) {
      keys.push_back({x, y, 0});
      keys.push_back({x + 40, y, 0});
    }
  std::sort(keys.begin(), keys.end());
  auto g = grid_of(keys, std::vector<Vec3>(keys.size(), Vec3{0.3, 0.3, 0.3}));
  auto two = segment_superpoints(g, 4, 5.0);
  CHECK(two.size() == 2);
  check_partition(two, g.size());

  // Needs a connected kNN graph: a single compact block.
  std::vector<std::array<std::int64_t, 3>> block;
  std::mt19937_64 rng(3);
  std::vector<Vec3> colors;
  std::uniform_real_distribution<double> c(0, 1);
  for (std::int64_t x = 0; x < 4; ++x)
    for (std::int64_t y = 0; y < 4; ++y) {
      block.push_back({x, y, 0});
      colors.push_back({c(rng), c(rng), c(rng)});
    }
  auto gb = grid_of(block, colors);
  CHECK(segment_superpoints(gb, 8, std::numeric_limits<double>::infinity()).size() == 1);
}

TEST_CASE("superpoints match a step-by-step reference on 20-voxel fixtures") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int64_t> key(0, 5);
  std::uniform_real_distribution<double> col(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::array<std::int64_t, 3>> keys;
    while (keys.size() < 20) {
      std::array<std::int64_t, 3> k{key(rng), key(rng), key(rng) % 2};
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    std::sort(keys.begin(), keys.end());
    std::vector<Vec3> colors;
    for (std::size_t i = 0; i < keys.size(); ++i) colors.push_back({col(rng), col(rng), col(rng)});
    // jitter coordinates so distances are not tied
    PointCloud pc;
    std::uniform_real_distribution<double> jit(0.002, 0.018);
    for (const auto& k : keys) pc.coords.push_back({k[0] * 0.02 + jit(rng), k[1] * 0.02 + jit(rng), k[2] * 0.02 + jit(rng)});
    pc.colors = colors;
    auto g = voxelize(pc, 0.02);
    REQUIRE(g.size() == 20);
    for (double t : {0.3, 1.0, 2.5}) {
      for (std::size_t k : {2u, 5u, 8u}) {
        auto part = segment_superpoints(g, k, t);
        check_partition(part, g.size());
        CHECK(part.voxel_to_superpoint == reference_segmentation(g, k, t));
      }
    }
    auto again = segment_superpoints(g, 8, 1.0);
    CHECK(again.voxel_to_superpoint == segment_superpoints(g, 8, 1.0).voxel_to_superpoint);
  }
}

TEST_CASE("pool_to_superpoints") {
  SuperpointPartition single;
  single.voxel_to_superpoint = {0, 1, 2};
  single.superpoint_to_voxels = {{0}, {1}, {2}};
  auto x = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  auto same = pool_to_superpoints(x, single);
  for (std::size_t i = 0; i < 6; ++i) CHECK(same.at(i) == x.at(i));

  SuperpointPartition one;
  one.voxel_to_superpoint = {0, 0};
  one.superpoint_to_voxels = {{0, 1}};
  CHECK(pool_to_superpoints(Tensor::from({2, 1}, {1, 3}), one).at(0) == 2.0);

  std::mt19937_64 rng(12);
  auto v = random_const({10, 4}, rng);
  SuperpointPartition part;
  part.voxel_to_superpoint = {2, 0, 1, 0, 2, 3, 1, 1, 0, 3};
  part.superpoint_to_voxels.resize(4);
  for (std::size_t i = 0; i < 10; ++i) part.superpoint_to_voxels[part.voxel_to_superpoint[i]].push_back(i);
  auto pooled = pool_to_superpoints(v, part);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t c = 0; c < 4; ++c) {
      double acc = 0.0, n = 0.0;
      for (std::size_t i = 0; i < 10; ++i)
        if (part.voxel_to_superpoint[i] == s) {
          acc += v.at(i, c);
          n += 1.0;
        }
      CHECK(pooled.at(s, c) == doctest::Approx(acc / n).epsilon(1e-14));
    }

  auto constant = pool_to_superpoints(Tensor::full({10, 3}, 2.5), part);
  for (double val : constant.data()) CHECK(val == doctest::Approx(2.5).epsilon(1e-15));

  auto pv = Tensor::parameter({10, 1}, std::vector<double>(10, 0.0));
  backward(sum(pool_to_superpoints(pv, part)));
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(pv.grad()[i] == doctest::Approx(1.0 / part.superpoint_to_voxels[part.voxel_to_superpoint[i]].size()));
  }
  CHECK_THROWS_AS(pool_to_superpoints(Tensor::zeros({9, 4}), part), ShapeError);
}

TEST_CASE("broadcast_to_points") {
  PointCloud pc;
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0, 0.1);
  for (int i = 0; i < 120; ++i) {
    pc.coords.push_back({u(rng), u(rng), 0.0});
    pc.colors.push_back({0.4, 0.4, 0.4});
  }
  auto g = voxelize(pc, 0.02);
  auto part = segment_superpoints(g, 4, 0.5);

  SuperpointPartition whole;
  whole.voxel_to_superpoint.assign(g.size(), 0);
  whole.superpoint_to_voxels.resize(1);
  for (std::size_t v = 0; v < g.size(); ++v) whole.superpoint_to_voxels[0].push_back(v);
  auto all = broadcast_to_points(Tensor::from({1, 2}, {0.25, -1.0}), whole, g);
  CHECK(all.rows() == pc.size());
  for (std::size_t p = 0; p < pc.size(); ++p) CHECK(all.at(p, 1) == -1.0);

  auto sv = random_const({part.size(), 3}, rng);
  auto pts = broadcast_to_points(sv, part, g);
  for (std::size_t p = 0; p < pc.size(); ++p) {
    std::size_t s = part.voxel_to_superpoint[g.point_to_voxel[p]];
    for (std::size_t c = 0; c < 3; ++c) CHECK(pts.at(p, c) == sv.at(s, c));
  }

  // piecewise-constant voxel values survive pool then broadcast
  auto voxel_vals = gather_rows(sv, part.voxel_to_superpoint);
  auto round = pool_to_superpoints(voxel_vals, part);
  for (std::size_t i = 0; i < sv.numel(); ++i) CHECK(round.at(i) == doctest::Approx(sv.at(i)).epsilon(1e-14));
  CHECK_THROWS_AS(broadcast_to_points(Tensor::zeros({part.size() + 1, 3}), part, g), ShapeError);
}

TEST_CASE("voxel adjacency") {
  auto g = grid_of({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {1, 1, 1}}, std::vector<Vec3>(4, Vec3{0, 0, 0}));
  auto a6 = voxel_adjacency(g, Neighborhood::k6);
  auto a26 = voxel_adjacency(g, Neighborhood::k26);
  // grid order: (0,0,0) (1,0,0) (1,1,1) (2,0,0)
  CHECK(a6[0] == std::vector<std::size_t>{0, 1});
  CHECK(a6[1] == std::vector<std::size_t>{1, 0, 3});
  CHECK(a6[2] == std::vector<std::size_t>{2});
  CHECK(a26[2] == std::vector<std::size_t>{2, 0, 1, 3});
  auto a18 = voxel_adjacency(g, Neighborhood::k18);
  CHECK(a18[2] == std::vector<std::size_t>{2, 1});
}
