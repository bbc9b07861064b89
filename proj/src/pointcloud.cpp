#include "sgiformer/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace sgiformer {

namespace {

using GridKey = std::array<std::int64_t, 3>;

struct GridKeyHash {
  std::size_t operator()(const GridKey& k) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : k) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

using KeyIndex = std::unordered_map<GridKey, std::size_t, GridKeyHash>;

KeyIndex index_keys(const VoxelGrid& grid) {
  KeyIndex index;
  index.reserve(grid.size() * 2);
  for (std::size_t i = 0; i < grid.size(); ++i) index.emplace(grid.keys[i], i);
  return index;
}

double distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Majority vote over labels; ties resolve to the lowest label.
int majority(const std::vector<int>& labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  int best = 0;
  std::size_t best_count = 0;
  for (const auto& [label, count] : counts) {
    if (count > best_count) {
      best = label;
      best_count = count;
    }
  }
  return best;
}

}  // namespace

void PointCloud::validate(int num_classes) const {
  if (colors.size() != coords.size()) {
    throw std::invalid_argument("point cloud: " + std::to_string(coords.size()) + " coords but " +
                                std::to_string(colors.size()) + " colors");
  }
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(coords[i][a])) {
        throw std::invalid_argument("point cloud: non-finite coordinate at point " + std::to_string(i));
      }
      if (!(colors[i][a] >= 0.0 && colors[i][a] <= 1.0)) {
        throw std::invalid_argument("point cloud: color outside [0,1] at point " + std::to_string(i));
      }
    }
  }
  if (semantic.empty() != instance.empty()) {
    throw std::invalid_argument("point cloud: semantic and instance labels must both be present");
  }
  if (semantic.empty()) return;
  if (semantic.size() != coords.size() || instance.size() != coords.size()) {
    throw std::invalid_argument("point cloud: label arrays do not match point count");
  }
  std::map<int, int> instance_class;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    if (semantic[i] < 1 || semantic[i] > num_classes + 1) {
      throw std::invalid_argument("point cloud: semantic label " + std::to_string(semantic[i]) +
                                  " outside 1.." + std::to_string(num_classes + 1));
    }
    if (instance[i] < 0) throw std::invalid_argument("point cloud: negative instance id");
    if (instance[i] == 0) continue;
    auto [it, inserted] = instance_class.emplace(instance[i], semantic[i]);
    if (!inserted && it->second != semantic[i]) {
      throw std::invalid_argument("point cloud: instance " + std::to_string(instance[i]) +
                                  " carries more than one semantic label");
    }
  }
}

Vec3 Bounds::normalize(const Vec3& p) const {
  Vec3 out{};
  for (int a = 0; a < 3; ++a) {
    const double extent = hi[a] - lo[a];
    out[a] = extent > 0.0 ? (p[a] - lo[a]) / extent : 0.5;
  }
  return out;
}

Bounds bounds_of(const std::vector<Vec3>& points) {
  Bounds b;
  if (points.empty()) return b;
  b.lo = points.front();
  b.hi = points.front();
  for (const auto& p : points) {
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = std::min(b.lo[a], p[a]);
      b.hi[a] = std::max(b.hi[a], p[a]);
    }
  }
  return b;
}

Tensor VoxelGrid::coords_tensor() const {
  std::vector<double> v;
  v.reserve(coords.size() * 3);
  for (const auto& c : coords) v.insert(v.end(), c.begin(), c.end());
  return Tensor::from({coords.size(), 3}, std::move(v));
}

VoxelGrid voxelize(const PointCloud& cloud, double voxel_size) {
  if (cloud.size() == 0) throw std::invalid_argument("voxelize: empty point cloud");
  if (!(voxel_size > 0.0)) throw std::invalid_argument("voxelize: voxel size must be positive");
  if (cloud.colors.size() != cloud.size()) throw std::invalid_argument("voxelize: colors missing");

  const std::size_t n = cloud.size();
  std::vector<GridKey> point_keys(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int a = 0; a < 3; ++a)
      point_keys[i][a] = static_cast<std::int64_t>(std::floor(cloud.coords[i][a] / voxel_size));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return point_keys[a] < point_keys[b]; });

  VoxelGrid grid;
  grid.voxel_size = voxel_size;
  grid.point_to_voxel.assign(n, 0);
  for (std::size_t idx = 0; idx < n; ++idx) {
    const std::size_t p = order[idx];
    if (grid.keys.empty() || grid.keys.back() != point_keys[p]) {
      grid.keys.push_back(point_keys[p]);
      grid.voxel_to_points.emplace_back();
    }
    grid.voxel_to_points.back().push_back(p);
    grid.point_to_voxel[p] = grid.keys.size() - 1;
  }

  const std::size_t m = grid.keys.size();
  grid.coords.assign(m, Vec3{});
  grid.colors.assign(m, Vec3{});
  for (std::size_t v = 0; v < m; ++v) {
    const auto& members = grid.voxel_to_points[v];
    for (std::size_t p : members)
      for (int a = 0; a < 3; ++a) {
        grid.coords[v][a] += cloud.coords[p][a];
        grid.colors[v][a] += cloud.colors[p][a];
      }
    const double inv = 1.0 / static_cast<double>(members.size());
    for (int a = 0; a < 3; ++a) {
      grid.coords[v][a] *= inv;
      grid.colors[v][a] *= inv;
    }
  }

  if (!cloud.has_labels()) return grid;

  // Instance centroids over every point of the instance.
  std::map<int, std::pair<Vec3, std::size_t>> centroid_acc;
  for (std::size_t i = 0; i < n; ++i) {
    if (cloud.instance[i] == 0) continue;
    auto& [sum, count] = centroid_acc[cloud.instance[i]];
    for (int a = 0; a < 3; ++a) sum[a] += cloud.coords[i][a];
    ++count;
  }

  grid.semantic.assign(m, 0);
  grid.instance.assign(m, 0);
  grid.centers.assign(m, Vec3{});
  grid.center_valid.assign(m, 0);
  std::vector<int> sem, inst;
  for (std::size_t v = 0; v < m; ++v) {
    sem.clear();
    inst.clear();
    for (std::size_t p : grid.voxel_to_points[v]) {
      sem.push_back(cloud.semantic[p]);
      inst.push_back(cloud.instance[p]);
    }
    grid.semantic[v] = majority(sem);
    grid.instance[v] = majority(inst);
    if (grid.instance[v] != 0) {
      const auto& [sum, count] = centroid_acc.at(grid.instance[v]);
      for (int a = 0; a < 3; ++a) grid.centers[v][a] = sum[a] / static_cast<double>(count);
      grid.center_valid[v] = 1;
    }
  }
  return grid;
}

std::vector<GraphEdge> knn_voxel_graph(const VoxelGrid& grid, std::size_t k) {
  if (k == 0) throw std::invalid_argument("knn_voxel_graph: k must be at least 1");
  const std::size_t m = grid.size();
  const std::size_t want = std::min(k, m == 0 ? 0 : m - 1);
  const KeyIndex index = index_keys(grid);
  constexpr std::int64_t kMaxRing = 6;

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<std::pair<double, std::size_t>> cand;
  for (std::size_t i = 0; i < m && want > 0; ++i) {
    cand.clear();
    const auto& key = grid.keys[i];
    bool done = false;
    for (std::int64_t ring = 0; ring <= kMaxRing && !done; ++ring) {
      for (std::int64_t dx = -ring; dx <= ring; ++dx)
        for (std::int64_t dy = -ring; dy <= ring; ++dy)
          for (std::int64_t dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            auto it = index.find(GridKey{key[0] + dx, key[1] + dy, key[2] + dz});
            if (it == index.end() || it->second == i) continue;
            cand.emplace_back(distance(grid.coords[i], grid.coords[it->second]), it->second);
          }
      if (cand.size() >= want) {
        std::sort(cand.begin(), cand.end());
        // Unscanned cells are at least `ring` cells away.
        if (cand[want - 1].first <= static_cast<double>(ring) * grid.voxel_size) done = true;
      }
    }
    if (!done) {
      cand.clear();
      for (std::size_t j = 0; j < m; ++j)
        if (j != i) cand.emplace_back(distance(grid.coords[i], grid.coords[j]), j);
      std::sort(cand.begin(), cand.end());
    }
    for (std::size_t t = 0; t < want; ++t) {
      const std::size_t j = cand[t].second;
      pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  std::vector<GraphEdge> edges;
  edges.reserve(pairs.size());
  for (const auto& [a, b] : pairs) {
    const double w = distance(grid.coords[a], grid.coords[b]) / grid.voxel_size +
                     distance(grid.colors[a], grid.colors[b]);
    edges.push_back({a, b, w});
  }
  std::sort(edges.begin(), edges.end(), [](const GraphEdge& x, const GraphEdge& y) {
    if (x.weight != y.weight) return x.weight < y.weight;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  return edges;
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), size_(n, 1), internal_(n, 0.0) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  std::size_t size(std::size_t root) const { return size_[root]; }
  double internal(std::size_t root) const { return internal_[root]; }
  void join(std::size_t a, std::size_t b, double weight) {
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    internal_[a] = weight;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
  std::vector<double> internal_;
};

}  // namespace

SuperpointPartition segment_superpoints(const VoxelGrid& grid, std::size_t k, double threshold) {
  const std::size_t m = grid.size();
  if (m == 0) throw std::invalid_argument("segment_superpoints: empty voxel grid");
  if (k == 0) throw std::invalid_argument("segment_superpoints: k must be at least 1");

  DisjointSets sets(m);
  for (const auto& e : knn_voxel_graph(grid, k)) {
    const std::size_t a = sets.find(e.a);
    const std::size_t b = sets.find(e.b);
    if (a == b) continue;
    const double ta = sets.internal(a) + threshold / static_cast<double>(sets.size(a));
    const double tb = sets.internal(b) + threshold / static_cast<double>(sets.size(b));
    if (e.weight <= ta && e.weight <= tb) sets.join(a, b, e.weight);
  }

  SuperpointPartition part;
  part.voxel_to_superpoint.assign(m, 0);
  std::unordered_map<std::size_t, std::size_t> label_of_root;
  for (std::size_t v = 0; v < m; ++v) {
    const std::size_t root = sets.find(v);
    auto [it, inserted] = label_of_root.emplace(root, part.superpoint_to_voxels.size());
    if (inserted) part.superpoint_to_voxels.emplace_back();
    part.voxel_to_superpoint[v] = it->second;
    part.superpoint_to_voxels[it->second].push_back(v);
  }
  return part;
}

Tensor pool_to_superpoints(const Tensor& values, const SuperpointPartition& part) {
  if (values.rank() != 2 || values.rows() != part.voxel_to_superpoint.size()) {
    throw ShapeError("pool_to_superpoints: values " + shape_str(values.shape()) + " vs " +
                     std::to_string(part.voxel_to_superpoint.size()) + " voxels");
  }
  return segment_mean(values, part.superpoint_to_voxels);
}

std::vector<std::size_t> point_superpoints(const SuperpointPartition& part, const VoxelGrid& grid) {
  if (part.voxel_to_superpoint.size() != grid.size()) {
    throw ShapeError("point_superpoints: partition covers " +
                     std::to_string(part.voxel_to_superpoint.size()) + " voxels, grid has " +
                     std::to_string(grid.size()));
  }
  std::vector<std::size_t> out(grid.num_points());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = part.voxel_to_superpoint[grid.point_to_voxel[p]];
  return out;
}

Tensor broadcast_to_points(const Tensor& superpoint_values, const SuperpointPartition& part,
                           const VoxelGrid& grid) {
  if (superpoint_values.rank() != 2 || superpoint_values.rows() != part.size()) {
    throw ShapeError("broadcast_to_points: values " + shape_str(superpoint_values.shape()) + " vs " +
                     std::to_string(part.size()) + " superpoints");
  }
  const auto index = point_superpoints(part, grid);
  return gather_rows(superpoint_values, index);
}

std::vector<std::vector<std::size_t>> voxel_adjacency(const VoxelGrid& grid, Neighborhood nb) {
  const KeyIndex index = index_keys(grid);
  std::vector<GridKey> offsets;
  for (std::int64_t dx = -1; dx <= 1; ++dx)
    for (std::int64_t dy = -1; dy <= 1; ++dy)
      for (std::int64_t dz = -1; dz <= 1; ++dz) {
        const auto l1 = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (l1 == 0) continue;
        if (nb == Neighborhood::k6 && l1 > 1) continue;
        if (nb == Neighborhood::k18 && l1 > 2) continue;
        offsets.push_back({dx, dy, dz});
      }
  std::vector<std::vector<std::size_t>> adj(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    adj[i].push_back(i);
    const auto& key = grid.keys[i];
    for (const auto& o : offsets) {
      auto it = index.find(GridKey{key[0] + o[0], key[1] + o[1], key[2] + o[2]});
      if (it != index.end()) adj[i].push_back(it->second);
    }
    std::sort(adj[i].begin() + 1, adj[i].end());
  }
  return adj;
}

}  // namespace sgiformer
