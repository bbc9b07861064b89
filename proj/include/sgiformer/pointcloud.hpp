#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "sgiformer/tensor.hpp"

namespace sgiformer {

using Vec3 = std::array<double, 3>;

/// Scene point set. Labels are optional: both label arrays are empty or both have
/// one entry per point. Semantic labels run 1..c+1 where c+1 is background;
/// instance id 0 is background.
struct PointCloud {
  std::vector<Vec3> coords;
  std::vector<Vec3> colors;
  std::vector<int> semantic;
  std::vector<int> instance;

  std::size_t size() const { return coords.size(); }
  bool has_labels() const { return !semantic.empty(); }
  /// Throws std::invalid_argument on any violated invariant.
  void validate(int num_classes) const;
};

/// Axis-aligned bounding box.
struct Bounds {
  Vec3 lo{0.0, 0.0, 0.0};
  Vec3 hi{0.0, 0.0, 0.0};

  /// Maps into [0,1] per axis; a degenerate axis maps to 0.5.
  Vec3 normalize(const Vec3& p) const;
};
Bounds bounds_of(const std::vector<Vec3>& points);

struct VoxelGrid {
  double voxel_size = 0.0;
  std::vector<std::array<std::int64_t, 3>> keys;
  std::vector<Vec3> coords;
  std::vector<Vec3> colors;
  std::vector<std::size_t> point_to_voxel;
  std::vector<std::vector<std::size_t>> voxel_to_points;
  // Present only for labelled clouds.
  std::vector<int> semantic;
  std::vector<int> instance;
  std::vector<Vec3> centers;
  std::vector<std::uint8_t> center_valid;

  std::size_t size() const { return coords.size(); }
  std::size_t num_points() const { return point_to_voxel.size(); }
  /// m x 3 constant tensor of voxel coordinates.
  Tensor coords_tensor() const;
};

/// Buckets points by floor(coord / voxel_size). Voxels are ordered by grid key.
VoxelGrid voxelize(const PointCloud& cloud, double voxel_size);

struct SuperpointPartition {
  std::vector<std::size_t> voxel_to_superpoint;
  std::vector<std::vector<std::size_t>> superpoint_to_voxels;

  std::size_t size() const { return superpoint_to_voxels.size(); }
};

struct GraphEdge {
  std::size_t a = 0;
  std::size_t b = 0;
  double weight = 0.0;
};

/// Undirected k-nearest-neighbour voxel graph (a < b, deduplicated), weighted by
/// |dcoord| / voxel_size + |dcolor| and sorted by (weight, a, b).
std::vector<GraphEdge> knn_voxel_graph(const VoxelGrid& grid, std::size_t k);

/// Graph-based over-segmentation: components merge along ascending edges while the
/// edge weight is within both components' internal difference plus threshold/|C|.
/// Superpoints are numbered by their smallest voxel index.
SuperpointPartition segment_superpoints(const VoxelGrid& grid, std::size_t k, double threshold);

/// Row i = mean of `values` rows over the voxels of superpoint i.
Tensor pool_to_superpoints(const Tensor& values, const SuperpointPartition& part);

/// Every point receives the row of the superpoint containing its voxel.
Tensor broadcast_to_points(const Tensor& superpoint_values, const SuperpointPartition& part,
                           const VoxelGrid& grid);

/// Point -> superpoint index through the voxel mapping.
std::vector<std::size_t> point_superpoints(const SuperpointPartition& part, const VoxelGrid& grid);

enum class Neighborhood { k6 = 6, k18 = 18, k26 = 26 };

/// For every voxel, itself followed by its occupied grid neighbours (ascending index).
std::vector<std::vector<std::size_t>> voxel_adjacency(const VoxelGrid& grid, Neighborhood nb);

}  // namespace sgiformer
