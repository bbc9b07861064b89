#pragma once

#include <cstdint>
#include <vector>

#include "sgiformer/config.hpp"
#include "sgiformer/nn.hpp"
#include "sgiformer/pointcloud.hpp"

namespace sgiformer {

/// Voxel feature extractor: pointwise MLP on [normalized coords | colors], then
/// rounds of neighbourhood mean aggregation, each followed by a residual
/// pointwise layer. Also owns the voxel-wise semantic and offset heads.
struct BackboneParams {
  Mlp input;
  std::vector<Linear> rounds;
  Mlp semantic_head;
  Mlp offset_head;

  static BackboneParams create(ParamStore& store, const ModelConfig& cfg);
};

struct BackboneOutput {
  Tensor features;         // m x d_o
  Tensor semantic_logits;  // m x (c+1), last column is background
  Tensor offsets;          // m x 3, meters
};

/// m x 6: coordinates min-max normalized per scene, then colors.
Tensor backbone_input(const VoxelGrid& grid);

Tensor extract_features(const Tensor& input, const std::vector<std::vector<std::size_t>>& adjacency,
                        const BackboneParams& params);

BackboneOutput run_backbone(const VoxelGrid& grid, const std::vector<std::vector<std::size_t>>& adjacency,
                            const BackboneParams& params);

/// Mean cross-entropy; labels run 1..c+1 and map to logit columns 0..c.
Tensor semantic_loss(const Tensor& logits, const std::vector<int>& labels);

/// Sum over valid voxels of |offset - (center - coord)|_1, divided by the valid
/// count. Exactly zero (no division) when nothing is valid.
Tensor geometric_loss(const Tensor& offsets, const Tensor& coords, const std::vector<Vec3>& centers,
                      const std::vector<std::uint8_t>& valid);

/// coords + offsets; coords are data, so only offsets receive gradient.
Tensor refine_coords(const Tensor& coords, const Tensor& offsets);

}  // namespace sgiformer
