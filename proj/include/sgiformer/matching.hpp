#pragma once

#include <cstdint>
#include <vector>

#include "sgiformer/config.hpp"
#include "sgiformer/decoder.hpp"
#include "sgiformer/pointcloud.hpp"

namespace sgiformer {

struct GroundTruthInstance {
  int instance_id = 0;
  int label = 1;                               // 1..c
  std::vector<std::uint8_t> mask;              // per superpoint
  std::vector<std::uint8_t> point_mask;        // per point
};

/// One entry per nonzero instance id, ordered by id. A superpoint joins the mask of
/// the most frequent instance id among its points (ties to the lower id, 0 is
/// background). Instances left without any superpoint are dropped.
std::vector<GroundTruthInstance> superpoint_ground_truth(const PointCloud& cloud, const VoxelGrid& grid,
                                                         const SuperpointPartition& partition);

/// Point-level ground truth for evaluation (every nonzero instance).
std::vector<GroundTruthInstance> point_ground_truth(const PointCloud& cloud);

/// Row-major q x n_gt matching costs.
struct CostMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

CostMatrix pair_cost(const LayerPrediction& pred, const std::vector<GroundTruthInstance>& gts,
                     const LossConfig& weights);

struct Assignment {
  /// gt index -> prediction index, -1 when unassigned (only if n_gt > predictions).
  std::vector<int> gt_to_pred;
  double cost = 0.0;
};

/// Minimum-cost injective matching of ground truths (columns) to predictions
/// (rows). When every ground truth can be matched, the lexicographically
/// smallest gt_to_pred among optimal matchings is returned. Throws
/// std::invalid_argument on NaN.
Assignment hungarian(const CostMatrix& cost);

/// 1 - (2 sum(soft*gt) + eps) / (sum soft + sum gt + eps), for one row of `soft`.
Tensor dice_loss(const Tensor& soft, const std::vector<std::uint8_t>& gt, double eps = 1.0);

/// Mean over superpoints of binary cross-entropy computed from logits.
Tensor bce_loss(const Tensor& logits, const std::vector<std::uint8_t>& gt);

struct LayerLoss {
  double cls = 0.0;
  double bce = 0.0;
  double dice = 0.0;
};

struct LossBreakdown {
  Tensor total;
  double semantic = 0.0;
  double geometric = 0.0;
  std::vector<LayerLoss> layers;
  std::vector<Assignment> assignments;
};

/// lambda_aux (L_sem + L_geo) + sum over every prediction layer of
/// lambda_cls CE(all queries, unmatched -> background) + lambda_bce mean BCE and
/// lambda_dice mean dice over matched pairs. Matching is redone per layer.
LossBreakdown total_loss(const std::vector<LayerPrediction>& predictions,
                         const std::vector<GroundTruthInstance>& gts, const Tensor& semantic,
                         const Tensor& geometric, const LossConfig& weights, std::size_t num_classes);

}  // namespace sgiformer
