#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sgiformer {

struct ScoredInstance {
  std::vector<std::uint8_t> mask;  // per point
  int label = 1;
  double score = 0.0;
};

struct LabeledMask {
  std::vector<std::uint8_t> mask;  // per point
  int label = 1;
};

struct SceneEvalInput {
  std::vector<ScoredInstance> predictions;
  std::vector<LabeledMask> ground_truth;
};

/// |a and b| / |a or b|; 0 when both are empty.
double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

struct MatchCounts {
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t false_negatives = 0;
};

/// AP of one class pooled over scenes. Predictions are ranked by score
/// (ties: larger mask, then scene order and position). Each takes the unmatched
/// same-class ground truth of its scene with the highest IoU and is a true
/// positive when that IoU reaches the threshold. Area under the PR curve with
/// precision made non-increasing from the right. Returns 0 without ground truth.
double average_precision(const std::vector<SceneEvalInput>& scenes, int label, double iou_threshold,
                         std::vector<MatchCounts>* per_scene = nullptr);

struct EvalReport {
  std::vector<double> thresholds;               // 0.50, 0.55, ..., 0.95
  std::map<int, std::vector<double>> class_ap;  // per class, one entry per threshold
  std::map<int, double> class_ap25;
  double map = 0.0;
  double ap50 = 0.0;
  double ap25 = 0.0;
  std::vector<MatchCounts> scenes;  // at IoU 0.5, summed over classes
};

/// Classes without ground truth in any scene are left out of every mean.
EvalReport evaluate(const std::vector<SceneEvalInput>& scenes);

std::string format_report(const EvalReport& report);
/// `key=value` lines with round-trip precision.
std::string report_key_values(const EvalReport& report);

}  // namespace sgiformer
