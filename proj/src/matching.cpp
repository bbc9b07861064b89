#include "sgiformer/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace sgiformer {

namespace {

double stable_softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Minimum-cost assignment of each of the n rows to a distinct column (n <= m),
// shortest augmenting paths with potentials. Returns row -> column.
std::vector<std::size_t> solve_assignment(const std::vector<double>& a, std::size_t n, std::size_t m) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a[(i0 - 1) * m + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Optimal gt -> pred over the given gt and pred subsets (|gts| <= |preds|).
double solve_subset(const CostMatrix& c, const std::vector<std::size_t>& gts, const std::vector<std::size_t>& preds,
                    std::vector<std::size_t>& chosen) {
  chosen.clear();
  if (gts.empty()) return 0.0;
  std::vector<double> a(gts.size() * preds.size());
  for (std::size_t r = 0; r < gts.size(); ++r)
    for (std::size_t k = 0; k < preds.size(); ++k) a[r * preds.size() + k] = c(preds[k], gts[r]);
  const auto sol = solve_assignment(a, gts.size(), preds.size());
  double total = 0.0;
  for (std::size_t r = 0; r < gts.size(); ++r) {
    chosen.push_back(preds[sol[r]]);
    total += c(preds[sol[r]], gts[r]);
  }
  return total;
}

std::vector<double> flat_targets(const std::vector<const GroundTruthInstance*>& gts, std::size_t n) {
  std::vector<double> y;
  y.reserve(gts.size() * n);
  for (const auto* g : gts)
    for (std::size_t k = 0; k < n; ++k) y.push_back(g->mask[k] ? 1.0 : 0.0);
  return y;
}

// Per-row dice, shape {k}.
Tensor dice_rows(const Tensor& soft, const Tensor& target, double eps) {
  const Tensor inter = row_sum(soft * target);
  const Tensor denom = add_scalar(row_sum(soft) + row_sum(target), eps);
  const Tensor ratio = div(add_scalar(scale(inter, 2.0), eps), denom);
  return add_scalar(scale(ratio, -1.0), 1.0);
}

// Elementwise BCE from logits: softplus(z) - y z.
Tensor bce_elements(const Tensor& logits, const Tensor& target) { return softplus(logits) - logits * target; }

}  // namespace

std::vector<GroundTruthInstance> superpoint_ground_truth(const PointCloud& cloud, const VoxelGrid& grid,
                                                         const SuperpointPartition& partition) {
  if (!cloud.has_labels()) return {};
  const auto sp_of_point = point_superpoints(partition, grid);
  std::vector<std::map<int, std::size_t>> counts(partition.size());
  for (std::size_t p = 0; p < cloud.size(); ++p) ++counts[sp_of_point[p]][cloud.instance[p]];

  auto gts = point_ground_truth(cloud);
  std::map<int, std::size_t> slot;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    slot[gts[g].instance_id] = g;
    gts[g].mask.assign(partition.size(), 0);
  }
  for (std::size_t s = 0; s < partition.size(); ++s) {
    int best = 0;
    std::size_t best_count = 0;
    for (const auto& [id, count] : counts[s]) {
      if (count > best_count) {
        best = id;
        best_count = count;
      }
    }
    if (best != 0) gts[slot.at(best)].mask[s] = 1;
  }
  std::erase_if(gts, [](const GroundTruthInstance& g) {
    return std::none_of(g.mask.begin(), g.mask.end(), [](std::uint8_t b) { return b != 0; });
  });
  return gts;
}

std::vector<GroundTruthInstance> point_ground_truth(const PointCloud& cloud) {
  std::vector<GroundTruthInstance> gts;
  if (!cloud.has_labels()) return gts;
  std::map<int, std::size_t> slot;
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const int id = cloud.instance[p];
    if (id != 0) slot.emplace(id, 0);
  }
  std::size_t k = 0;
  for (auto& [id, index] : slot) {
    index = k++;
    GroundTruthInstance g;
    g.instance_id = id;
    g.point_mask.assign(cloud.size(), 0);
    gts.push_back(std::move(g));
  }
  for (std::size_t p = 0; p < cloud.size(); ++p) {
    const int id = cloud.instance[p];
    if (id == 0) continue;
    auto& g = gts[slot[id]];
    g.point_mask[p] = 1;
    g.label = cloud.semantic[p];
  }
  return gts;
}

CostMatrix pair_cost(const LayerPrediction& pred, const std::vector<GroundTruthInstance>& gts,
                     const LossConfig& w) {
  CostMatrix c;
  c.rows = pred.num_queries();
  c.cols = gts.size();
  c.values.assign(c.rows * c.cols, 0.0);
  const std::size_t n = pred.num_superpoints();
  for (std::size_t j = 0; j < gts.size(); ++j) {
    const auto& g = gts[j];
    if (g.mask.size() != n) {
      throw ShapeError("pair_cost: gt mask over " + std::to_string(g.mask.size()) + " superpoints, prediction over " +
                       std::to_string(n));
    }
    const auto cls = static_cast<std::size_t>(g.label - 1);
    double gt_sum = 0.0;
    for (auto b : g.mask) gt_sum += b;
    for (std::size_t i = 0; i < c.rows; ++i) {
      double bce = 0.0, inter = 0.0, soft_sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double z = pred.mask_logits.at(i, k);
        const double s = pred.soft_masks.at(i, k);
        const double y = g.mask[k] ? 1.0 : 0.0;
        bce += stable_softplus(z) - y * z;
        inter += s * y;
        soft_sum += s;
      }
      bce /= static_cast<double>(n);
      const double dice = 1.0 - (2.0 * inter + w.dice_smooth) / (soft_sum + gt_sum + w.dice_smooth);
      c.values[i * c.cols + j] = -w.cls * pred.class_probs.at(i, cls) + w.bce * bce + w.dice * dice;
    }
  }
  return c;
}

Assignment hungarian(const CostMatrix& c) {
  for (double v : c.values) {
    if (std::isnan(v)) throw std::invalid_argument("hungarian: cost matrix contains NaN");
  }
  Assignment out;
  out.gt_to_pred.assign(c.cols, -1);
  if (c.cols == 0) return out;
  if (c.rows == 0) return out;

  if (c.cols > c.rows) {
    // More ground truths than predictions: assign every prediction instead.
    const auto sol = solve_assignment(c.values, c.rows, c.cols);
    for (std::size_t i = 0; i < c.rows; ++i) out.gt_to_pred[sol[i]] = static_cast<int>(i);
  } else {
    std::vector<std::size_t> gts(c.cols), preds(c.rows), chosen;
    for (std::size_t j = 0; j < c.cols; ++j) gts[j] = j;
    for (std::size_t i = 0; i < c.rows; ++i) preds[i] = i;
    const double best = solve_subset(c, gts, preds, chosen);
    std::vector<std::size_t> current = chosen;
    const double tol = 1e-12 * std::max(1.0, std::abs(best));

    // Fix gts in order to the smallest prediction that still admits an optimum.
    double fixed_cost = 0.0;
    std::vector<char> taken(c.rows, 0);
    for (std::size_t j = 0; j < c.cols; ++j) {
      std::vector<std::size_t> rest_gts(gts.begin() + static_cast<std::ptrdiff_t>(j) + 1, gts.end());
      for (std::size_t i = 0; i < current[j]; ++i) {
        if (taken[i]) continue;
        std::vector<std::size_t> rest_preds;
        for (std::size_t r = 0; r < c.rows; ++r)
          if (!taken[r] && r != i) rest_preds.push_back(r);
        const double rest = solve_subset(c, rest_gts, rest_preds, chosen);
        if (fixed_cost + c(i, j) + rest <= best + tol) {
          current[j] = i;
          std::copy(chosen.begin(), chosen.end(), current.begin() + static_cast<std::ptrdiff_t>(j) + 1);
          break;
        }
      }
      taken[current[j]] = 1;
      fixed_cost += c(current[j], j);
    }
    for (std::size_t j = 0; j < c.cols; ++j) out.gt_to_pred[j] = static_cast<int>(current[j]);
  }
  for (std::size_t j = 0; j < c.cols; ++j) {
    if (out.gt_to_pred[j] >= 0) out.cost += c(static_cast<std::size_t>(out.gt_to_pred[j]), j);
  }
  return out;
}

Tensor dice_loss(const Tensor& soft, const std::vector<std::uint8_t>& gt, double eps) {
  if (soft.numel() != gt.size()) {
    throw ShapeError("dice_loss: soft " + shape_str(soft.shape()) + " vs " + std::to_string(gt.size()) + " targets");
  }
  const Shape row{1, gt.size()};
  std::vector<double> y(gt.begin(), gt.end());
  return sum(dice_rows(reshape(soft, row), Tensor::from(row, std::move(y)), eps));
}

Tensor bce_loss(const Tensor& logits, const std::vector<std::uint8_t>& gt) {
  if (logits.numel() != gt.size()) {
    throw ShapeError("bce_loss: logits " + shape_str(logits.shape()) + " vs " + std::to_string(gt.size()) + " targets");
  }
  std::vector<double> y(gt.begin(), gt.end());
  return mean(bce_elements(logits, Tensor::from(logits.shape(), std::move(y))));
}

LossBreakdown total_loss(const std::vector<LayerPrediction>& predictions,
                         const std::vector<GroundTruthInstance>& gts, const Tensor& semantic,
                         const Tensor& geometric, const LossConfig& w, std::size_t num_classes) {
  LossBreakdown out;
  out.semantic = semantic.item();
  out.geometric = geometric.item();
  Tensor total = scale(semantic + geometric, w.aux);
  for (const auto& pred : predictions) {
    const auto assignment = hungarian(pair_cost(pred, gts, w));
    const std::size_t q = pred.num_queries();
    const std::size_t n = pred.num_superpoints();

    std::vector<std::size_t> targets(q, num_classes);
    std::vector<std::size_t> matched_preds;
    std::vector<const GroundTruthInstance*> matched_gts;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      const int i = assignment.gt_to_pred[j];
      if (i < 0) continue;
      targets[static_cast<std::size_t>(i)] = static_cast<std::size_t>(gts[j].label - 1);
      matched_preds.push_back(static_cast<std::size_t>(i));
      matched_gts.push_back(&gts[j]);
    }

    LayerLoss parts;
    const Tensor cls = cross_entropy(pred.class_logits, targets);
    parts.cls = cls.item();
    total = total + scale(cls, w.cls);
    if (!matched_preds.empty()) {
      const Tensor y = Tensor::from({matched_preds.size(), n}, flat_targets(matched_gts, n));
      const Tensor bce = mean(bce_elements(gather_rows(pred.mask_logits, matched_preds), y));
      const Tensor dice = mean(dice_rows(gather_rows(pred.soft_masks, matched_preds), y, w.dice_smooth));
      parts.bce = bce.item();
      parts.dice = dice.item();
      total = total + scale(bce, w.bce) + scale(dice, w.dice);
    }
    out.layers.push_back(parts);
    out.assignments.push_back(assignment);
  }
  out.total = total;
  return out;
}

}  // namespace sgiformer
