#include "sgiformer/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <stdexcept>

namespace sgiformer {

namespace {

std::size_t popcount(const std::vector<std::uint8_t>& mask) {
  return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; }));
}

std::string number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("mask_iou: masks of length " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double average_precision(const std::vector<SceneEvalInput>& scenes, int label, double iou_threshold,
                         std::vector<MatchCounts>* per_scene) {
  struct Candidate {
    double score;
    std::size_t size;
    std::size_t scene;
    std::size_t index;
  };
  std::vector<Candidate> ranked;
  std::size_t num_gt = 0;
  std::vector<std::vector<char>> matched(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& sc = scenes[s];
    matched[s].assign(sc.ground_truth.size(), 0);
    for (const auto& g : sc.ground_truth) num_gt += g.label == label;
    for (std::size_t i = 0; i < sc.predictions.size(); ++i) {
      const auto& p = sc.predictions[i];
      if (p.label == label) ranked.push_back({p.score, popcount(p.mask), s, i});
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.size > b.size;
  });

  if (per_scene) per_scene->assign(scenes.size(), MatchCounts{});
  std::vector<char> is_tp(ranked.size(), 0);
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    const auto& c = ranked[r];
    const auto& sc = scenes[c.scene];
    const auto& pm = sc.predictions[c.index].mask;
    double best = -1.0;
    std::size_t best_gt = 0;
    for (std::size_t g = 0; g < sc.ground_truth.size(); ++g) {
      if (matched[c.scene][g] || sc.ground_truth[g].label != label) continue;
      const double iou = mask_iou(pm, sc.ground_truth[g].mask);
      if (iou > best) {
        best = iou;
        best_gt = g;
      }
    }
    if (best >= iou_threshold && best >= 0.0) {
      matched[c.scene][best_gt] = 1;
      is_tp[r] = 1;
      if (per_scene) ++(*per_scene)[c.scene].true_positives;
    } else if (per_scene) {
      ++(*per_scene)[c.scene].false_positives;
    }
  }
  if (per_scene) {
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      std::size_t gts = 0;
      for (const auto& g : scenes[s].ground_truth) gts += g.label == label;
      (*per_scene)[s].false_negatives = gts - (*per_scene)[s].true_positives;
    }
  }
  if (num_gt == 0 || ranked.empty()) return 0.0;

  std::vector<double> precision(ranked.size()), recall(ranked.size());
  std::size_t tp = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    tp += is_tp[r];
    precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
    recall[r] = static_cast<double>(tp) / static_cast<double>(num_gt);
  }
  for (std::size_t r = ranked.size() - 1; r > 0; --r) precision[r - 1] = std::max(precision[r - 1], precision[r]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    ap += (recall[r] - prev_recall) * precision[r];
    prev_recall = recall[r];
  }
  return ap;
}

EvalReport evaluate(const std::vector<SceneEvalInput>& scenes) {
  for (const auto& sc : scenes) {
    std::size_t n = sc.ground_truth.empty() ? 0 : sc.ground_truth.front().mask.size();
    if (sc.ground_truth.empty() && !sc.predictions.empty()) n = sc.predictions.front().mask.size();
    for (const auto& g : sc.ground_truth)
      if (g.mask.size() != n) throw std::invalid_argument("evaluate: inconsistent point counts in a scene");
    for (const auto& p : sc.predictions)
      if (p.mask.size() != n) throw std::invalid_argument("evaluate: inconsistent point counts in a scene");
  }
  EvalReport report;
  for (int k = 0; k < 10; ++k) report.thresholds.push_back((50.0 + 5.0 * k) / 100.0);

  std::set<int> labels;
  for (const auto& sc : scenes)
    for (const auto& g : sc.ground_truth) labels.insert(g.label);

  report.scenes.assign(scenes.size(), MatchCounts{});
  for (int label : labels) {
    auto& aps = report.class_ap[label];
    for (double t : report.thresholds) {
      std::vector<MatchCounts> counts;
      aps.push_back(average_precision(scenes, label, t, t == 0.5 ? &counts : nullptr));
      for (std::size_t s = 0; s < counts.size(); ++s) {
        report.scenes[s].true_positives += counts[s].true_positives;
        report.scenes[s].false_positives += counts[s].false_positives;
        report.scenes[s].false_negatives += counts[s].false_negatives;
      }
    }
    report.class_ap25[label] = average_precision(scenes, label, 0.25);
  }
  if (labels.empty()) return report;

  const double nc = static_cast<double>(labels.size());
  for (std::size_t t = 0; t < report.thresholds.size(); ++t) {
    double mean_t = 0.0;
    for (const auto& [label, aps] : report.class_ap) mean_t += aps[t];
    mean_t /= nc;
    report.map += mean_t;
    if (t == 0) report.ap50 = mean_t;
  }
  report.map /= static_cast<double>(report.thresholds.size());
  for (const auto& [label, ap] : report.class_ap25) report.ap25 += ap;
  report.ap25 /= nc;
  return report;
}

std::string format_report(const EvalReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %8s %8s %8s\n", "class", "mAP", "AP50", "AP25");
  out += line;
  for (const auto& [label, aps] : r.class_ap) {
    const double m = std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
    std::snprintf(line, sizeof(line), "%-10d %8.4f %8.4f %8.4f\n", label, m, aps.front(), r.class_ap25.at(label));
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-10s %8.4f %8.4f %8.4f\n", "mean", r.map, r.ap50, r.ap25);
  out += line;
  MatchCounts total;
  for (const auto& s : r.scenes) {
    total.true_positives += s.true_positives;
    total.false_positives += s.false_positives;
    total.false_negatives += s.false_negatives;
  }
  std::snprintf(line, sizeof(line), "scenes %zu  TP %zu  FP %zu  FN %zu (IoU 0.5)\n", r.scenes.size(),
                total.true_positives, total.false_positives, total.false_negatives);
  out += line;
  return out;
}

std::string report_key_values(const EvalReport& r) {
  std::string out;
  out += "map=" + number(r.map) + "\n";
  out += "ap50=" + number(r.ap50) + "\n";
  out += "ap25=" + number(r.ap25) + "\n";
  for (const auto& [label, aps] : r.class_ap) {
    const std::string key = "class." + std::to_string(label);
    out += key + ".ap25=" + number(r.class_ap25.at(label)) + "\n";
    for (std::size_t t = 0; t < aps.size(); ++t) {
      out += key + ".ap" + std::to_string(static_cast<int>(std::lround(r.thresholds[t] * 100))) + "=" + number(aps[t]) + "\n";
    }
  }
  for (std::size_t s = 0; s < r.scenes.size(); ++s) {
    const std::string key = "scene." + std::to_string(s);
    out += key + ".tp=" + std::to_string(r.scenes[s].true_positives) + "\n";
    out += key + ".fp=" + std::to_string(r.scenes[s].false_positives) + "\n";
    out += key + ".fn=" + std::to_string(r.scenes[s].false_negatives) + "\n";
  }
  return out;
}

}  // namespace sgiformer
