#include <doctest.h>

#include <cmath>
#include <random>

#include "ap_oracle.hpp"
#include "sgiformer/metrics.hpp"

using namespace sgiformer;
namespace t = sgiformer::testing;

namespace {

using Mask = std::vector<std::uint8_t>;

SceneEvalInput scene(std::vector<LabeledMask> gts, std::vector<ScoredInstance> preds) {
  return {std::move(preds), std::move(gts)};
}

}  // namespace

TEST_CASE("mask IoU") {
  CHECK(mask_iou(Mask{1, 1, 0, 0}, Mask{0, 1, 1, 0}) == doctest::Approx(1.0 / 3.0));
  CHECK(mask_iou(Mask{1, 0}, Mask{1, 0}) == 1.0);
  CHECK(mask_iou(Mask{0, 0}, Mask{0, 0}) == 0.0);
  CHECK(mask_iou(Mask{1, 0}, Mask{0, 1}) == 0.0);
  CHECK_THROWS_AS(mask_iou(Mask{1}, Mask{1, 0}), std::invalid_argument);
}

TEST_CASE("average precision examples") {
  const LabeledMask g{{1, 1, 0, 0}, 1};
  SUBCASE("one exact prediction") {
    CHECK(average_precision({scene({g}, {{{1, 1, 0, 0}, 1, 0.9}})}, 1, 0.5) == 1.0);
  }
  SUBCASE("no predictions") { CHECK(average_precision({scene({g}, {})}, 1, 0.5) == 0.0); }
  SUBCASE("no ground truth") { CHECK(average_precision({scene({}, {{{1, 1, 0, 0}, 1, 0.9}})}, 1, 0.5) == 0.0); }
  SUBCASE("wrong class does not count") {
    CHECK(average_precision({scene({g}, {{{1, 1, 0, 0}, 2, 0.9}})}, 1, 0.5) == 0.0);
  }
  SUBCASE("IoU threshold is inclusive") {
    const auto s = scene({g}, {{{1, 0, 0, 0}, 1, 0.9}});  // IoU exactly 0.5
    CHECK(average_precision({s}, 1, 0.5) == 1.0);
    CHECK(average_precision({s}, 1, 0.55) == 0.0);
  }
  SUBCASE("a false positive ranked first halves the precision") {
    const LabeledMask h{{0, 0, 1, 1}, 1};
    const auto s = scene({g, h}, {{{1, 1, 1, 1}, 1, 0.9}, {{1, 1, 0, 0}, 1, 0.8}, {{0, 0, 1, 1}, 1, 0.7}});
    // Ranks: FP (IoU 0.5 < 0.6), TP, TP -> precision 0, 1/2, 2/3; AP = 0.5 * 2/3 + 0.5 * 2/3.
    CHECK(average_precision({s}, 1, 0.6) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("each ground truth is matched once") {
    const auto s = scene({g}, {{{1, 1, 0, 0}, 1, 0.9}, {{1, 1, 0, 0}, 1, 0.8}});
    std::vector<MatchCounts> counts;
    CHECK(average_precision({s}, 1, 0.5, &counts) == 1.0);
    CHECK(counts[0].true_positives == 1);
    CHECK(counts[0].false_positives == 1);
    CHECK(counts[0].false_negatives == 0);
  }
  SUBCASE("predictions only match ground truth of their own scene") {
    const auto a = scene({g}, {});
    const auto b = scene({{{0, 0, 0, 0}, 2}}, {{{1, 1, 0, 0}, 1, 0.9}});
    CHECK(average_precision({a, b}, 1, 0.5) == 0.0);
  }
}

TEST_CASE("average precision equals a brute-force PR oracle on 100 random fixtures") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SceneEvalInput> scenes;
    const std::size_t n = 1 + rng() % 3;
    for (std::size_t s = 0; s < n; ++s) scenes.push_back(t::random_eval_scene(rng, 5, 8));
    for (int label : {1, 2})
      for (double thr : {0.25, 0.5, 0.75}) {
        CHECK(std::abs(average_precision(scenes, label, thr) - t::oracle_ap(scenes, label, thr)) <= 1e-9);
      }
  }
}

TEST_CASE("AP depends on scores only through their order") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    auto s = t::random_eval_scene(rng, 5, 8);
    const double base = average_precision({s}, 1, 0.5);
    for (auto& p : s.predictions) p.score = std::exp(3.0 * p.score) - 7.0;
    CHECK(average_precision({s}, 1, 0.5) == base);
  }
}

TEST_CASE("duplicating a true positive with a lower score never raises AP") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = t::random_eval_scene(rng, 5, 8);
    const double base = average_precision({s}, 1, 0.5);
    for (const auto& p : s.predictions) {
      // IoU above one half with a ground truth rules out any second match.
      bool strong = false;
      for (const auto& g : s.ground_truth) strong = strong || (g.label == p.label && mask_iou(p.mask, g.mask) > 0.5);
      if (p.label != 1 || !strong) continue;
      auto dup = s;
      ScoredInstance copy = p;
      copy.score = p.score - 1e-3;
      dup.predictions.push_back(copy);
      CHECK(average_precision({dup}, 1, 0.5) <= base + 1e-15);
    }
  }
}

TEST_CASE("evaluate: perfect, empty and absent classes") {
  const LabeledMask a{{1, 1, 0, 0, 0}, 1}, b{{0, 0, 1, 1, 0}, 3};
  SUBCASE("perfect predictions give one everywhere") {
    const auto r = evaluate({scene({a, b}, {{a.mask, 1, 0.9}, {b.mask, 3, 0.8}})});
    CHECK(r.map == 1.0);
    CHECK(r.ap50 == 1.0);
    CHECK(r.ap25 == 1.0);
    CHECK(r.class_ap.size() == 2);  // class 2 never appears
    CHECK(r.thresholds.size() == 10);
    CHECK(r.thresholds.back() == doctest::Approx(0.95));
  }
  SUBCASE("no predictions give zero everywhere") {
    const auto r = evaluate({scene({a, b}, {})});
    CHECK(r.map == 0.0);
    CHECK(r.ap50 == 0.0);
    CHECK(r.ap25 == 0.0);
    CHECK(r.scenes[0].false_negatives == 2);
  }
  SUBCASE("AP25 accepts looser masks than AP50") {
    const auto r = evaluate({scene({a}, {{{1, 1, 1, 1, 1}, 1, 0.9}})});  // IoU 0.4
    CHECK(r.ap50 == 0.0);
    CHECK(r.ap25 == 1.0);
  }
  CHECK_THROWS_AS(evaluate({scene({a}, {{{1, 1}, 1, 0.5}})}), std::invalid_argument);
}

TEST_CASE("report formatting") {
  const LabeledMask a{{1, 1, 0}, 2};
  const auto r = evaluate({scene({a}, {{a.mask, 2, 0.9}})});
  const auto table = format_report(r);
  CHECK(table.find("mean") != std::string::npos);
  const auto kv = report_key_values(r);
  CHECK(kv.find("map=1\n") != std::string::npos);
  CHECK(kv.find("class.2.ap50=1\n") != std::string::npos);
  CHECK(kv.find("class.2.ap95=1\n") != std::string::npos);
  CHECK(kv.find("scene.0.tp=1\n") != std::string::npos);
}
