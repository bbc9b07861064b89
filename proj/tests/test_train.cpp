#include <doctest.h>

#include <filesystem>

#include "sgiformer/checkpoint.hpp"
#include "sgiformer/predictions.hpp"
#include "sgiformer/synth.hpp"
#include "sgiformer/train.hpp"

using namespace sgiformer;
namespace fs = std::filesystem;

namespace {

RunConfig small_config() {
  RunConfig c;
  c.seed = 21;
  c.model.num_classes = 3;
  c.model.backbone_width = 12;
  c.model.backbone_rounds = 2;
  c.model.width = 12;
  c.model.heads = 2;
  c.model.layers = 2;
  c.model.scene_queries = 4;
  c.model.learnable_queries = 4;
  c.synth.num_classes = 3;
  c.synth.room_min = c.synth.room_max = 0.6;
  c.synth.instances_min = 2;
  c.synth.instances_max = 3;
  c.synth.points_min = 60;
  c.synth.points_max = 90;
  c.synth.background_density = 300;
  c.train.steps = 8;
  c.train.batch_scenes = 2;
  return c;
}

std::vector<PointCloud> scenes_for(const RunConfig& c, std::size_t n) {
  std::vector<PointCloud> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto spec = c.synth;
    spec.seed = mix_seed(c.seed, i);
    out.push_back(generate_scene(spec).cloud);
  }
  return out;
}

std::vector<double> run(Trainer& trainer, std::size_t steps) {
  std::vector<double> losses;
  for (std::size_t i = 0; i < steps; ++i) losses.push_back(trainer.train_step().loss);
  return losses;
}

}  // namespace

TEST_CASE("training is bit-identical across runs") {
  const auto cfg = small_config();
  const auto scenes = scenes_for(cfg, 3);
  Trainer a(cfg, scenes), b(cfg, scenes);
  const auto la = run(a, 5), lb = run(b, 5);
  CHECK(la == lb);
  for (double l : la) CHECK(std::isfinite(l));
  CHECK(a.steps_done() == 5);

  const auto ea = evaluate_model(a.model(), scenes, cfg.data, cfg.inference);
  const auto eb = evaluate_model(b.model(), scenes, cfg.data, cfg.inference);
  CHECK(report_key_values(ea.report) == report_key_values(eb.report));
}

TEST_CASE("a different seed changes the trajectory") {
  auto cfg = small_config();
  const auto scenes = scenes_for(cfg, 3);
  Trainer a(cfg, scenes);
  cfg.seed += 1;
  Trainer b(cfg, scenes);
  CHECK(run(a, 2) != run(b, 2));
}

TEST_CASE("resuming from a checkpoint replays the uninterrupted run") {
  const auto dir = fs::temp_directory_path() / "sgiformer_test_train";
  fs::remove_all(dir);
  for (bool augment : {false, true}) {
    CAPTURE(augment);
    auto cfg = small_config();
    cfg.train.augment.rotate_z = augment;
    cfg.train.augment.flip = augment;
    const auto scenes = scenes_for(cfg, 3);

    Trainer full(cfg, scenes);
    const auto reference = run(full, 6);

    Trainer first(cfg, scenes);
    const auto head = run(first, 3);
    const auto path = dir / (augment ? "aug.ckpt" : "plain.ckpt");
    first.save(path);
    Trainer resumed(read_checkpoint(path), cfg, scenes);
    CHECK(resumed.steps_done() == 3);
    const auto tail = run(resumed, 3);

    std::vector<double> joined = head;
    joined.insert(joined.end(), tail.begin(), tail.end());
    CHECK(joined == reference);
    for (std::size_t i = 0; i < full.model().params().params().size(); ++i) {
      const auto x = full.model().params().params()[i].tensor.data();
      const auto y = resumed.model().params().params()[i].tensor.data();
      CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
    }
  }

  auto other = small_config();
  other.model.layers = 3;
  Trainer t(small_config(), scenes_for(other, 1));
  t.save(dir / "mismatch.ckpt");
  CHECK_THROWS_AS(Trainer(read_checkpoint(dir / "mismatch.ckpt"), other, scenes_for(other, 1)), CheckpointError);
}

TEST_CASE("trainer stops at the configured step count") {
  auto cfg = small_config();
  cfg.train.steps = 2;
  Trainer t(cfg, scenes_for(cfg, 2));
  CHECK_FALSE(t.finished());
  const auto s1 = t.train_step();
  CHECK(s1.step == 1);
  CHECK(s1.lr > 0.0);
  const auto s2 = t.train_step();
  CHECK(s2.lr < s1.lr);  // poly decay
  CHECK(t.finished());
  CHECK_THROWS(Trainer(cfg, {}));
}

TEST_CASE("postprocess scores, filters and sorts final-layer masks") {
  const auto cfg = small_config();
  const auto prepared = prepare_scene(scenes_for(cfg, 1).front(), cfg.data, cfg.model);
  const std::size_t ns = prepared.partition.size();
  REQUIRE(ns >= 3);

  // Query 0: superpoints {0, 1}, class 2 at 0.6. Query 1: superpoint {2}, class 1 at 0.9.
  // Query 2: empty mask. Query 3: background wins but the best foreground class is kept.
  const std::size_t q = 4, c = cfg.model.num_classes;
  std::vector<double> soft(q * ns, 0.1), probs(q * (c + 1), 0.0);
  soft[0 * ns + 0] = 0.8;
  soft[0 * ns + 1] = 0.6;
  soft[1 * ns + 2] = 0.9;
  soft[3 * ns + 0] = 0.7;
  probs[0 * (c + 1) + 1] = 0.6;
  probs[0 * (c + 1) + 0] = 0.4;
  probs[1 * (c + 1) + 0] = 0.9;
  probs[1 * (c + 1) + 3] = 0.1;
  probs[2 * (c + 1) + 0] = 1.0;
  probs[3 * (c + 1) + 3] = 0.8;
  probs[3 * (c + 1) + 2] = 0.2;
  LayerPrediction pred;
  pred.mask_logits = Tensor::zeros({q, ns});
  pred.soft_masks = Tensor::from({q, ns}, soft);
  for (double v : soft) pred.binary_masks.push_back(v > 0.5 ? 1 : 0);
  pred.class_logits = Tensor::zeros({q, c + 1});
  pred.class_probs = Tensor::from({q, c + 1}, probs);

  const auto out = postprocess(pred, prepared, cfg.inference, c);
  REQUIRE(out.size() == 3);
  CHECK(out[0].query == 1);
  CHECK(out[0].label == 1);
  CHECK(out[0].score == doctest::Approx(0.9 * 0.9).epsilon(1e-14));
  CHECK(out[1].query == 0);
  CHECK(out[1].label == 2);
  CHECK(out[1].score == doctest::Approx(0.6 * 0.7).epsilon(1e-14));
  CHECK(out[2].query == 3);
  CHECK(out[2].label == 3);
  CHECK(out[2].score == doctest::Approx(0.2 * 0.7).epsilon(1e-14));
  CHECK(out[1].superpoint_mask[0] == 1);
  CHECK(out[1].superpoint_mask[1] == 1);
  CHECK(out[1].superpoint_mask[2] == 0);
  std::size_t members = 0;
  for (auto v : out[0].point_mask) members += v;
  std::size_t expected = 0;
  for (auto sp : point_superpoints(prepared.partition, prepared.grid)) expected += sp == 2;
  CHECK(members == expected);

  InferenceConfig top1 = cfg.inference;
  top1.top_k = 1;
  CHECK(postprocess(pred, prepared, top1, c).size() == 1);
  InferenceConfig huge = cfg.inference;
  huge.min_points = prepared.cloud.size() + 1;
  CHECK(postprocess(pred, prepared, huge, c).empty());
}

TEST_CASE("prediction dumps round-trip and evaluate like the in-memory predictions") {
  const auto cfg = small_config();
  const auto scenes = scenes_for(cfg, 2);
  Trainer trainer(cfg, scenes);
  run(trainer, 3);
  InferenceConfig inference = cfg.inference;
  inference.min_points = 1;

  std::vector<SceneEvalInput> from_dump;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto dump = predict_scene(trainer.model(), scenes[s], cfg.data, inference, "scene", true);
    CHECK(dump.layers.size() == cfg.model.layers + 1);
    CHECK(dump.layers.back().layer == cfg.model.layers);
    CHECK(dump.num_points == scenes[s].size());
    const auto back = parse_predictions(predictions_to_json(dump));
    REQUIRE(back.layers.size() == dump.layers.size());
    for (std::size_t l = 0; l < dump.layers.size(); ++l) {
      REQUIRE(back.layers[l].instances.size() == dump.layers[l].instances.size());
      for (std::size_t i = 0; i < dump.layers[l].instances.size(); ++i) {
        const auto& a = dump.layers[l].instances[i];
        const auto& b = back.layers[l].instances[i];
        CHECK(a.score == b.score);
        CHECK(a.label == b.label);
        CHECK(a.query == b.query);
        CHECK(a.points == b.points);
      }
    }
    from_dump.push_back(to_eval_input(back.layers.back(), scenes[s]));
  }
  const auto direct = evaluate_model(trainer.model(), scenes, cfg.data, inference);
  CHECK(report_key_values(evaluate(from_dump)) == report_key_values(direct.report));
}

TEST_CASE("prediction dump schema violations are rejected") {
  const std::string ok =
      R"({"format":"sgiformer-predictions","version":1,"scene":"s","num_points":3,"num_classes":2,)"
      R"("layers":[{"layer":0,"instances":[{"query":0,"label":1,"score":0.5,"points":[0,2]}]}]})";
  CHECK(parse_predictions(ok).layers[0].instances[0].points == std::vector<std::size_t>{0, 2});
  auto with = [&](const std::string& from, const std::string& to) {
    std::string s = ok;
    s.replace(s.find(from), from.size(), to);
    return s;
  };
  CHECK_THROWS_AS(parse_predictions(with("sgiformer-predictions", "other")), ParseError);
  CHECK_THROWS_AS(parse_predictions(with("\"version\":1", "\"version\":2")), ParseError);
  CHECK_THROWS_AS(parse_predictions(with("[0,2]", "[0,3]")), ParseError);
  CHECK_THROWS_AS(parse_predictions(with("[0,2]", "[2,0]")), ParseError);
  CHECK_THROWS_AS(parse_predictions(with("\"label\":1", "\"label\":3")), ParseError);
  CHECK_THROWS_AS(parse_predictions(with("\"score\":0.5", "\"score\":\"high\"")), ParseError);
  CHECK_THROWS_AS(parse_predictions("{"), ParseError);
}

TEST_CASE("point instance ids favour the higher-scoring instance") {
  DumpedLayer layer;
  layer.instances = {{0, 1, 0.9, {1, 2}}, {1, 2, 0.5, {2, 3}}};
  CHECK(point_instance_ids(layer, 5) == std::vector<int>{0, 1, 1, 2, 0});
}
