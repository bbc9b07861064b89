#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "sgiformer/checkpoint.hpp"
#include "sgiformer/diagnostics.hpp"
#include "sgiformer/predictions.hpp"
#include "sgiformer/scene_io.hpp"
#include "sgiformer/synth.hpp"
#include "sgiformer/train.hpp"

namespace fs = std::filesystem;
using namespace sgiformer;
using json = nlohmann::ordered_json;

namespace {

// Validation scene i of a generated dataset uses seed + kValSeedOffset + i.
constexpr std::uint64_t kValSeedOffset = 1000000;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const CommonOptions& o, const RunConfig* fallback = nullptr) {
  RunConfig c = !o.config.empty() ? load_config(o.config) : (fallback ? *fallback : RunConfig{});
  if (o.seed) c.seed = *o.seed;
  c.validate();
  return c;
}

struct Dataset {
  DatasetManifest manifest;
  std::vector<PointCloud> train;
  std::vector<PointCloud> val;
};

std::vector<PointCloud> load_split(const fs::path& dir, const std::vector<std::string>& names) {
  std::vector<PointCloud> out;
  for (const auto& n : names) out.push_back(read_scene(dir / n).cloud);
  return out;
}

Dataset load_dataset(const fs::path& dir, const ModelConfig& model) {
  if (dir.empty()) throw std::runtime_error("no dataset given (use --data or data.dataset)");
  Dataset d;
  d.manifest = read_manifest(dir);
  if (d.manifest.num_classes != static_cast<int>(model.num_classes)) {
    throw std::runtime_error("dataset has " + std::to_string(d.manifest.num_classes) + " classes, model expects " +
                             std::to_string(model.num_classes));
  }
  d.train = load_split(dir, d.manifest.train);
  d.val = load_split(dir, d.manifest.val);
  return d;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

int cmd_gen_data(const CommonOptions& common, const std::string& out, std::size_t n_train, std::size_t n_val) {
  const RunConfig cfg = resolve_config(common);
  const fs::path dir(out);
  DatasetManifest m;
  m.num_classes = static_cast<int>(cfg.model.num_classes);
  m.voxel_size = cfg.data.voxel_size;
  m.seed = cfg.seed;
  std::size_t points = 0, instances = 0;
  auto emit = [&](const std::string& split, std::size_t i, std::uint64_t seed) {
    SceneSpec spec = cfg.synth;
    spec.seed = seed;
    const auto g = generate_scene(spec);
    for (const auto& w : g.warnings) spdlog::warn("{} scene {}: {}", split, i, w);
    std::ostringstream name;
    name << split << "/scene_" << std::setw(4) << std::setfill('0') << i << ".txt";
    write_scene(dir / name.str(), {g.cloud, cfg.data.voxel_size, m.num_classes});
    points += g.cloud.size();
    instances += g.instances.size();
    return name.str();
  };
  for (std::size_t i = 0; i < n_train; ++i) m.train.push_back(emit("train", i, cfg.seed + i));
  for (std::size_t i = 0; i < n_val; ++i) m.val.push_back(emit("val", i, cfg.seed + kValSeedOffset + i));
  write_manifest(dir, m);
  spdlog::info("wrote {} train and {} val scenes to {} ({} points, {} instances)", n_train, n_val, dir.string(),
               points, instances);
  return 0;
}

json step_record(const StepStats& s) {
  json layers = json::array();
  for (const auto& l : s.layers) layers.push_back({{"cls", l.cls}, {"bce", l.bce}, {"dice", l.dice}});
  return {{"step", s.step},     {"loss", s.loss},        {"sem", s.semantic},
          {"geo", s.geometric}, {"layers", std::move(layers)}, {"lr", s.lr}};
}

int cmd_train(const CommonOptions& common, std::string data, const std::string& out, const std::string& resume,
              std::optional<std::size_t> steps) {
  std::optional<Checkpoint> ck;
  if (!resume.empty()) ck = read_checkpoint(resume);
  RunConfig cfg = resolve_config(common, ck ? &ck->config : nullptr);
  if (steps) cfg.train.steps = *steps;
  if (data.empty()) data = cfg.data.dataset;
  cfg.data.dataset = data;
  Dataset ds = load_dataset(data, cfg.model);
  if (ds.train.empty()) throw std::runtime_error("dataset has no training scenes");

  const fs::path dir(out);
  fs::create_directories(dir);
  write_file_atomic(dir / "config.json", config_to_json(cfg));
  std::ofstream log(dir / "train_log.jsonl", ck ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot open " + (dir / "train_log.jsonl").string());

  Trainer trainer = ck ? Trainer(*ck, cfg, ds.train) : Trainer(cfg, ds.train);
  const auto& L = cfg.loss;
  log << json{{"event", ck ? "resume" : "start"},
              {"step", trainer.steps_done()},
              {"seed", cfg.seed},
              {"model_hash", model_hash(cfg.model)},
              {"lambda", {{"cls", L.cls}, {"bce", L.bce}, {"dice", L.dice}, {"aux", L.aux}}},
              {"train_scenes", ds.train.size()},
              {"val_scenes", ds.val.size()}}
             .dump()
      << "\n";
  spdlog::info("training {} steps on {} scenes (lambda cls {} bce {} dice {} aux {})", cfg.train.steps,
               ds.train.size(), L.cls, L.bce, L.dice, L.aux);

  const auto ckpt = dir / "checkpoint.ckpt";
  const auto t0 = std::chrono::steady_clock::now();
  while (!trainer.finished()) {
    const StepStats s = trainer.train_step();
    log << step_record(s).dump() << "\n";
    if (cfg.train.log_every && s.step % cfg.train.log_every == 0) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      spdlog::info("step {:>6} loss {} sem {} geo {} bce {} dice {} cls {} ({:.1f}s)", s.step, fixed(s.loss),
                   fixed(s.semantic), fixed(s.geometric), fixed(s.final_bce), fixed(s.final_dice),
                   fixed(s.final_cls), secs);
    }
    if (cfg.train.eval_every && s.step % cfg.train.eval_every == 0 && !ds.val.empty()) {
      const auto r = evaluate_model(trainer.model(), ds.val, cfg.data, cfg.inference).report;
      log << json{{"event", "eval"}, {"step", s.step}, {"map", r.map}, {"ap50", r.ap50}, {"ap25", r.ap25}}.dump()
          << "\n";
      spdlog::info("eval at step {}: mAP {} AP50 {} AP25 {}", s.step, fixed(r.map), fixed(r.ap50), fixed(r.ap25));
    }
    if (cfg.train.checkpoint_every && s.step % cfg.train.checkpoint_every == 0) trainer.save(ckpt);
    log.flush();
  }
  trainer.save(ckpt);
  spdlog::info("checkpoint written to {}", ckpt.string());
  return 0;
}

struct LoadedModel {
  Checkpoint checkpoint;
  std::unique_ptr<Model> model;
};

LoadedModel load_model(const std::string& path, const CommonOptions& common) {
  LoadedModel m{read_checkpoint(path), nullptr};
  if (!common.config.empty()) {
    const RunConfig given = resolve_config(common);
    if (model_hash(given.model) != m.checkpoint.config_hash) {
      throw CheckpointError("model section of " + common.config + " does not match checkpoint " + path);
    }
    const auto hash = m.checkpoint.config_hash;
    m.checkpoint.config = given;
    m.checkpoint.config_hash = hash;
  }
  m.model = std::make_unique<Model>(m.checkpoint.config.model, m.checkpoint.config.seed);
  restore_params(m.checkpoint, m.model->params());
  return m;
}

int cmd_eval(const CommonOptions& common, const std::string& checkpoint, std::string data, const std::string& split,
             const std::string& out) {
  const auto m = load_model(checkpoint, common);
  const RunConfig& cfg = m.checkpoint.config;
  if (data.empty()) data = cfg.data.dataset;
  const Dataset ds = load_dataset(data, cfg.model);
  const auto& scenes = split == "train" ? ds.train : ds.val;
  if (scenes.empty()) throw std::runtime_error("split '" + split + "' of " + data + " is empty");
  const auto ev = evaluate_model(*m.model, scenes, cfg.data, cfg.inference);
  std::cout << format_report(ev.report);
  if (!out.empty()) {
    write_file_atomic(out, report_key_values(ev.report));
    spdlog::info("report written to {}", out);
  }
  return 0;
}

int cmd_infer(const CommonOptions& common, const std::string& checkpoint, const std::string& scene,
              const std::string& out, const std::string& ply, bool all_layers) {
  const auto m = load_model(checkpoint, common);
  const RunConfig& cfg = m.checkpoint.config;
  const SceneFile file = read_scene(scene);
  const auto dump = predict_scene(*m.model, file.cloud, cfg.data, cfg.inference, fs::path(scene).filename().string(),
                                  all_layers);
  spdlog::info("{}: {} instances in the final layer", scene, dump.layers.back().instances.size());
  if (!out.empty()) write_predictions(out, dump);
  else std::cout << predictions_to_json(dump);
  if (!ply.empty()) write_ply(ply, file.cloud, point_instance_ids(dump.layers.back(), file.cloud.size()));
  return 0;
}

int cmd_export_ply(const std::string& scene, const std::string& predictions, int layer, const std::string& out) {
  const SceneFile file = read_scene(scene);
  std::vector<int> ids;
  if (predictions.empty()) {
    if (!file.cloud.has_labels()) throw std::runtime_error(scene + " has no instance labels to export");
    ids = file.cloud.instance;
  } else {
    const auto dump = read_predictions(predictions);
    if (dump.num_points != file.cloud.size()) throw std::runtime_error("prediction dump does not match the scene");
    if (dump.layers.empty()) throw std::runtime_error("prediction dump has no layers");
    const auto* chosen = &dump.layers.back();
    if (layer >= 0) {
      chosen = nullptr;
      for (const auto& l : dump.layers)
        if (static_cast<int>(l.layer) == layer) chosen = &l;
      if (!chosen) throw std::runtime_error("layer " + std::to_string(layer) + " is not in the dump");
    }
    ids = point_instance_ids(*chosen, file.cloud.size());
  }
  write_ply(out, file.cloud, ids);
  spdlog::info("wrote {}", out);
  return 0;
}

int cmd_gradcheck(const CommonOptions& common, std::uint64_t scene_seed) {
  const RunConfig tiny = tiny_gradcheck_config();
  const RunConfig cfg = resolve_config(common, &tiny);
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = check_model_gradients(cfg, tiny_gradcheck_scene(cfg, scene_seed));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "voxels " << r.voxels << ", superpoints " << r.superpoints << ", queries " << r.queries << "\n"
            << "checked " << r.report.checked << " entries, failed " << r.report.failed << ", max abs error "
            << r.report.max_abs_error << ", max rel error " << r.report.max_rel_error << " (" << fixed(secs, 1)
            << "s)\n";
  for (std::size_t i = 0; i < std::min<std::size_t>(r.report.failures.size(), 10); ++i) {
    const auto& f = r.report.failures[i];
    std::cout << "  " << f.name << "[" << f.index << "] analytic " << f.analytic << " numeric " << f.numeric << "\n";
  }
  return r.report.ok() ? 0 : 1;
}

void setup_logging() {
  auto level = spdlog::level::info;
  if (const char* env = std::getenv("SGIFORMER_LOG")) level = spdlog::level::from_str(env);
  spdlog::set_level(level);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Superpoint-guided instance segmentation on synthetic point clouds"};
  app.require_subcommand(1);

  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "Override the configuration seed");
  };

  std::string out, data, resume, checkpoint, scene, ply, predictions, split = "val";
  std::size_t n_train = 50, n_val = 10;
  std::optional<std::size_t> steps;
  bool all_layers = false;
  int layer = -1;
  std::uint64_t scene_seed = 6;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  add_common(gen);
  gen->add_option("--out", out, "Dataset directory")->required();
  gen->add_option("--train", n_train, "Training scenes");
  gen->add_option("--val", n_val, "Validation scenes");

  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train);
  train->add_option("--data", data, "Dataset directory (overrides data.dataset)");
  train->add_option("--out", out, "Run directory for log and checkpoint")->required();
  train->add_option("--resume", resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  train->add_option("--steps", steps, "Override train.steps");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Dataset directory (defaults to the checkpoint's)");
  eval->add_option("--split", split, "Split to evaluate")->check(CLI::IsMember({"train", "val"}));
  eval->add_option("--out", out, "Write the report as key=value lines");

  auto* infer = app.add_subcommand("infer", "Predict instances for one scene");
  add_common(infer);
  infer->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  infer->add_option("--scene", scene, "Scene file")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", out, "Prediction dump (stdout if omitted)");
  infer->add_option("--ply", ply, "Also write an instance-colored PLY");
  infer->add_flag("--all-layers", all_layers, "Dump every decoder layer, not only the last");

  auto* export_ply = app.add_subcommand("export-ply", "Write a scene as an instance-colored PLY");
  export_ply->add_option("--scene", scene, "Scene file")->required()->check(CLI::ExistingFile);
  export_ply->add_option("--predictions", predictions, "Color by a prediction dump instead of ground truth")
      ->check(CLI::ExistingFile);
  export_ply->add_option("--layer", layer, "Decoder layer of the dump (default: last)");
  export_ply->add_option("--out", out, "PLY file")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the full objective");
  add_common(gradcheck);
  gradcheck->add_option("--scene-seed", scene_seed, "Seed of the tiny scene");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen_data(common, out, n_train, n_val);
    if (*train) return cmd_train(common, data, out, resume, steps);
    if (*eval) return cmd_eval(common, checkpoint, data, split, out);
    if (*infer) return cmd_infer(common, checkpoint, scene, out, ply, all_layers);
    if (*export_ply) return cmd_export_ply(scene, predictions, layer, out);
    if (*gradcheck) return cmd_gradcheck(common, scene_seed);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
