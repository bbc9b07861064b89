#include "sgiformer/config.hpp"

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <type_traits>

namespace sgiformer {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    known_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    const json& v = *it;
    const std::string where = path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      out = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (std::is_unsigned_v<T> && !v.is_number_unsigned())) {
        throw ConfigError(where + ": expected a non-negative integer");
      }
      out = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      out = v.get<T>();
    } else {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      out = v.get<std::string>();
    }
  }

  Section child(const char* key) {
    known_.insert(key);
    auto it = j_.find(key);
    static const json empty = json::object();
    return Section(it == j_.end() ? empty : *it, path_ + "." + key);
  }

  bool has(const char* key) const { return j_.contains(key); }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) throw ConfigError("unknown config key '" + path_ + "." + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

json model_json(const ModelConfig& m) {
  return json{{"num_classes", m.num_classes},
              {"backbone_width", m.backbone_width},
              {"backbone_rounds", m.backbone_rounds},
              {"neighborhood", static_cast<int>(m.neighborhood)},
              {"width", m.width},
              {"heads", m.heads},
              {"layers", m.layers},
              {"scene_queries", m.scene_queries},
              {"learnable_queries", m.learnable_queries},
              {"alpha", m.alpha},
              {"mask_threshold", m.mask_threshold},
              {"fourier_bands", m.fourier_bands},
              {"query_init_std", m.query_init_std},
              {"use_positional_encoding", m.use_positional_encoding},
              {"use_scene_update", m.use_scene_update},
              {"use_bias_refinement", m.use_bias_refinement},
              {"positional_mask_features", m.positional_mask_features}};
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

void RunConfig::validate() const {
  const auto& m = model;
  require(m.num_classes >= 1, "model.num_classes must be at least 1");
  require(m.backbone_width >= 1 && m.width >= 1, "model widths must be positive");
  require(m.heads >= 1 && m.width % m.heads == 0, "model.width must be divisible by model.heads");
  require(m.layers >= 1, "model.layers must be at least 1");
  require(m.num_queries() >= 1, "at least one query is required");
  require(m.alpha > 0.0 && m.alpha <= 1.0, "model.alpha must lie in (0, 1]");
  require(m.mask_threshold > 0.0 && m.mask_threshold < 1.0, "model.mask_threshold must lie in (0, 1)");
  require(m.fourier_bands >= 1, "model.fourier_bands must be at least 1");
  require(m.query_init_std >= 0.0, "model.query_init_std must be non-negative");
  const int nb = static_cast<int>(m.neighborhood);
  require(nb == 6 || nb == 18 || nb == 26, "model.neighborhood must be 6, 18 or 26");
  require(loss.cls >= 0 && loss.bce >= 0 && loss.dice >= 0 && loss.aux >= 0, "loss weights must be non-negative");
  require(loss.dice_smooth > 0.0, "loss.dice_smooth must be positive");
  require(data.voxel_size > 0.0, "data.voxel_size must be positive");
  require(data.superpoint_k >= 1, "data.superpoint_k must be at least 1");
  require(data.superpoint_threshold >= 0.0, "data.superpoint_threshold must be non-negative");
  require(train.batch_scenes >= 1, "train.batch_scenes must be at least 1");
  require(train.lr >= 0.0 && train.voxel_head_lr >= 0.0, "learning rates must be non-negative");
  require(train.weight_decay >= 0.0, "train.weight_decay must be non-negative");
  require(train.augment.scale_min > 0.0 && train.augment.scale_min <= train.augment.scale_max,
          "augment scale range must be positive and ordered");
  require(inference.top_k >= 1, "inference.top_k must be at least 1");
  require(synth.num_classes >= 2, "synth.num_classes must be at least 2");
  require(synth.num_classes == m.num_classes, "synth.num_classes must equal model.num_classes");
  require(synth.room_min > 0.0 && synth.room_min <= synth.room_max, "synth room extents must be positive and ordered");
  require(synth.instances_min <= synth.instances_max, "synth instance range must be ordered");
  require(synth.points_min >= 1 && synth.points_min <= synth.points_max, "synth point range must be ordered");
  require(synth.object_min > 0.0 && synth.object_min <= synth.object_max, "synth object size range must be ordered");
  require(synth.noise >= 0.0, "synth.noise must be non-negative");
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(j, "config");
  root.read("seed", c.seed);

  auto m = root.child("model");
  m.read("num_classes", c.model.num_classes);
  m.read("backbone_width", c.model.backbone_width);
  m.read("backbone_rounds", c.model.backbone_rounds);
  int nb = static_cast<int>(c.model.neighborhood);
  m.read("neighborhood", nb);
  c.model.neighborhood = static_cast<Neighborhood>(nb);
  m.read("width", c.model.width);
  m.read("heads", c.model.heads);
  m.read("layers", c.model.layers);
  m.read("scene_queries", c.model.scene_queries);
  m.read("learnable_queries", c.model.learnable_queries);
  m.read("alpha", c.model.alpha);
  m.read("mask_threshold", c.model.mask_threshold);
  m.read("fourier_bands", c.model.fourier_bands);
  m.read("query_init_std", c.model.query_init_std);
  m.read("use_positional_encoding", c.model.use_positional_encoding);
  m.read("use_scene_update", c.model.use_scene_update);
  m.read("use_bias_refinement", c.model.use_bias_refinement);
  m.read("positional_mask_features", c.model.positional_mask_features);
  m.finish();

  auto l = root.child("loss");
  l.read("cls", c.loss.cls);
  l.read("bce", c.loss.bce);
  l.read("dice", c.loss.dice);
  l.read("aux", c.loss.aux);
  l.read("dice_smooth", c.loss.dice_smooth);
  l.finish();

  auto d = root.child("data");
  d.read("dataset", c.data.dataset);
  d.read("voxel_size", c.data.voxel_size);
  d.read("superpoint_k", c.data.superpoint_k);
  d.read("superpoint_threshold", c.data.superpoint_threshold);
  d.finish();

  auto t = root.child("train");
  t.read("steps", c.train.steps);
  t.read("batch_scenes", c.train.batch_scenes);
  t.read("lr", c.train.lr);
  t.read("voxel_head_lr", c.train.voxel_head_lr);
  t.read("weight_decay", c.train.weight_decay);
  t.read("poly_power", c.train.poly_power);
  t.read("log_every", c.train.log_every);
  t.read("eval_every", c.train.eval_every);
  t.read("checkpoint_every", c.train.checkpoint_every);
  auto a = t.child("augment");
  a.read("flip", c.train.augment.flip);
  a.read("rotate_z", c.train.augment.rotate_z);
  a.read("translate", c.train.augment.translate);
  a.read("scale", c.train.augment.scale);
  a.read("max_translation", c.train.augment.max_translation);
  a.read("scale_min", c.train.augment.scale_min);
  a.read("scale_max", c.train.augment.scale_max);
  a.finish();
  t.finish();

  auto i = root.child("inference");
  i.read("top_k", c.inference.top_k);
  i.read("min_points", c.inference.min_points);
  i.read("drop_background", c.inference.drop_background);
  i.finish();

  auto s = root.child("synth");
  const bool synth_classes_given = s.has("num_classes");
  s.read("num_classes", c.synth.num_classes);
  if (!synth_classes_given) c.synth.num_classes = c.model.num_classes;
  s.read("room_min", c.synth.room_min);
  s.read("room_max", c.synth.room_max);
  s.read("instances_min", c.synth.instances_min);
  s.read("instances_max", c.synth.instances_max);
  s.read("points_min", c.synth.points_min);
  s.read("points_max", c.synth.points_max);
  s.read("object_min", c.synth.object_min);
  s.read("object_max", c.synth.object_max);
  s.read("noise", c.synth.noise);
  s.read("background_density", c.synth.background_density);
  s.read("wall", c.synth.wall);
  s.read("adjacent_pair_prob", c.synth.adjacent_pair_prob);
  s.read("max_retries", c.synth.max_retries);
  s.finish();

  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string config_to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["model"] = model_json(c.model);
  j["loss"] = {{"cls", c.loss.cls}, {"bce", c.loss.bce}, {"dice", c.loss.dice}, {"aux", c.loss.aux},
               {"dice_smooth", c.loss.dice_smooth}};
  j["data"] = {{"dataset", c.data.dataset}, {"voxel_size", c.data.voxel_size},
               {"superpoint_k", c.data.superpoint_k}, {"superpoint_threshold", c.data.superpoint_threshold}};
  const auto& a = c.train.augment;
  j["train"] = {{"steps", c.train.steps},
                {"batch_scenes", c.train.batch_scenes},
                {"lr", c.train.lr},
                {"voxel_head_lr", c.train.voxel_head_lr},
                {"weight_decay", c.train.weight_decay},
                {"poly_power", c.train.poly_power},
                {"log_every", c.train.log_every},
                {"eval_every", c.train.eval_every},
                {"checkpoint_every", c.train.checkpoint_every},
                {"augment",
                 {{"flip", a.flip},
                  {"rotate_z", a.rotate_z},
                  {"translate", a.translate},
                  {"scale", a.scale},
                  {"max_translation", a.max_translation},
                  {"scale_min", a.scale_min},
                  {"scale_max", a.scale_max}}}};
  j["inference"] = {{"top_k", c.inference.top_k}, {"min_points", c.inference.min_points},
                      {"drop_background", c.inference.drop_background}};
  const auto& s = c.synth;
  j["synth"] = {{"num_classes", s.num_classes},   {"room_min", s.room_min},
                {"room_max", s.room_max},         {"instances_min", s.instances_min},
                {"instances_max", s.instances_max}, {"points_min", s.points_min},
                {"points_max", s.points_max},     {"object_min", s.object_min},
                {"object_max", s.object_max},     {"noise", s.noise},
                {"background_density", s.background_density}, {"wall", s.wall},
                {"adjacent_pair_prob", s.adjacent_pair_prob}, {"max_retries", s.max_retries}};
  return j.dump(2);
}

std::string model_config_json(const ModelConfig& model) { return model_json(model).dump(); }

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace sgiformer
