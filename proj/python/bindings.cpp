#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sgiformer/checkpoint.hpp"
#include "sgiformer/diagnostics.hpp"
#include "sgiformer/predictions.hpp"
#include "sgiformer/scene_io.hpp"
#include "sgiformer/synth.hpp"
#include "sgiformer/train.hpp"

namespace py = pybind11;
using namespace sgiformer;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using I64 = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

std::vector<Vec3> rows3(const F64& a, const char* what) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw std::invalid_argument(std::string(what) + " must have shape (n, 3)");
  std::vector<Vec3> out(static_cast<std::size_t>(a.shape(0)));
  const double* p = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {p[3 * i], p[3 * i + 1], p[3 * i + 2]};
  return out;
}

F64 array3(const std::vector<Vec3>& v) {
  F64 out({static_cast<py::ssize_t>(v.size()), py::ssize_t{3}});
  double* p = out.mutable_data();
  for (std::size_t i = 0; i < v.size(); ++i)
    for (int a = 0; a < 3; ++a) p[3 * i + a] = v[i][a];
  return out;
}

template <typename T>
py::array_t<std::int64_t> int_array(const std::vector<T>& v) {
  const std::vector<std::int64_t> wide(v.begin(), v.end());
  return py::array_t<std::int64_t>(static_cast<py::ssize_t>(wide.size()), wide.data());
}

std::vector<int> ints(const I64& a) { return {a.data(), a.data() + a.size()}; }

PointCloud make_cloud(const F64& coords, const F64& colors, const std::optional<I64>& semantic,
                      const std::optional<I64>& instance) {
  PointCloud c;
  c.coords = rows3(coords, "coords");
  c.colors = rows3(colors, "colors");
  if (semantic.has_value() != instance.has_value())
    throw std::invalid_argument("semantic and instance labels must be given together");
  if (semantic) {
    c.semantic = ints(*semantic);
    c.instance = ints(*instance);
  }
  return c;
}

py::dict cloud_dict(const PointCloud& c) {
  py::dict d;
  d["coords"] = array3(c.coords);
  d["colors"] = array3(c.colors);
  if (c.has_labels()) {
    d["semantic"] = int_array(c.semantic);
    d["instance"] = int_array(c.instance);
  }
  return d;
}

PointCloud cloud_from_dict(const py::dict& d) {
  std::optional<I64> sem, inst;
  if (d.contains("semantic")) sem = d["semantic"].cast<I64>();
  if (d.contains("instance")) inst = d["instance"].cast<I64>();
  return make_cloud(d["coords"].cast<F64>(), d["colors"].cast<F64>(), sem, inst);
}

RunConfig config_from(const std::optional<std::string>& text) { return text ? parse_config(*text) : RunConfig{}; }

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["map"] = r.map;
  d["ap50"] = r.ap50;
  d["ap25"] = r.ap25;
  py::dict classes;
  for (const auto& [label, aps] : r.class_ap) {
    py::dict c;
    c["ap"] = aps;
    c["ap25"] = r.class_ap25.at(label);
    classes[py::int_(label)] = c;
  }
  d["classes"] = classes;
  d["text"] = format_report(r);
  return d;
}

py::list layer_list(const DumpedLayer& layer) {
  py::list out;
  for (const auto& inst : layer.instances) {
    py::dict d;
    d["query"] = inst.query;
    d["label"] = inst.label;
    d["score"] = inst.score;
    d["points"] = int_array(inst.points);
    out.append(d);
  }
  return out;
}

class PyTrainer {
 public:
  PyTrainer(const std::optional<std::string>& config, const py::list& scenes)
      : trainer_(config_from(config), clouds(scenes)) {}
  PyTrainer(const std::string& checkpoint, const py::list& scenes)
      : trainer_(read_checkpoint(checkpoint), read_checkpoint(checkpoint).config, clouds(scenes)) {}

  py::dict step() {
    const StepStats s = trainer_.train_step();
    py::dict d;
    d["step"] = s.step;
    d["loss"] = s.loss;
    d["semantic"] = s.semantic;
    d["geometric"] = s.geometric;
    d["bce"] = s.final_bce;
    d["dice"] = s.final_dice;
    d["cls"] = s.final_cls;
    d["lr"] = s.lr;
    return d;
  }
  std::size_t steps_done() const { return trainer_.steps_done(); }
  bool finished() const { return trainer_.finished(); }
  void save(const std::string& path) const { trainer_.save(path); }

  py::dict evaluate(const py::list& scenes) const {
    const auto& cfg = trainer_.config();
    return report_dict(evaluate_model(trainer_.model(), clouds(scenes), cfg.data, cfg.inference).report);
  }

  py::list predict(const py::dict& scene) const {
    const auto& cfg = trainer_.config();
    return layer_list(predict_scene(trainer_.model(), cloud_from_dict(scene), cfg.data, cfg.inference, "scene")
                          .layers.back());
  }

 private:
  static std::vector<PointCloud> clouds(const py::list& scenes) {
    std::vector<PointCloud> out;
    for (const auto& s : scenes) out.push_back(cloud_from_dict(s.cast<py::dict>()));
    return out;
  }

  Trainer trainer_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Superpoint-guided 3D instance segmentation core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);

  m.def("default_config", [] { return config_to_json(RunConfig{}); }, "Default run configuration as JSON.");
  m.def(
      "normalize_config", [](const std::string& text) { return config_to_json(parse_config(text)); },
      "Parse, validate and re-serialise a configuration.");

  m.def(
      "generate_scene",
      [](std::uint64_t seed, const std::optional<std::string>& config) {
        SceneSpec spec = config_from(config).synth;
        spec.seed = seed;
        const auto g = generate_scene(spec);
        py::dict d = cloud_dict(g.cloud);
        d["num_instances"] = g.instances.size();
        return d;
      },
      py::arg("seed"), py::arg("config") = py::none());

  m.def(
      "read_scene",
      [](const std::string& path) {
        const auto s = read_scene(std::filesystem::path(path));
        py::dict d = cloud_dict(s.cloud);
        d["voxel_size"] = s.voxel_size;
        d["num_classes"] = s.num_classes;
        return d;
      },
      py::arg("path"));
  m.def(
      "write_scene",
      [](const std::string& path, const py::dict& scene, double voxel_size, int num_classes) {
        write_scene(std::filesystem::path(path), {cloud_from_dict(scene), voxel_size, num_classes});
      },
      py::arg("path"), py::arg("scene"), py::arg("voxel_size") = 0.02, py::arg("num_classes") = 4);

  m.def(
      "superpoints",
      [](const F64& coords, const F64& colors, double voxel_size, std::size_t k, double threshold) {
        const PointCloud c = make_cloud(coords, colors, std::nullopt, std::nullopt);
        const VoxelGrid grid = voxelize(c, voxel_size);
        const auto part = segment_superpoints(grid, k, threshold);
        py::dict d;
        d["point_to_voxel"] = int_array(grid.point_to_voxel);
        d["voxel_to_superpoint"] = int_array(part.voxel_to_superpoint);
        d["point_to_superpoint"] = int_array(point_superpoints(part, grid));
        d["num_voxels"] = grid.size();
        d["num_superpoints"] = part.size();
        return d;
      },
      py::arg("coords"), py::arg("colors"), py::arg("voxel_size") = 0.02, py::arg("k") = 8,
      py::arg("threshold") = 3.0);

  m.def(
      "hungarian",
      [](const F64& cost) {
        if (cost.ndim() != 2) throw std::invalid_argument("cost must be a 2-D array");
        CostMatrix c{static_cast<std::size_t>(cost.shape(0)), static_cast<std::size_t>(cost.shape(1)),
                     {cost.data(), cost.data() + cost.size()}};
        const auto a = hungarian(c);
        return py::make_tuple(a.gt_to_pred, a.cost);
      },
      py::arg("cost"), "Returns (gt_to_pred, total cost); columns are ground truths.");

  m.def(
      "evaluate",
      [](const py::list& scenes) {
        std::vector<SceneEvalInput> in;
        for (const auto& item : scenes) {
          const auto s = item.cast<py::dict>();
          SceneEvalInput e;
          for (const auto& g : s["ground_truth"]) {
            const auto t = g.cast<py::tuple>();
            const auto mask = t[0].cast<py::array_t<std::uint8_t, py::array::forcecast>>();
            e.ground_truth.push_back({{mask.data(), mask.data() + mask.size()}, t[1].cast<int>()});
          }
          for (const auto& p : s["predictions"]) {
            const auto t = p.cast<py::tuple>();
            const auto mask = t[0].cast<py::array_t<std::uint8_t, py::array::forcecast>>();
            e.predictions.push_back({{mask.data(), mask.data() + mask.size()}, t[1].cast<int>(), t[2].cast<double>()});
          }
          in.push_back(std::move(e));
        }
        return report_dict(evaluate(in));
      },
      py::arg("scenes"),
      "Each scene is {'ground_truth': [(mask, label)], 'predictions': [(mask, label, score)]}.");

  m.def(
      "gradcheck",
      [](std::uint64_t scene_seed) {
        const RunConfig cfg = tiny_gradcheck_config();
        const auto r = check_model_gradients(cfg, tiny_gradcheck_scene(cfg, scene_seed));
        py::dict d;
        d["ok"] = r.report.ok();
        d["checked"] = r.report.checked;
        d["failed"] = r.report.failed;
        d["max_abs_error"] = r.report.max_abs_error;
        d["voxels"] = r.voxels;
        d["superpoints"] = r.superpoints;
        return d;
      },
      py::arg("scene_seed") = 6);

  py::class_<PyTrainer>(m, "Trainer")
      .def(py::init<const std::optional<std::string>&, const py::list&>(), py::arg("config"), py::arg("scenes"))
      .def_static(
          "resume",
          [](const std::string& checkpoint, const py::list& scenes) {
            return std::make_unique<PyTrainer>(checkpoint, scenes);
          },
          py::arg("checkpoint"), py::arg("scenes"))
      .def("step", &PyTrainer::step)
      .def_property_readonly("steps_done", &PyTrainer::steps_done)
      .def_property_readonly("finished", &PyTrainer::finished)
      .def("save", &PyTrainer::save, py::arg("path"))
      .def("evaluate", &PyTrainer::evaluate, py::arg("scenes"))
      .def("predict", &PyTrainer::predict, py::arg("scene"));
}
