#include "sgiformer/scene_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string_view>

namespace sgiformer {

namespace {

constexpr std::string_view kSceneMagic = "sgiformer-scene";
constexpr int kSceneVersion = 1;

void append_double(std::string& out, double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view token, std::size_t line) {
  T value{};
  auto res = std::from_chars(token.data(), token.data() + token.size(), value);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
    throw ParseError("line " + std::to_string(line) + ": cannot parse '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return in;
}

}  // namespace

void write_scene(std::ostream& out, const SceneFile& scene) {
  const auto& c = scene.cloud;
  std::string buf;
  buf.reserve(c.size() * 96 + 128);
  buf += std::string(kSceneMagic) + " " + std::to_string(kSceneVersion) + "\n";
  buf += "points " + std::to_string(c.size()) + "\n";
  buf += "voxel_size ";
  append_double(buf, scene.voxel_size);
  buf += "\nclasses " + std::to_string(scene.num_classes) + "\n";
  buf += std::string("labels ") + (c.has_labels() ? "1" : "0") + "\nend_header\n";
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      append_double(buf, c.coords[i][a]);
      buf += ' ';
    }
    for (int a = 0; a < 3; ++a) {
      append_double(buf, c.colors[i][a]);
      buf += ' ';
    }
    if (c.has_labels()) {
      buf += std::to_string(c.semantic[i]) + " " + std::to_string(c.instance[i]) + "\n";
    } else {
      buf += "0 0\n";
    }
  }
  out << buf;
}

void write_scene(const std::filesystem::path& path, const SceneFile& scene) {
  std::ostringstream os;
  write_scene(os, scene);
  write_file_atomic(path, os.str());
}

SceneFile read_scene(std::istream& in) {
  SceneFile scene;
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::vector<std::string_view> {
    while (std::getline(in, line)) {
      ++lineno;
      auto tok = split(line);
      if (!tok.empty() && tok.front().front() != '#') return tok;
    }
    throw ParseError("unexpected end of scene file after line " + std::to_string(lineno));
  };

  auto tok = next();
  if (tok.size() != 2 || tok[0] != kSceneMagic) throw ParseError("not a scene file (bad magic)");
  if (parse_number<int>(tok[1], lineno) != kSceneVersion) throw ParseError("unsupported scene version");

  std::size_t n = 0;
  bool have_points = false;
  bool labelled = false;
  for (;;) {
    tok = next();
    if (tok[0] == "end_header") break;
    if (tok.size() != 2) throw ParseError("line " + std::to_string(lineno) + ": malformed header");
    if (tok[0] == "points") {
      n = parse_number<std::size_t>(tok[1], lineno);
      have_points = true;
    } else if (tok[0] == "voxel_size") {
      scene.voxel_size = parse_number<double>(tok[1], lineno);
    } else if (tok[0] == "classes") {
      scene.num_classes = parse_number<int>(tok[1], lineno);
    } else if (tok[0] == "labels") {
      labelled = parse_number<int>(tok[1], lineno) != 0;
    } else {
      throw ParseError("line " + std::to_string(lineno) + ": unknown header key '" +
                       std::string(tok[0]) + "'");
    }
  }
  if (!have_points) throw ParseError("scene header lacks 'points'");

  auto& c = scene.cloud;
  c.coords.resize(n);
  c.colors.resize(n);
  if (labelled) {
    c.semantic.resize(n);
    c.instance.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    tok = next();
    if (tok.size() != 8) {
      throw ParseError("line " + std::to_string(lineno) + ": expected 8 fields, got " +
                       std::to_string(tok.size()));
    }
    for (int a = 0; a < 3; ++a) {
      c.coords[i][a] = parse_number<double>(tok[a], lineno);
      c.colors[i][a] = parse_number<double>(tok[3 + a], lineno);
    }
    if (labelled) {
      c.semantic[i] = parse_number<int>(tok[6], lineno);
      c.instance[i] = parse_number<int>(tok[7], lineno);
    }
  }
  try {
    c.validate(scene.num_classes);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what());
  }
  return scene;
}

SceneFile read_scene(const std::filesystem::path& path) {
  auto in = open_in(path);
  try {
    return read_scene(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Vec3 instance_color(int instance_id) {
  if (instance_id <= 0) return {0.6, 0.6, 0.6};
  // Golden-ratio hue walk, fixed saturation/value.
  const double hue = std::fmod(0.137 + 0.618033988749895 * instance_id, 1.0) * 6.0;
  const int sector = static_cast<int>(hue) % 6;
  const double f = hue - std::floor(hue);
  const double v = 0.95, s = 0.75;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (sector) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

void write_ply(std::ostream& out, const PointCloud& cloud, const std::vector<int>& instance_ids) {
  if (instance_ids.size() != cloud.size()) {
    throw std::invalid_argument("write_ply: " + std::to_string(instance_ids.size()) +
                                " instance ids for " + std::to_string(cloud.size()) + " points");
  }
  std::string buf;
  buf += "ply\nformat ascii 1.0\ncomment sgiformer instance export\n";
  buf += "element vertex " + std::to_string(cloud.size()) + "\n";
  buf += "property float x\nproperty float y\nproperty float z\n";
  buf += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  buf += "property int instance\nend_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 col = instance_color(instance_ids[i]);
    for (int a = 0; a < 3; ++a) {
      append_double(buf, static_cast<double>(static_cast<float>(cloud.coords[i][a])));
      buf += ' ';
    }
    for (int a = 0; a < 3; ++a) {
      buf += std::to_string(static_cast<int>(std::lround(std::clamp(col[a], 0.0, 1.0) * 255.0)));
      buf += ' ';
    }
    buf += std::to_string(instance_ids[i]) + "\n";
  }
  out << buf;
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
               const std::vector<int>& instance_ids) {
  std::ostringstream os;
  write_ply(os, cloud, instance_ids);
  write_file_atomic(path, os.str());
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest) {
  nlohmann::json j;
  j["format"] = "sgiformer-dataset";
  j["version"] = 1;
  j["num_classes"] = manifest.num_classes;
  j["voxel_size"] = manifest.voxel_size;
  j["seed"] = manifest.seed;
  j["train"] = manifest.train;
  j["val"] = manifest.val;
  write_file_atomic(dir / "manifest.json", j.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  auto in = open_in(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "sgiformer-dataset") throw ParseError(path.string() + ": not a dataset manifest");
  DatasetManifest m;
  try {
    m.num_classes = j.at("num_classes").get<int>();
    m.voxel_size = j.at("voxel_size").get<double>();
    m.seed = j.value("seed", std::uint64_t{0});
    m.train = j.at("train").get<std::vector<std::string>>();
    m.val = j.at("val").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return m;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace sgiformer
