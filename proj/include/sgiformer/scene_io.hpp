#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgiformer/pointcloud.hpp"

namespace sgiformer {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Scene file contents: the cloud plus its header fields.
struct SceneFile {
  PointCloud cloud;
  double voxel_size = 0.02;
  int num_classes = 0;
};

/// Text scene format, see docs/formats.md. Values are written in shortest
/// round-trip form, so write -> read reproduces every double exactly.
void write_scene(std::ostream& out, const SceneFile& scene);
void write_scene(const std::filesystem::path& path, const SceneFile& scene);
SceneFile read_scene(std::istream& in);
SceneFile read_scene(const std::filesystem::path& path);

/// ASCII PLY with per-vertex color and an `instance` property. Points with
/// instance id 0 are drawn gray; others get a stable palette color.
void write_ply(std::ostream& out, const PointCloud& cloud, const std::vector<int>& instance_ids);
void write_ply(const std::filesystem::path& path, const PointCloud& cloud,
               const std::vector<int>& instance_ids);
Vec3 instance_color(int instance_id);

/// Dataset directory: manifest.json plus one scene file per entry.
struct DatasetManifest {
  int num_classes = 0;
  double voxel_size = 0.02;
  std::uint64_t seed = 0;
  std::vector<std::string> train;
  std::vector<std::string> val;
};

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dir);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace sgiformer
