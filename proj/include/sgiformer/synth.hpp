#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgiformer/config.hpp"
#include "sgiformer/pointcloud.hpp"

namespace sgiformer {

enum class Archetype { kBox, kCylinder, kSphere, kPanel };

/// Shape family used for a semantic class (1..c); cycles through the four archetypes.
Archetype archetype_of(int label);
const char* archetype_name(Archetype a);

struct GeneratedInstance {
  int instance_id = 0;
  int label = 0;
  Archetype archetype = Archetype::kBox;
  Vec3 center{};  // centroid of the sampled surface before noise
  std::size_t num_points = 0;
};

struct GeneratedScene {
  PointCloud cloud;
  std::vector<GeneratedInstance> instances;
  std::vector<std::string> warnings;
};

/// Floor (and optional back wall) labelled background, plus non-overlapping
/// instances resting on the floor. Deterministic for a given spec.
GeneratedScene generate_scene(const SceneSpec& spec);

/// Rigid augmentation of coordinates; labels and colors untouched.
PointCloud augment(const PointCloud& cloud, const AugmentConfig& cfg, std::uint64_t seed);

/// Rotation about the z axis through the origin.
PointCloud rotate_z(const PointCloud& cloud, double angle);

/// Seed mixing for derived streams (scene i of a split, augmentation at step t...).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace sgiformer
