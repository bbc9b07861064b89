#include "sgiformer/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace sgiformer {

namespace {

constexpr double kPi = std::numbers::pi;

struct Footprint {
  double x, y, radius;
};

struct ShapeSpec {
  Archetype archetype;
  double sx = 0, sy = 0, sz = 0;  // box/panel extents; cylinder uses sx as radius
  double yaw = 0;
};

Vec3 class_color(int label, std::size_t num_classes) {
  const double hue = std::fmod(0.07 + static_cast<double>(label - 1) / static_cast<double>(num_classes), 1.0) * 6.0;
  const double f = hue - std::floor(hue);
  const double v = 0.85, s = 0.7;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (static_cast<int>(hue) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

Vec3 jitter_color(const Vec3& base, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  Vec3 c{};
  for (int a = 0; a < 3; ++a) c[a] = std::clamp(base[a] + n(rng), 0.0, 1.0);
  return c;
}

double footprint_radius(const ShapeSpec& s) {
  switch (s.archetype) {
    case Archetype::kCylinder:
    case Archetype::kSphere: return s.sx;
    default: return 0.5 * std::hypot(s.sx, s.sy);
  }
}

// Point on the closed surface (local frame, origin at the shape's centroid),
// uniform by area.
Vec3 sample_surface(const ShapeSpec& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (s.archetype) {
    case Archetype::kSphere: {
      std::normal_distribution<double> n(0.0, 1.0);
      Vec3 d{n(rng), n(rng), n(rng)};
      const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
      if (len == 0.0) return {0, 0, s.sx};
      return {s.sx * d[0] / len, s.sx * d[1] / len, s.sx * d[2] / len};
    }
    case Archetype::kCylinder: {
      const double r = s.sx, h = s.sz;
      const double side = 2 * kPi * r * h, cap = kPi * r * r;
      const double pick = u(rng) * (side + 2 * cap);
      const double ang = 2 * kPi * u(rng);
      if (pick < side) return {r * std::cos(ang), r * std::sin(ang), (u(rng) - 0.5) * h};
      const double rr = r * std::sqrt(u(rng));
      const double z = pick < side + cap ? 0.5 * h : -0.5 * h;
      return {rr * std::cos(ang), rr * std::sin(ang), z};
    }
    default: {
      const double a = s.sx, b = s.sy, c = s.sz;
      const double areas[3] = {b * c, a * c, a * b};  // faces normal to x, y, z
      const double total = 2 * (areas[0] + areas[1] + areas[2]);
      double pick = u(rng) * total;
      int axis = 0;
      while (axis < 2 && pick >= 2 * areas[axis]) {
        pick -= 2 * areas[axis];
        ++axis;
      }
      const double sign = pick < areas[axis] ? -1.0 : 1.0;
      Vec3 p{(u(rng) - 0.5) * a, (u(rng) - 0.5) * b, (u(rng) - 0.5) * c};
      const double half[3] = {0.5 * a, 0.5 * b, 0.5 * c};
      p[axis] = sign * half[axis];
      const double cs = std::cos(s.yaw), sn = std::sin(s.yaw);
      return {cs * p[0] - sn * p[1], sn * p[0] + cs * p[1], p[2]};
    }
  }
}

double half_height(const ShapeSpec& s) {
  return s.archetype == Archetype::kSphere ? s.sx : 0.5 * s.sz;
}

ShapeSpec make_shape(Archetype a, const SceneSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> size(spec.object_min, spec.object_max);
  std::uniform_real_distribution<double> yaw(0.0, kPi);
  ShapeSpec s{a};
  switch (a) {
    case Archetype::kBox:
      s.sx = size(rng);
      s.sy = size(rng);
      s.sz = size(rng);
      s.yaw = yaw(rng);
      break;
    case Archetype::kCylinder:
      s.sx = 0.4 * size(rng);
      s.sz = 1.2 * size(rng);
      break;
    case Archetype::kSphere:
      s.sx = 0.5 * size(rng);
      break;
    case Archetype::kPanel:
      s.sx = 1.2 * size(rng);
      s.sy = 0.03;
      s.sz = 1.2 * size(rng);
      s.yaw = yaw(rng);
      break;
  }
  return s;
}

}  // namespace

Archetype archetype_of(int label) {
  static constexpr Archetype order[] = {Archetype::kBox, Archetype::kCylinder, Archetype::kSphere, Archetype::kPanel};
  return order[static_cast<std::size_t>(std::max(label - 1, 0)) % 4];
}

const char* archetype_name(Archetype a) {
  switch (a) {
    case Archetype::kBox: return "box";
    case Archetype::kCylinder: return "cylinder";
    case Archetype::kSphere: return "sphere";
    case Archetype::kPanel: return "panel";
  }
  return "?";
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = a * 0x9e3779b97f4a7c15ull + b + 0x632be59bd9b4e019ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

GeneratedScene generate_scene(const SceneSpec& spec) {
  std::mt19937_64 rng(mix_seed(spec.seed, 0x5eed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, spec.noise);
  GeneratedScene out;
  auto& pc = out.cloud;
  const int background = static_cast<int>(spec.num_classes) + 1;

  const double width = spec.room_min + u(rng) * (spec.room_max - spec.room_min);
  const double depth = spec.room_min + u(rng) * (spec.room_max - spec.room_min);
  const double margin = 0.05;

  // Instances first, so the floor can skip their footprints.
  std::uniform_int_distribution<std::size_t> count_dist(spec.instances_min, spec.instances_max);
  const std::size_t wanted = count_dist(rng);
  std::uniform_int_distribution<int> class_dist(1, static_cast<int>(spec.num_classes));
  std::uniform_int_distribution<std::size_t> points_dist(spec.points_min, spec.points_max);
  std::vector<Footprint> placed;
  int prev_label = 0;
  Footprint prev{};

  for (std::size_t k = 0; k < wanted; ++k) {
    const bool pair = prev_label != 0 && u(rng) < spec.adjacent_pair_prob;
    const int label = pair ? prev_label : class_dist(rng);
    const ShapeSpec shape = make_shape(archetype_of(label), spec, rng);
    const double r = footprint_radius(shape);

    bool ok = false;
    Footprint fp{};
    for (std::size_t attempt = 0; attempt < spec.max_retries && !ok; ++attempt) {
      if (pair && attempt < spec.max_retries / 2) {
        // Same class, a few centimeters from the previous instance.
        const double gap = 0.02 + 0.02 * u(rng);
        const double ang = 2 * kPi * u(rng);
        fp = {prev.x + (prev.radius + r + gap) * std::cos(ang), prev.y + (prev.radius + r + gap) * std::sin(ang), r};
      } else {
        fp = {margin + r + u(rng) * (width - 2 * (margin + r)), margin + r + u(rng) * (depth - 2 * (margin + r)), r};
      }
      if (fp.x - r < margin || fp.x + r > width - margin || fp.y - r < margin || fp.y + r > depth - margin) continue;
      ok = std::all_of(placed.begin(), placed.end(), [&](const Footprint& o) {
        return std::hypot(o.x - fp.x, o.y - fp.y) >= o.radius + fp.radius + 0.02;
      });
    }
    if (!ok) {
      out.warnings.push_back("placement failed for instance " + std::to_string(k + 1) + " of " +
                             std::to_string(wanted) + " after " + std::to_string(spec.max_retries) + " retries");
      break;
    }
    placed.push_back(fp);
    prev = fp;
    prev_label = label;

    GeneratedInstance inst;
    inst.instance_id = static_cast<int>(out.instances.size()) + 1;
    inst.label = label;
    inst.archetype = shape.archetype;
    inst.center = {fp.x, fp.y, half_height(shape)};
    inst.num_points = points_dist(rng);
    const Vec3 base = jitter_color(class_color(label, spec.num_classes), 0.08, rng);
    for (std::size_t p = 0; p < inst.num_points; ++p) {
      const Vec3 local = sample_surface(shape, rng);
      pc.coords.push_back({inst.center[0] + local[0] + noise(rng), inst.center[1] + local[1] + noise(rng),
                           inst.center[2] + local[2] + noise(rng)});
      pc.colors.push_back(jitter_color(base, 0.03, rng));
      pc.semantic.push_back(label);
      pc.instance.push_back(inst.instance_id);
    }
    out.instances.push_back(inst);
  }

  const Vec3 floor_color{0.55, 0.5, 0.45};
  const auto floor_points = static_cast<std::size_t>(spec.background_density * width * depth);
  for (std::size_t p = 0; p < floor_points; ++p) {
    const double x = u(rng) * width, y = u(rng) * depth;
    const bool covered = std::any_of(placed.begin(), placed.end(), [&](const Footprint& f) {
      return std::hypot(f.x - x, f.y - y) < f.radius;
    });
    if (covered) continue;
    pc.coords.push_back({x, y, noise(rng)});
    pc.colors.push_back(jitter_color(floor_color, 0.03, rng));
    pc.semantic.push_back(background);
    pc.instance.push_back(0);
  }
  if (spec.wall) {
    const double height = 0.35;
    const Vec3 wall_color{0.82, 0.8, 0.74};
    const auto wall_points = static_cast<std::size_t>(spec.background_density * width * height);
    for (std::size_t p = 0; p < wall_points; ++p) {
      pc.coords.push_back({u(rng) * width, depth + noise(rng), u(rng) * height});
      pc.colors.push_back(jitter_color(wall_color, 0.03, rng));
      pc.semantic.push_back(background);
      pc.instance.push_back(0);
    }
  }
  return out;
}

PointCloud rotate_z(const PointCloud& cloud, double angle) {
  PointCloud out = cloud;
  const double c = std::cos(angle), s = std::sin(angle);
  for (auto& p : out.coords) {
    const double x = p[0], y = p[1];
    p[0] = c * x - s * y;
    p[1] = s * x + c * y;
  }
  return out;
}

PointCloud augment(const PointCloud& cloud, const AugmentConfig& cfg, std::uint64_t seed) {
  if (!cfg.any()) return cloud;
  std::mt19937_64 rng(mix_seed(seed, 0xa09));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Draw every variate regardless of toggles so streams stay aligned.
  const bool flip = u(rng) < 0.5;
  const double angle = 2 * kPi * u(rng);
  const double factor = cfg.scale_min + u(rng) * (cfg.scale_max - cfg.scale_min);
  const double tx = (2 * u(rng) - 1) * cfg.max_translation;
  const double ty = (2 * u(rng) - 1) * cfg.max_translation;

  PointCloud out = cfg.rotate_z ? rotate_z(cloud, angle) : cloud;
  for (auto& p : out.coords) {
    if (cfg.flip && flip) p[0] = -p[0];
    if (cfg.scale)
      for (auto& v : p) v *= factor;
    if (cfg.translate) {
      p[0] += tx;
      p[1] += ty;
    }
  }
  return out;
}

}  // namespace sgiformer
